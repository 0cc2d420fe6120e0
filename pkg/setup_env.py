#!/usr/bin/env python3
"""
Script para configurar o arquivo .env
"""


def create_env_file():
    """Cria o arquivo .env com as configurações padrão"""

    env_content = """# Diretório de resultados dos experimentos
OUTPUT_DIR=results

# Configurações de logging
LOG_LEVEL=INFO
LOG_FILE=

# Paralelismo (vazio = número de CPUs)
TPS_WORKERS=

# Teoria espectral
THETA_SAMPLES=2001
EIGEN_ENGINE=lapack
QR_MAX_ITER_FACTOR=500
DENSE_CAP=4096
EIGEN_CAP_BLOCKS=2048
CLUSTER_EPS=1e-2
EXP_FORM_THRESHOLD=30

# Solver
DEFAULT_TOL=1e-8
DEFAULT_MAX_ITERS=10
DENSE_TRANSFORM_CAP=512

# Saída
CSV_FLOAT_FORMAT=%.17g
"""

    with open('.env', 'w', encoding='utf-8') as f:
        f.write(env_content)

    print("✅ Arquivo .env criado com sucesso!")
    print("📝 Ajuste TPS_WORKERS e OUTPUT_DIR conforme a sua máquina")


if __name__ == "__main__":
    create_env_file()
