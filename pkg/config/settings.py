"""
Configurações do sistema tpschwarz (Schwarz paralelo no tempo para controle ótimo parabólico)
"""

import os
from pathlib import Path
from dotenv import load_dotenv

# Carrega variáveis de ambiente
load_dotenv()

# Configurações de diretórios
BASE_DIR = Path(__file__).parent.parent
OUTPUT_DIR = Path(os.getenv("OUTPUT_DIR", "results"))

# Configurações de logging
LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO")
LOG_FILE = os.getenv("LOG_FILE", "")

# Configurações de paralelismo (vazio = paralelismo disponível)
TPS_WORKERS = os.getenv("TPS_WORKERS", "")

# Configurações da teoria espectral
THETA_SAMPLES = int(os.getenv("THETA_SAMPLES", "2001"))
EIGEN_ENGINE = os.getenv("EIGEN_ENGINE", "lapack")
QR_MAX_ITER_FACTOR = int(os.getenv("QR_MAX_ITER_FACTOR", "500"))
DENSE_CAP = int(os.getenv("DENSE_CAP", "4096"))
EIGEN_CAP_BLOCKS = int(os.getenv("EIGEN_CAP_BLOCKS", "2048"))
CLUSTER_EPS = float(os.getenv("CLUSTER_EPS", "1e-2"))

# Acima deste valor de sigma*dt os coeficientes usam a forma exponencial
EXP_FORM_THRESHOLD = float(os.getenv("EXP_FORM_THRESHOLD", "30"))

# Configurações do solver
DEFAULT_TOL = float(os.getenv("DEFAULT_TOL", "1e-8"))
DEFAULT_MAX_ITERS = int(os.getenv("DEFAULT_MAX_ITERS", "10"))
DENSE_TRANSFORM_CAP = int(os.getenv("DENSE_TRANSFORM_CAP", "512"))

# Configurações de saída
CSV_FLOAT_FORMAT = os.getenv("CSV_FLOAT_FORMAT", "%.17g")
CONFIG_SCHEMA_VERSION = 1

# Cenários e experimentos suportados
SCENARIOS = ("manufactured", "heatcool")
EXPERIMENT_IDS = ("bounds", "clustering", "cn-order", "weak-scaling", "heatcool")

# Contagens de incógnitas esperadas no cenário de aquecimento-resfriamento (N=2^9, h=1/128, dt=1/2)
HEATCOOL_TOTAL_UNKNOWNS = 8_323_326
HEATCOOL_PERIOD_UNKNOWNS = 16_510
