"""
Utilitários para o tpschwarz
"""

import hashlib
import logging
import os
import re
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import pandas as pd

from config.settings import CSV_FLOAT_FORMAT, LOG_FILE


class NumericalFailure(RuntimeError):
    """Falha numérica reportável (código de saída 1 na CLI)"""


class EigenSolverBreakdown(NumericalFailure):
    """A iteração QR não convergiu dentro do limite de iterações"""


class ParameterOverflow(NumericalFailure):
    """Coeficientes não finitos para os parâmetros fornecidos"""


class SingularSystem(NumericalFailure):
    """Fatoração local ou monolítica singular"""

    def __init__(self, message: str, subdomain: Optional[int] = None):
        if subdomain is not None:
            message = f"subdomínio {subdomain}: {message}"
        super().__init__(message)
        self.subdomain = subdomain


class InvariantViolation(NumericalFailure):
    """Uma verificação cruzada teoria/solver falhou"""


def setup_logging(level: str = "INFO", log_file: Optional[str] = None) -> logging.Logger:
    """
    Configura o sistema de logging

    Args:
        level: Nível de logging (DEBUG, INFO, WARNING, ERROR)
        log_file: Arquivo opcional de log (padrão: LOG_FILE das configurações)

    Returns:
        Logger configurado
    """
    handlers: List[logging.Handler] = [logging.StreamHandler()]
    log_file = LOG_FILE if log_file is None else log_file
    if log_file:
        handlers.append(logging.FileHandler(log_file))

    logging.basicConfig(
        level=getattr(logging, level.upper()),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=handlers,
        force=True,
    )
    return logging.getLogger(__name__)


def ensure_directory_exists(directory: Path) -> None:
    """
    Garante que um diretório existe, criando-o se necessário

    Args:
        directory: Caminho do diretório
    """
    directory.mkdir(parents=True, exist_ok=True)


def generate_file_hash(file_path: Path) -> str:
    """
    Gera um hash único para um arquivo

    Args:
        file_path: Caminho para o arquivo

    Returns:
        Hash SHA-256 do arquivo
    """
    hash_sha = hashlib.sha256()
    with open(file_path, "rb") as f:
        for chunk in iter(lambda: f.read(4096), b""):
            hash_sha.update(chunk)
    return hash_sha.hexdigest()


def get_safe_filename(filename: str) -> str:
    """
    Converte um nome de arquivo para um formato seguro

    Args:
        filename: Nome original do arquivo

    Returns:
        Nome de arquivo seguro
    """
    safe_name = re.sub(r'[^\w\-_\.]', '_', filename)
    safe_name = re.sub(r'_+', '_', safe_name)
    return safe_name.strip('_')


def params_tag(params: Dict[str, object]) -> str:
    """
    Monta o sufixo `<chave><valor>_...` usado nos nomes dos CSVs

    Args:
        params: Parâmetros do ponto do experimento

    Returns:
        Sufixo seguro para nome de arquivo
    """
    parts = []
    for key, value in params.items():
        if isinstance(value, float):
            value = f"{value:.6g}"
        parts.append(f"{key}{value}")
    return get_safe_filename("_".join(parts))


def write_table(table: pd.DataFrame, path: Optional[Path] = None) -> str:
    """
    Escreve uma tabela em CSV com precisão total (17 dígitos significativos)

    Args:
        table: Tabela a escrever
        path: Destino; se None, retorna apenas o texto CSV

    Returns:
        Conteúdo CSV escrito
    """
    text = table.to_csv(index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")
    if path is not None:
        ensure_directory_exists(Path(path).parent)
        Path(path).write_text(text, encoding="utf-8")
    return text


def parse_int_list(text: str) -> List[int]:
    """
    Converte '2,4,8' em [2, 4, 8]

    Args:
        text: Lista separada por vírgulas

    Returns:
        Lista de inteiros
    """
    try:
        values = [int(item) for item in text.split(",") if item.strip()]
    except ValueError:
        raise ValueError(f"Lista de inteiros inválida: {text!r}")
    if not values:
        raise ValueError("Lista de inteiros vazia")
    return values


def resolve_workers(requested: Optional[int], cap: Optional[int] = None) -> int:
    """
    Decide o número de workers: argumento, depois TPS_WORKERS, depois CPUs disponíveis

    Args:
        requested: Valor explícito (--workers)
        cap: Limite superior (tipicamente N)

    Returns:
        Número de workers >= 1
    """
    if requested is None:
        env_value = os.getenv("TPS_WORKERS", "").strip()
        if env_value:
            try:
                requested = int(env_value)
            except ValueError:
                raise ValueError(f"TPS_WORKERS inválido: {env_value!r}")
    if requested is None:
        requested = os.cpu_count() or 1
    if requested < 1:
        raise ValueError(f"Número de workers deve ser >= 1, recebido {requested}")
    if cap is not None:
        requested = min(requested, max(1, cap))
    return requested


def geometric_mean_ratio(values: Sequence[float], window: int = 2) -> float:
    """
    Razão média geométrica de decaimento nas últimas `window` razões (window+1 iterações)

    Args:
        values: Sequência de normas de erro
        window: Número de razões consideradas

    Returns:
        Taxa de contração observada (nan se não houver dados suficientes)
    """
    positive = [v for v in values if v > 0]
    if len(positive) < 2:
        return float("nan")
    window = min(window, len(positive) - 1)
    return (positive[-1] / positive[-1 - window]) ** (1.0 / window)
