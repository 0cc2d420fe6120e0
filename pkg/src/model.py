"""
Modelo contínuo e discretizações do problema de controle ótimo parabólico

Minimiza 1/2 ||y - ŷ||² + ν/2 ||u||² sujeito à equação do calor em Ω=(0, L)
com Dirichlet homogêneo. O sistema de otimalidade reduzido é

    ∂t y - Δy = p/ν,   y(0) = y0
    ∂t p + Δp = y - ŷ, p(T) = 0

com controle ótimo u = p/ν.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Literal, Optional, Tuple, Union

import numpy as np
import pandas as pd
import scipy.sparse as sp
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy.interpolate import RegularGridInterpolator

from config.settings import CONFIG_SCHEMA_VERSION
from src.utils import write_table

logger = logging.getLogger(__name__)

SpaceTimeFunction = Callable[[np.ndarray, np.ndarray], np.ndarray]
SpaceFunction = Callable[[np.ndarray], np.ndarray]

FIELD_ROLES = ("state", "adjoint", "control", "target")


def _zero_initial(x: np.ndarray) -> np.ndarray:
    return np.zeros_like(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class ProblemSpec:
    """Problema contínuo: Ω=(0, length), horizonte, penalização ν, alvo ŷ e dado inicial y0"""

    length: float
    horizon: float
    nu: float
    target: SpaceTimeFunction
    initial: SpaceFunction = _zero_initial
    scenario: str = "custom"

    def __post_init__(self):
        for name in ("length", "horizon", "nu"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"{name} deve ser positivo e finito, recebido {value}")


@dataclass(frozen=True)
class SpatialGrid:
    """Malha uniforme com M nós interiores em (0, length)"""

    M: int
    length: float = 1.0

    def __post_init__(self):
        if int(self.M) != self.M or self.M < 1:
            raise ValueError(f"M deve ser um inteiro >= 1, recebido {self.M}")
        if not (np.isfinite(self.length) and self.length > 0):
            raise ValueError(f"length deve ser positivo, recebido {self.length}")

    @property
    def h(self) -> float:
        return self.length / (self.M + 1)

    @property
    def nodes(self) -> np.ndarray:
        return self.h * np.arange(1, self.M + 1)

    @classmethod
    def from_spacing(cls, h: float, length: float = 1.0) -> "SpatialGrid":
        """Malha com espaçamento h (length/h precisa ser inteiro)"""
        cells = int(round(length / h))
        if cells < 2 or abs(cells * h - length) > 1e-12 * length:
            raise ValueError(f"length/h deve ser um inteiro >= 2, recebido {length}/{h}")
        return cls(M=cells - 1, length=length)


@dataclass(frozen=True)
class TimeDecomposition:
    """N subintervalos de tamanho dt_sub, cada um com K passos de tamanho h_t"""

    N: int
    dt_sub: float
    K: int

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"N deve ser um inteiro >= 1, recebido {self.N}")
        if int(self.K) != self.K or self.K < 1:
            raise ValueError(f"K deve ser um inteiro >= 1, recebido {self.K}")
        if not (np.isfinite(self.dt_sub) and self.dt_sub > 0):
            raise ValueError(f"dt_sub deve ser positivo, recebido {self.dt_sub}")

    @property
    def h_t(self) -> float:
        return self.dt_sub / self.K

    @property
    def horizon(self) -> float:
        return self.N * self.dt_sub

    @property
    def n_levels(self) -> int:
        return self.N * self.K + 1

    @property
    def breakpoints(self) -> np.ndarray:
        return self.dt_sub * np.arange(self.N + 1)

    @property
    def times(self) -> np.ndarray:
        return self.h_t * np.arange(self.n_levels)

    def levels(self, n: int) -> slice:
        """Níveis de tempo (inclusive) do subdomínio n ∈ 1..N"""
        if not 1 <= n <= self.N:
            raise ValueError(f"Subdomínio {n} fora de 1..{self.N}")
        return slice((n - 1) * self.K, n * self.K + 1)

    @classmethod
    def from_horizon(cls, horizon: float, N: int, K: int) -> "TimeDecomposition":
        return cls(N=N, dt_sub=horizon / N, K=K)


@dataclass(frozen=True)
class SpaceTimeField:
    """Valores em (nível de tempo 0..N·K, nó 1..M), armazenados por tempo"""

    values: np.ndarray
    role: str = "state"

    def __post_init__(self):
        if self.role not in FIELD_ROLES:
            raise ValueError(f"Papel de campo desconhecido: {self.role}")
        values = np.array(self.values, dtype=float, copy=True)
        if values.ndim != 2:
            raise ValueError(f"Campo deve ser 2D (tempo, espaço), recebido shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("Campo contém valores não finitos")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape

    def check(self, grid: SpatialGrid, decomp: TimeDecomposition) -> None:
        expected = (decomp.n_levels, grid.M)
        if self.values.shape != expected:
            raise ValueError(f"Dimensões do campo {self.values.shape} incompatíveis com {expected}")

    def control(self, nu: float) -> "SpaceTimeField":
        """Controle ótimo u = p/ν a partir do adjunto"""
        if self.role != "adjoint":
            raise ValueError(f"Controle só é definido a partir do adjunto, papel atual: {self.role}")
        return SpaceTimeField(self.values / nu, role="control")

    def __sub__(self, other: "SpaceTimeField") -> "SpaceTimeField":
        return SpaceTimeField(self.values - other.values, role=self.role)


def build_laplacian(grid: SpatialGrid) -> sp.csr_matrix:
    """
    Laplaciano de diferenças finitas de 3 pontos (aproxima -Δ) com Dirichlet homogêneo

    Args:
        grid: Malha espacial

    Returns:
        Matriz M×M esparsa, simétrica positiva definida (diag 2/h², fora -1/h²)
    """
    inv_h2 = 1.0 / grid.h ** 2
    main = np.full(grid.M, 2.0 * inv_h2)
    off = np.full(grid.M - 1, -inv_h2)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr")


def trapezoid_weights(decomp: TimeDecomposition, n_levels: Optional[int] = None) -> np.ndarray:
    """Pesos do trapézio em tempo sobre n_levels níveis uniformes"""
    n_levels = decomp.n_levels if n_levels is None else n_levels
    weights = np.full(n_levels, decomp.h_t)
    weights[0] *= 0.5
    weights[-1] *= 0.5
    return weights


def l2q_norm(field: Union[SpaceTimeField, np.ndarray], grid: SpatialGrid,
             decomp: TimeDecomposition) -> float:
    """
    Norma L²(Q) discreta: trapézio no tempo, peso h por nó interior no espaço

    Args:
        field: Campo espaço-tempo (ou array com as mesmas dimensões)
        grid: Malha espacial
        decomp: Decomposição temporal

    Returns:
        Norma não negativa
    """
    values = field.values if isinstance(field, SpaceTimeField) else np.asarray(field, dtype=float)
    expected = (decomp.n_levels, grid.M)
    if values.shape != expected:
        raise ValueError(f"Dimensões do campo {values.shape} incompatíveis com {expected}")
    per_level = grid.h * np.einsum("kj,kj->k", values, values)
    return float(np.sqrt(np.dot(trapezoid_weights(decomp), per_level)))


def manufactured_solution(nu: float, T: float) -> Tuple[SpaceTimeFunction, SpaceTimeFunction, SpaceTimeFunction]:
    """
    Solução manufaturada (y, p, ŷ) em Ω=(0, 1) com y0 = 0

    O alvo é obtido de ŷ = y - (∂t p + Δp), o que fixa o coeficiente π⁴
    no termo de e^{-π²T}.

    Args:
        nu: Penalização ν > 0
        T: Horizonte T > 0

    Returns:
        Tupla de funções vetorizadas (y, p, target) em (x, t)
    """
    if nu <= 0 or T <= 0:
        raise ValueError(f"nu e T devem ser positivos, recebidos nu={nu}, T={T}")
    a = np.pi ** 2
    c = np.exp(-a * T) / (1.0 + a * T)

    def y(x, t):
        x, t = np.asarray(x, dtype=float), np.asarray(t, dtype=float)
        return np.sin(np.pi * x) * (t * np.exp(-a * t) - c * t)

    def p(x, t):
        x, t = np.asarray(x, dtype=float), np.asarray(t, dtype=float)
        return nu * np.sin(np.pi * x) * (np.exp(-a * t) - c * (1.0 + a * t))

    def target(x, t):
        x, t = np.asarray(x, dtype=float), np.asarray(t, dtype=float)
        return nu * np.sin(np.pi * x) * ((t / nu + 2.0 * a) * np.exp(-a * t) - c * (t / nu + a * a * t))

    return y, p, target


def heatcool_target(L: float, dt_sub: float, N: int) -> SpaceTimeFunction:
    """
    Alvo periódico de aquecimento-resfriamento: soma de N gaussianas

    ŷ(x, t) = 10 Σ_n exp(-50((x - L/2)² + (t - (2n-1)Δt/2)²))

    Args:
        L: Comprimento do domínio
        dt_sub: Período Δt
        N: Número de períodos

    Returns:
        Função vetorizada em (x, t)
    """
    if L <= 0 or dt_sub <= 0 or N < 1:
        raise ValueError(f"Parâmetros inválidos: L={L}, dt_sub={dt_sub}, N={N}")
    centers = (2 * np.arange(1, N + 1) - 1) * dt_sub / 2.0

    def target(x, t):
        x, t = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(t, dtype=float))
        dx2 = (x - L / 2.0) ** 2
        total = np.zeros_like(x)
        for tc in centers:
            total += np.exp(-50.0 * (dx2 + (t - tc) ** 2))
        return 10.0 * total

    return target


def sample_field(func: SpaceTimeFunction, grid: SpatialGrid, decomp: TimeDecomposition,
                 role: str = "target") -> SpaceTimeField:
    """
    Amostra uma função (x, t) nos níveis de tempo e nós interiores

    Args:
        func: Função vetorizada
        grid: Malha espacial
        decomp: Decomposição temporal
        role: Papel do campo

    Returns:
        Campo espaço-tempo
    """
    tt, xx = np.meshgrid(decomp.times, grid.nodes, indexing="ij")
    return SpaceTimeField(np.asarray(func(xx, tt), dtype=float), role=role)


def write_field_csv(field: SpaceTimeField, grid: SpatialGrid, decomp: TimeDecomposition,
                    path: Optional[Path] = None) -> str:
    """
    Grava um campo em CSV com cabeçalho `t,x,value`

    Args:
        field: Campo a gravar
        grid: Malha espacial
        decomp: Decomposição temporal
        path: Destino (None retorna só o texto)

    Returns:
        Conteúdo CSV
    """
    field.check(grid, decomp)
    tt, xx = np.meshgrid(decomp.times, grid.nodes, indexing="ij")
    table = pd.DataFrame({"t": tt.ravel(), "x": xx.ravel(), "value": field.values.ravel()})
    return write_table(table, path)


def read_field_csv(path: Path, grid: SpatialGrid, decomp: TimeDecomposition,
                   role: str = "target") -> SpaceTimeField:
    """
    Lê um campo tabulado `t,x,value` definido exatamente na malha

    Args:
        path: Arquivo CSV
        grid: Malha espacial
        decomp: Decomposição temporal
        role: Papel do campo

    Returns:
        Campo espaço-tempo
    """
    table = pd.read_csv(path)
    missing = {"t", "x", "value"} - set(table.columns)
    if missing:
        raise ValueError(f"CSV {path} sem colunas {sorted(missing)}")
    table = table.sort_values(["t", "x"], kind="mergesort")
    expected = decomp.n_levels * grid.M
    if len(table) != expected:
        raise ValueError(f"CSV {path} tem {len(table)} linhas, esperado {expected}")
    values = table["value"].to_numpy().reshape(decomp.n_levels, grid.M)
    if not np.allclose(table["t"].to_numpy().reshape(decomp.n_levels, grid.M)[:, 0], decomp.times):
        raise ValueError(f"Tempos do CSV {path} não coincidem com a malha temporal")
    if not np.allclose(table["x"].to_numpy().reshape(decomp.n_levels, grid.M)[0], grid.nodes):
        raise ValueError(f"Nós do CSV {path} não coincidem com a malha espacial")
    return SpaceTimeField(values, role=role)


def tabulated_target(field: SpaceTimeField, grid: SpatialGrid, decomp: TimeDecomposition) -> SpaceTimeFunction:
    """Interpola um alvo tabulado para uma função (x, t)"""
    interpolator = RegularGridInterpolator((decomp.times, grid.nodes), field.values,
                                           bounds_error=False, fill_value=None)

    def target(x, t):
        x, t = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(t, dtype=float))
        points = np.stack([t.ravel(), x.ravel()], axis=-1)
        return interpolator(points).reshape(x.shape)

    return target


def tabulated_initial(path: Path, grid: SpatialGrid) -> SpaceFunction:
    """
    Lê um dado inicial `x,value` nos nós interiores e o estende por interpolação linear

    Args:
        path: Arquivo CSV
        grid: Malha espacial

    Returns:
        Função vetorizada y0(x), nula na fronteira
    """
    table = pd.read_csv(path)
    missing = {"x", "value"} - set(table.columns)
    if missing:
        raise ValueError(f"CSV {path} sem colunas {sorted(missing)}")
    table = table.sort_values("x", kind="mergesort")
    if len(table) != grid.M or not np.allclose(table["x"].to_numpy(), grid.nodes):
        raise ValueError(f"Nós do CSV {path} não coincidem com a malha espacial")
    xs = np.concatenate([[0.0], grid.nodes, [grid.length]])
    values = np.concatenate([[0.0], table["value"].to_numpy(dtype=float), [0.0]])

    def initial(x):
        return np.interp(np.asarray(x, dtype=float), xs, values)

    return initial


def unknown_count(grid: SpatialGrid, decomp: TimeDecomposition) -> Tuple[int, int]:
    """
    Contagem de incógnitas (y e p, todos os níveis de tempo, nós interiores)

    Returns:
        (total 2·M·(N·K+1), por período 2·M·(K+1))
    """
    return 2 * grid.M * (decomp.N * decomp.K + 1), 2 * grid.M * (decomp.K + 1)


class ProblemConfig(BaseModel):
    """Documento JSON de definição do problema"""

    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    schema_version: int = CONFIG_SCHEMA_VERSION
    L: float = Field(1.0, gt=0)
    T: float = Field(..., gt=0)
    nu: float = Field(..., gt=0)
    N: int = Field(..., ge=1)
    K: int = Field(..., ge=1)
    M: int = Field(..., ge=1)
    scenario: Literal["manufactured", "heatcool", "tabulated"] = "manufactured"
    target_csv: Optional[str] = None
    initial_csv: Optional[str] = None

    @field_validator("schema_version")
    @classmethod
    def _check_version(cls, value: int) -> int:
        if value != CONFIG_SCHEMA_VERSION:
            raise ValueError(f"schema_version {value} não suportada (esperado {CONFIG_SCHEMA_VERSION})")
        return value

    @model_validator(mode="after")
    def _check_scenario(self) -> "ProblemConfig":
        if self.scenario == "tabulated" and not self.target_csv:
            raise ValueError("scenario 'tabulated' exige target_csv")
        if self.scenario == "manufactured" and abs(self.L - 1.0) > 1e-14:
            raise ValueError("scenario 'manufactured' é definido em Ω=(0, 1)")
        if self.scenario == "manufactured" and self.initial_csv:
            raise ValueError("scenario 'manufactured' fixa y0 = 0; initial_csv não se aplica")
        return self


@dataclass(frozen=True)
class ProblemSetup:
    """Problema com suas discretizações e, quando conhecida, a solução exata"""

    problem: ProblemSpec
    grid: SpatialGrid
    decomp: TimeDecomposition
    exact: Optional[Tuple[SpaceTimeFunction, SpaceTimeFunction]] = None
    config: Dict[str, object] = field(default_factory=dict)


def build_problem(config: ProblemConfig, base_dir: Optional[Path] = None) -> ProblemSetup:
    """
    Monta problema, malha e decomposição a partir da configuração validada

    Args:
        config: Configuração validada
        base_dir: Diretório base para caminhos relativos de target_csv e initial_csv

    Returns:
        ProblemSetup
    """
    grid = SpatialGrid(M=config.M, length=config.L)
    decomp = TimeDecomposition.from_horizon(config.T, config.N, config.K)
    exact = None
    if config.scenario == "manufactured":
        y, p, target = manufactured_solution(config.nu, config.T)
        exact = (y, p)
    elif config.scenario == "heatcool":
        target = heatcool_target(config.L, decomp.dt_sub, config.N)
    else:
        csv_path = Path(config.target_csv)
        if base_dir is not None and not csv_path.is_absolute():
            csv_path = base_dir / csv_path
        if not csv_path.exists():
            raise FileNotFoundError(f"Alvo tabulado não encontrado: {csv_path}")
        target = tabulated_target(read_field_csv(csv_path, grid, decomp), grid, decomp)
    initial = _zero_initial
    if config.initial_csv:
        initial_path = Path(config.initial_csv)
        if base_dir is not None and not initial_path.is_absolute():
            initial_path = base_dir / initial_path
        if not initial_path.exists():
            raise FileNotFoundError(f"Dado inicial não encontrado: {initial_path}")
        initial = tabulated_initial(initial_path, grid)
    problem = ProblemSpec(length=config.L, horizon=config.T, nu=config.nu,
                          target=target, initial=initial, scenario=config.scenario)
    logger.info(f"Problema '{config.scenario}': M={grid.M}, N={decomp.N}, K={decomp.K}, "
                f"dt={decomp.dt_sub:.6g}, nu={config.nu:.6g}")
    return ProblemSetup(problem=problem, grid=grid, decomp=decomp, exact=exact,
                        config=config.model_dump())


def problem_from_config(source: Union[str, Path, Dict[str, object]]) -> ProblemSetup:
    """
    Carrega a definição do problema de um arquivo JSON ou de um dicionário

    Args:
        source: Caminho do JSON ou dicionário já carregado

    Returns:
        ProblemSetup
    """
    base_dir = None
    if isinstance(source, dict):
        document = source
    else:
        path = Path(source)
        if not path.exists():
            raise FileNotFoundError(f"Arquivo de configuração não encontrado: {path}")
        try:
            document = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ValueError(f"JSON inválido em {path}: {e}")
        base_dir = path.parent
    return build_problem(ProblemConfig.model_validate(document), base_dir=base_dir)
