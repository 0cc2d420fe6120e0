"""
Autodecomposição espacial e coeficientes escalares por modo

Cada autovalor λ_m do Laplaciano discreto desacopla o sistema de otimalidade
em problemas escalares; σ_m = sqrt(λ_m² + 1/ν) e os coeficientes C1, C2
alimentam tanto a teoria quanto o solver no espaço de modos.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np
import pandas as pd
from scipy.fft import dst

from config.settings import DENSE_TRANSFORM_CAP, EXP_FORM_THRESHOLD
from src.model import SpatialGrid
from src.utils import ParameterOverflow

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]


@dataclass(frozen=True)
class EigenBasis:
    """
    Autopares (λ_m, v_m) ortonormais; forward: nodal -> modal, inverse: modal -> nodal

    As transformações atuam no último eixo, de modo que um campo (tempo, espaço)
    é transformado nível a nível.
    """

    lambdas: np.ndarray
    vectors: np.ndarray
    analytic: bool = False

    def __post_init__(self):
        lambdas = np.array(self.lambdas, dtype=float, copy=True)
        vectors = np.array(self.vectors, dtype=float, copy=True)
        if vectors.shape != (lambdas.size, lambdas.size):
            raise ValueError(f"Autovetores com shape {vectors.shape} para {lambdas.size} autovalores")
        if np.any(np.diff(lambdas) <= 0):
            raise ValueError("Autovalores devem ser estritamente crescentes")
        if np.any(lambdas <= 0):
            raise ValueError("Autovalores devem ser positivos")
        lambdas.setflags(write=False)
        vectors.setflags(write=False)
        object.__setattr__(self, "lambdas", lambdas)
        object.__setattr__(self, "vectors", vectors)

    @property
    def M(self) -> int:
        return self.lambdas.size

    def forward(self, values: np.ndarray) -> np.ndarray:
        """Coeficientes modais P⁻¹v (P ortogonal)"""
        values = np.asarray(values, dtype=float)
        if values.shape[-1] != self.M:
            raise ValueError(f"Último eixo com {values.shape[-1]} entradas, esperado {self.M}")
        if self.analytic and self.M > DENSE_TRANSFORM_CAP:
            return dst(values, type=1, norm="ortho", axis=-1)
        return values @ self.vectors

    def inverse(self, coeffs: np.ndarray) -> np.ndarray:
        """Valores nodais Pc"""
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape[-1] != self.M:
            raise ValueError(f"Último eixo com {coeffs.shape[-1]} entradas, esperado {self.M}")
        if self.analytic and self.M > DENSE_TRANSFORM_CAP:
            return dst(coeffs, type=1, norm="ortho", axis=-1)
        return coeffs @ self.vectors.T

    @classmethod
    def from_pairs(cls, lambdas: np.ndarray, vectors: np.ndarray) -> "EigenBasis":
        """
        Base a partir de autopares tabulados (colunas de `vectors`)

        Os pares são ordenados por autovalor e os vetores ortonormalizados.
        """
        lambdas = np.asarray(lambdas, dtype=float)
        vectors = np.asarray(vectors, dtype=float)
        order = np.argsort(lambdas, kind="mergesort")
        q, r = np.linalg.qr(vectors[:, order])
        # preserva o sinal de cada vetor original
        q = q * np.sign(np.diag(r))
        return cls(lambdas=lambdas[order], vectors=q)


def eigenbasis(grid: SpatialGrid) -> EigenBasis:
    """
    Autopares analíticos do Laplaciano de 3 pontos

    λ_m = (4/h²) sin²(mπh/(2L)), v_m(x_j) ∝ sin(mπx_j/L), ortonormalizados

    Args:
        grid: Malha espacial

    Returns:
        EigenBasis analítica (transformada seno discreta)
    """
    m = np.arange(1, grid.M + 1)
    lambdas = (4.0 / grid.h ** 2) * np.sin(m * np.pi * grid.h / (2.0 * grid.length)) ** 2
    j = np.arange(1, grid.M + 1)
    vectors = np.sqrt(2.0 / (grid.M + 1)) * np.sin(np.outer(j, m) * np.pi / (grid.M + 1))
    return EigenBasis(lambdas=lambdas, vectors=vectors, analytic=True)


def spectral_scaling_constants(basis: EigenBasis, h: float, d: int = 1) -> Tuple[float, float]:
    """
    Constantes de C̲h^d <= λ <= C̄h^(d-2) para a matriz de rigidez h^d·A

    Returns:
        (C̲, C̄) observados; ambos ficam limitados com o refinamento da malha
    """
    stiffness = basis.lambdas * h ** d
    return float(stiffness.min() / h ** d), float(stiffness.max() / h ** (d - 2))


@dataclass(frozen=True)
class ModeCoefficients:
    """Escalares de um modo: λ, σ, C1 (< 0), C2 ∈ (0, 1), e os parâmetros de origem"""

    lam: float
    sigma: float
    c1: float
    c2: float
    nu: float
    dt: float

    @property
    def rho_tilde(self) -> float:
        return self.nu * self.c1 ** 2 + self.c2 ** 2


def sigma_of(lam: ArrayLike, nu: float) -> ArrayLike:
    """σ = sqrt(λ² + 1/ν)"""
    return np.hypot(lam, 1.0 / np.sqrt(nu))


def hyperbolic_ratio(kind: str, a: ArrayLike, sigma: float, lam: float, dt: float) -> ArrayLike:
    """
    Razão estável f(σa) / (σcosh(σΔt) + λsinh(σΔt)), f ∈ {cosh, sinh}, 0 <= a <= Δt

    Args:
        kind: "cosh" ou "sinh"
        a: Argumento(s) em [0, Δt]
        sigma: σ do modo
        lam: λ do modo
        dt: Comprimento Δt

    Returns:
        Razão avaliada sem overflow
    """
    a = np.asarray(a, dtype=float)
    if kind not in ("cosh", "sinh"):
        raise ValueError(f"kind deve ser 'cosh' ou 'sinh', recebido {kind!r}")
    x = sigma * dt
    if x <= EXP_FORM_THRESHOLD:
        denom = sigma * np.cosh(x) + lam * np.sinh(x)
        func = np.cosh if kind == "cosh" else np.sinh
        return func(sigma * a) / denom
    e2 = np.exp(-2.0 * x)
    denom = sigma * (1.0 + e2) + lam * (1.0 - e2)
    sign = 1.0 if kind == "cosh" else -1.0
    return (np.exp(sigma * (a - dt)) + sign * np.exp(-sigma * (a + dt))) / denom


def coefficient_arrays(lams: ArrayLike, nu: float, dt: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    σ, C1, C2 vetorizados sobre λ

    C1 = -ν⁻¹sinh(σΔt)/(σcosh(σΔt)+λsinh(σΔt)), C2 = σ/(σcosh(σΔt)+λsinh(σΔt)).
    Para σΔt acima de EXP_FORM_THRESHOLD, numerador e denominador são divididos
    por e^{σΔt}.
    """
    if nu <= 0 or dt <= 0:
        raise ValueError(f"nu e dt devem ser positivos, recebidos nu={nu}, dt={dt}")
    lams = np.asarray(lams, dtype=float)
    if np.any(lams < 0):
        raise ValueError("λ deve ser não negativo")
    sigma = sigma_of(lams, nu)
    x = sigma * dt
    safe = x <= EXP_FORM_THRESHOLD
    with np.errstate(over="ignore", invalid="ignore"):
        xs = np.where(safe, x, 0.0)
        denom_direct = sigma * np.cosh(xs) + lams * np.sinh(xs)
        c1_direct = -np.sinh(xs) / (nu * denom_direct)
        c2_direct = sigma / denom_direct

        e1 = np.exp(-x)
        e2 = e1 * e1
        denom_exp = sigma * (1.0 + e2) + lams * (1.0 - e2)
        c1_exp = -(1.0 - e2) / (nu * denom_exp)
        c2_exp = 2.0 * sigma * e1 / denom_exp

    c1 = np.where(safe, c1_direct, c1_exp)
    c2 = np.where(safe, c2_direct, c2_exp)
    if not (np.all(np.isfinite(c1)) and np.all(np.isfinite(c2)) and np.all(np.isfinite(sigma))):
        raise ParameterOverflow(f"Coeficientes não finitos para nu={nu}, dt={dt}")
    return sigma, c1, c2


def coefficients(lam: float, nu: float, dt: float) -> ModeCoefficients:
    """
    Coeficientes fechados de um modo

    Args:
        lam: Autovalor λ >= 0
        nu: Penalização ν > 0
        dt: Comprimento do subintervalo Δt > 0

    Returns:
        ModeCoefficients
    """
    sigma, c1, c2 = coefficient_arrays(np.array([lam], dtype=float), nu, dt)
    return ModeCoefficients(lam=float(lam), sigma=float(sigma[0]), c1=float(c1[0]),
                            c2=float(c2[0]), nu=float(nu), dt=float(dt))


def mode_coefficients(basis: EigenBasis, nu: float, dt: float) -> list:
    """Lista de ModeCoefficients para todos os modos da base"""
    sigma, c1, c2 = coefficient_arrays(basis.lambdas, nu, dt)
    return [ModeCoefficients(lam=float(lam), sigma=float(s), c1=float(a), c2=float(b),
                             nu=float(nu), dt=float(dt))
            for lam, s, a, b in zip(basis.lambdas, sigma, c1, c2)]


def coefficients_table(basis: EigenBasis, nu: float, dt: float) -> pd.DataFrame:
    """
    Tabela `m,lambda,sigma,c1,c2` para todos os modos

    Args:
        basis: Base espectral
        nu: Penalização
        dt: Comprimento do subintervalo

    Returns:
        DataFrame com uma linha por modo
    """
    sigma, c1, c2 = coefficient_arrays(basis.lambdas, nu, dt)
    return pd.DataFrame({
        "m": np.arange(1, basis.M + 1),
        "lambda": basis.lambdas,
        "sigma": sigma,
        "c1": c1,
        "c2": c2,
    })


def rho_tilde_expanded(lam: ArrayLike, nu: float, dt: float, printed: bool = True) -> ArrayLike:
    """
    Forma expandida de ρ̃ = νC1² + C2²

        (λ² + ν⁻¹cosh²) / (λ² + ν⁻¹cosh² + 2λ²sinh² + σλ·S)

    com S = sinh²(2σΔt) quando `printed` (a forma publicada) e S = sinh(2σΔt)
    caso contrário. Numerador e denominador são divididos por cosh²(σΔt).
    """
    lam = np.asarray(lam, dtype=float)
    sigma = sigma_of(lam, nu)
    x = sigma * dt
    with np.errstate(over="ignore", invalid="ignore"):
        sech2 = (2.0 * np.exp(-x) / (1.0 + np.exp(-2.0 * x))) ** 2
        tanh = np.tanh(x)
        num = lam ** 2 * sech2 + 1.0 / nu
        if printed:
            # sinh²(2x)/cosh²(x) = 4 sinh²(x)
            cross = np.where(lam > 0, sigma * lam * 4.0 * np.sinh(x) ** 2, 0.0)
        else:
            cross = sigma * lam * 2.0 * tanh
        den = num + 2.0 * lam ** 2 * tanh ** 2 + cross
        return np.where(np.isfinite(den), num / den, 0.0)


def rho_tilde_identity_gap(lam: ArrayLike, nu: float, dt: float) -> ArrayLike:
    """
    Diferença relativa entre νC1²+C2² (normativa) e a forma expandida publicada

    Returns:
        |expandida - normativa| / normativa
    """
    _, c1, c2 = coefficient_arrays(lam, nu, dt)
    reference = nu * c1 ** 2 + c2 ** 2
    gap = np.abs(rho_tilde_expanded(lam, nu, dt, printed=True) - reference) / reference
    worst = float(np.max(gap))
    if worst > 1e-10:
        logger.warning(f"Forma expandida de ρ̃ difere da definição: gap relativo máximo {worst:.3e}")
    return gap
