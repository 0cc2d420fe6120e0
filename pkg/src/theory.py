"""
Matriz de iteração T^PS_N e suas cotas espectrais

O vetor de erro de um modo nas interfaces é e = (R_2, D_1, ..., R_N, D_{N-1}),
com R o traço de Robin (adjunto/ν vindo da direita) e D o traço de Dirichlet
(estado vindo da esquerda). Uma varredura de Schwarz aplica e -> T^PS_N e,
com T^PS_N tridiagonal por blocos Toeplitz de blocos 2×2 T_l, T_d, T_r.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
import pandas as pd
import scipy.sparse as sp

from config.settings import (
    CLUSTER_EPS, DENSE_CAP, EIGEN_CAP_BLOCKS, EIGEN_ENGINE, QR_MAX_ITER_FACTOR, THETA_SAMPLES
)
from src.modes import ModeCoefficients
from src.utils import EigenSolverBreakdown

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class IterationMatrix:
    """Representação em blocos de T^PS_N (n_blocks = N-1 linhas de blocos)"""

    t_l: np.ndarray
    t_d: np.ndarray
    t_r: np.ndarray
    n_blocks: int
    coeffs: ModeCoefficients

    @property
    def N(self) -> int:
        return self.n_blocks + 1

    @property
    def dim(self) -> int:
        return 2 * self.n_blocks

    def sparse(self) -> sp.csr_matrix:
        """Materialização esparsa (qualquer N)"""
        k = self.n_blocks
        return (sp.kron(sp.eye(k, format="csr"), self.t_d)
                + sp.kron(sp.eye(k, k=1, format="csr"), self.t_r)
                + sp.kron(sp.eye(k, k=-1, format="csr"), self.t_l)).tocsr()

    def dense(self) -> np.ndarray:
        """Materialização densa, limitada a DENSE_CAP blocos"""
        if self.n_blocks > DENSE_CAP:
            raise ValueError(f"Materialização densa limitada a {DENSE_CAP} blocos, recebido {self.n_blocks}")
        return self.sparse().toarray()


def assemble(coeffs: ModeCoefficients, N: int) -> IterationMatrix:
    """
    Monta T^PS_N a partir dos coeficientes do modo

    T_l = [[0, 0], [0, C2]], T_d = [[0, C1], [-νC1, 0]], T_r = [[C2, 0], [0, 0]]

    Args:
        coeffs: Coeficientes do modo
        N: Número de subintervalos (>= 2)

    Returns:
        IterationMatrix com N-1 linhas de blocos
    """
    if int(N) != N or N < 2:
        raise ValueError(f"N deve ser um inteiro >= 2, recebido {N}")
    c1, c2, nu = coeffs.c1, coeffs.c2, coeffs.nu
    t_l = np.array([[0.0, 0.0], [0.0, c2]])
    t_d = np.array([[0.0, c1], [-nu * c1, 0.0]])
    t_r = np.array([[c2, 0.0], [0.0, 0.0]])
    for block in (t_l, t_d, t_r):
        block.setflags(write=False)
    return IterationMatrix(t_l=t_l, t_d=t_d, t_r=t_r, n_blocks=int(N) - 1, coeffs=coeffs)


def apply(T: IterationMatrix, e: np.ndarray) -> np.ndarray:
    """
    Produto T e sem materializar a matriz

    Args:
        T: Matriz de iteração
        e: Vetor de tamanho 2(N-1)

    Returns:
        Novo vetor de erro
    """
    e = np.asarray(e, dtype=float)
    if e.shape != (T.dim,):
        raise ValueError(f"Vetor com shape {e.shape}, esperado ({T.dim},)")
    blocks = e.reshape(T.n_blocks, 2)
    out = blocks @ T.t_d.T
    out[:-1] += blocks[1:] @ T.t_r.T
    out[1:] += blocks[:-1] @ T.t_l.T
    return out.reshape(-1)


def infinity_norm_closed_form(coeffs: ModeCoefficients) -> float:
    """
    ||T^PS_N||_∞ em forma fechada (N >= 3; também igual à norma 1)

    Returns:
        |C1| + C2 se ν <= 1, senão ν|C1| + C2
    """
    if coeffs.nu <= 1.0:
        return abs(coeffs.c1) + abs(coeffs.c2)
    return coeffs.nu * abs(coeffs.c1) + abs(coeffs.c2)


def infinity_norm(T: IterationMatrix) -> float:
    """Maior soma absoluta de linha da matriz materializada"""
    return float(abs(T.sparse()).sum(axis=1).max())


def one_norm(T: IterationMatrix) -> float:
    """Maior soma absoluta de coluna da matriz materializada"""
    return float(abs(T.sparse()).sum(axis=0).max())


def rho_tilde(coeffs: ModeCoefficients) -> float:
    """
    ρ̃(m) = νC1² + C2², o quadrado da norma especial, independente de N

    Args:
        coeffs: Coeficientes do modo

    Returns:
        Valor em (0, 1) para λ > 0 e 1 para λ = 0
    """
    return coeffs.nu * coeffs.c1 ** 2 + coeffs.c2 ** 2


def similarity_transform(T: IterationMatrix) -> sp.csr_matrix:
    """D⁻¹ T D com D = diag(1, √ν, 1, √ν, ...)"""
    scale = np.tile([1.0, np.sqrt(T.coeffs.nu)], T.n_blocks)
    D = sp.diags(scale)
    D_inv = sp.diags(1.0 / scale)
    return (D_inv @ T.sparse() @ D).tocsr()


def special_norm(T: IterationMatrix) -> float:
    """
    |||T||| = max_i (Σ_j (D⁻¹TD)_ij²)^(1/2)

    Returns:
        √ρ̃ para N >= 3, √ν|C1| para N = 2
    """
    S = similarity_transform(T)
    return float(np.sqrt(S.multiply(S).sum(axis=1).max()))


def _balance(A: np.ndarray, radix: float = 2.0) -> np.ndarray:
    """Balanceamento por potências da base (escala linhas e colunas)"""
    A = A.copy()
    n = A.shape[0]
    sqrdx = radix * radix
    done = False
    while not done:
        done = True
        for i in range(n):
            c = np.abs(A[:, i]).sum() - abs(A[i, i])
            r = np.abs(A[i, :]).sum() - abs(A[i, i])
            if c == 0.0 or r == 0.0:
                continue
            g = r / radix
            f = 1.0
            s = c + r
            while c < g:
                f *= radix
                c *= sqrdx
            g = r * radix
            while c > g:
                f /= radix
                c /= sqrdx
            if (c + r) / f < 0.95 * s:
                done = False
                A[i, :] /= f
                A[:, i] *= f
    return A


def _hessenberg(A: np.ndarray) -> np.ndarray:
    """Redução a Hessenberg superior por refletores de Householder"""
    H = A.copy()
    n = H.shape[0]
    for k in range(n - 2):
        x = H[k + 1:, k]
        norm_x = np.linalg.norm(x)
        if norm_x == 0.0:
            continue
        alpha = -np.copysign(norm_x, x[0])
        v = x.copy()
        v[0] -= alpha
        norm_v = np.linalg.norm(v)
        if norm_v == 0.0:
            continue
        v /= norm_v
        H[k + 1:, k:] -= 2.0 * np.outer(v, v @ H[k + 1:, k:])
        H[:, k + 1:] -= 2.0 * np.outer(H[:, k + 1:] @ v, v)
        H[k + 2:, k] = 0.0
    return H


def _hessenberg_qr(H: np.ndarray, max_iter: int) -> np.ndarray:
    """Iteração QR de duplo deslocamento implícito (Francis) com deflação"""
    a = H.copy()
    n = a.shape[0]
    wr = np.zeros(n)
    wi = np.zeros(n)
    eps = np.finfo(float).eps
    anorm = np.abs(np.triu(a, -1)).sum()
    if anorm == 0.0:
        return np.zeros(n, dtype=complex)
    nn = n - 1
    t = 0.0
    total = 0
    while nn >= 0:
        its = 0
        while True:
            l = nn
            while l >= 1:
                s = abs(a[l - 1, l - 1]) + abs(a[l, l])
                if s == 0.0:
                    s = anorm
                if abs(a[l, l - 1]) <= eps * s:
                    a[l, l - 1] = 0.0
                    break
                l -= 1
            x = a[nn, nn]
            if l == nn:
                wr[nn] = x + t
                nn -= 1
                break
            y = a[nn - 1, nn - 1]
            w = a[nn, nn - 1] * a[nn - 1, nn]
            if l == nn - 1:
                p = 0.5 * (y - x)
                q = p * p + w
                z = np.sqrt(abs(q))
                x += t
                if q >= 0.0:
                    z = p + np.copysign(z, p)
                    wr[nn - 1] = wr[nn] = x + z
                    if z != 0.0:
                        wr[nn] = x - w / z
                else:
                    wr[nn - 1] = wr[nn] = x + p
                    wi[nn - 1] = -z
                    wi[nn] = z
                nn -= 2
                break
            if total >= max_iter:
                raise EigenSolverBreakdown(
                    f"QR não convergiu após {total} iterações (dimensão {n}, {nn + 1} autovalores restantes)")
            if its > 0 and its % 10 == 0:
                # deslocamento excepcional
                t += x
                a[np.arange(nn + 1), np.arange(nn + 1)] -= x
                s = abs(a[nn, nn - 1]) + abs(a[nn - 1, nn - 2])
                x = y = 0.75 * s
                w = -0.4375 * s * s
            its += 1
            total += 1
            m = nn - 2
            while m >= l:
                z = a[m, m]
                r = x - z
                s = y - z
                p = (r * s - w) / a[m + 1, m] + a[m, m + 1]
                q = a[m + 1, m + 1] - z - r - s
                r = a[m + 2, m + 1]
                s = abs(p) + abs(q) + abs(r)
                p /= s
                q /= s
                r /= s
                if m == l:
                    break
                u = abs(a[m, m - 1]) * (abs(q) + abs(r))
                v = abs(p) * (abs(a[m - 1, m - 1]) + abs(z) + abs(a[m + 1, m + 1]))
                if u <= eps * v:
                    break
                m -= 1
            band = np.arange(m + 2, nn + 1)
            a[band, band - 2] = 0.0
            a[band[1:], band[1:] - 3] = 0.0
            for k in range(m, nn):
                if k != m:
                    p = a[k, k - 1]
                    q = a[k + 1, k - 1]
                    r = a[k + 2, k - 1] if k != nn - 1 else 0.0
                    x = abs(p) + abs(q) + abs(r)
                    if x != 0.0:
                        p /= x
                        q /= x
                        r /= x
                s = np.copysign(np.sqrt(p * p + q * q + r * r), p)
                if s == 0.0:
                    continue
                if k == m:
                    if l != m:
                        a[k, k - 1] = -a[k, k - 1]
                else:
                    a[k, k - 1] = -s * x
                p += s
                x = p / s
                y = q / s
                z = r / s
                q /= p
                r /= p
                width = 3 if k != nn - 1 else 2
                reflector = np.array((1.0, q, r))[:width]
                scaled = np.array((x, y, z))[:width]
                band = slice(k, k + width)
                cols = slice(k, nn + 1)
                a[band, cols] -= np.outer(scaled, reflector @ a[band, cols])
                rows = slice(l, min(nn, k + 3) + 1)
                a[rows, band] -= np.outer(a[rows, band] @ scaled, reflector)
    return wr + 1j * wi


def hessenberg_qr_eigvals(A: np.ndarray, max_iter_factor: int = QR_MAX_ITER_FACTOR) -> np.ndarray:
    """
    Autovalores de uma matriz real densa: balanceamento, Hessenberg e QR deslocado

    Args:
        A: Matriz quadrada real
        max_iter_factor: Limite de iterações QR = fator × dimensão

    Returns:
        Autovalores complexos
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"Matriz quadrada esperada, recebido shape {A.shape}")
    n = A.shape[0]
    if n == 0:
        return np.zeros(0, dtype=complex)
    H = _hessenberg(_balance(A))
    return _hessenberg_qr(H, max_iter=max_iter_factor * n)


def eigenvalues(T: IterationMatrix, engine: Optional[str] = None) -> np.ndarray:
    """
    Todos os 2(N-1) autovalores de T^PS_N

    Args:
        T: Matriz de iteração
        engine: "lapack" (numpy) ou "qr" (implementação própria); padrão EIGEN_ENGINE

    Returns:
        Autovalores complexos
    """
    engine = engine or EIGEN_ENGINE
    if T.n_blocks > EIGEN_CAP_BLOCKS:
        raise ValueError(f"Autovalores limitados a {EIGEN_CAP_BLOCKS} blocos, recebido {T.n_blocks}")
    A = T.dense()
    if engine == "qr":
        values = hessenberg_qr_eigvals(A)
    elif engine == "lapack":
        values = np.linalg.eigvals(A)
    else:
        raise ValueError(f"engine desconhecido: {engine!r}")
    if not np.all(np.isfinite(values)):
        raise EigenSolverBreakdown(f"Autovalores não finitos para N={T.N}")
    return values.astype(complex)


def spectral_radius(T: IterationMatrix, engine: Optional[str] = None) -> Tuple[float, np.ndarray]:
    """
    Raio espectral de T^PS_N e a lista de autovalores

    Returns:
        (ρ, autovalores)
    """
    values = eigenvalues(T, engine=engine)
    return float(np.max(np.abs(values))), values


@dataclass(frozen=True)
class SymbolCurve:
    """Amostras dos ramos μ±(θ) do símbolo F(θ) em θ ∈ [-π, π]"""

    thetas: np.ndarray
    mu_plus: np.ndarray
    mu_minus: np.ndarray
    coeffs: ModeCoefficients

    def segments(self) -> Tuple[np.ndarray, np.ndarray]:
        """Extremos (início, fim) dos segmentos das duas poligonais"""
        starts = np.concatenate([self.mu_plus[:-1], self.mu_minus[:-1]])
        ends = np.concatenate([self.mu_plus[1:], self.mu_minus[1:]])
        return starts, ends


def symbol_matrix(coeffs: ModeCoefficients, theta: float) -> np.ndarray:
    """Símbolo 2×2 F(θ) = A_{-1}e^{-iθ} + A_0 + A_1e^{iθ} na forma escalada por D"""
    off = np.sqrt(coeffs.nu) * coeffs.c1
    return np.array([[coeffs.c2 * np.exp(-1j * theta), off],
                     [-off, coeffs.c2 * np.exp(1j * theta)]])


def symbol_eigenvalues(coeffs: ModeCoefficients, theta):
    """
    Autovalores de F(θ): μ± = C2cosθ ± i·sqrt((C2sinθ)² + νC1²)

    Returns:
        (μ+, μ-), vetorizado em θ
    """
    theta = np.asarray(theta, dtype=float)
    real = coeffs.c2 * np.cos(theta)
    imag = np.sqrt((coeffs.c2 * np.sin(theta)) ** 2 + coeffs.nu * coeffs.c1 ** 2)
    return real + 1j * imag, real - 1j * imag


def symbol_curve(coeffs: ModeCoefficients, samples: int = THETA_SAMPLES) -> SymbolCurve:
    """
    Amostra σ(T) com `samples` pontos uniformes em [-π, π]

    Args:
        coeffs: Coeficientes do modo
        samples: Número de valores de θ (>= 3)

    Returns:
        SymbolCurve
    """
    if samples < 3:
        raise ValueError(f"São necessárias pelo menos 3 amostras de θ, recebido {samples}")
    thetas = np.linspace(-np.pi, np.pi, samples)
    mu_plus, mu_minus = symbol_eigenvalues(coeffs, thetas)
    return SymbolCurve(thetas=thetas, mu_plus=mu_plus, mu_minus=mu_minus, coeffs=coeffs)


def region_d_contains(coeffs: ModeCoefficients, z, tol: float = 0.0):
    """
    Pertinência à região 𝒟 (união dos segmentos verticais de F(θ))

    θ é eliminado em forma fechada: |Re z| <= C2 e |Im z|² <= C2² - (Re z)² + νC1².

    Args:
        coeffs: Coeficientes do modo
        z: Ponto(s) complexo(s)
        tol: Tolerância >= 0

    Returns:
        Booleano (ou array de booleanos)
    """
    if tol < 0:
        raise ValueError(f"tol deve ser >= 0, recebido {tol}")
    z = np.asarray(z, dtype=complex)
    re, im = z.real, z.imag
    c2, nuc1 = coeffs.c2, coeffs.nu * coeffs.c1 ** 2
    if c2 == 0.0:
        inside = (np.abs(re) <= tol) & (im ** 2 <= nuc1 + tol)
    else:
        inside = (np.abs(re) <= c2 + tol) & (im ** 2 <= c2 ** 2 - re ** 2 + nuc1 + tol)
    return bool(inside) if inside.ndim == 0 else inside


def sigma_t_distance(curve: SymbolCurve, z, chunk: int = 256):
    """
    Distância de z à união das poligonais de μ+ e μ-

    Args:
        curve: Curva amostrada
        z: Ponto(s) complexo(s)
        chunk: Pontos processados por bloco

    Returns:
        Distância (ou array de distâncias)
    """
    points = np.atleast_1d(np.asarray(z, dtype=complex))
    starts, ends = curve.segments()
    edges = ends - starts
    lengths2 = np.abs(edges) ** 2
    lengths2 = np.where(lengths2 > 0, lengths2, 1.0)
    out = np.empty(points.size)
    for lo in range(0, points.size, chunk):
        block = points[lo:lo + chunk, None]
        s = np.clip(((block - starts) * np.conj(edges)).real / lengths2, 0.0, 1.0)
        out[lo:lo + chunk] = np.abs(block - (starts + s * edges)).min(axis=1)
    return float(out[0]) if np.ndim(z) == 0 else out


@dataclass(frozen=True)
class SpectrumReport:
    """Diagnósticos de uma seção finita: autovalores, cotas, região 𝒟 e distância a σ(T)"""

    N: int
    eigenvalues: np.ndarray
    rho: float
    rho_tilde: float
    inf_norm: float
    in_region_D: np.ndarray
    dist_to_sigmaT: np.ndarray
    eps: float = CLUSTER_EPS
    extra: dict = field(default_factory=dict)

    @property
    def sqrt_rho_tilde(self) -> float:
        return float(np.sqrt(self.rho_tilde))

    @property
    def max_dist(self) -> float:
        return float(self.dist_to_sigmaT.max()) if self.dist_to_sigmaT.size else 0.0

    @property
    def frac_outside_eps(self) -> float:
        """Fração dos autovalores a distância > eps de σ(T)"""
        return float(np.mean(self.dist_to_sigmaT > self.eps)) if self.dist_to_sigmaT.size else 0.0


def spectrum_report(coeffs: ModeCoefficients, N: int, curve: Optional[SymbolCurve] = None,
                    eps: float = CLUSTER_EPS, region_tol: float = 1e-10,
                    engine: Optional[str] = None) -> SpectrumReport:
    """
    Calcula o relatório espectral de T^PS_N

    Args:
        coeffs: Coeficientes do modo
        N: Número de subintervalos
        curve: σ(T) amostrada (padrão: THETA_SAMPLES pontos)
        eps: Raio da vizinhança de agrupamento
        region_tol: Tolerância do teste de 𝒟
        engine: Motor de autovalores

    Returns:
        SpectrumReport
    """
    T = assemble(coeffs, N)
    curve = curve if curve is not None else symbol_curve(coeffs)
    rho, values = spectral_radius(T, engine=engine)
    report = SpectrumReport(
        N=int(N),
        eigenvalues=values,
        rho=rho,
        rho_tilde=rho_tilde(coeffs),
        inf_norm=infinity_norm(T),
        in_region_D=np.asarray(region_d_contains(coeffs, values, tol=region_tol)),
        dist_to_sigmaT=np.asarray(sigma_t_distance(curve, values)),
        eps=eps,
    )
    logger.debug(f"N={N}: rho={rho:.6e}, sqrt(rho_tilde)={report.sqrt_rho_tilde:.6e}, "
                 f"max_dist={report.max_dist:.3e}")
    return report


def report_table(coeffs: ModeCoefficients, N_list, eps: float = CLUSTER_EPS,
                 samples: int = THETA_SAMPLES, engine: Optional[str] = None) -> pd.DataFrame:
    """
    Tabela `N,rho,rho_tilde,sqrt_rho_tilde,inf_norm,max_dist_sigmaT,frac_outside_eps`
    """
    curve = symbol_curve(coeffs, samples)
    rows = []
    for N in N_list:
        report = spectrum_report(coeffs, N, curve=curve, eps=eps, engine=engine)
        rows.append({
            "N": int(N),
            "rho": report.rho,
            "rho_tilde": report.rho_tilde,
            "sqrt_rho_tilde": report.sqrt_rho_tilde,
            "inf_norm": report.inf_norm,
            "max_dist_sigmaT": report.max_dist,
            "frac_outside_eps": report.frac_outside_eps,
        })
    return pd.DataFrame(rows)


def spectrum_table(report: SpectrumReport) -> pd.DataFrame:
    """Tabela `re,im,in_region_D,dist_sigmaT` dos autovalores"""
    return pd.DataFrame({
        "re": report.eigenvalues.real,
        "im": report.eigenvalues.imag,
        "in_region_D": report.in_region_D.astype(int),
        "dist_sigmaT": report.dist_to_sigmaT,
    })


def symbol_table(curve: SymbolCurve) -> pd.DataFrame:
    """Tabela `theta,re_plus,im_plus,re_minus,im_minus`"""
    return pd.DataFrame({
        "theta": curve.thetas,
        "re_plus": curve.mu_plus.real,
        "im_plus": curve.mu_plus.imag,
        "re_minus": curve.mu_minus.real,
        "im_minus": curve.mu_minus.imag,
    })
