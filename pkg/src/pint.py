"""
Solver de Schwarz paralelo no tempo e solver monolítico de referência

O horizonte é dividido em N subintervalos sem sobreposição. Em cada iteração
todos os subproblemas são resolvidos independentemente (Jacobi) com os traços
da iteração anterior: y recebe o estado do vizinho da esquerda em Σ_{n-1} e
p recebe o adjunto do vizinho da direita em Σ_n.

Internamente o sistema de otimalidade é diagonalizado pela base espectral e
cada modo é discretizado por Crank-Nicolson como um único sistema acoplado
(y, p) em banda, já que o problema local é de contorno no tempo.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from config.settings import DEFAULT_MAX_ITERS, DEFAULT_TOL
from src.model import ProblemSetup, SpaceTimeField, TimeDecomposition, l2q_norm, sample_field
from src.modes import EigenBasis, eigenbasis, hyperbolic_ratio, sigma_of
from src.utils import SingularSystem, geometric_mean_ratio, resolve_workers

logger = logging.getLogger(__name__)

SCHEMES = ("cn", "exact")


def _cn_operator(lam: float, nu: float, h: float, K: int) -> sp.csc_matrix:
    """
    Operador CN local de um modo, incógnitas intercaladas [q_0, z_1, q_1, ..., q_{K-1}, z_K]

    Linha 2k (adjunto):  (1/h - λ/2)q_{k+1} - (1/h + λ/2)q_k - (z_{k+1} + z_k)/2
    Linha 2k+1 (estado): (1/h + λ/2)z_{k+1} - (1/h - λ/2)z_k - (q_{k+1} + q_k)/(2ν)
    """
    a = 1.0 / h + 0.5 * lam
    b = 1.0 / h - 0.5 * lam
    k = np.arange(K)
    inner = k[1:]
    head = k[:-1]
    rows = np.concatenate([2 * k, 2 * k, 2 * inner, 2 * head,
                           2 * k + 1, 2 * k + 1, 2 * inner + 1, 2 * head + 1])
    cols = np.concatenate([2 * k, 2 * k + 1, 2 * inner - 1, 2 * head + 2,
                           2 * k + 1, 2 * k, 2 * inner - 1, 2 * head + 2])
    vals = np.concatenate([np.full(K, -a), np.full(K, -0.5), np.full(K - 1, -0.5), np.full(K - 1, b),
                           np.full(K, a), np.full(K, -0.5 / nu), np.full(K - 1, -b),
                           np.full(K - 1, -0.5 / nu)])
    return sp.csc_matrix((vals, (rows, cols)), shape=(2 * K, 2 * K))


class ModeLocalFactorization:
    """
    Fatorações por modo do sistema local (y, p) de um subintervalo

    O operador local é o mesmo em todos os subintervalos, então uma única
    instância é compartilhada (somente leitura) por todas as varreduras.
    """

    def __init__(self, basis: EigenBasis, nu: float, h_t: float, K: int, scheme: str = "cn"):
        """
        Args:
            basis: Base espectral
            nu: Penalização ν
            h_t: Passo de tempo
            K: Passos por subintervalo
            scheme: "cn" (Crank-Nicolson) ou "exact" (solução fechada, alvo nulo)
        """
        if scheme not in SCHEMES:
            raise ValueError(f"Esquema desconhecido: {scheme!r} (use {SCHEMES})")
        if int(K) != K or K < 1:
            raise ValueError(f"K deve ser um inteiro >= 1, recebido {K}")
        if nu <= 0 or h_t <= 0:
            raise ValueError(f"nu e h_t devem ser positivos, recebidos nu={nu}, h_t={h_t}")
        self.basis = basis
        self.nu = float(nu)
        self.h_t = float(h_t)
        self.K = int(K)
        self.scheme = scheme
        self._operators: List[sp.csc_matrix] = []
        self._lus = []
        if scheme == "cn":
            self._factorize()
        else:
            self._kernels = self._exact_kernels()

    def _factorize(self) -> None:
        for m, lam in enumerate(self.basis.lambdas, start=1):
            A = _cn_operator(lam, self.nu, self.h_t, self.K)
            try:
                lu = splu(A)
            except RuntimeError as e:
                raise SingularSystem(f"fatoração do modo {m} falhou: {e}")
            self._operators.append(A)
            self._lus.append(lu)
        logger.debug(f"{len(self._lus)} fatorações locais ({2 * self.K}×{2 * self.K})")

    def _exact_kernels(self) -> Tuple[np.ndarray, ...]:
        """Núcleos da solução homogênea fechada nos níveis locais"""
        dt = self.h_t * self.K
        tau = self.h_t * np.arange(self.K + 1)
        shape = (self.K + 1, self.basis.M)
        z_from_d, z_from_r = np.empty(shape), np.empty(shape)
        q_from_d, q_from_r = np.empty(shape), np.empty(shape)
        for m, lam in enumerate(self.basis.lambdas):
            sigma = float(sigma_of(lam, self.nu))
            cosh_rest = hyperbolic_ratio("cosh", dt - tau, sigma, lam, dt)
            sinh_rest = hyperbolic_ratio("sinh", dt - tau, sigma, lam, dt)
            cosh_tau = hyperbolic_ratio("cosh", tau, sigma, lam, dt)
            sinh_tau = hyperbolic_ratio("sinh", tau, sigma, lam, dt)
            z_from_d[:, m] = sigma * cosh_rest + lam * sinh_rest
            z_from_r[:, m] = sinh_tau
            q_from_d[:, m] = -sinh_rest
            q_from_r[:, m] = sigma * cosh_tau + lam * sinh_tau
        return z_from_d, z_from_r, q_from_d, q_from_r

    def residual(self) -> float:
        """max_m ||Pr A Pc - LU||∞ / ||A||∞ (zero para o esquema exato)"""
        worst = 0.0
        for A, lu in zip(self._operators, self._lus):
            n = A.shape[0]
            Pr = sp.csc_matrix((np.ones(n), (lu.perm_r, np.arange(n))), shape=(n, n))
            Pc = sp.csc_matrix((np.ones(n), (np.arange(n), lu.perm_c)), shape=(n, n))
            diff = Pr @ A @ Pc - lu.L @ lu.U
            norm_a = abs(A).sum(axis=1).max()
            worst = max(worst, float(abs(diff).sum(axis=1).max() / norm_a))
        return worst

    def solve_modes(self, z0: np.ndarray, qK: np.ndarray,
                    target: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray]:
        """
        Resolve todos os modos com z(0) = z0 e q(Δt) = qK

        Args:
            z0: Coeficientes modais do traço de estado à esquerda (M,)
            qK: Coeficientes modais do traço adjunto à direita (M,)
            target: Alvo modal nos níveis locais (K+1, M) ou None

        Returns:
            (z, q) com shape (K+1, M)
        """
        M, K = self.basis.M, self.K
        if self.scheme == "exact":
            if target is not None and np.any(target != 0.0):
                raise ValueError("O esquema 'exact' só admite alvo nulo")
            z_from_d, z_from_r, q_from_d, q_from_r = self._kernels
            z = z_from_d * z0 + z_from_r * (qK / self.nu)
            q = q_from_d * z0 + q_from_r * qK
            return z, q

        b = 1.0 / self.h_t - 0.5 * self.basis.lambdas
        rhs = np.zeros((M, 2 * K))
        if target is not None:
            rhs[:, 0::2] = -0.5 * (target[1:] + target[:-1]).T
        rhs[:, 0] += 0.5 * z0
        rhs[:, 1] += b * z0
        rhs[:, 2 * K - 2] -= b * qK
        rhs[:, 2 * K - 1] += qK / (2.0 * self.nu)

        z = np.empty((K + 1, M))
        q = np.empty((K + 1, M))
        z[0] = z0
        q[K] = qK
        for m, lu in enumerate(self._lus):
            x = lu.solve(rhs[m])
            q[:K, m] = x[0::2]
            z[1:, m] = x[1::2]
        if not (np.all(np.isfinite(z)) and np.all(np.isfinite(q))):
            raise SingularSystem("solução local não finita")
        return z, q


@dataclass(frozen=True)
class SubdomainProblem:
    """Dados do subproblema n: traços de Dirichlet e alvo local (nodais)"""

    index: int
    left_y: np.ndarray
    right_p: np.ndarray
    target: np.ndarray


def subdomain_solve(factorization: ModeLocalFactorization, left_y: np.ndarray, right_p: np.ndarray,
                    target: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Resolve o sistema de otimalidade restrito a um subintervalo

    Args:
        factorization: Fatorações locais (carregam base, ν, h_t, K e esquema)
        left_y: Traço nodal de y em Σ_{n-1} (M,)
        right_p: Traço nodal de p em Σ_n (M,)
        target: Alvo nodal nos níveis locais (K+1, M)

    Returns:
        (y_n, p_n) nodais com shape (K+1, M)
    """
    basis = factorization.basis
    left_y = np.asarray(left_y, dtype=float)
    right_p = np.asarray(right_p, dtype=float)
    if left_y.shape != (basis.M,) or right_p.shape != (basis.M,):
        raise ValueError(f"Traços devem ter {basis.M} entradas, recebidos {left_y.shape} e {right_p.shape}")
    target_modes = None
    if target is not None:
        target = np.asarray(target, dtype=float)
        if target.shape != (factorization.K + 1, basis.M):
            raise ValueError(f"Alvo local com shape {target.shape}, esperado {(factorization.K + 1, basis.M)}")
        target_modes = basis.forward(target)
    z, q = factorization.solve_modes(basis.forward(left_y), basis.forward(right_p), target_modes)
    return basis.inverse(z), basis.inverse(q)


@dataclass(frozen=True)
class SchwarzState:
    """
    Estado da iteração ℓ

    y_traces[n-1] é o traço de y que o subdomínio n recebe em Σ_{n-1}
    (y0 para n=1) e p_traces[n-1] o traço de p que ele recebe em Σ_n
    (zero para n=N). Cada varredura produz um novo estado.
    """

    y_traces: np.ndarray
    p_traces: np.ndarray
    fields: Tuple[Tuple[np.ndarray, np.ndarray], ...] = ()
    iteration: int = 0

    def __post_init__(self):
        y_traces = np.array(self.y_traces, dtype=float, copy=True)
        p_traces = np.array(self.p_traces, dtype=float, copy=True)
        if y_traces.shape != p_traces.shape or y_traces.ndim != 2:
            raise ValueError(f"Buffers de interface incompatíveis: {y_traces.shape} e {p_traces.shape}")
        y_traces.setflags(write=False)
        p_traces.setflags(write=False)
        object.__setattr__(self, "y_traces", y_traces)
        object.__setattr__(self, "p_traces", p_traces)

    @property
    def N(self) -> int:
        return self.y_traces.shape[0]


def traces_from_fields(y: SpaceTimeField, p: SpaceTimeField, decomp: TimeDecomposition) -> Tuple[np.ndarray, np.ndarray]:
    """Traços de interface (y em Σ_0..Σ_{N-1}, p em Σ_1..Σ_N) de campos globais"""
    levels = decomp.K * np.arange(decomp.N + 1)
    return y.values[levels[:-1]].copy(), p.values[levels[1:]].copy()


def state_from_fields(y: SpaceTimeField, p: SpaceTimeField, decomp: TimeDecomposition) -> SchwarzState:
    """Estado cujos buffers são os traços dos campos dados"""
    y_traces, p_traces = traces_from_fields(y, p, decomp)
    return SchwarzState(y_traces=y_traces, p_traces=p_traces)


def interface_errors(state: SchwarzState, basis: EigenBasis, nu: float,
                     reference: Optional[Tuple[np.ndarray, np.ndarray]] = None) -> np.ndarray:
    """
    Vetores de erro modais e = (R_2, D_1, ..., R_N, D_{N-1}) nas interfaces internas

    R_{n+1} = p_{n+1}(t_n)/ν vem do subdomínio da direita e D_n = y_n(t_n) do
    subdomínio da esquerda.

    Args:
        state: Estado de Schwarz
        basis: Base espectral
        nu: Penalização
        reference: Traços (y_traces, p_traces) convergidos; None = zero

    Returns:
        Array (M, 2(N-1)), uma linha por modo
    """
    y_err = np.asarray(state.y_traces, dtype=float)
    p_err = np.asarray(state.p_traces, dtype=float)
    if reference is not None:
        y_err = y_err - reference[0]
        p_err = p_err - reference[1]
    r = basis.forward(p_err[:-1]) / nu
    d = basis.forward(y_err[1:])
    out = np.empty((basis.M, 2 * (state.N - 1)))
    out[:, 0::2] = r.T
    out[:, 1::2] = d.T
    return out


def scaled_interface_norm(errors: np.ndarray, nu: float) -> float:
    """
    Norma euclidiana de D⁻¹e com D = diag(1, √ν), somada sobre os modos

    Nesta norma uma varredura contrai o erro de cada modo por no máximo √ρ̃.
    """
    errors = np.array(errors, dtype=float)
    errors[..., 1::2] /= np.sqrt(nu)
    return float(np.linalg.norm(errors))


def _relative_increment(new: np.ndarray, old: np.ndarray) -> float:
    scale = np.linalg.norm(new, axis=1).max(initial=0.0)
    if scale == 0.0:
        return 0.0
    return float(np.linalg.norm(new - old, axis=1).max() / scale)


def interface_increment(new: SchwarzState, old: SchwarzState) -> float:
    """
    Métrica de parada: maior incremento de traço por interface, relativo ao
    maior traço da mesma variável
    """
    return max(_relative_increment(new.y_traces, old.y_traces),
               _relative_increment(new.p_traces, old.p_traces))


@dataclass
class SchwarzHistory:
    """Histórico de iterações de schwarz_solve"""

    records: List[dict] = field(default_factory=list)
    converged: bool = False
    tol: float = DEFAULT_TOL
    y: Optional[SpaceTimeField] = None
    p: Optional[SpaceTimeField] = None
    state: Optional[SchwarzState] = None

    @property
    def iterations(self) -> int:
        return len(self.records)

    def table(self, extended: bool = False) -> pd.DataFrame:
        """Tabela `iter,interface_incr,err_y,err_p` (mais `iface_err` se extended)"""
        columns = ["iter", "interface_incr", "err_y", "err_p"]
        if extended:
            columns.append("iface_err")
        return pd.DataFrame(self.records, columns=columns)

    def _ratio(self, key: str) -> float:
        values = [r[key] for r in self.records if np.isfinite(r[key])]
        return geometric_mean_ratio(values) if len(values) >= 2 else float("nan")

    @property
    def contraction(self) -> float:
        """Razão geométrica de decaimento do erro L²(Q) em y nas 3 últimas iterações"""
        ratio = self._ratio("err_y")
        return ratio if np.isfinite(ratio) else self._ratio("interface_incr")

    @property
    def interface_contraction(self) -> float:
        """Mesma razão para o erro de interface na norma escalada (R, D/√ν)"""
        return self._ratio("iface_err")


class SchwarzSolver:
    """Solver de Schwarz paralelo no tempo para um problema discretizado"""

    def __init__(self, setup: ProblemSetup, scheme: str = "cn", basis: Optional[EigenBasis] = None):
        """
        Args:
            setup: Problema, malha e decomposição
            scheme: "cn" ou "exact"
            basis: Base espectral (padrão: analítica da malha)
        """
        self.setup = setup
        self.grid = setup.grid
        self.decomp = setup.decomp
        self.nu = setup.problem.nu
        self.basis = basis if basis is not None else eigenbasis(self.grid)
        self.target = sample_field(setup.problem.target, self.grid, self.decomp).values
        self.y0 = np.asarray(setup.problem.initial(self.grid.nodes), dtype=float)
        self.factorization = ModeLocalFactorization(self.basis, self.nu, self.decomp.h_t,
                                                    self.decomp.K, scheme=scheme)

    def initial_state(self) -> SchwarzState:
        """Traços iniciais nulos, exceto o dado inicial y0 em Σ_0"""
        shape = (self.decomp.N, self.grid.M)
        y_traces = np.zeros(shape)
        y_traces[0] = self.y0
        return SchwarzState(y_traces=y_traces, p_traces=np.zeros(shape))

    def subproblem(self, state: SchwarzState, n: int) -> SubdomainProblem:
        window = self.decomp.levels(n)
        return SubdomainProblem(index=n, left_y=state.y_traces[n - 1], right_p=state.p_traces[n - 1],
                                target=self.target[window])

    def _solve_subdomain(self, problem: SubdomainProblem) -> Tuple[np.ndarray, np.ndarray]:
        try:
            return subdomain_solve(self.factorization, problem.left_y, problem.right_p, problem.target)
        except SingularSystem as e:
            raise SingularSystem(str(e), subdomain=problem.index)
        except (RuntimeError, np.linalg.LinAlgError) as e:
            raise SingularSystem(f"falha na solução local: {e}", subdomain=problem.index)

    def sweep(self, state: SchwarzState, workers: Optional[int] = None) -> SchwarzState:
        """
        Uma iteração de Jacobi: os N subproblemas leem apenas os buffers de ℓ-1

        Args:
            state: Estado na iteração ℓ-1
            workers: Tamanho do pool de threads

        Returns:
            Estado na iteração ℓ
        """
        N = self.decomp.N
        if state.N != N:
            raise ValueError(f"Estado com {state.N} subdomínios, esperado {N}")
        problems = [self.subproblem(state, n) for n in range(1, N + 1)]
        workers = resolve_workers(workers, cap=N)
        if workers == 1:
            results = [self._solve_subdomain(problem) for problem in problems]
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(self._solve_subdomain, problems))

        y_traces = np.array(state.y_traces)
        p_traces = np.array(state.p_traces)
        for n, (y_n, p_n) in enumerate(results, start=1):
            if n < N:
                y_traces[n] = y_n[-1]
            if n > 1:
                p_traces[n - 2] = p_n[0]
        return SchwarzState(y_traces=y_traces, p_traces=p_traces, fields=tuple(results),
                            iteration=state.iteration + 1)

    def assemble_fields(self, state: SchwarzState) -> Tuple[SpaceTimeField, SpaceTimeField]:
        """Concatena (y_n, p_n); em cada interface vale o subdomínio da direita"""
        if not state.fields:
            raise ValueError("Estado ainda sem campos locais (nenhuma varredura executada)")
        y = np.empty((self.decomp.n_levels, self.grid.M))
        p = np.empty_like(y)
        for n, (y_n, p_n) in enumerate(state.fields, start=1):
            window = self.decomp.levels(n)
            y[window] = y_n
            p[window] = p_n
        return SpaceTimeField(y, role="state"), SpaceTimeField(p, role="adjoint")

    def solve(self, tol: float = DEFAULT_TOL, max_iters: int = DEFAULT_MAX_ITERS,
              reference: Optional[Tuple[SpaceTimeField, SpaceTimeField]] = None,
              workers: Optional[int] = None, state: Optional[SchwarzState] = None) -> SchwarzHistory:
        """
        Itera até o incremento de interface ficar <= tol ou atingir max_iters

        Args:
            tol: Tolerância da métrica de parada
            max_iters: Máximo de varreduras
            reference: (y, p) de referência para os erros L²(Q)
            workers: Tamanho do pool de threads
            state: Estado inicial (padrão: traços nulos)

        Returns:
            SchwarzHistory (converged=False se max_iters foi atingido)
        """
        if not tol > 0:
            raise ValueError(f"tol deve ser positiva, recebido {tol}")
        if max_iters < 1:
            raise ValueError(f"max_iters deve ser >= 1, recebido {max_iters}")
        history = SchwarzHistory(tol=tol)
        state = state if state is not None else self.initial_state()
        reference_traces = None
        if reference is not None:
            reference_traces = traces_from_fields(reference[0], reference[1], self.decomp)
        for _ in range(max_iters):
            new_state = self.sweep(state, workers=workers)
            incr = interface_increment(new_state, state)
            state = new_state
            err_y = err_p = iface_err = float("nan")
            if reference is not None:
                y, p = self.assemble_fields(state)
                err_y = l2q_norm(y - reference[0], self.grid, self.decomp)
                err_p = l2q_norm(p - reference[1], self.grid, self.decomp)
                iface_err = scaled_interface_norm(
                    interface_errors(state, self.basis, self.nu, reference_traces), self.nu)
            history.records.append({"iter": state.iteration, "interface_incr": incr,
                                    "err_y": err_y, "err_p": err_p, "iface_err": iface_err})
            logger.debug(f"iter {state.iteration}: incr={incr:.3e} err_y={err_y:.3e} err_p={err_p:.3e}")
            if incr <= tol:
                history.converged = True
                break

        history.state = state
        history.y, history.p = self.assemble_fields(state)
        if history.converged:
            logger.info(f"Schwarz convergiu em {history.iterations} iterações (N={self.decomp.N}, tol={tol:.1e})")
        else:
            logger.warning(f"Schwarz não convergiu em {max_iters} iterações (N={self.decomp.N}, "
                           f"último incremento {history.records[-1]['interface_incr']:.3e})")
        return history


def schwarz_sweep(solver: SchwarzSolver, state: SchwarzState, workers: Optional[int] = None) -> SchwarzState:
    """Uma varredura paralela de Schwarz (ver SchwarzSolver.sweep)"""
    return solver.sweep(state, workers=workers)


def schwarz_solve(setup: ProblemSetup, tol: float = DEFAULT_TOL, max_iters: int = DEFAULT_MAX_ITERS,
                  reference: Optional[Tuple[SpaceTimeField, SpaceTimeField]] = None,
                  workers: Optional[int] = None, scheme: str = "cn",
                  basis: Optional[EigenBasis] = None) -> SchwarzHistory:
    """
    Resolve o problema pelo método de Schwarz paralelo no tempo

    Args:
        setup: Problema discretizado
        tol: Tolerância da métrica de parada
        max_iters: Máximo de varreduras
        reference: (y, p) de referência para os erros L²(Q)
        workers: Tamanho do pool de threads
        scheme: "cn" ou "exact"
        basis: Base espectral opcional

    Returns:
        SchwarzHistory
    """
    return SchwarzSolver(setup, scheme=scheme, basis=basis).solve(
        tol=tol, max_iters=max_iters, reference=reference, workers=workers)


def monolithic_solve(setup: ProblemSetup, basis: Optional[EigenBasis] = None) -> Tuple[SpaceTimeField, SpaceTimeField]:
    """
    Resolve o sistema discreto global (todos os N·K passos) de uma só vez

    Args:
        setup: Problema discretizado
        basis: Base espectral opcional

    Returns:
        (y, p) como SpaceTimeFields
    """
    grid, decomp = setup.grid, setup.decomp
    basis = basis if basis is not None else eigenbasis(grid)
    steps = decomp.N * decomp.K
    try:
        factorization = ModeLocalFactorization(basis, setup.problem.nu, decomp.h_t, steps)
    except SingularSystem as e:
        raise SingularSystem(f"sistema monolítico: {e}")
    target = sample_field(setup.problem.target, grid, decomp).values
    y0 = np.asarray(setup.problem.initial(grid.nodes), dtype=float)
    y, p = subdomain_solve(factorization, y0, np.zeros(grid.M), target)
    logger.info(f"Solução monolítica: {grid.M} modos × {2 * steps} incógnitas")
    return SpaceTimeField(y, role="state"), SpaceTimeField(p, role="adjoint")


def observed_order(hs: Sequence[float], errors: Sequence[float]) -> float:
    """
    Inclinação de mínimos quadrados de log(erro) contra log(h)

    Args:
        hs: Tamanhos de malha
        errors: Erros correspondentes (positivos)

    Returns:
        Ordem observada
    """
    hs = np.asarray(hs, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if hs.size != errors.size or hs.size < 2:
        raise ValueError("São necessários pelo menos dois pares (h, erro)")
    if np.any(hs <= 0) or np.any(errors <= 0):
        raise ValueError("h e erros devem ser positivos")
    slope, _ = np.polyfit(np.log(hs), np.log(errors), 1)
    return float(slope)
