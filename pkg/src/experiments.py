"""
Executores de cenários: regeneram as tabelas de cada experimento

Cada executor é função pura da sua configuração, grava CSVs
`<id>_<params>.csv` e um manifest.json com a proveniência, e verifica
uma relação teoria/solver, falhando com InvariantViolation se ela não vale.
"""

import json
import logging
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from importlib import metadata
from pathlib import Path
from typing import Callable, Dict, List, Literal, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from tqdm import tqdm

from config.settings import (
    CLUSTER_EPS, CONFIG_SCHEMA_VERSION, DEFAULT_MAX_ITERS, DEFAULT_TOL, EIGEN_ENGINE,
    EXPERIMENT_IDS, HEATCOOL_PERIOD_UNKNOWNS, HEATCOOL_TOTAL_UNKNOWNS, THETA_SAMPLES
)
from src import __version__
from src.model import (
    SpatialGrid, SpaceTimeField, l2q_norm, problem_from_config, sample_field, unknown_count, write_field_csv
)
from src.modes import coefficient_arrays, coefficients, eigenbasis
from src.pint import SchwarzSolver, monolithic_solve, observed_order
from src.theory import (
    apply, assemble, infinity_norm, report_table, rho_tilde, spectral_radius, special_norm,
    spectrum_report, spectrum_table, symbol_curve, symbol_table
)
from src.utils import (
    InvariantViolation, ensure_directory_exists, generate_file_hash, params_tag, resolve_workers, write_table
)

logger = logging.getLogger(__name__)

SCENARIO_DEFAULTS: Dict[str, Dict[str, object]] = {
    "bounds": {"M": 128, "nu_list": [1e-1, 1e-2, 1e-4], "dt_list": [1.0, 0.25, 0.0625, 0.0078125],
               "N_list": [2, 4, 8, 16, 32, 64, 128]},
    "clustering": {"M": 128, "nu_list": [1e-2, 1e-4], "dt_list": [0.0078125],
                   "N_list": [16, 32, 64, 128, 256, 512]},
    "cn-order": {"nu_list": [1e-1], "h_list": [0.125, 0.0625, 0.03125, 0.015625, 0.0078125], "T": 1.0},
    "weak-scaling": {"nu_list": [1e-1], "dt_list": [1.0, 0.25, 0.125, 0.0625], "h_list": [0.03125],
                     "N_list": [2, 4, 8, 16]},
    "heatcool": {"nu_list": [1e-1], "dt_list": [0.5], "h_list": [0.0078125],
                 "N_list": [2, 4, 8, 16, 32, 64, 128]},
}


class ScenarioConfig(BaseModel):
    """Configuração validada de um experimento (chaves desconhecidas são erro)"""

    model_config = ConfigDict(extra="forbid")

    schema_version: int = CONFIG_SCHEMA_VERSION
    scenario: Literal["bounds", "clustering", "cn-order", "weak-scaling", "heatcool"]
    M: int = Field(128, ge=1)
    m_list: Optional[List[int]] = None
    all_modes: bool = False
    nu_list: List[float] = Field(default_factory=lambda: [1e-2], min_length=1)
    dt_list: List[float] = Field(default_factory=lambda: [1.0], min_length=1)
    N_list: List[int] = Field(default_factory=lambda: [2], min_length=1)
    h_list: List[float] = Field(default_factory=lambda: [0.03125], min_length=1)
    T: float = Field(1.0, gt=0)
    tol: float = Field(DEFAULT_TOL, gt=0)
    max_iters: int = Field(DEFAULT_MAX_ITERS, ge=1)
    workers: Optional[int] = Field(None, ge=1)
    eps: float = Field(CLUSTER_EPS, gt=0)
    theta_samples: int = Field(THETA_SAMPLES, ge=3)
    engine: Literal["lapack", "qr"] = EIGEN_ENGINE
    decay_factor: float = Field(1.2, gt=0)
    dump_fields_N: int = Field(4, ge=1)
    seed: int = 0
    out_dir: Optional[Path] = None

    @model_validator(mode="before")
    @classmethod
    def _fill_defaults(cls, data):
        if isinstance(data, dict) and data.get("scenario") in SCENARIO_DEFAULTS:
            merged = dict(SCENARIO_DEFAULTS[data["scenario"]])
            merged.update(data)
            return merged
        return data

    @field_validator("schema_version")
    @classmethod
    def _check_version(cls, value: int) -> int:
        if value != CONFIG_SCHEMA_VERSION:
            raise ValueError(f"schema_version {value} não suportada (esperado {CONFIG_SCHEMA_VERSION})")
        return value

    @field_validator("nu_list", "dt_list", "h_list")
    @classmethod
    def _check_positive(cls, values: List[float]) -> List[float]:
        if any(not (np.isfinite(v) and v > 0) for v in values):
            raise ValueError(f"Valores devem ser positivos e finitos: {values}")
        return values

    @field_validator("N_list")
    @classmethod
    def _check_counts(cls, values: List[int]) -> List[int]:
        if any(v < 1 for v in values):
            raise ValueError(f"N deve ser >= 1: {values}")
        return values

    @model_validator(mode="after")
    def _check_modes(self) -> "ScenarioConfig":
        if self.m_list is not None and any(not 1 <= m <= self.M for m in self.m_list):
            raise ValueError(f"m_list fora de 1..{self.M}: {self.m_list}")
        if self.scenario in ("bounds", "clustering") and min(self.N_list) < 2:
            raise ValueError("Experimentos espectrais exigem N >= 2")
        return self

    def modes(self) -> List[int]:
        """Modos analisados: m_list, todos, ou {1, M}"""
        if self.all_modes:
            return list(range(1, self.M + 1))
        return list(self.m_list) if self.m_list else sorted({1, self.M})

    @classmethod
    def for_scenario(cls, scenario: str, **overrides) -> "ScenarioConfig":
        return cls.model_validate({"scenario": scenario, **overrides})


def _package_versions() -> Dict[str, str]:
    versions = {}
    for package in ("numpy", "scipy", "pandas", "pydantic", "tqdm", "python-dotenv"):
        try:
            versions[package] = metadata.version(package)
        except metadata.PackageNotFoundError:
            versions[package] = "unknown"
    return versions


class ExperimentRecorder:
    """Coleta as tabelas de um experimento e grava CSVs + manifest.json"""

    def __init__(self, config: ScenarioConfig):
        self.config = config
        self.tables: Dict[str, pd.DataFrame] = {}
        self.files: List[Path] = []
        self.metadata: Dict[str, object] = {}
        self._started = time.perf_counter()
        if config.out_dir is not None:
            ensure_directory_exists(Path(config.out_dir))

    def write(self, table: pd.DataFrame, suffix: str = "", params: Optional[Dict[str, object]] = None) -> str:
        """
        Registra uma tabela com nome `<id>[_<sufixo>][_<params>]`

        Returns:
            Nome lógico da tabela
        """
        parts = [self.config.scenario]
        if suffix:
            parts.append(suffix)
        if params:
            parts.append(params_tag(params))
        name = "_".join(parts)
        self.tables[name] = table
        if self.config.out_dir is not None:
            path = Path(self.config.out_dir) / f"{name}.csv"
            write_table(table, path)
            self.files.append(path)
        return name

    def write_field(self, field: SpaceTimeField, grid, decomp, name: str) -> None:
        """Grava um campo espaço-tempo `t,x,value`"""
        if self.config.out_dir is None:
            return
        path = Path(self.config.out_dir) / f"{self.config.scenario}_{name}.csv"
        write_field_csv(field, grid, decomp, path)
        self.files.append(path)

    def finish(self) -> Optional[Path]:
        """Grava manifest.json (configuração, versões, tempos e sha256 de cada CSV)"""
        elapsed = time.perf_counter() - self._started
        logger.info(f"Experimento '{self.config.scenario}' concluído em {elapsed:.2f}s")
        if self.config.out_dir is None:
            return None
        manifest = {
            "experiment": self.config.scenario,
            "tpschwarz_version": __version__,
            "python": platform.python_version(),
            "packages": _package_versions(),
            "config": self.config.model_dump(mode="json"),
            "elapsed_seconds": elapsed,
            "metadata": self.metadata,
            "files": [{"name": path.name, "sha256": generate_file_hash(path)} for path in self.files],
        }
        path = Path(self.config.out_dir) / "manifest.json"
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8")
        return path


def _progress(items, desc: str):
    return tqdm(items, desc=desc, disable=logger.getEffectiveLevel() > logging.INFO)


def _violation(message: str) -> InvariantViolation:
    logger.error(message)
    return InvariantViolation(message)


def run_bounds(config: ScenarioConfig) -> pd.DataFrame:
    """
    Compara ρ(T^PS_N), √ρ̃, ρ̃ e ||T^PS_N||∞ por modo e N, e as curvas m -> ρ̃

    Verificação cruzada: ρ <= √ρ̃ e ρ̃ < 1 em todos os pontos.

    Args:
        config: Configuração do cenário 'bounds'

    Returns:
        Tabela `nu,dt,m,lambda,N,rho,sqrt_rho_tilde,rho_tilde,inf_norm,special_norm`
    """
    recorder = ExperimentRecorder(config)
    basis = eigenbasis(SpatialGrid(M=config.M))
    rng = np.random.default_rng(config.seed)
    points = [(nu, dt, m, N) for nu in config.nu_list for dt in config.dt_list
              for m in config.modes() for N in config.N_list]

    def evaluate(point):
        nu, dt, m, N = point
        coeffs = coefficients(basis.lambdas[m - 1], nu, dt)
        T = assemble(coeffs, N)
        rho, _ = spectral_radius(T, engine=config.engine)
        return {"nu": nu, "dt": dt, "m": m, "lambda": coeffs.lam, "N": N, "rho": rho,
                "sqrt_rho_tilde": float(np.sqrt(rho_tilde(coeffs))), "rho_tilde": rho_tilde(coeffs),
                "inf_norm": infinity_norm(T), "special_norm": special_norm(T)}

    workers = resolve_workers(config.workers, cap=len(points))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        rows = list(_progress(pool.map(evaluate, points), "bounds"))
    table = pd.DataFrame(rows)
    recorder.write(table)

    bad = table[(table["rho"] > table["sqrt_rho_tilde"] + 1e-10) | (table["rho_tilde"] >= 1.0)]
    if len(bad):
        raise _violation(f"Cadeia de cotas violada em {len(bad)} pontos (primeiro: {bad.iloc[0].to_dict()})")

    # produto matriz-livre contra a matriz materializada
    probe_coeffs = coefficients(basis.lambdas[0], config.nu_list[0], config.dt_list[0])
    T = assemble(probe_coeffs, max(config.N_list))
    e = rng.standard_normal(T.dim)
    gap = np.linalg.norm(apply(T, e) - T.sparse() @ e) / max(np.linalg.norm(T.sparse() @ e), 1e-300)
    if gap > 1e-12:
        raise _violation(f"Produto matriz-livre difere do denso: {gap:.3e}")

    curves = []
    for nu in config.nu_list:
        for dt in config.dt_list:
            _, c1, c2 = coefficient_arrays(basis.lambdas, nu, dt)
            curves.append(pd.DataFrame({"nu": nu, "dt": dt, "m": np.arange(1, basis.M + 1),
                                        "lambda": basis.lambdas, "rho_tilde": nu * c1 ** 2 + c2 ** 2}))
    recorder.write(pd.concat(curves, ignore_index=True), suffix="rho_tilde_curves")
    recorder.finish()
    return table


def run_clustering(config: ScenarioConfig) -> pd.DataFrame:
    """
    Autovalores das seções finitas, distância a σ(T) e pertinência à região 𝒟

    Verificação cruzada: todos os autovalores em 𝒟 (tolerância 1e-10).

    Args:
        config: Configuração do cenário 'clustering'

    Returns:
        Tabela `nu,dt,m,N,max_dist,frac_outside_eps,in_region_D`
    """
    recorder = ExperimentRecorder(config)
    basis = eigenbasis(SpatialGrid(M=config.M))
    rows = []
    for nu in config.nu_list:
        for dt in config.dt_list:
            for m in config.modes():
                coeffs = coefficients(basis.lambdas[m - 1], nu, dt)
                curve = symbol_curve(coeffs, config.theta_samples)
                recorder.write(symbol_table(curve), suffix="symbol", params={"nu": nu, "dt": dt, "m": m})

                def evaluate(N):
                    return spectrum_report(coeffs, N, curve=curve, eps=config.eps, engine=config.engine)

                workers = resolve_workers(config.workers, cap=len(config.N_list))
                with ThreadPoolExecutor(max_workers=workers) as pool:
                    reports = list(_progress(pool.map(evaluate, config.N_list), f"clustering m={m}"))
                for report in reports:
                    recorder.write(spectrum_table(report),
                                   params={"nu": nu, "dt": dt, "m": m, "N": report.N})
                    rows.append({"nu": nu, "dt": dt, "m": m, "N": report.N, "max_dist": report.max_dist,
                                 "frac_outside_eps": report.frac_outside_eps,
                                 "in_region_D": bool(report.in_region_D.all())})
    table = pd.DataFrame(rows)
    recorder.write(table, suffix="summary")
    if not table["in_region_D"].all():
        bad = table[~table["in_region_D"]].iloc[0].to_dict()
        raise _violation(f"Autovalores fora da região D: {bad}")
    recorder.finish()
    return table


def run_cn_order(config: ScenarioConfig) -> pd.DataFrame:
    """
    Ordem observada de Crank-Nicolson no cenário manufaturado (h_t = h_x = h)

    Args:
        config: Configuração do cenário 'cn-order'

    Returns:
        Tabela `h,err_y,err_p` (as inclinações vão para `cn-order_slopes`)
    """
    recorder = ExperimentRecorder(config)
    nu = config.nu_list[0]
    rows = []
    for h in _progress(sorted(config.h_list, reverse=True), "cn-order"):
        K = int(round(config.T / h))
        setup = problem_from_config({"T": config.T, "nu": nu, "N": 1, "K": K,
                                     "M": int(round(1.0 / h)) - 1, "scenario": "manufactured"})
        y, p = monolithic_solve(setup)
        y_exact = sample_field(setup.exact[0], setup.grid, setup.decomp, role="state")
        p_exact = sample_field(setup.exact[1], setup.grid, setup.decomp, role="adjoint")
        rows.append({"h": h, "err_y": l2q_norm(y - y_exact, setup.grid, setup.decomp),
                     "err_p": l2q_norm(p - p_exact, setup.grid, setup.decomp)})
    table = pd.DataFrame(rows)
    recorder.write(table)
    slopes = pd.DataFrame({"variable": ["y", "p"],
                           "slope": [observed_order(table["h"], table["err_y"]),
                                     observed_order(table["h"], table["err_p"])]})
    recorder.write(slopes, suffix="slopes")
    for _, row in slopes.iterrows():
        if not 1.8 <= row["slope"] <= 2.2:
            logger.warning(f"Ordem observada para {row['variable']} fora de [1.8, 2.2]: {row['slope']:.3f}")
    recorder.metadata["slopes"] = dict(zip(slopes["variable"], slopes["slope"]))
    recorder.finish()
    return table


def _schwarz_point(config: ScenarioConfig, scenario: str, dt: float, N: int, h: float):
    """Roda Schwarz e o solver monolítico num ponto (dt, N, h)"""
    K = int(round(dt / h))
    if K < 1 or abs(K * h - dt) > 1e-12 * dt:
        raise ValueError(f"dt={dt} não é múltiplo de h={h}")
    nu = config.nu_list[0]
    setup = problem_from_config({"T": N * dt, "nu": nu, "N": N, "K": K,
                                 "M": int(round(1.0 / h)) - 1, "scenario": scenario})
    reference = monolithic_solve(setup)
    solver = SchwarzSolver(setup)
    history = solver.solve(tol=config.tol, max_iters=config.max_iters, reference=reference,
                           workers=config.workers)
    coeffs = coefficients(solver.basis.lambdas[0], nu, dt)
    ref_norm = max(l2q_norm(reference[0], setup.grid, setup.decomp), 1e-300)
    ref_norm_p = max(l2q_norm(reference[1], setup.grid, setup.decomp), 1e-300)
    last = history.records[-1]
    mono_rel_err = max(last["err_y"] / ref_norm, last["err_p"] / ref_norm_p)
    return setup, solver, history, coeffs, reference, mono_rel_err


def _history_table(history, coeffs) -> pd.DataFrame:
    table = history.table(extended=True)
    first = table["iface_err"].iloc[0]
    table["predicted"] = first * np.sqrt(rho_tilde(coeffs)) ** (table["iter"] - table["iter"].iloc[0])
    return table


def _check_decay(history, coeffs, factor: float, label: str) -> None:
    bound = float(np.sqrt(rho_tilde(coeffs)))
    measured = history.interface_contraction
    if np.isfinite(measured) and measured > factor * bound:
        raise _violation(f"{label}: contração {measured:.4f} acima de {factor}×√ρ̃ = {factor * bound:.4f}")


def run_weak_scaling(config: ScenarioConfig) -> pd.DataFrame:
    """
    Escalabilidade fraca: iterações até tol e decaimento do erro por Δt e N

    Verificação cruzada: contração observada <= decay_factor·√ρ̃(m=1).

    Args:
        config: Configuração do cenário 'weak-scaling'

    Returns:
        Tabela `dt,N,iterations,converged,contraction,interface_contraction,rho,inf_norm,rho_tilde,sqrt_rho_tilde,mono_rel_err`
    """
    recorder = ExperimentRecorder(config)
    h = config.h_list[0]
    rows = []
    points = [(dt, N) for dt in config.dt_list for N in config.N_list]
    for dt, N in _progress(points, "weak-scaling"):
        _, _, history, coeffs, _, mono_rel_err = _schwarz_point(config, "manufactured", dt, N, h)
        recorder.write(_history_table(history, coeffs), params={"dt": dt, "N": N})
        T = assemble(coeffs, max(N, 2))
        rho, _ = spectral_radius(T, engine=config.engine)
        rows.append({"dt": dt, "N": N, "iterations": history.iterations, "converged": history.converged,
                     "contraction": history.contraction,
                     "interface_contraction": history.interface_contraction, "rho": rho,
                     "inf_norm": infinity_norm(T), "rho_tilde": rho_tilde(coeffs),
                     "sqrt_rho_tilde": float(np.sqrt(rho_tilde(coeffs))), "mono_rel_err": mono_rel_err})
        _check_decay(history, coeffs, config.decay_factor, f"dt={dt}, N={N}")
    table = pd.DataFrame(rows)
    recorder.write(table, suffix="summary")
    recorder.finish()
    return table


def periodicity_gap(control: SpaceTimeField, K: int, N: int) -> float:
    """
    Maior diferença relativa entre períodos consecutivos do controle, sem o primeiro e o último

    Args:
        control: Campo u = p/ν
        K: Passos por período
        N: Número de períodos

    Returns:
        Gap relativo (nan se N < 4)
    """
    if N < 4:
        return float("nan")
    slices = [control.values[(n - 1) * K:n * K] for n in range(1, N + 1)]
    gaps = [np.linalg.norm(slices[n] - slices[n + 1]) / max(np.linalg.norm(slices[n + 1]), 1e-300)
            for n in range(1, N - 2)]
    return float(max(gaps))


def run_heatcool(config: ScenarioConfig) -> pd.DataFrame:
    """
    Aplicação de aquecimento-resfriamento com alvo periódico gaussiano

    Grava campos (alvo, estado, controle) para N = dump_fields_N, históricos de
    erro com a previsão √ρ̃ e a contagem de incógnitas de cada N.

    Args:
        config: Configuração do cenário 'heatcool'

    Returns:
        Tabela `N,iterations,converged,contraction,interface_contraction,sqrt_rho_tilde,rho_tilde,total_unknowns,period_unknowns,mono_rel_err,periodicity_gap`
    """
    recorder = ExperimentRecorder(config)
    dt, h = config.dt_list[0], config.h_list[0]
    rows = []
    for N in _progress(config.N_list, "heatcool"):
        setup, solver, history, coeffs, _, mono_rel_err = _schwarz_point(config, "heatcool", dt, N, h)
        recorder.write(_history_table(history, coeffs), params={"N": N})
        control = history.p.control(setup.problem.nu)
        total, per_period = unknown_count(setup.grid, setup.decomp)
        if N == config.dump_fields_N:
            recorder.write_field(SpaceTimeField(solver.target, role="target"), setup.grid, setup.decomp,
                                 f"target_N{N}")
            recorder.write_field(history.y, setup.grid, setup.decomp, f"state_N{N}")
            recorder.write_field(control, setup.grid, setup.decomp, f"control_N{N}")
        rows.append({"N": N, "iterations": history.iterations, "converged": history.converged,
                     "contraction": history.contraction,
                     "interface_contraction": history.interface_contraction,
                     "sqrt_rho_tilde": float(np.sqrt(rho_tilde(coeffs))), "rho_tilde": rho_tilde(coeffs),
                     "total_unknowns": total, "period_unknowns": per_period, "mono_rel_err": mono_rel_err,
                     "periodicity_gap": periodicity_gap(control, setup.decomp.K, N)})
        _check_decay(history, coeffs, config.decay_factor, f"heatcool N={N}")
        if N == 512 and abs(h - 1.0 / 128) < 1e-15 and total != HEATCOOL_TOTAL_UNKNOWNS:
            logger.warning(f"Contagem de incógnitas {total} difere da esperada {HEATCOOL_TOTAL_UNKNOWNS}")
    table = pd.DataFrame(rows)
    recorder.write(table, suffix="summary")
    recorder.metadata["unknown_count_convention"] = "total = 2*M*(N*K+1), per period = 2*M*(K+1)"
    recorder.metadata["expected_unknowns_N512"] = {"total": HEATCOOL_TOTAL_UNKNOWNS,
                                                   "per_period": HEATCOOL_PERIOD_UNKNOWNS}
    recorder.finish()
    return table


RUNNERS: Dict[str, Callable[[ScenarioConfig], pd.DataFrame]] = {
    "bounds": run_bounds,
    "clustering": run_clustering,
    "cn-order": run_cn_order,
    "weak-scaling": run_weak_scaling,
    "heatcool": run_heatcool,
}


def run_experiment(config: ScenarioConfig) -> pd.DataFrame:
    """
    Executa o experimento indicado em config.scenario

    Args:
        config: Configuração validada

    Returns:
        Tabela principal do experimento
    """
    if config.scenario not in EXPERIMENT_IDS:
        raise ValueError(f"Experimento desconhecido: {config.scenario}")
    logger.info(f"Iniciando experimento '{config.scenario}'")
    return RUNNERS[config.scenario](config)
