"""
Interface de linha de comando do tpschwarz

Subcomandos: modes dump, theory report|spectrum|symbol, solve, experiment <id>.
Códigos de saída: 0 sucesso, 1 falha numérica (inclusive não convergência),
2 erro de uso ou de configuração. Diagnósticos vão para stderr via logging;
dados vão para arquivos ou stdout.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from pydantic import ValidationError

from config.settings import (
    CLUSTER_EPS, DEFAULT_MAX_ITERS, DEFAULT_TOL, EIGEN_ENGINE, EXPERIMENT_IDS, LOG_LEVEL, OUTPUT_DIR,
    THETA_SAMPLES
)
from src.utils import NumericalFailure, parse_int_list, setup_logging, write_table

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_NUMERICAL = 1
EXIT_USAGE = 2


def _positive_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"número inválido: {text!r}")
    if not value > 0:
        raise argparse.ArgumentTypeError(f"valor deve ser positivo: {text!r}")
    return value


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"inteiro inválido: {text!r}")
    if value < 1:
        raise argparse.ArgumentTypeError(f"valor deve ser >= 1: {text!r}")
    return value


def _int_list(text: str) -> List[int]:
    try:
        values = parse_int_list(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e))
    if any(v < 1 for v in values):
        raise argparse.ArgumentTypeError(f"valores devem ser >= 1: {text!r}")
    return values


def _emit(table, out: Optional[Path]) -> None:
    """Grava a tabela em `out` ou a escreve em stdout"""
    text = write_table(table, out)
    if out is None:
        sys.stdout.write(text)
    else:
        logger.info(f"Tabela gravada em {out}")


def _mode_coefficients(args):
    from src.model import SpatialGrid
    from src.modes import coefficients, eigenbasis

    if not 1 <= args.m <= args.M:
        raise ValueError(f"--m deve estar em 1..{args.M}, recebido {args.m}")
    basis = eigenbasis(SpatialGrid(M=args.M, length=args.L))
    return coefficients(basis.lambdas[args.m - 1], args.nu, args.dt)


def cmd_modes_dump(args) -> int:
    from src.model import SpatialGrid
    from src.modes import coefficients_table, eigenbasis

    basis = eigenbasis(SpatialGrid(M=args.M, length=args.L))
    _emit(coefficients_table(basis, args.nu, args.dt), args.out)
    return EXIT_OK


def cmd_theory_report(args) -> int:
    from src.theory import report_table

    coeffs = _mode_coefficients(args)
    if min(args.N_list) < 2:
        raise ValueError(f"--N-list exige N >= 2, recebido {args.N_list}")
    table = report_table(coeffs, args.N_list, eps=args.eps, samples=args.theta_samples, engine=args.engine)
    _emit(table, args.out)
    return EXIT_OK


def cmd_theory_spectrum(args) -> int:
    from src.theory import spectrum_report, spectrum_table, symbol_curve

    coeffs = _mode_coefficients(args)
    report = spectrum_report(coeffs, args.N, curve=symbol_curve(coeffs, args.theta_samples),
                             eps=args.eps, engine=args.engine)
    _emit(spectrum_table(report), args.out)
    return EXIT_OK


def cmd_theory_symbol(args) -> int:
    from src.theory import symbol_curve, symbol_table

    coeffs = _mode_coefficients(args)
    _emit(symbol_table(symbol_curve(coeffs, args.theta_samples)), args.out)
    return EXIT_OK


def cmd_solve(args) -> int:
    from src.model import problem_from_config, sample_field, write_field_csv
    from src.pint import monolithic_solve, schwarz_solve

    setup = problem_from_config(args.config)
    reference = None
    if args.reference == "monolithic":
        reference = monolithic_solve(setup)
    elif args.reference == "exact":
        if setup.exact is None:
            raise ValueError(f"Cenário '{setup.problem.scenario}' não tem solução exata")
        reference = (sample_field(setup.exact[0], setup.grid, setup.decomp, role="state"),
                     sample_field(setup.exact[1], setup.grid, setup.decomp, role="adjoint"))

    history = schwarz_solve(setup, tol=args.tol, max_iters=args.max_iters, reference=reference,
                            workers=args.workers)
    _emit(history.table(), args.out)
    if args.fields_dir is not None:
        fields = {"state": history.y, "adjoint": history.p, "control": history.p.control(setup.problem.nu)}
        for name, values in fields.items():
            write_field_csv(values, setup.grid, setup.decomp, Path(args.fields_dir) / f"{name}.csv")
        logger.info(f"Campos gravados em {args.fields_dir}")
    if not history.converged:
        logger.error(f"Não convergiu em {args.max_iters} iterações (tol={args.tol:.1e})")
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_experiment(args) -> int:
    from src.experiments import ScenarioConfig, run_experiment

    document = {}
    if args.config is not None:
        if not args.config.exists():
            raise FileNotFoundError(f"Arquivo de configuração não encontrado: {args.config}")
        try:
            document = json.loads(args.config.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ValueError(f"JSON inválido em {args.config}: {e}")
        if not isinstance(document, dict):
            raise ValueError(f"Configuração em {args.config} deve ser um objeto JSON")
    if document.get("scenario", args.id) != args.id:
        raise ValueError(f"Configuração é do cenário '{document['scenario']}', não '{args.id}'")
    document["scenario"] = args.id
    document["out_dir"] = str(args.out if args.out is not None else OUTPUT_DIR / args.id)
    for key in ("workers", "tol", "max_iters"):
        value = getattr(args, key)
        if value is not None:
            document[key] = value
    table = run_experiment(ScenarioConfig.model_validate(document))
    sys.stdout.write(write_table(table))
    return EXIT_OK


def _add_mode_arguments(parser: argparse.ArgumentParser, with_m: bool = True) -> None:
    parser.add_argument("--nu", type=_positive_float, required=True, help="Penalização ν")
    parser.add_argument("--dt", type=_positive_float, required=True, help="Comprimento Δt do subintervalo")
    parser.add_argument("--M", type=_positive_int, required=True, help="Número de nós interiores")
    parser.add_argument("--L", type=_positive_float, default=1.0, help="Comprimento do domínio (padrão: 1)")
    if with_m:
        parser.add_argument("--m", type=_positive_int, default=1, help="Índice do modo (padrão: 1)")
        parser.add_argument("--theta-samples", type=_positive_int, default=THETA_SAMPLES,
                            help=f"Amostras de θ (padrão: {THETA_SAMPLES})")
        parser.add_argument("--eps", type=_positive_float, default=CLUSTER_EPS,
                            help=f"Raio de agrupamento (padrão: {CLUSTER_EPS})")
        parser.add_argument("--engine", choices=("lapack", "qr"), default=EIGEN_ENGINE,
                            help="Motor de autovalores")
    parser.add_argument("--out", type=Path, default=None, help="Arquivo CSV de saída (padrão: stdout)")


def build_parser() -> argparse.ArgumentParser:
    """Monta o parser com todos os subcomandos"""
    parser = argparse.ArgumentParser(
        prog="tpschwarz",
        description="Schwarz paralelo no tempo para controle ótimo parabólico",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Exemplos de uso:
  python main.py modes dump --M 31 --nu 0.1 --dt 1
  python main.py theory report --nu 0.01 --dt 0.0078125 --M 128 --m 1 --N-list 2,4,8
  python main.py solve --config problem.json --tol 1e-8 --max-iters 50 --workers 4
  python main.py experiment weak-scaling --out results/weak-scaling
        """
    )
    parser.add_argument("--log-level", default=LOG_LEVEL, choices=("DEBUG", "INFO", "WARNING", "ERROR"),
                        help="Nível de logging")
    commands = parser.add_subparsers(dest="command", required=True)

    modes = commands.add_parser("modes", help="Autopares e coeficientes por modo")
    modes_commands = modes.add_subparsers(dest="action", required=True)
    dump = modes_commands.add_parser("dump", help="Tabela m,lambda,sigma,c1,c2")
    _add_mode_arguments(dump, with_m=False)
    dump.set_defaults(handler=cmd_modes_dump)

    theory = commands.add_parser("theory", help="Cotas e espectro de T^PS_N")
    theory_commands = theory.add_subparsers(dest="action", required=True)
    report = theory_commands.add_parser("report", help="rho, rho_tilde, normas e agrupamento por N")
    _add_mode_arguments(report)
    report.add_argument("--N-list", dest="N_list", type=_int_list, required=True, help="Lista de N, ex.: 2,4,8")
    report.set_defaults(handler=cmd_theory_report)
    spectrum = theory_commands.add_parser("spectrum", help="Autovalores de uma seção finita")
    _add_mode_arguments(spectrum)
    spectrum.add_argument("--N", type=_positive_int, required=True, help="Número de subintervalos (>= 2)")
    spectrum.set_defaults(handler=cmd_theory_spectrum)
    symbol = theory_commands.add_parser("symbol", help="Curvas μ±(θ) do símbolo")
    _add_mode_arguments(symbol)
    symbol.set_defaults(handler=cmd_theory_symbol)

    solve = commands.add_parser("solve", help="Resolve um problema pelo método de Schwarz")
    solve.add_argument("--config", type=Path, required=True, help="Definição do problema (JSON)")
    solve.add_argument("--tol", type=_positive_float, default=DEFAULT_TOL, help="Tolerância de parada")
    solve.add_argument("--max-iters", dest="max_iters", type=_positive_int, default=DEFAULT_MAX_ITERS,
                       help="Máximo de iterações")
    solve.add_argument("--workers", type=_positive_int, default=None, help="Threads (padrão: TPS_WORKERS)")
    solve.add_argument("--reference", choices=("monolithic", "exact", "none"), default="monolithic",
                       help="Referência para os erros L²(Q)")
    solve.add_argument("--out", type=Path, default=None, help="CSV do histórico (padrão: stdout)")
    solve.add_argument("--fields-dir", dest="fields_dir", type=Path, default=None,
                       help="Diretório para gravar os campos finais")
    solve.set_defaults(handler=cmd_solve)

    experiment = commands.add_parser("experiment", help="Executa um experimento")
    experiment.add_argument("id", choices=EXPERIMENT_IDS, help="Identificador do experimento")
    experiment.add_argument("--config", type=Path, default=None, help="Configuração do cenário (JSON)")
    experiment.add_argument("--out", type=Path, default=None, help="Diretório de saída")
    experiment.add_argument("--workers", type=_positive_int, default=None, help="Threads")
    experiment.add_argument("--tol", type=_positive_float, default=None, help="Tolerância de parada")
    experiment.add_argument("--max-iters", dest="max_iters", type=_positive_int, default=None,
                            help="Máximo de iterações")
    experiment.set_defaults(handler=cmd_experiment)
    return parser


def parse_and_dispatch(argv: Optional[List[str]] = None) -> int:
    """
    Interpreta argv e executa o subcomando

    Args:
        argv: Argumentos (sem o nome do programa)

    Returns:
        Código de saída (0, 1 ou 2)
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE

    setup_logging(args.log_level)
    try:
        return args.handler(args)
    except NumericalFailure as e:
        logger.error(f"Falha numérica: {e}")
        return EXIT_NUMERICAL
    except (ValueError, FileNotFoundError, ValidationError) as e:
        logger.error(f"Erro de configuração: {e}")
        return EXIT_USAGE
