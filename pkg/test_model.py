"""
Testes do modelo: Laplaciano, norma L²(Q), soluções e configuração do problema
"""

import json
import sys
import tempfile
from pathlib import Path

import numpy as np
import pandas as pd
import pytest
from pydantic import ValidationError

from config.settings import HEATCOOL_PERIOD_UNKNOWNS, HEATCOOL_TOTAL_UNKNOWNS
from src.model import (
    SpaceTimeField, SpatialGrid, TimeDecomposition, build_laplacian, heatcool_target, l2q_norm,
    manufactured_solution, problem_from_config, sample_field, unknown_count, write_field_csv
)


def test_laplacian_single_node():
    A = build_laplacian(SpatialGrid(M=1)).toarray()
    assert A.shape == (1, 1)
    assert A[0, 0] == pytest.approx(8.0)


def test_laplacian_three_nodes():
    A = build_laplacian(SpatialGrid(M=3)).toarray()
    np.testing.assert_allclose(np.diag(A), [32.0, 32.0, 32.0])
    np.testing.assert_allclose(np.diag(A, 1), [-16.0, -16.0])
    np.testing.assert_allclose(np.diag(A, -1), [-16.0, -16.0])
    expected = [32 - 16 * np.sqrt(2), 32.0, 32 + 16 * np.sqrt(2)]
    np.testing.assert_allclose(np.linalg.eigvalsh(A), expected, rtol=1e-12)


def test_laplacian_is_spd():
    for M in (2, 7, 31, 64):
        A = build_laplacian(SpatialGrid(M=M, length=2.5)).toarray()
        np.testing.assert_array_equal(A, A.T)
        assert np.all(np.linalg.eigvalsh(A) > 0)
        off = np.abs(A).sum(axis=1) - np.abs(np.diag(A))
        assert np.all(np.diag(A) >= off)


def test_grid_rejects_invalid_sizes():
    with pytest.raises(ValueError):
        SpatialGrid(M=0)
    with pytest.raises(ValueError):
        SpatialGrid.from_spacing(0.3)
    assert SpatialGrid.from_spacing(1 / 128).M == 127


def test_time_decomposition_levels():
    decomp = TimeDecomposition(N=4, dt_sub=0.5, K=8)
    assert decomp.horizon == pytest.approx(2.0)
    assert decomp.n_levels == 33
    window = decomp.levels(2)
    assert decomp.times[window][0] == pytest.approx(0.5)
    assert decomp.times[window][-1] == pytest.approx(1.0)
    with pytest.raises(ValueError):
        decomp.levels(5)


def test_l2q_norm_zero_constant_and_sine():
    grid = SpatialGrid(M=255)
    decomp = TimeDecomposition(N=1, dt_sub=1.0, K=64)
    zero = np.zeros((decomp.n_levels, grid.M))
    assert l2q_norm(zero, grid, decomp) == 0.0
    constant = np.full_like(zero, 3.0)
    assert l2q_norm(constant, grid, decomp) == pytest.approx(3.0, rel=1e-2)
    sine = sample_field(lambda x, t: np.sin(np.pi * x) + 0 * t, grid, decomp)
    assert l2q_norm(sine, grid, decomp) == pytest.approx(np.sqrt(0.5), rel=1e-12)


def test_l2q_norm_is_a_norm():
    rng = np.random.default_rng(7)
    grid = SpatialGrid(M=15)
    decomp = TimeDecomposition(N=2, dt_sub=0.25, K=5)
    a = rng.standard_normal((decomp.n_levels, grid.M))
    b = rng.standard_normal((decomp.n_levels, grid.M))
    na, nb = l2q_norm(a, grid, decomp), l2q_norm(b, grid, decomp)
    assert l2q_norm(-2.5 * a, grid, decomp) == pytest.approx(2.5 * na)
    assert l2q_norm(a + b, grid, decomp) <= na + nb + 1e-14
    with pytest.raises(ValueError):
        l2q_norm(a[:, :-1], grid, decomp)


def test_manufactured_boundary_conditions():
    y, p, _ = manufactured_solution(nu=0.1, T=2.0)
    x = np.linspace(0, 1, 11)
    np.testing.assert_allclose(y(x, 0.0), 0.0, atol=1e-15)
    np.testing.assert_allclose(p(x, 2.0), 0.0, atol=1e-15)
    t = np.linspace(0, 2, 7)
    np.testing.assert_allclose(y(0.0, t), 0.0, atol=1e-15)
    np.testing.assert_allclose(p(1.0, t), 0.0, atol=1e-15)


def test_manufactured_solves_optimality_system():
    nu, T, d = 0.1, 1.0, 1e-3
    y, p, target = manufactured_solution(nu, T)
    x, t = np.meshgrid(np.linspace(0.1, 0.9, 9), np.linspace(0.1, 0.9, 9))

    def dt(f):
        return (f(x, t + d) - f(x, t - d)) / (2 * d)

    def dxx(f):
        return (f(x + d, t) - 2 * f(x, t) + f(x - d, t)) / d ** 2

    state_residual = dt(y) - dxx(y) - p(x, t) / nu
    adjoint_residual = dt(p) + dxx(p) - (y(x, t) - target(x, t))
    assert np.max(np.abs(state_residual)) < 1e-4
    assert np.max(np.abs(adjoint_residual)) < 1e-4


def test_heatcool_target_values():
    single = heatcool_target(L=1.0, dt_sub=0.5, N=1)
    assert single(0.5, 0.25) == pytest.approx(10.0)
    four = heatcool_target(L=1.0, dt_sub=0.5, N=4)
    centers = np.array([0.25, 0.75, 1.25, 1.75])
    expected = 10.0 * np.sum(np.exp(-50.0 * (0.25 + centers ** 2)))
    assert four(0.0, 0.0) == pytest.approx(expected, rel=1e-14)
    for delta in (0.05, 0.2, 0.4):
        assert four(0.5 - delta, 0.9) == pytest.approx(four(0.5 + delta, 0.9), rel=1e-14)


def test_unknown_count_reproduces_heatcool_figures():
    grid = SpatialGrid.from_spacing(1 / 128)
    decomp = TimeDecomposition(N=512, dt_sub=0.5, K=64)
    total, per_period = unknown_count(grid, decomp)
    assert total == HEATCOOL_TOTAL_UNKNOWNS
    assert per_period == HEATCOOL_PERIOD_UNKNOWNS


def test_control_from_adjoint():
    field = SpaceTimeField(np.ones((3, 2)), role="adjoint")
    np.testing.assert_allclose(field.control(0.5).values, 2.0)
    with pytest.raises(ValueError):
        SpaceTimeField(np.ones((3, 2)), role="state").control(0.5)
    with pytest.raises(ValueError):
        SpaceTimeField(np.array([[np.nan]]))


def test_problem_from_config_dict():
    setup = problem_from_config({"T": 2.0, "nu": 0.1, "N": 4, "K": 8, "M": 15, "scenario": "heatcool"})
    assert setup.grid.h == pytest.approx(1 / 16)
    assert setup.decomp.dt_sub == pytest.approx(0.5)
    assert setup.exact is None
    assert setup.problem.target(0.5, 0.25) == pytest.approx(10.0, rel=1e-4)


def test_problem_from_config_rejects_bad_documents():
    with pytest.raises(ValidationError):
        problem_from_config({"T": 1.0, "nu": 0.1, "N": 2, "K": 4, "M": 7, "typo": 1})
    with pytest.raises(ValidationError):
        problem_from_config({"T": 1.0, "nu": 0.1, "N": 2, "K": 4, "M": 7, "schema_version": 9})
    with pytest.raises(ValidationError):
        problem_from_config({"T": 1.0, "nu": -0.1, "N": 2, "K": 4, "M": 7})
    with pytest.raises(FileNotFoundError):
        problem_from_config("/nonexistent/problem.json")


def test_tabulated_target_from_csv():
    grid = SpatialGrid(M=7)
    decomp = TimeDecomposition(N=2, dt_sub=0.5, K=4)
    field = sample_field(lambda x, t: x * (1 - x) * (1 + t), grid, decomp)
    with tempfile.TemporaryDirectory() as tmp:
        write_field_csv(field, grid, decomp, Path(tmp) / "target.csv")
        document = {"T": 1.0, "nu": 0.1, "N": 2, "K": 4, "M": 7, "scenario": "tabulated",
                    "target_csv": "target.csv"}
        (Path(tmp) / "problem.json").write_text(json.dumps(document))
        setup = problem_from_config(Path(tmp) / "problem.json")
        resampled = sample_field(setup.problem.target, setup.grid, setup.decomp)
    np.testing.assert_allclose(resampled.values, field.values, rtol=1e-12, atol=1e-14)


def test_initial_state_from_csv():
    grid = SpatialGrid(M=7)
    profile = np.sin(np.pi * grid.nodes)
    with tempfile.TemporaryDirectory() as tmp:
        pd.DataFrame({"x": grid.nodes[::-1], "value": profile[::-1]}).to_csv(Path(tmp) / "y0.csv", index=False)
        document = {"T": 1.0, "nu": 0.1, "N": 2, "K": 4, "M": 7, "scenario": "heatcool",
                    "initial_csv": "y0.csv"}
        (Path(tmp) / "problem.json").write_text(json.dumps(document))
        setup = problem_from_config(Path(tmp) / "problem.json")
        with pytest.raises(FileNotFoundError):
            problem_from_config({**document, "initial_csv": str(Path(tmp) / "missing.csv")})
    np.testing.assert_allclose(setup.problem.initial(grid.nodes), profile, rtol=1e-14)
    assert setup.problem.initial(np.array([0.0, 1.0])).tolist() == [0.0, 0.0]
    with pytest.raises(ValidationError):
        problem_from_config({"T": 1.0, "nu": 0.1, "N": 2, "K": 4, "M": 7, "initial_csv": "y0.csv"})


def main():
    """
    Executa todos os testes do módulo
    """
    print("🧪 Testes do modelo")
    print("=" * 50)
    tests = [f for name, f in sorted(globals().items()) if name.startswith("test_") and callable(f)]
    results = []
    for test in tests:
        try:
            test()
            print(f"✅ {test.__name__}")
            results.append(True)
        except Exception as e:
            print(f"❌ {test.__name__}: {e}")
            results.append(False)
    print("=" * 50)
    print(f"📊 Testes aprovados: {sum(results)}/{len(results)}")
    return all(results)


if __name__ == "__main__":
    sys.exit(0 if main() else 1)
