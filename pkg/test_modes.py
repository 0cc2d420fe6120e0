"""
Testes da base espectral e dos coeficientes por modo
"""

import itertools
import sys

import numpy as np
import pytest

from src.model import SpatialGrid, build_laplacian
from src.modes import (
    EigenBasis, coefficient_arrays, coefficients, coefficients_table, eigenbasis, hyperbolic_ratio,
    rho_tilde_expanded, rho_tilde_identity_gap, sigma_of, spectral_scaling_constants
)

LAMBDAS = [0.0, 1e-3, 1.0, 1e3, 1e6]
NUS = [1e-4, 1e-2, 1.0, 1e2]
DTS = [1e-3, 1e-1, 1.0, 10.0]


def test_analytic_eigenpairs_match_laplacian():
    grid = SpatialGrid(M=15, length=2.0)
    basis = eigenbasis(grid)
    A = build_laplacian(grid).toarray()
    residual = A @ basis.vectors - basis.vectors * basis.lambdas
    assert np.max(np.abs(residual)) < 1e-10 * basis.lambdas.max()
    np.testing.assert_allclose(basis.vectors.T @ basis.vectors, np.eye(grid.M), atol=1e-13)
    np.testing.assert_allclose(basis.lambdas, np.linalg.eigvalsh(A), rtol=1e-12)


def test_transforms_are_inverse():
    basis = eigenbasis(SpatialGrid(M=31))
    rng = np.random.default_rng(3)
    values = rng.standard_normal((5, 31))
    np.testing.assert_allclose(basis.inverse(basis.forward(values)), values, atol=1e-13)
    with pytest.raises(ValueError):
        basis.forward(np.ones(30))


def test_sine_transform_path_matches_dense():
    basis = eigenbasis(SpatialGrid(M=600))
    dense = EigenBasis(lambdas=basis.lambdas, vectors=basis.vectors)
    values = np.random.default_rng(5).standard_normal((3, 600))
    np.testing.assert_allclose(basis.forward(values), dense.forward(values), atol=1e-11)
    np.testing.assert_allclose(basis.inverse(values), dense.inverse(values), atol=1e-11)


def test_from_pairs_sorts_and_orthonormalizes():
    basis = eigenbasis(SpatialGrid(M=6))
    order = np.array([3, 0, 5, 1, 4, 2])
    rebuilt = EigenBasis.from_pairs(basis.lambdas[order], 2.0 * basis.vectors[:, order])
    np.testing.assert_allclose(rebuilt.lambdas, basis.lambdas)
    np.testing.assert_allclose(rebuilt.vectors, basis.vectors, atol=1e-13)
    with pytest.raises(ValueError):
        EigenBasis(lambdas=[2.0, 1.0], vectors=np.eye(2))


def test_scaling_constants_stay_bounded():
    for h in (1 / 16, 1 / 64, 1 / 256):
        basis = eigenbasis(SpatialGrid.from_spacing(h))
        lower, upper = spectral_scaling_constants(basis, h)
        assert 8.0 <= lower <= np.pi ** 2
        assert 3.9 <= upper <= 4.0


def test_coefficient_properties_on_parameter_grid():
    for lam, nu, dt in itertools.product(LAMBDAS, NUS, DTS):
        c = coefficients(lam, nu, dt)
        assert np.isfinite(c.c1) and np.isfinite(c.c2) and np.isfinite(c.sigma)
        assert c.c1 < 0
        assert 0.0 <= c.c2 < 1.0
        if c.sigma * dt < 700:
            assert c.c2 > 0.0
        if lam == 0.0:
            assert c.rho_tilde == pytest.approx(1.0, rel=1e-12)
        else:
            assert c.rho_tilde < 1.0


def test_lambda_zero_closed_form():
    c = coefficients(0.0, 0.25, 0.5)
    x = 2.0 * 0.5
    assert c.sigma == pytest.approx(2.0)
    assert c.c2 == pytest.approx(1.0 / np.cosh(x), rel=1e-14)
    assert c.c1 == pytest.approx(-np.tanh(x) / (0.25 * 2.0), rel=1e-14)


def test_exponential_form_is_continuous_at_threshold():
    below = coefficients(0.0, 1.0, 30.0 - 1e-9)
    above = coefficients(0.0, 1.0, 30.0 + 1e-9)
    assert below.c2 == pytest.approx(above.c2, rel=1e-8)
    assert below.c1 == pytest.approx(above.c1, rel=1e-12)


def test_coefficients_reject_invalid_parameters():
    with pytest.raises(ValueError):
        coefficients(1.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        coefficients(1.0, 0.1, -1.0)
    with pytest.raises(ValueError):
        coefficients(-1.0, 0.1, 1.0)


def test_hyperbolic_ratio_branches():
    lam, nu = 3.0, 0.5
    sigma = float(sigma_of(lam, nu))
    a = np.linspace(0.0, 1.0, 5)
    for dt in (1.0, 40.0 / sigma):
        a_dt = a * dt
        denom = sigma * np.cosh(sigma * dt) + lam * np.sinh(sigma * dt)
        np.testing.assert_allclose(hyperbolic_ratio("cosh", a_dt, sigma, lam, dt),
                                   np.cosh(sigma * a_dt) / denom, rtol=1e-12)
        np.testing.assert_allclose(hyperbolic_ratio("sinh", a_dt, sigma, lam, dt),
                                   np.sinh(sigma * a_dt) / denom, rtol=1e-12, atol=1e-300)
    far = hyperbolic_ratio("cosh", 1000.0 / sigma, sigma, lam, 1000.0 / sigma)
    assert np.isfinite(far) and 0.0 < far <= 1.0 / sigma
    with pytest.raises(ValueError):
        hyperbolic_ratio("tanh", 0.0, sigma, lam, 1.0)


def test_expanded_rho_tilde_identity():
    lams = np.array(LAMBDAS)
    for nu, dt in itertools.product(NUS, DTS):
        _, c1, c2 = coefficient_arrays(lams, nu, dt)
        reference = nu * c1 ** 2 + c2 ** 2
        np.testing.assert_allclose(rho_tilde_expanded(lams, nu, dt, printed=False), reference, rtol=1e-10)


def test_printed_expansion_gap_is_reported():
    lams = np.array([0.0, np.pi ** 2])
    gap = rho_tilde_identity_gap(lams, 0.1, 1.0)
    assert gap[0] < 1e-12
    assert gap[1] > 1e-3


def test_coefficients_table_columns():
    basis = eigenbasis(SpatialGrid(M=9))
    table = coefficients_table(basis, 0.1, 0.5)
    assert list(table.columns) == ["m", "lambda", "sigma", "c1", "c2"]
    assert len(table) == 9
    assert table["m"].tolist() == list(range(1, 10))
    assert (table["c1"] < 0).all() and (table["c2"] > 0).all()


def main():
    """
    Executa todos os testes do módulo
    """
    print("🧪 Testes dos modos")
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
