"""
Testes da matriz de iteração, das cotas espectrais e do símbolo
"""

import sys

import numpy as np
import pytest

from src.model import SpatialGrid
from src.modes import ModeCoefficients, coefficients, eigenbasis
from src.theory import (
    apply, assemble, eigenvalues, hessenberg_qr_eigvals, infinity_norm, infinity_norm_closed_form,
    one_norm, region_d_contains, report_table, rho_tilde, sigma_t_distance, special_norm,
    spectral_radius, spectrum_report, symbol_curve, symbol_eigenvalues, symbol_matrix
)
from src.utils import EigenSolverBreakdown

BASIS_128 = eigenbasis(SpatialGrid(M=128))


def _mode(m: int, nu: float, dt: float) -> ModeCoefficients:
    return coefficients(BASIS_128.lambdas[m - 1], nu, dt)


def _match(a: np.ndarray, b: np.ndarray) -> float:
    """Maior distância de um autovalor de a ao conjunto b (e vice-versa)"""
    d = np.abs(a[:, None] - b[None, :])
    return max(d.min(axis=1).max(), d.min(axis=0).max())


def test_assemble_block_structure():
    c = _mode(1, 0.1, 0.5)
    T = assemble(c, 5)
    assert T.dim == 8
    A = T.dense()
    np.testing.assert_allclose(A[0:2, 0:2], [[0.0, c.c1], [-c.nu * c.c1, 0.0]])
    np.testing.assert_allclose(A[0:2, 2:4], [[c.c2, 0.0], [0.0, 0.0]])
    np.testing.assert_allclose(A[2:4, 0:2], [[0.0, 0.0], [0.0, c.c2]])
    rows, cols = np.nonzero(A)
    assert np.all(np.abs(rows - cols) <= 2)
    np.testing.assert_allclose(assemble(c, 2).dense(), T.t_d)
    with pytest.raises(ValueError):
        assemble(c, 1)


def test_apply_matches_dense_product():
    rng = np.random.default_rng(11)
    c = _mode(3, 0.01, 0.25)
    for N in (2, 3, 8, 33):
        T = assemble(c, N)
        e = rng.standard_normal(T.dim)
        np.testing.assert_allclose(apply(T, e), T.dense() @ e, rtol=1e-14, atol=1e-15)
    with pytest.raises(ValueError):
        apply(assemble(c, 4), np.ones(5))


def test_infinity_and_one_norm_closed_form():
    rng = np.random.default_rng(2024)
    for _ in range(200):
        lam = 10 ** rng.uniform(-2, 4)
        nu = 10 ** rng.uniform(-4, 1)
        dt = 10 ** rng.uniform(-3, 1)
        N = int(rng.integers(3, 33))
        c = coefficients(lam, nu, dt)
        T = assemble(c, N)
        dense = T.dense()
        closed = infinity_norm_closed_form(c)
        assert closed == pytest.approx(np.abs(dense).sum(axis=1).max(), rel=1e-13)
        assert closed == pytest.approx(infinity_norm(T), rel=1e-13)
        assert closed == pytest.approx(one_norm(T), rel=1e-13)


def test_infinity_norm_exceeds_one_in_low_frequency_regime():
    c = _mode(1, 1e-2, 1 / 128)
    assert infinity_norm_closed_form(c) > 1.0
    assert spectral_radius(assemble(c, 16))[0] < 1.0


def test_special_norm_identity():
    for nu, dt, m in ((1e-1, 1.0, 1), (1e-2, 1 / 128, 1), (1e-4, 1 / 16, 64)):
        c = _mode(m, nu, dt)
        for N in (3, 4, 7, 16, 64):
            T = assemble(c, N)
            assert special_norm(T) ** 2 == pytest.approx(rho_tilde(c), rel=1e-12)
            scale = np.tile([1.0, np.sqrt(nu)], N - 1)
            transformed = T.dense() * scale[None, :] / scale[:, None]
            oracle = np.sqrt((transformed ** 2).sum(axis=1).max())
            assert special_norm(T) == pytest.approx(oracle, rel=1e-12)
        assert special_norm(assemble(c, 2)) ** 2 == pytest.approx(nu * c.c1 ** 2, rel=1e-14)


def test_bound_chain_on_full_grid():
    violations = []
    for nu in (1e-1, 1e-2, 1e-4):
        for dt in (1.0, 1 / 4, 1 / 16, 1 / 128):
            for m in range(1, 129):
                c = _mode(m, nu, dt)
                bound = np.sqrt(rho_tilde(c))
                if not rho_tilde(c) < 1.0:
                    violations.append((nu, dt, m, "rho_tilde"))
                for N in (2, 4, 8, 16, 32, 64, 128):
                    rho, _ = spectral_radius(assemble(c, N))
                    if rho > bound + 1e-10:
                        violations.append((nu, dt, m, N))
    assert violations == []


def test_low_frequencies_converge_slower():
    for N in (4, 16, 64):
        rho_low, _ = spectral_radius(assemble(_mode(1, 1e-2, 1 / 128), N))
        rho_high, _ = spectral_radius(assemble(_mode(128, 1e-2, 1 / 128), N))
        assert rho_high < 0.1 * rho_low


def test_short_subdomains_lose_weak_scalability_margin():
    basis = eigenbasis(SpatialGrid(M=31))
    c = coefficients(basis.lambdas[0], 0.1, 1 / 16)
    rho_2, _ = spectral_radius(assemble(c, 2))
    rho_16, _ = spectral_radius(assemble(c, 16))
    assert rho_16 > 2.0 * rho_2
    assert rho_16 <= np.sqrt(rho_tilde(c)) + 1e-10


def test_region_containment_of_finite_sections():
    for nu in (1e-2, 1e-4):
        for m in (1, 128):
            c = _mode(m, nu, 1 / 128)
            for N in (16, 64, 256, 512):
                values = eigenvalues(assemble(c, N))
                assert values.size == 2 * (N - 1)
                assert np.all(region_d_contains(c, values, tol=1e-10))


def test_spectrum_is_closed_under_conjugation():
    for nu, dt, m in ((1e-2, 1 / 128, 1), (1e-4, 1 / 16, 64), (1e-1, 1.0, 3)):
        c = _mode(m, nu, dt)
        for N in (2, 5, 16, 64):
            T = assemble(c, N)
            for engine in ("lapack", "qr"):
                values = eigenvalues(T, engine=engine)
                assert _match(values, values.conj()) <= 1e-12 * max(1.0, np.abs(values).max())


def test_eigenvalues_cluster_on_symbol_curve():
    for nu in (1e-2, 1e-4):
        for m in (1, 128):
            c = _mode(m, nu, 1 / 128)
            curve = symbol_curve(c)
            reports = [spectrum_report(c, N, curve=curve, eps=1e-2) for N in (16, 32, 64, 128, 256, 512)]
            fractions = [r.frac_outside_eps for r in reports]
            distances = [r.max_dist for r in reports]
            assert all(b <= a + 1e-12 for a, b in zip(fractions, fractions[1:]))
            assert all(b <= a + 1e-12 for a, b in zip(distances, distances[1:]))
            assert fractions[-1] == 0.0
            if m == 1:
                assert distances[-1] < distances[0]


def test_symbol_constant_modulus():
    for nu, dt, m in ((1e-2, 1 / 128, 1), (1e-4, 1 / 128, 128), (1e-1, 1.0, 5)):
        c = _mode(m, nu, dt)
        curve = symbol_curve(c, samples=2001)
        for branch in (curve.mu_plus, curve.mu_minus):
            assert np.max(np.abs(np.abs(branch) ** 2 - (c.c2 ** 2 + nu * c.c1 ** 2))) <= 1e-13


def test_symbol_matrix_eigenvalues():
    c = _mode(2, 1e-2, 0.1)
    for theta in np.linspace(-np.pi, np.pi, 9):
        values = np.linalg.eigvals(symbol_matrix(c, theta))
        mu_plus, mu_minus = symbol_eigenvalues(c, theta)
        assert _match(values, np.array([mu_plus, mu_minus])) < 1e-12


def test_region_membership():
    c = _mode(1, 1e-2, 1 / 128)
    curve = symbol_curve(c, samples=101)
    assert np.all(region_d_contains(c, curve.mu_plus, tol=1e-12))
    assert region_d_contains(c, 0.0)
    assert not region_d_contains(c, 1.01 * np.sqrt(rho_tilde(c)) * 1j)
    assert not region_d_contains(c, c.c2 + 1e-3)
    degenerate = ModeCoefficients(lam=1e6, sigma=1e6, c1=-0.5, c2=0.0, nu=0.1, dt=1.0)
    assert region_d_contains(degenerate, 0.1j)
    assert not region_d_contains(degenerate, 0.01 + 0.1j)
    assert not region_d_contains(degenerate, 0.2j)
    with pytest.raises(ValueError):
        region_d_contains(c, 0.0, tol=-1.0)


def test_distance_to_symbol_curve():
    c = _mode(1, 1e-2, 1 / 128)
    curve = symbol_curve(c)
    assert sigma_t_distance(curve, 0.0) == pytest.approx(np.sqrt(rho_tilde(c)), rel=1e-5)
    on_curve = symbol_eigenvalues(c, 0.3)[0]
    assert sigma_t_distance(curve, on_curve) < 1e-5
    distances = sigma_t_distance(curve, np.array([0.0, on_curve]))
    assert distances.shape == (2,)


def test_hessenberg_qr_matches_lapack():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((30, 30))
    assert _match(hessenberg_qr_eigvals(A), np.linalg.eigvals(A)) < 1e-9
    rotation = np.array([[0.0, -2.0], [2.0, 0.0]])
    assert _match(hessenberg_qr_eigvals(rotation), np.array([2j, -2j])) < 1e-14
    for nu, m in ((1e-2, 1), (1e-4, 1), (1e-1, 10)):
        c = _mode(m, nu, 1 / 16)
        for N in (2, 4, 8, 16):
            T = assemble(c, N)
            qr = eigenvalues(T, engine="qr")
            lapack = eigenvalues(T, engine="lapack")
            assert _match(qr, lapack) < 1e-9
            assert spectral_radius(T, engine="qr")[0] == pytest.approx(spectral_radius(T)[0], abs=1e-10)


def test_hessenberg_qr_breakdown_and_caps():
    A = np.random.default_rng(1).standard_normal((6, 6))
    with pytest.raises(EigenSolverBreakdown):
        hessenberg_qr_eigvals(A, max_iter_factor=0)
    with pytest.raises(ValueError):
        hessenberg_qr_eigvals(np.ones((2, 3)))
    c = _mode(1, 0.1, 1.0)
    with pytest.raises(ValueError):
        eigenvalues(assemble(c, 2050))
    with pytest.raises(ValueError):
        assemble(c, 5000).dense()
    with pytest.raises(ValueError):
        eigenvalues(assemble(c, 4), engine="arpack")


def test_report_table_rows():
    c = _mode(1, 1e-2, 1 / 128)
    table = report_table(c, [2, 4, 8], samples=501)
    assert len(table) == 3
    assert list(table.columns) == ["N", "rho", "rho_tilde", "sqrt_rho_tilde", "inf_norm",
                                   "max_dist_sigmaT", "frac_outside_eps"]
    assert (table["rho"] <= table["sqrt_rho_tilde"] + 1e-10).all()


def main():
    """
    Executa todos os testes do módulo
    """
    print("🧪 Testes da teoria")
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
