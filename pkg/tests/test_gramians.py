import warnings

import numpy as np
import pytest

from conftest import random_stable
from oracles import gramian_quadrature, output_energy_quadrature
from storagemor.exceptions import StabilityError, UnreachableStateError
from storagemor.gramians import energy_functions, gramians, lyapunov_residual, psd_factor, solve_lyapunov, write_spectrum
from storagemor.lti import LtiRealization, transform_realization


def test_scalar_lyapunov():
    assert solve_lyapunov([[-1.0]], [[1.0]])[0, 0] == pytest.approx(0.5)


def test_diagonal_two_by_two():
    X = solve_lyapunov(np.diag([-1.0, -2.0]), np.ones((2, 2)))
    assert np.allclose(X, [[0.5, 1 / 3], [1 / 3, 0.25]], atol=1e-15)


@pytest.mark.parametrize("seed", range(6))
def test_matches_integral_definition(seed):
    rng = np.random.default_rng(seed)
    r = random_stable(rng, 6)
    X = solve_lyapunov(r.A, r.B @ r.B.T)
    ref = gramian_quadrature(r.A, r.B @ r.B.T)
    assert np.linalg.norm(X - ref) <= 1e-6 * np.linalg.norm(ref)


def test_unstable_rejected():
    with pytest.raises(StabilityError):
        solve_lyapunov(np.diag([-1.0, 0.5]), np.eye(2))
    with pytest.raises(StabilityError):
        solve_lyapunov(np.zeros((2, 2)), np.eye(2))


def test_scalar_gramians_and_energies():
    gp = gramians(LtiRealization([[-1.0]], [[1.0]], [[1.0]]))
    assert gp.G_C[0, 0] == pytest.approx(0.5) and gp.G_O[0, 0] == pytest.approx(0.5)
    assert abs(gp.U[0, 0]) == pytest.approx(np.sqrt(0.5)) and abs(gp.L[0, 0]) == pytest.approx(np.sqrt(0.5))
    E_C, E_O = energy_functions(gp, [1.0])
    assert (E_C, E_O) == pytest.approx((2.0, 0.5))
    assert energy_functions(gp, [0.0]) == (0.0, 0.0)


def test_uncontrollable_rank():
    r = LtiRealization(np.diag([-1.0, -2.0]), [[1.0], [0.0]], [[1.0, 1.0]])
    gp = gramians(r)
    assert gp.r_C == 1 and gp.r_O == 2
    with pytest.raises(UnreachableStateError):
        energy_functions(gp, [0.0, 1.0])
    assert energy_functions(gp, [1.0, 0.0])[0] == pytest.approx(2.0)


@pytest.mark.parametrize("seed", range(5))
def test_output_energy_integral(seed):
    rng = np.random.default_rng(100 + seed)
    r = random_stable(rng, 5)
    gp = gramians(r)
    y = rng.standard_normal(5)
    ref = output_energy_quadrature(r.A, r.C, y)
    assert energy_functions(gp, y)[1] == pytest.approx(ref, rel=1e-6)


def test_controllability_energy_is_minimal_norm():
    rng = np.random.default_rng(7)
    r = random_stable(rng, 5, m=5)
    gp = gramians(r)
    y = rng.standard_normal(5)
    assert energy_functions(gp, y)[0] == pytest.approx(y @ np.linalg.solve(gp.G_C, y), rel=1e-8)


@pytest.mark.parametrize("seed", range(5))
def test_transformation_law(seed):
    rng = np.random.default_rng(200 + seed)
    r = random_stable(rng, 6)
    T = rng.standard_normal((6, 6)) + 4 * np.eye(6)
    gp, gt = gramians(r), gramians(transform_realization(r, T))
    Ti = np.linalg.inv(T)
    assert np.linalg.norm(gt.G_C - T @ gp.G_C @ T.T) <= 1e-6 * np.linalg.norm(gt.G_C)
    assert np.linalg.norm(gt.G_O - Ti.T @ gp.G_O @ Ti) <= 1e-6 * np.linalg.norm(gt.G_O)
    ev = np.sort(np.linalg.eigvals(gp.G_C @ gp.G_O).real)
    et = np.sort(np.linalg.eigvals(gt.G_C @ gt.G_O).real)
    assert np.allclose(et, ev, rtol=1e-6, atol=1e-12 * ev.max())


def test_desk_gramians(desk5_gp):
    r, gp = desk5_gp
    for G in (gp.G_C, gp.G_O):
        assert np.linalg.norm(G - G.T) <= 1e-10 * np.linalg.norm(G)
        lam = np.linalg.eigvalsh(G)
        assert lam.min() >= -1e-10 * lam.max()
    assert gp.residual_C <= 1e-8 and gp.residual_O <= 1e-8
    # fast eigenvalue decay: numerical ranks far below n
    assert gp.r_C < r.n / 4 and gp.r_O < r.n / 4
    assert np.allclose(gp.U @ gp.U.T, gp.G_C, atol=1e-12 * np.abs(gp.G_C).max())


def test_psd_factor_cholesky_and_truncated():
    G = np.array([[4.0, 2.0], [2.0, 3.0]])
    F = psd_factor(G)
    assert np.allclose(F, np.linalg.cholesky(G))
    v = np.array([1.0, 2.0])
    F1 = psd_factor(np.outer(v, v))
    assert F1.shape == (2, 1) and np.allclose(F1 @ F1.T, np.outer(v, v))
    assert psd_factor(np.zeros((3, 3))).shape == (3, 0)


def test_residual_helper():
    A = np.diag([-1.0, -2.0])
    X = solve_lyapunov(A, np.eye(2))
    assert lyapunov_residual(A, X, np.eye(2)) < 1e-15


def test_spectrum_csv(tmp_path, desk5_gp):
    _, gp = desk5_gp
    p = write_spectrum(tmp_path / "gc.csv", gp.G_C)
    lines = p.read_text().splitlines()
    assert lines[0] == "index,eigenvalue" and len(lines) == gp.n + 1
    assert float(lines[1].split(",")[1]) == pytest.approx(np.linalg.eigvalsh(gp.G_C).max(), rel=1e-12)
