"""Acceptance criteria; each test prints one PASS/FAIL line (collected in the terminal summary)."""

import os

import numpy as np
import pytest

from conftest import desk_system, random_stable
from oracles import gramian_quadrature
from storagemor.baltrunc import balance_truncate, error_bound, hankel_svd, minimal_order
from storagemor.exceptions import AlignmentError
from storagemor.gramians import RESIDUAL_TOL, gramians, solve_lyapunov
from storagemor.lti import HOUR, LtiRealization, Schedule, charge_discharge_schedule, running_l2, shift_temperature, simulate, waiting_schedule
from storagemor.storage_model import assemble_outputs, verify_stability

NESTING = [("M",), ("M", "F"), ("M", "F", "O"), ("M", "F", "O", "B")]
DESK_CELLS = [(5, 1), (5, 3), (10, 1)]
ALPHAS = (0.9, 0.95, 0.99)
REFERENCE_ORDERS = {  # reference-grid minimal orders at 90/95/99 %, keyed by (outputs, n_P)
    (("M",), 1): (2, 3, 4), (("M",), 3): (2, 3, 5),
    (("M", "F"), 1): (4, 5, 11), (("M", "F"), 3): (4, 6, 11),
    (("M", "F", "B"), 1): (5, 7, 12), (("M", "F", "B"), 3): (6, 8, 13),
    (("M", "F", "O"), 1): (8, 10, 15), (("M", "F", "O"), 3): (8, 9, 14),
    (("M", "F", "O", "B"), 1): (9, 11, 17), (("M", "F", "O", "B"), 3): (9, 11, 16),
}


@pytest.fixture(scope="module")
def desk_reductions():
    """Gramians and Hankel SVDs for every constructible desk cell and output set."""
    out = {}
    for scale, n_P in DESK_CELLS:
        for names in NESTING:
            r = desk_system(scale, n_P, names).to_realization()
            gp = gramians(r)
            out[scale, n_P, names] = (r, gp, hankel_svd(gp))
    return out


@pytest.fixture(scope="module")
def one_output_run():
    """Shifted 72 h charge/discharge run of the scale-5 single-output model at tau = 1 s."""
    ds = desk_system(5, 1, ("M", "F"))
    r = LtiRealization(ds.A, ds.B, ds.C[:1])
    gp = gramians(r)
    svd = hankel_svd(gp)
    sched = shift_temperature(charge_discharge_schedule())
    full = simulate(r, sched, tau=1.0)
    runs = {}
    for ell in (1, 2, 4, svd.n0):
        red = balance_truncate(r, gp, ell, svd)
        runs[ell] = (red, simulate(red.reduced, sched, tau=1.0))
    return r, svd, full, runs


# 1 -------------------------------------------------------------------------

def test_c1_stability(acceptance):
    worst = {}
    for scale, n_P in DESK_CELLS:
        worst[scale, n_P] = verify_stability(desk_system(scale, n_P).A)
    ok = all(v < 0 for v in worst.values())
    detail = ", ".join(f"s{s}/nP{p}: {v:.3e}" for (s, p), v in worst.items())
    acceptance("C1 stability max Re eig(A) < 0", ok, detail + "; s10/nP3 not constructible (see xfail)")
    assert ok


@pytest.mark.xfail(raises=AlignmentError, strict=True,
                   reason="10 rows cannot hold three PHX strips separated by medium rows")
def test_c1_stability_scale10_three_phx():
    verify_stability(desk_system(10, 3).A)


# 2 -------------------------------------------------------------------------

def test_c2_lyapunov_residuals(acceptance, desk_reductions):
    worst = 0.0
    for r, gp, _ in desk_reductions.values():
        worst = max(worst, gp.residual_C, gp.residual_O)
    rng = np.random.default_rng(0)
    for _ in range(20):
        r = random_stable(rng, int(rng.integers(1, 11)))
        gp = gramians(r)
        worst = max(worst, gp.residual_C, gp.residual_O)
    ok = worst <= RESIDUAL_TOL
    acceptance("C2 Lyapunov residuals <= 1e-8", ok, f"worst relative residual {worst:.2e} over {len(desk_reductions) + 20} pairs")
    assert ok


# 3 -------------------------------------------------------------------------

def test_c3_integral_oracle(acceptance):
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(1, 9))
        r = random_stable(rng, n)
        X = solve_lyapunov(r.A, r.B @ r.B.T)
        ref = gramian_quadrature(r.A, r.B @ r.B.T)
        worst = max(worst, np.linalg.norm(X - ref) / np.linalg.norm(ref))
        X = solve_lyapunov(r.A.T, r.C.T @ r.C)
        ref = gramian_quadrature(r.A.T, r.C.T @ r.C)
        worst = max(worst, np.linalg.norm(X - ref) / np.linalg.norm(ref))
    ok = worst <= 1e-6
    acceptance("C3 Gramian vs integral quadrature (50 systems, n<=8)", ok, f"worst rel. Frobenius {worst:.2e}")
    assert ok


# 4 -------------------------------------------------------------------------

def test_c4_balanced_gramians(acceptance):
    rng = np.random.default_rng(4)
    worst_off = worst_diag = 0.0
    used = rejected = 0
    while used < 25:
        n = int(rng.integers(1, 11))
        r = random_stable(rng, n)
        gp = gramians(r)
        svd = hankel_svd(gp)
        if svd.n0 < n:
            # numerically non-minimal at the default tolerance
            rejected += 1
            continue
        used += 1
        red = balance_truncate(r, gp, n, svd)
        gb = gramians(red.reduced)
        s = red.sigma
        for G in (gb.G_C, gb.G_O):
            worst_off = max(worst_off, np.max(np.abs(G - np.diag(np.diag(G)))) / s[0])
            worst_diag = max(worst_diag, np.max(np.abs(np.diag(G) - s) / s))
    ok = worst_off <= 1e-6 and worst_diag <= 1e-6
    acceptance("C4 balanced Gramians = diag(sigma)", ok, f"off-diag/sigma1 {worst_off:.2e}, diag rel {worst_diag:.2e} "
               f"({used} minimal systems, {rejected} non-minimal draws skipped)")
    assert ok


# 5 -------------------------------------------------------------------------

def test_c5_projection_identity(acceptance, desk_reductions, one_output_run):
    worst, count = 0.0, 0
    for r, gp, svd in desk_reductions.values():
        for ell in range(1, svd.n0 + 1):
            worst = max(worst, balance_truncate(r, gp, ell, svd).projection_error())
            count += 1
    for red, _ in one_output_run[3].values():
        worst = max(worst, red.projection_error())
        count += 1
    ok = worst <= 1e-8
    acceptance("C5 T_plus T_minus = I", ok, f"max entry error {worst:.2e} over {count} reductions")
    assert ok


# 6 -------------------------------------------------------------------------

def test_c6_error_bound(acceptance, one_output_run):
    r, svd, full, runs = one_output_run
    g_l2 = running_l2(full.g, full.tau)
    ok, parts = True, []
    for ell in (1, 2, 4):
        red_traj = runs[ell][1]
        e = running_l2(full.Z - red_traj.Z, full.tau)
        b = error_bound(svd.sigma, ell, g_l2)
        rev = np.abs(running_l2(full.Z, full.tau) - running_l2(red_traj.Z, full.tau))
        ok_l = bool(np.all(e <= b) and np.all(rev <= b))
        ok &= ok_l
        parts.append(f"l={ell}: e(T)={e[-1]:.3g} <= {b[-1]:.3g}, max e/b={np.max(e[1:] / b[1:]):.3f}")
    acceptance("C6 error bound (and reverse triangle) at every step", ok, "; ".join(parts))
    assert ok


# 7 -------------------------------------------------------------------------

def test_c7_exact_order(acceptance, one_output_run):
    rels = {}
    _, svd, full, runs = one_output_run
    rels["s5/nP1"] = np.max(np.abs(full.Z - runs[svd.n0][1].Z)) / np.max(np.abs(full.Z))
    sched = shift_temperature(charge_discharge_schedule())
    for scale, n_P in ((5, 3), (10, 1)):
        ds = desk_system(scale, n_P, ("M", "F", "O", "B"))
        r = ds.to_realization()
        gp = gramians(r)
        svd = hankel_svd(gp)
        red = balance_truncate(r, gp, svd.n0, svd)
        a = simulate(r, sched, tau=10.0).Z
        b = simulate(red.reduced, sched, tau=10.0).Z
        rels[f"s{scale}/nP{n_P}"] = np.max(np.abs(a - b)) / np.max(np.abs(a))
    ok = all(v <= 1e-6 for v in rels.values())
    acceptance("C7 l = n0 reproduces outputs", ok, ", ".join(f"{k}: {v:.2e}" for k, v in rels.items()))
    assert ok


# 8 -------------------------------------------------------------------------

def test_c8_hankel_decay(acceptance, desk_reductions):
    parts, ok = [], True
    for scale, n_P in DESK_CELLS:
        r, gp, svd = desk_reductions[scale, n_P, ("M",)]
        s = svd.sigma
        decreasing = bool(np.all(np.diff(s) < 0))
        # values past n0 are below the numerical-rank cut and count as zero
        s50 = s[49] if len(s) >= 50 else 0.0
        # cross-check without any rank cut
        raw = np.sqrt(np.abs(np.sort(np.linalg.eigvals(gp.G_C @ gp.G_O).real)[::-1]))
        raw50 = raw[49] / raw[0] if len(raw) >= 50 else 0.0
        ratio = s50 / s[0]
        ok &= decreasing and ratio <= 1e-4 and raw50 <= 1e-4
        parts.append(f"s{scale}/nP{n_P}: n0={len(s)}, sigma_n0/sigma1={s[-1] / s[0]:.1e}, "
                     f"sigma50/sigma1={ratio:.1e} (unfiltered {raw50:.1e})")
    acceptance("C8 strictly decreasing, sigma50/sigma1 <= 1e-4", ok, "; ".join(parts))
    assert ok


# 9 -------------------------------------------------------------------------

def test_c9_minimal_order_pattern(acceptance, desk_reductions):
    ok, rows = True, []
    for scale, n_P in DESK_CELLS:
        prev = None
        for names in NESTING:
            sig = desk_reductions[scale, n_P, names][2].sigma
            orders = [minimal_order(sig, a) for a in ALPHAS]
            ok &= orders == sorted(orders)
            if prev is not None:
                ok &= all(o >= p for o, p in zip(orders, prev))
            prev = orders
            rows.append(f"s{scale}/nP{n_P}/{''.join(names)}={'/'.join(map(str, orders))}")
    acceptance("C9 minimal orders monotone in alpha and output nesting", ok, " ".join(rows))
    assert ok


@pytest.mark.skipif(os.environ.get("STORAGEMOR_FULL_GRID") != "1",
                    reason="reference grid needs dense n~1e4 Lyapunov solves; set STORAGEMOR_FULL_GRID=1")
def test_c9_reference_grid_orders(acceptance):
    ok, parts = True, []
    for (names, n_P), expect in REFERENCE_ORDERS.items():
        r = desk_system(1, n_P, names).to_realization()
        sig = hankel_svd(gramians(r)).sigma
        got = [minimal_order(sig, a) for a in ALPHAS]
        ok &= all(abs(g - e) <= 1 for g, e in zip(got, expect))
        parts.append(f"{''.join(names)}/nP{n_P}: {got} vs {list(expect)}")
    acceptance("C9 extended: reference-grid minimal orders within +-1", ok, "; ".join(parts))
    assert ok


# 10 ------------------------------------------------------------------------

def test_c10_physics_sanity(acceptance):
    ds = desk_system(5, 1, ("M", "F", "O", "B"))
    r = ds.to_realization()
    cf = assemble_outputs(ds.grid, ["F"])[0]
    flat = waiting_schedule(Q_in_C=10.0, Q_in_D=10.0, Q_G=10.0, Q_0=10.0)
    tr = simulate(r, shift_temperature(flat), tau=60.0, cf_row=cf)
    drift = float(np.max(np.abs(tr.Z + flat.Q_0 - flat.Q_0)))

    off = desk_system(5, 1, ("M", "F", "O", "B"), v0=0.0)
    T = 20000 * HOUR
    rest = Schedule(T=T, charging=((0, T),), Q_in_C=40.0, Q_G=15.0, Q_0=10.0, v0=0.0)
    tr_off = simulate(off.to_realization(), shift_temperature(rest), tau=HOUR)
    final = tr_off.Z[-1] + rest.Q_0
    gap = float(np.max(np.abs(final - rest.Q_G)))
    ok = drift <= 1e-9 and gap <= 0.1
    acceptance("C10 equilibrium preserved / convergence to Q_G", ok,
               f"equilibrium drift {drift:.1e} degC, |Z(T) - Q_G| = {gap:.2e} degC after {T / HOUR:.0f} h")
    assert ok
