import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wormhole_lab.harmonic import (
    INCONCLUSIVE,
    OVERSHOOT,
    UNDERSHOOT,
    HarmonicError,
    aux_Q,
    aux_Q_identity_defect,
    classify_shot,
    extract_alpha_n,
    load_csv,
    ode_residual,
    ode_rhs,
    save_csv,
    shoot_harmonic,
    solve_prescribed,
)
from wormhole_lab.numerics import ToleranceSpec, integrate_ivp

from oracles import harmonic_rhs_r, rk4_fixed


# ----------------------------------------------------------------- right-hand side and aux_Q

@pytest.mark.parametrize("k", [0, 1, 2, -1])
def test_rhs_stationary_points(k):
    for coord in ("r", "x"):
        d = ode_rhs(coord, (k * math.pi, 0.0), 0.7)
        assert d[0] == 0.0 and abs(d[1]) < 1e-15
        d = ode_rhs(coord, ((k + 0.5) * math.pi, 0.0), 0.7)
        assert abs(d[1]) < 1e-14


def test_rhs_direct_evaluation():
    d = ode_rhs("r", (math.pi / 2, 1.0), 0.0)
    assert d[0] == 1.0 and abs(d[1]) < 1e-15
    d = ode_rhs("x", (0.3, 0.2), 1.1)
    assert d[1] == pytest.approx(-math.tanh(1.1) * 0.2 + math.sin(0.6))


def test_rhs_rejects_unknown_chart():
    with pytest.raises(ValueError):
        ode_rhs("z", (0.0, 0.0), 0.0)


@given(st.floats(-20, 20), st.integers(-3, 3))
def test_aux_Q_vanishes_at_rest_on_multiples_of_pi(r, k):
    assert abs(aux_Q(r, k * math.pi, 0.0)) < 1e-25


@given(st.floats(0.1, 5.0))
def test_aux_Q_at_centre(alpha):
    assert aux_Q(0.0, math.pi / 2, alpha) == pytest.approx(alpha**2 / 2 - 1)


def test_aux_Q_nonincreasing_and_identity_along_shot():
    tr = integrate_ivp(harmonic_rhs_r, [math.pi / 2, 1.5], (0.0, 10.0))
    r = np.linspace(0.0, 10.0, 2001)
    y = tr(r)
    q = aux_Q(r, y[:, 0], y[:, 1])
    assert np.all(np.diff(q) <= 1e-9)
    assert aux_Q_identity_defect(r, y[:, 0], y[:, 1]) < 1e-6


# ----------------------------------------------------------------- classification

def test_small_slope_undershoots():
    assert classify_shot(1, 1.0).classification == UNDERSHOOT
    assert classify_shot(3, 1.0).classification == UNDERSHOOT


def test_large_slope_overshoots():
    for n in (1, 2, 3):
        s = classify_shot(n, 4 * n * math.pi)
        assert s.classification == OVERSHOOT
        assert s.exit_radius < 10


def test_classification_flips_across_alpha_star(hm1):
    a = hm1.alpha_star
    assert classify_shot(1, a - 1e-9).classification == UNDERSHOOT
    assert classify_shot(1, a + 1e-9).classification == OVERSHOOT


def test_classify_contract():
    with pytest.raises(ValueError):
        classify_shot(0, 1.0)
    with pytest.raises(ValueError):
        classify_shot(1, -1.0)


def test_near_critical_shot_inconclusive_on_short_range(hm1):
    s = classify_shot(1, hm1.alpha_star, x_max=3.5)
    assert s.classification == INCONCLUSIVE and not s.confident


# ----------------------------------------------------------------- shot solutions

def test_degree_zero_is_zero_map():
    hm = shoot_harmonic(0)
    assert hm.alpha_star == 0.0
    assert np.all(hm.Q == 0.0)


def test_negative_degree_rejected():
    with pytest.raises(ValueError):
        shoot_harmonic(-1)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_harmonic_invariants(n, hm1, hm2, hm3):
    hm = {1: hm1, 2: hm2, 3: hm3}[n]
    assert hm.Q[hm.r.size // 2] == pytest.approx(n * math.pi / 2, abs=1e-15)
    assert np.all(np.diff(hm.Q) > 0)
    assert hm.symmetry_defect < 1e-8
    r = np.linspace(0, 30, 301)
    assert np.max(np.abs(hm(r)[0] + hm(-r)[0] - n * math.pi)) < 1e-12
    assert hm.low_confidence == 0


def test_alpha_star_matches_fixed_step_integration(hm1):
    # RK4 with 40000 steps on [0, 10] from the shot slope lands on the shot
    t, y = rk4_fixed(harmonic_rhs_r, [math.pi / 2, hm1.alpha_star], 0.0, 10.0, 40000)
    assert np.max(np.abs(hm1(t)[0] - y[:, 0])) < 1e-9


def test_alpha_star_tolerance_refinement(hm1):
    fine = shoot_harmonic(1, tol=ToleranceSpec(1e-12, 1e-12))
    assert abs(fine.alpha_star - hm1.alpha_star) < 1e-8


def test_ode_residual_fourth_order(hm2):
    e1 = ode_residual(hm2, 0.05)
    e2 = ode_residual(hm2, 0.025)
    assert 3.7 < math.log2(e1 / e2) < 4.3


def test_q2_centre_and_monotone(hm2):
    assert hm2(0.0)[0] == pytest.approx(math.pi, abs=1e-15)
    assert np.all(hm2(np.linspace(-50, 50, 1001))[1] > 0)


# ----------------------------------------------------------------- asymptotics

@pytest.mark.parametrize("n", [1, 2, 3])
def test_alpha_n_window_stable(n, hm1, hm2, hm3):
    hm = {1: hm1, 2: hm2, 3: hm3}[n]
    a1, _ = extract_alpha_n(hm, (50, 200))
    a2, _ = extract_alpha_n(hm, (100, 400))
    assert abs(a1 - a2) / abs(a2) < 1e-3


def test_residual_decreases_with_window_start(hm1):
    res = [extract_alpha_n(hm1, (w, 400))[1] for w in (50, 100, 200)]
    assert res[0] > res[1] > res[2]


def test_fit_recovers_exact_model(hm1):
    class Model:
        degree = 1
        r_tail = 400.0

        def deviation(self, r):
            return 0.75 * r**-2 - 1.25 * r**-4

    a, res = extract_alpha_n(Model(), (5, 50))
    assert a == pytest.approx(0.75, rel=1e-12)
    assert res < 1e-16


def test_fit_window_errors(hm1):
    with pytest.raises(HarmonicError):
        extract_alpha_n(hm1, (100, 50))
    with pytest.raises(HarmonicError):
        extract_alpha_n(hm1, (100, 1000))


def test_tail_continuity(hm1):
    # one ulp of alpha* already moves the shot's deviation at r = 400 by ~1e-7
    eps = 1e-9
    lo, hi = hm1.deviation(np.array([400.0 - eps, 400.0 + eps]))
    assert abs(lo - hi) / lo < 1e-6


# ----------------------------------------------------------------- prescribed asymptotics

def test_prescribed_contracts_and_matches_q1(hm1):
    sol = solve_prescribed(1, -hm1.alpha_n)
    assert max(sol.ratios) < 0.5
    r = np.linspace(0.5, 200.0, 400)
    assert np.max(np.abs(sol(r)[0] - hm1(r)[0])) < 1e-6


def test_prescribed_zero_alpha_is_constant():
    sol = solve_prescribed(2, 0.0)
    r = np.linspace(1.0, 100.0, 50)
    np.testing.assert_allclose(sol(r)[0], 2 * math.pi, atol=1e-14)


def test_prescribed_leading_coefficient():
    sol = solve_prescribed(1, 0.3)
    r = np.array([300.0, 600.0])
    dev = sol(r)[0] - math.pi
    assert dev * r**2 == pytest.approx([0.3, 0.3], rel=1e-4)


def test_prescribed_rejects_small_start():
    with pytest.raises(HarmonicError, match="x_start too small"):
        solve_prescribed(1, 50.0, x_start=0.5)


# ----------------------------------------------------------------- CSV

def test_csv_round_trip(tmp_path, hm1):
    p = tmp_path / "q1.csv"
    save_csv(hm1, p)
    data = load_csv(p)
    assert data["n"] == 1 and data["alpha_star"] == hm1.alpha_star
    np.testing.assert_array_equal(data["Q"], hm1.Q)


def test_csv_rejects_bad_version_and_rows(tmp_path, hm1):
    p = tmp_path / "q1.csv"
    save_csv(hm1, p)
    text = p.read_text().splitlines()
    bad = tmp_path / "bad.csv"
    bad.write_text("\n".join(["# wormhole-lab harmonic v9"] + text[1:]))
    with pytest.raises(ValueError, match="version"):
        load_csv(bad)
    text[10] = "1.0,abc,2.0"
    bad.write_text("\n".join(text))
    with pytest.raises(ValueError, match="line 11"):
        load_csv(bad)
