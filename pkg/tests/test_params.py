import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from warpflow import params as P


def test_choice_values():
    assert P.theta_choice(3, 2) == pytest.approx(0.2, abs=1e-15)
    assert P.beta_choice(3, 2) == pytest.approx(2.0, abs=1e-15)
    assert P.theta_choice(6, 3) == pytest.approx(1.0, abs=1e-15)


def test_theta_vanishes_as_p_to_one():
    assert P.theta_choice(1 + 1e-9, 3) < 1e-8


def test_degenerate_pair_needs_theta():
    with pytest.raises(ValueError):
        P.beta_choice(5, 2)
    with pytest.raises(ValueError):
        P.beta_choice(5, 2, theta=0.25)
    th = 0.6
    b = P.beta_choice(5, 2, th)
    assert b == pytest.approx(math.sqrt(th / (3 * th - 1)))
    # μ = (1/θ - 3)β² + 1 vanishes there
    assert P.mu(b, th, 5, 2) == pytest.approx(0.0, abs=1e-14)
    assert P.mu(0.7, th, 5, 2) == pytest.approx((1 / th - 3) * 0.49 + 1, abs=1e-14)


def test_degenerate_default_theta():
    ps = P.ParameterSet.choice(2, 5)
    assert ps.theta == pytest.approx(2 / 3)
    assert ps.flow_compatible


def test_p_range_errors():
    with pytest.raises(ValueError):
        P.theta_choice(7, 3)
    with pytest.raises(ValueError):
        P.theta_choice(0.5, 2)
    with pytest.raises(ValueError):
        P.beta_pm(2.0)


def test_mu_at_zero_beta():
    assert P.mu(0.0, 0.3, 3.5, 4) == 1.0


def test_mu_grid_at_choice():
    worst = 0.0
    for d in range(2, 7):
        top = P.two_star(d) if d >= 3 else 12.0
        for p in np.linspace(1.0, top, 42)[1:-1]:
            if d == 2 and abs(p - 5) < 1e-12:
                continue
            worst = max(worst, abs(P.mu(P.beta_choice(p, d), P.theta_choice(p, d), p, d)))
    assert worst < 1e-12


def test_beta_pm_values():
    bp, bm = P.beta_pm(3)
    assert bp == pytest.approx((-1 + math.sqrt(10)) / 3, abs=1e-14)
    assert bm == pytest.approx((-1 - math.sqrt(10)) / 3, abs=1e-14)
    assert (bp, bm) == pytest.approx((0.72076, -1.38743), abs=1e-5)
    assert P.beta_pm(4) == pytest.approx((math.sqrt(18) / 6, -math.sqrt(18) / 6), abs=1e-14)
    for b in (bp, bm):
        assert abs(P.mu_circle(b, 3)) < 1e-14


def test_critical_exponents():
    assert P.two_star(3) == 6
    assert P.two_sharp(3) == 4.75
    assert math.isinf(P.two_star(2)) and math.isinf(P.two_star(1))


def _quadratic_roots(p, d, theta):
    # independent oracle: numpy roots of the μ polynomial in β
    a = ((d - 1) / (d + 2)) ** 2 * (p - 1) ** 2 / theta - (p - 2)
    b = -2 * (d + 3 - p) / (d + 2)
    return np.sort(np.roots([a, b, 1.0]).real), a


def test_relaxed_interval_d2_p3():
    s = P.beta_interval_relaxed(3, 2, 0.5)
    assert s is not None and 2.0 in s
    roots, a = _quadratic_roots(3, 2, 0.5)
    assert (s.lower, s.upper) == pytest.approx(tuple(roots), rel=1e-12)
    assert s.inside == (a > 0)
    assert P.mu(2.0, 0.5, 3, 2) <= 0


def test_relaxed_interval_near_choice_collapses():
    p, d = 3.5, 4
    t0 = P.theta_choice(p, d)
    s = P.beta_interval_relaxed(p, d, t0 * (1 + 1e-10))
    assert s.inside and s.width < 1e-3
    assert P.beta_choice(p, d) in s or abs(s.lower - P.beta_choice(p, d)) < 1e-3


@pytest.mark.parametrize("d", [4, 5])
def test_relaxed_interval_shrinks_near_critical(d):
    star = P.two_star(d)
    widths = []
    for gap in (1e-2, 1e-4, 1e-6):
        p = star - gap
        t0 = P.theta_choice(p, d)
        s = P.beta_interval_relaxed(p, d, 0.5 * (t0 + 1))
        assert s.inside
        widths.append(s.width)
    assert widths[0] > widths[1] > widths[2]
    assert widths[-1] < 0.01


def test_relaxed_interval_shrinks_near_critical_d3():
    # literal example for d = 3; see the decisions ledger (β choice diverges at 2* = 6)
    p = 6 - 1e-4
    t0 = P.theta_choice(p, 3)
    s = P.beta_interval_relaxed(p, 3, 0.5 * (t0 + 1))
    assert s is not None and s.inside and s.width < 0.1


def test_relaxed_interval_window():
    with pytest.raises(ValueError):
        P.beta_interval_relaxed(3, 2, 0.1)
    with pytest.raises(ValueError):
        P.beta_interval_relaxed(3, 2, 1.0)


def test_spectral_bound_limits():
    lam1, lam2 = 2.0, 1.5
    assert P.spectral_bound(1 + 1e-10, lam1, lam2) == pytest.approx(lam1, rel=1e-8)
    assert P.spectral_bound(2 - 1e-10, lam1, lam2) == pytest.approx(lam2, rel=1e-8)
    for p in (1.2, 1.5, 1.9):
        assert P.spectral_bound(p, 2.0, 2.0) == pytest.approx(2.0, rel=1e-14)


def test_q_coefficient_at_choice():
    ps = P.ParameterSet.choice(2, 3)
    d, p = 2, 3
    assert ps.q_coefficient == pytest.approx((d - 1) * (p - 1) / (ps.theta * (d + 3 - p)))


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 6), st.floats(0.0, 1.0))
def test_mu_vanishes_at_choice(d, frac):
    top = P.two_star(d) if d >= 3 else 50.0
    p = 1.0 + frac * (top - 1.0)
    if p <= 1.0 or p >= top or (d == 2 and abs(p - 5) < 1e-9):
        return
    b = P.beta_choice(p, d)
    # one rounding of θ moves μ by about β² ulps
    assert abs(P.mu(b, P.theta_choice(p, d), p, d)) < 1e-14 * (1 + b * b)


@settings(max_examples=100, deadline=None)
@given(st.floats(1.01, 20.0).filter(lambda p: abs(p - 2) > 1e-3))
def test_beta_pm_are_roots(p):
    for b in P.beta_pm(p):
        assert abs(P.mu_circle(b, p)) < 1e-12 * max(1.0, b * b * abs(p))


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 5), st.floats(0.05, 0.95), st.floats(-3, 3))
def test_mu_general_matches_expanded(d, frac, beta):
    top = P.two_star(d) if d >= 3 else 8.0
    p = 1.0 + frac * (top - 1.0)
    th = 0.37
    k = P.kappa_of(beta, p)
    assert P.mu_general(beta, k, th, d) == pytest.approx(P.mu(beta, th, p, d), abs=1e-10 * (1 + beta**2 * p**2))
