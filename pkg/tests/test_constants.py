import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import RING_SIGNED, manifold
from warpflow import constants as C
from warpflow import variational as var
from warpflow.geometry import dirichlet_energy, rho
from warpflow.params import ParameterSet


@pytest.mark.parametrize("d, expected", [(2, 2.0), (3, 3.0), (4, 4.0)])
def test_lambda1_sphere(d, expected):
    assert C.lambda1(manifold("sphere", d, 512)) == pytest.approx(expected, abs=1e-6)


def test_lambda1_circle():
    assert C.lambda1(manifold("circle", 1, 512)) == pytest.approx(4 * math.pi**2, rel=1e-8)


def test_lambda1_flat_ring():
    # h ≡ 1 on a circle of length 2π: first non-constant mode cos θ
    assert C.lambda1(manifold("ring", 2, 256, (0.0,))) == pytest.approx(1.0, abs=1e-8)


def test_lambda1_eigenvector_is_mean_zero(s2):
    pair = C.lambda1_pair(s2)
    assert abs(s2.weight @ pair.vector) < 1e-12
    k = s2.stiffness @ pair.vector
    # K v = λ W v
    assert np.linalg.norm(k - pair.value * s2.weight * pair.vector) < 1e-8 * np.linalg.norm(k)


def test_stiffness_quotient_bounds_lambda1(s2):
    rng = np.random.default_rng(3)
    lam1 = C.lambda1(s2)
    for _ in range(20):
        u = var.mode_basis(s2, 10) @ rng.standard_normal(10)
        u -= s2.weight @ u
        q = u @ (s2.stiffness @ u) / (s2.weight @ u**2)
        assert q >= lam1 * (1 - 1e-10)


def test_lambda_star_sphere(s2):
    assert C.lambda_star(s2, 3.0) == pytest.approx(2.0, abs=1e-6)


def test_lambda_star_is_pencil_minimum(ring):
    ps = ParameterSet.choice(2, 3.0)
    a = C.lambda_star_forms(ring, ps.theta)
    ls = C.lambda_star(ring, 3.0)
    rng = np.random.default_rng(5)
    for _ in range(20):
        u = var.mode_basis(ring, 12) @ rng.standard_normal(12)
        u -= ring.weight @ u
        q = (u @ (a @ u)) / (u @ (ring.stiffness @ u))
        assert q >= ls * (1 - 1e-9)


def test_threshold_below_lambda_star_on_ring(ring):
    lam1 = C.lambda1(ring)
    lv = C.lv_threshold(ring, 3.0, lam1)
    ls = C.lambda_star(ring, 3.0)
    assert rho(ring) < 0
    assert lv < ls - 1e-3
    assert ls <= lam1


def test_lichnerowicz_sphere():
    for d in (2, 3, 4):
        m = manifold("sphere", d, 256)
        assert C.lv_threshold(m, 1.5) == pytest.approx(d, abs=1e-6)


def test_threshold_needs_dimension(circle):
    with pytest.raises(ValueError):
        C.lv_threshold(circle, 3.0)


def test_curvature_quotient_scale_invariant(ring):
    ps = ParameterSet.choice(2, 3.0)
    obj = var.CurvatureQuotient(ring, ps.theta, ps.q_coefficient)
    psi = 0.3 * ring.mode(1) + 0.1 * ring.mode(2)
    assert obj(psi + 4.2) == pytest.approx(obj(psi), rel=1e-12)


def test_quotient_gradients_match_finite_differences(ring):
    ps = ParameterSet.choice(2, 3.0)
    psi = 0.2 * ring.mode(1) - 0.1 * ring.mode(3)
    objs = [var.CurvatureQuotient(ring, ps.theta, ps.q_coefficient),
            var.CurvatureQuotient(ring, ps.theta, ps.q_coefficient, include_q=False),
            var.InterpolationQuotient(ring, 3.0), var.InterpolationQuotient(ring, 1.5),
            var.LogSobolevQuotient(ring)]
    direction = ring.mode(2) + 0.3 * ring.mode(5) + 0.1
    for obj in objs:
        _, g = obj.evaluate(psi)
        h = 1e-6
        fd = (obj(psi + h * direction) - obj(psi - h * direction)) / (2 * h)
        assert g @ direction == pytest.approx(fd, rel=1e-6)


def test_near_constant_limit_of_interpolation_quotient(s2):
    # Q(1 + εv₁) → λ₁ as ε → 0
    obj = var.InterpolationQuotient(s2, 3.0)
    v1 = s2.mode(1)
    assert var.symmetric_limit(obj, v1 / np.max(np.abs(v1)), 1e-3) == pytest.approx(2.0, abs=1e-5)


def test_overflowing_field_is_rejected(s2):
    obj = var.InterpolationQuotient(s2, 3.0)
    assert obj(400.0 * s2.mode(1)) == math.inf


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-0.5, 0.5), min_size=6, max_size=6), st.floats(-3, 3))
def test_lambda_star_quotient_lower_bound_property(coef, shift):
    # λ⋆ bounds the Λ⋆ quotient at every positive field
    m = manifold("ring", 2, 128, RING_SIGNED)
    ps = ParameterSet.choice(2, 3.0)
    psi = var.mode_basis(m, 6) @ np.array(coef) + shift
    if np.ptp(psi) < 1e-3:
        return
    obj = var.CurvatureQuotient(m, ps.theta, ps.q_coefficient)
    assert obj(psi) >= C.lambda_star(m, 3.0) - 1e-6


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-0.5, 0.5), min_size=6, max_size=6))
def test_dirichlet_bounds_by_lambda1_property(coef):
    # ∫|∇u|² ≥ λ₁ ∫(u - ū)²
    m = manifold("sphere", 2, 128)
    u = var.mode_basis(m, 6) @ np.array(coef)
    u -= m.weight @ u
    if m.weight @ u**2 < 1e-8:
        return
    assert dirichlet_energy(m, u) >= C.lambda1(m) * (m.weight @ u**2) * (1 - 1e-6)


def test_Lambda_star_sphere():
    m = manifold("sphere", 2, 128)
    est = C.Lambda_star_estimate(m, 3.0, starts=8)
    assert est.value == pytest.approx(2.0, abs=1e-3)
    assert est.richardson == pytest.approx(2.0, abs=1e-3)


def test_rho_star_sphere():
    m = manifold("sphere", 2, 128)
    assert C.rho_star(m, 3.0, starts=8) == pytest.approx(2.0, abs=1e-3)


def test_estimates_deterministic():
    m = manifold("sphere", 2, 64)
    a = C.Lambda_star_estimate(m, 3.0, seed=7, starts=6)
    b = C.Lambda_star_estimate(m, 3.0, seed=7, starts=6)
    assert a.value == b.value


def test_chain_circle_reports_na(circle):
    rep = C.estimates_chain(circle, 3.0)
    assert rep.lambda1 == pytest.approx(4 * math.pi**2, rel=1e-6)
    assert rep.LambdaStar is None and rep.rho is None
    assert "n/a" in rep.provenance["LambdaStar"]
    assert rep.ok


def test_chain_sphere_row_columns():
    m = manifold("sphere", 2, 64)
    rep = C.estimates_chain(m, 3.0, starts=6, with_best=False, with_log_sobolev=False)
    assert tuple(rep.row()) == C.REPORT_COLUMNS
    assert rep.ok, rep.diagnostics
