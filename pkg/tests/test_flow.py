import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import RING_SIGNED, manifold
from warpflow import flow as F
from warpflow.geometry import GeometryError
from warpflow.params import ParameterSet, beta_pm, kappa_of


def _u(m, ps, amp=0.2, k=1):
    return F.initial_profile(m, ps.beta, k, amp)


def test_functional_vanishes_at_constants(s2):
    ps = ParameterSet.choice(2, 3.0, lam=1.9)
    for c in (0.5, 1.0, 3.0):
        assert abs(F.functional_F(s2, ps, np.full(s2.n, c))) < 1e-13


def test_constants_are_stationary(s2):
    ps = ParameterSet.choice(2, 3.0, lam=1.9)
    # roundoff of the stencils scales like 1/Δθ²
    tol = 1e-15 * 2.0 * abs(s2.lap).sum(axis=1).max()
    assert np.max(np.abs(F.rhs_flow(s2, ps, np.full(s2.n, 2.0)))) < tol


def test_stationarity_identity(ring):
    # ∫ u^κ (Δu + κ|∇u|²/u) = ∫ Δ(u^{κ+1})/(κ+1) = 0
    ps = ParameterSet.choice(2, 3.0)
    u = _u(ring, ps, 0.3)
    u1 = ring.d1 @ u
    val = ring.weight @ (u**ps.kappa * (ring.lap @ u + ps.kappa * u1**2 / u))
    scale = ring.weight @ np.abs(u**ps.kappa * (ring.lap @ u))
    assert abs(val) < 1e-4 * scale


def test_beta_one_is_heat_flow(s2):
    ps = ParameterSet(2, 3.0, 0.5, 1.0, kappa_of(1.0, 3.0))
    assert ps.kappa == pytest.approx(2.0)
    u = 1.0 + 0.3 * s2.mode(1) / np.max(np.abs(s2.mode(1)))
    expected = s2.lap @ u + 2.0 * (s2.d1 @ u) ** 2 / u
    assert np.allclose(F.rhs_flow(s2, ps, u), expected, rtol=1e-14, atol=1e-14)


def test_positivity_required(s2):
    ps = ParameterSet.choice(2, 3.0)
    with pytest.raises(GeometryError):
        F.functional_F(s2, ps, -np.ones(s2.n))
    with pytest.raises(GeometryError):
        F.rhs_flow(s2, ps, np.ones(s2.n - 1))


def test_incompatible_parameters_rejected(s2):
    ps = ParameterSet(2, 3.0, 0.5, 2.0, 1.0)
    with pytest.raises(ValueError):
        F.run_flow(s2, ps, np.ones(s2.n))


def _order(res):
    r = np.abs(np.array(res))
    return np.log2(r[:-1] / r[1:])


@pytest.mark.parametrize("topology, d, coeffs", [("sphere", 2, ()), ("sphere", 3, ()),
                                                  ("ring", 2, RING_SIGNED)])
def test_dFdt_identity_converges(topology, d, coeffs):
    ps = ParameterSet.choice(d, 3.0, lam=1.0)
    res = []
    for n in (128, 256, 512):
        m = manifold(topology, d, n, coeffs)
        res.append(F.dFdt_identity_residual(m, ps, _u(m, ps, 0.3), relative=True))
    assert abs(res[-1]) < 1e-6
    assert np.all(_order(res) > 2.0)


@pytest.mark.parametrize("topology, d, coeffs", [("sphere", 2, ()), ("ring", 2, RING_SIGNED)])
def test_l2_identity_converges(topology, d, coeffs):
    ps = ParameterSet.choice(d, 3.0)
    res = []
    for n in (128, 256, 512):
        m = manifold(topology, d, n, coeffs)
        res.append(F.l2_identity_residual(m, ps, _u(m, ps, 0.3), relative=True))
    assert abs(res[-1]) < 1e-6
    assert np.all(_order(res) > 2.0)


def test_g_decomposition_mu_zero_at_choice(ring):
    ps = ParameterSet.choice(2, 3.0)
    out = F.g_decomposition(ring, ps, _u(ring, ps, 0.3))
    assert abs(out["muTimesQuartic"]) < 1e-12 * abs(out["gValue"]) + 1e-14
    assert abs(out["residual"]) < 1e-6


def test_g_decomposition_mismatch_raises(ring):
    ps = ParameterSet.choice(2, 3.0)
    with pytest.raises(F.IdentityMismatch):
        F.g_decomposition(ring, ps, _u(ring, ps, 0.3), tol=1e-30)


@settings(max_examples=20, deadline=None)
@given(st.floats(1.2, 5.8), st.floats(0.05, 0.4), st.integers(1, 4))
def test_g_decomposition_property(p, amp, k):
    # holds for every p at the optimal parameters on S³
    m = manifold("sphere", 3, 256)
    ps = ParameterSet.choice(3, p)
    out = F.g_decomposition(m, ps, F.initial_profile(m, ps.beta, k, amp), tol=None)
    assert abs(out["residual"]) < 1e-4


def test_constant_start_converges_immediately(s2):
    ps = ParameterSet.choice(2, 3.0, lam=1.9)
    tr = F.run_flow(s2, ps, np.ones(s2.n))
    assert tr.converged and tr.steps == 0 and len(tr.samples) == 1


def test_initial_profile_amplitude_guard(s2):
    with pytest.raises(ValueError):
        F.initial_profile(s2, 2.0, 1, 1.5)


def test_flow_sphere_monotone_and_conservative():
    m = manifold("sphere", 2, 128)
    ps = ParameterSet.choice(2, 3.0, lam=1.9)
    assert ps.beta == pytest.approx(2.0) and ps.kappa == pytest.approx(3.0)
    tr = F.run_flow(m, ps, _u(m, ps))
    assert tr.converged
    assert tr.mass_drift < 1e-8
    f = tr.column("F")
    assert np.all(np.diff(f) <= 1e-12 * abs(f[0]))
    assert tr.samples[-1].dirichlet < 1e-10
    assert f[-1] >= -1e-10
    assert np.all(np.diff(tr.column("t")) > 0)
    assert tr.column("min_u").min() > 0


def test_flow_circle():
    m = manifold("circle", 1, 128)
    for lam in (35.0, 39.0):
        ps = ParameterSet.choice(1, 3.0, lam=lam)
        assert ps.beta == pytest.approx(beta_pm(3.0)[0])
        tr = F.run_flow(m, ps, _u(m, ps))
        f = tr.column("F")
        assert tr.converged
        assert tr.mass_drift < 1e-8
        assert np.all(np.diff(f) <= 1e-12 * abs(f[0]))
        assert f[-1] >= -1e-10


def test_flow_trace_columns(s2):
    assert F.TRACE_COLUMNS[0] == "t"
    ps = ParameterSet.choice(2, 3.0, lam=1.0)
    m = manifold("sphere", 2, 64)
    tr = F.run_flow(m, ps, _u(m, ps), F.FlowControls(t_max=0.2, sample_interval=0.1))
    assert tr.status in (F.CONVERGED, F.MAX_TIME)
    assert len(tr.samples[0].as_tuple()) == len(F.TRACE_COLUMNS)
    assert math.isfinite(tr.samples[-1].g_value)


def test_flow_controls_validate():
    with pytest.raises(ValueError):
        F.FlowControls(t_max=0)
