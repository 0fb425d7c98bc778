"""Nonlinear diffusion flow ``u_t = u^{2-2β}(Δu + κ|∇u|²/u)`` and its monitored identities."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .geometry import GeometryError, WarpedManifold, q_theta_norm_sq, ricci_quadratic
from .params import ParameterSet, mu_general

TRACE_COLUMNS = ("t", "F", "mass", "l2beta", "dirichlet", "min_u", "dFdt_residual", "g_value")

CONVERGED = "converged"
MAX_TIME = "maxTimeReached"
POSITIVITY = "positivityFailure"
STEP_FAILURE = "stepFailure"


class IdentityMismatch(ArithmeticError):
    pass


def _pos(m: WarpedManifold, u) -> np.ndarray:
    a = np.asarray(u.values if hasattr(u, "values") else u)
    if a.shape != (m.n,):
        raise GeometryError(f"field of shape {a.shape} on a grid of {m.n}")
    if not np.iscomplexobj(a):
        a = a.astype(float)
        if not np.all(a > 0):
            raise GeometryError("field must be positive")
    return a


def _interp_bracket(m: WarpedManifold, v: np.ndarray, p: float):
    """``∫v² - (∫v^p)^{2/p}`` without cancellation near constants (complex-safe)."""
    w = m.weight
    s = w @ (v * v)
    logy = np.log(v) - 0.5 * np.log(s)
    excess = w @ np.expm1(p * logy)
    return -s * np.expm1(2.0 / p * np.log1p(excess))


def functional_F(m: WarpedManifold, ps: ParameterSet, u) -> float:
    """``∫|∇(u^β)|² + λ/(p-2) [∫u^{2β} - (∫u^{βp})^{2/p}]``."""
    return _functional_F(m, ps, _pos(m, u))


def _functional_F(m, ps, u):
    v = u**ps.beta
    v1 = m.d1 @ v
    val = m.weight @ (v1 * v1)
    if ps.lam != 0.0:
        val = val + ps.lam / (ps.p - 2.0) * _interp_bracket(m, v, ps.p)
    return val


def rhs_flow(m: WarpedManifold, ps: ParameterSet, u) -> np.ndarray:
    u = _pos(m, u)
    u1 = m.d1 @ u
    return u ** (2.0 - 2.0 * ps.beta) * (m.lap @ u + ps.kappa * u1 * u1 / u)


def mass_beta_p(m: WarpedManifold, u, beta: float, p: float) -> float:
    return float(m.weight @ _pos(m, u) ** (beta * p))


def _directional(fun, u, direction, h=1e-30):
    """Complex-step derivative of ``fun`` at ``u`` along ``direction``."""
    return float(np.imag(fun(u + 1j * h * direction)) / h)


def energy_decay_rate(m: WarpedManifold, ps: ParameterSet, u) -> dict:
    """Pieces of ``-∫[(Δu)² + (κ+β-1)Δu|∇u|²/u + κ(β-1)|∇u|⁴/u²] + λ∫|∇u|²``."""
    u = _pos(m, u)
    u1 = m.d1 @ u
    lap = m.lap @ u
    g = u1 * u1 / u
    w = m.weight
    terms = {
        "lap_sq": w @ lap**2,
        "cross": (ps.kappa + ps.beta - 1.0) * (w @ (lap * g)),
        "quartic": ps.kappa * (ps.beta - 1.0) * (w @ g**2),
        "dirichlet": w @ (u1 * u1),
    }
    terms["value"] = -(terms["lap_sq"] + terms["cross"] + terms["quartic"]) + ps.lam * terms["dirichlet"]
    return terms


def dFdt_identity_residual(m: WarpedManifold, ps: ParameterSet, u, relative: bool = False) -> float:
    """``dF/dt`` along the semi-discrete flow minus ``2β²`` times the closed form.

    The time derivative is the exact directional derivative of the discrete F
    along the discrete right-hand side (complex step).
    """
    u = _pos(m, u)
    dfdt = _directional(lambda z: _functional_F(m, ps, z), u, rhs_flow(m, ps, u))
    t = energy_decay_rate(m, ps, u)
    res = dfdt - 2.0 * ps.beta**2 * t["value"]
    if relative:
        scale = 2.0 * ps.beta**2 * (abs(t["lap_sq"]) + abs(t["cross"]) + abs(t["quartic"])
                                    + ps.lam * abs(t["dirichlet"]))
        return res / max(scale, np.finfo(float).tiny)
    return res


def l2_identity_residual(m: WarpedManifold, ps: ParameterSet, u, relative: bool = False) -> float:
    """``(1/2) d/dt ∫u^{2β} - β²(p-2)∫|∇u|²`` along the semi-discrete flow."""
    u = _pos(m, u)
    b = ps.beta
    lhs = 0.5 * float(m.weight @ (2.0 * b * u ** (2 * b - 1) * rhs_flow(m, ps, u)))
    u1 = m.d1 @ u
    rhs = b * (ps.kappa - 1.0) * float(m.weight @ (u1 * u1))
    res = lhs - rhs
    if relative:
        return res / max(abs(lhs), abs(rhs), np.finfo(float).tiny)
    return res


def g_decomposition(m: WarpedManifold, ps: ParameterSet, u, tol: Optional[float] = 1e-4) -> dict:
    """Both sides of the 𝒢 decomposition; raises when they disagree beyond ``tol``."""
    if m.d < 2:
        raise GeometryError("the G decomposition needs d >= 2")
    u = _pos(m, u)
    d = m.d
    w = m.weight
    u1 = m.d1 @ u
    lap = m.lap @ u
    g = u1 * u1 / u
    lhs = float(w @ (ps.theta * lap**2 + (ps.kappa + ps.beta - 1.0) * lap * g
                     + ps.kappa * (ps.beta - 1.0) * g**2))
    q_int = float(w @ q_theta_norm_sq(m, u, ps.q_coefficient))
    ric_int = float(w @ ricci_quadratic(m, u))
    mu_val = mu_general(ps.beta, ps.kappa, ps.theta, d)
    mu_quartic = mu_val * float(w @ g**2)
    rhs = ps.theta * d / (d - 1) * (q_int + ric_int) - mu_quartic
    scale = max(abs(lhs), abs(rhs), float(w @ (ps.theta * lap**2)), np.finfo(float).tiny)
    out = {"gValue": lhs, "qIntegral": q_int, "ricciIntegral": ric_int,
           "muTimesQuartic": mu_quartic, "rhs": rhs, "residual": (lhs - rhs) / scale}
    if tol is not None and abs(out["residual"]) > tol:
        raise IdentityMismatch(f"G decomposition mismatch {out['residual']:.3e}")
    return out


# ---------------------------------------------------------------- integrator

@dataclass
class FlowControls:
    t_max: float = 50.0
    sample_interval: float = 0.05
    convergence_tol: float = 1e-10
    step_tol: float = 1e-9
    mass_tol: float = 1e-12
    dt0: float = 1e-6
    dt_min: float = 1e-14
    max_steps: int = 5_000_000

    def __post_init__(self):
        for name in ("t_max", "sample_interval", "convergence_tol", "step_tol", "mass_tol",
                     "dt0", "dt_min"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class FlowSample:
    t: float
    F: float
    mass: float
    l2beta: float
    dirichlet: float
    min_u: float
    dFdt_residual: float
    g_value: float

    def as_tuple(self):
        return tuple(getattr(self, c) for c in TRACE_COLUMNS)


@dataclass
class FlowTrace:
    samples: list = field(default_factory=list)
    status: str = ""
    rejections: list = field(default_factory=list)
    monitors: dict = field(default_factory=dict)
    monitor_times: list = field(default_factory=list)
    final_u: Optional[np.ndarray] = None
    steps: int = 0

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(s, name) for s in self.samples])

    @property
    def mass_drift(self) -> float:
        mass = self.column("mass")
        return float(np.max(np.abs(mass / mass[0] - 1.0)))

    @property
    def converged(self) -> bool:
        return self.status == CONVERGED


def initial_profile(m: WarpedManifold, beta: float, mode: int = 1, amp: float = 0.2) -> np.ndarray:
    """``u0 = (1 + a v_k)^{1/β}`` with ``v_k`` the k-th test mode scaled to sup 1."""
    v = m.mode(mode)
    v = v / np.max(np.abs(v))
    base = 1.0 + amp * v
    if np.any(base <= 0):
        raise ValueError("amplitude too large: 1 + a v_k must stay positive")
    return base ** (1.0 / beta)


def _sample(m, ps, u, t):
    v1 = m.d1 @ u
    try:
        g_val = g_decomposition(m, ps, u, tol=None)["gValue"] if m.d >= 2 else math.nan
    except GeometryError:
        g_val = math.nan
    return FlowSample(
        t=t,
        F=float(functional_F(m, ps, u)),
        mass=mass_beta_p(m, u, ps.beta, ps.p),
        l2beta=float(m.weight @ u ** (2 * ps.beta)),
        dirichlet=float(m.weight @ (v1 * v1)),
        min_u=float(u.min()),
        dFdt_residual=dFdt_identity_residual(m, ps, u),
        g_value=g_val,
    )


# Bogacki–Shampine 3(2)
_C2, _C3 = 0.5, 0.75
_B = (2.0 / 9.0, 1.0 / 3.0, 4.0 / 9.0)
_E = (2.0 / 9.0 - 7.0 / 24.0, 1.0 / 3.0 - 0.25, 4.0 / 9.0 - 1.0 / 3.0, -0.125)


def run_flow(m: WarpedManifold, ps: ParameterSet, u0, controls: Optional[FlowControls] = None,
             monitors: Optional[dict[str, Callable[[np.ndarray], float]]] = None) -> FlowTrace:
    """Integrate the flow from ``u0`` and record a :class:`FlowTrace`.

    The state is the conserved density ``u^{βp}``; its time derivative is
    ``βp Δ(u^{κ+1}/(κ+1))`` (``βp Δ log u`` for κ = -1), so the discrete mass
    is conserved up to roundoff by any Runge–Kutta step.  Steps that would
    leave the positive cone are rejected.
    """
    if not ps.flow_compatible:
        raise ValueError("parameters are not flow-compatible (kappa != 1 + beta(p-2))")
    ctl = controls or FlowControls()
    u = _pos(m, u0).copy()
    bp = ps.beta * ps.p
    k1p = ps.kappa + 1.0
    lap = m.lap
    monitors = monitors or {}
    trace = FlowTrace(monitors={k: [] for k in monitors})

    def to_u(y):
        return y ** (1.0 / bp)

    def f(y):
        uu = to_u(y)
        phi = np.log(uu) if k1p == 0.0 else uu**k1p / k1p
        return bp * (lap @ phi)

    def record_monitors(t, uu):
        trace.monitor_times.append(t)
        for k, fun in monitors.items():
            trace.monitors[k].append(float(fun(uu)))

    y = u**bp
    t = 0.0
    mass0 = float(m.weight @ y)
    mass_prev = mass0
    s = _sample(m, ps, u, t)
    trace.samples.append(s)
    record_monitors(t, u)
    if s.dirichlet < ctl.convergence_tol:
        trace.status, trace.final_u = CONVERGED, u
        return trace
    next_sample = ctl.sample_interval
    dt = ctl.dt0
    k1 = f(y)
    err_prev = 1.0
    steps = 0
    while True:
        if steps >= ctl.max_steps:
            trace.status = STEP_FAILURE
            break
        dt = min(dt, ctl.t_max - t)
        y2 = y + dt * _C2 * k1
        if np.any(y2 <= 0):
            trace.rejections.append((t, dt, "positivity"))
            dt *= 0.5
            if dt < ctl.dt_min:
                trace.status = POSITIVITY
                break
            continue
        k2 = f(y2)
        y3 = y + dt * _C3 * k2
        if np.any(y3 <= 0):
            trace.rejections.append((t, dt, "positivity"))
            dt *= 0.5
            if dt < ctl.dt_min:
                trace.status = POSITIVITY
                break
            continue
        k3 = f(y3)
        y_new = y + dt * (_B[0] * k1 + _B[1] * k2 + _B[2] * k3)
        if np.any(y_new <= 0):
            trace.rejections.append((t, dt, "positivity"))
            dt *= 0.5
            if dt < ctl.dt_min:
                trace.status = POSITIVITY
                break
            continue
        k4 = f(y_new)
        err_vec = dt * (_E[0] * k1 + _E[1] * k2 + _E[2] * k3 + _E[3] * k4)
        scale = ctl.step_tol * (1.0 + np.abs(y_new))
        err = float(np.sqrt(np.mean((err_vec / scale) ** 2)))
        # per-step change; accumulated roundoff is reported, not rejected
        mass_new = float(m.weight @ y_new)
        drift = abs(mass_new - mass_prev) / mass0
        if err > 1.0 or drift > ctl.mass_tol:
            trace.rejections.append((t, dt, "error" if err > 1.0 else "mass"))
            dt *= max(0.2, 0.9 * err ** (-1.0 / 3.0)) if err > 1.0 else 0.5
            if dt < ctl.dt_min:
                trace.status = STEP_FAILURE
                break
            continue
        # accepted
        t += dt
        y, k1 = y_new, k4
        mass_prev = mass_new
        steps += 1
        u = to_u(y)
        record_monitors(t, u)
        err = max(err, 1e-10)
        factor = 0.9 * err ** (-0.7 / 3.0) * err_prev ** (0.4 / 3.0)
        dt *= min(5.0, max(0.2, factor))
        err_prev = err
        done = t >= ctl.t_max * (1 - 1e-14)
        if t >= next_sample or done:
            s = _sample(m, ps, u, t)
            trace.samples.append(s)
            while next_sample <= t:
                next_sample += ctl.sample_interval
            if s.dirichlet < ctl.convergence_tol:
                trace.status = CONVERGED
                break
        if done:
            trace.status = MAX_TIME
            break
    if trace.samples[-1].t < t:
        trace.samples.append(_sample(m, ps, u, t))
    trace.final_u = u
    trace.steps = steps
    return trace
