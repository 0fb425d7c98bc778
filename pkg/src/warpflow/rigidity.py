"""Semilinear equation ``-Δv + λ/(p-2)(v - v^{p-1}) = 0``: solver, branches, best constants."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import variational as var
from .constants import Estimate, lambda1_pair, optimize_constant
from .flow import FlowControls, FlowTrace, _pos, run_flow
from .geometry import GeometryError, WarpedManifold, q_theta_norm_sq, ricci_quadratic
from .params import ParameterSet

CONSTANT = "constant"
NONCONSTANT = "nonconstant"
BRANCH_THRESHOLD = 1e-6


class NewtonError(RuntimeError):
    pass


@dataclass
class EllipticSolution:
    lam: float
    v: np.ndarray = field(repr=False)
    residual_norm: float
    deviation: float
    branch: str
    iterations: int = 0


def _check_p(p: float) -> None:
    if p <= 1.0 or p == 2.0:
        raise ValueError("p must lie in (1, 2) or above 2")


def elliptic_residual(m: WarpedManifold, p: float, lam: float, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return -(m.lap @ v) + lam / (p - 2.0) * (v - v ** (p - 1.0))


def _jacobian(m: WarpedManifold, p: float, lam: float, v: np.ndarray) -> sp.csc_matrix:
    diag = lam / (p - 2.0) * (1.0 - (p - 1.0) * v ** (p - 2.0))
    return (-m.lap + sp.diags(diag)).tocsc()


def _classify(m, p, lam, v, iterations=0) -> EllipticSolution:
    res = float(np.max(np.abs(elliptic_residual(m, p, lam, v))))
    dev = float(np.max(np.abs(v - 1.0)))
    return EllipticSolution(lam, v, res, dev, CONSTANT if dev < BRANCH_THRESHOLD else NONCONSTANT,
                            iterations)


def solve_elliptic(m: WarpedManifold, p: float, lam: float, v0, tol: float = 1e-10,
                   maxiter: int = 100) -> EllipticSolution:
    """Damped Newton; backtracking keeps the iterate positive and the residual decreasing."""
    _check_p(p)
    if lam <= 0:
        raise ValueError("lambda must be positive")
    v = np.array(v0, dtype=float)
    if not np.all(v > 0):
        raise GeometryError("initial guess must be positive")
    r = elliptic_residual(m, p, lam, v)
    rn = float(np.max(np.abs(r)))
    for it in range(maxiter):
        if rn < tol:
            return _classify(m, p, lam, v, it)
        step = spla.spsolve(_jacobian(m, p, lam, v), -r)
        a = 1.0
        while True:
            trial = v + a * step
            if np.all(trial > 0):
                r_t = elliptic_residual(m, p, lam, trial)
                rn_t = float(np.max(np.abs(r_t)))
                if rn_t < (1.0 - 1e-4 * a) * rn or (a == 1.0 and rn_t < 10 * tol):
                    break
            a *= 0.5
            if a < 1e-10:
                raise NewtonError(f"line search exhausted at residual {rn:.3e}")
        v, r, rn = trial, r_t, rn_t
    if rn < tol:
        return _classify(m, p, lam, v, maxiter)
    raise NewtonError(f"no convergence in {maxiter} iterations (residual {rn:.3e})")


# ---------------------------------------------------------------- continuation

@dataclass
class Branch:
    solutions: list = field(default_factory=list)
    events: list = field(default_factory=list)
    lambda1: float = math.nan

    def nonconstant(self) -> list:
        return [s for s in self.solutions if s.branch == NONCONSTANT]

    def bifurcation_estimate(self, max_dev: float = 0.1) -> float:
        """Extrapolate λ(dev) to dev = 0 by a fit in dev²."""
        pts = [(s.deviation, s.lam) for s in self.nonconstant() if s.deviation < max_dev]
        if len(pts) < 3:
            return math.nan
        dev, lam = np.array(pts).T
        x = dev**2
        coef = np.polyfit(x, lam, 2 if len(pts) >= 5 else 1)
        return float(coef[-1])


def continuation(m: WarpedManifold, p: float, lam_from: float, lam_to: float, steps: int = 40,
                 lam1: Optional[float] = None, ds: float = 0.01, tol: float = 1e-10,
                 max_halvings: int = 12) -> Branch:
    """Pseudo-arclength continuation of the branch bifurcating from ``(1, λ₁)``.

    Constant solutions are listed for ``λ`` in ``[lam_from, min(λ₁, lam_to)]``.
    The nonconstant branch starts along the first eigenfunction and is
    followed with a secant predictor until ``λ ≥ lam_to``; a final fixed-λ
    solve lands exactly on ``lam_to``.
    """
    _check_p(p)
    pair = lambda1_pair(m)
    lam1 = pair.value if lam1 is None else lam1
    phi = pair.vector / np.max(np.abs(pair.vector))
    w = m.weight
    br = Branch(lambda1=lam1)
    for lam in np.linspace(lam_from, min(lam1, lam_to), max(2, steps // 4)):
        if lam > 0:
            br.solutions.append(_classify(m, p, float(lam), np.ones(m.n)))
    if lam_to <= lam1:
        return br

    def dot(a, b):
        return float(w @ (a[:-1] * b[:-1]) + a[-1] * b[-1])

    def corrector(z_pred, tangent):
        z = z_pred.copy()
        for _ in range(30):
            v, lam = z[:-1], z[-1]
            if not np.all(v > 0):
                return None
            r = elliptic_residual(m, p, lam, v)
            g = dot(z - z_pred, tangent)
            if np.max(np.abs(r)) < tol and abs(g) < tol:
                return z
            jac = _jacobian(m, p, lam, v)
            dlam = ((v - v ** (p - 1.0)) / (p - 2.0)).reshape(-1, 1)
            row = sp.csr_matrix((tangent[:-1] * w).reshape(1, -1))
            big = sp.bmat([[jac, sp.csr_matrix(dlam)], [row, sp.csr_matrix([[tangent[-1]]])]],
                          format="csc")
            z = z + spla.spsolve(big, -np.append(r, g))
        return None

    z_prev = np.append(np.ones(m.n), lam1)
    tangent = np.append(phi, 0.0)
    tangent /= math.sqrt(dot(tangent, tangent))
    h = ds
    z = z_prev
    for _ in range(10 * steps):
        z_new = None
        for _ in range(max_halvings):
            z_new = corrector(z + h * tangent, tangent)
            if z_new is not None and np.max(np.abs(z_new[:-1] - 1.0)) > 1e-8:
                break
            z_new = None
            h *= 0.5
            br.events.append(("halving", float(z[-1]), h))
        if z_new is None:
            br.events.append(("abort", float(z[-1]), h))
            break
        sec = z_new - z
        new_tangent = sec / math.sqrt(dot(sec, sec))
        if new_tangent[-1] * tangent[-1] < 0:
            br.events.append(("fold", float(z_new[-1]), h))
        z, tangent = z_new, new_tangent
        sol = _classify(m, p, float(z[-1]), z[:-1].copy())
        if sol.lam >= lam_to:
            # land exactly on lam_to from the last two points
            prev = br.nonconstant()[-1] if br.nonconstant() else None
            guess = sol.v
            if prev is not None and sol.lam != prev.lam:
                a = (lam_to - prev.lam) / (sol.lam - prev.lam)
                guess = prev.v + a * (sol.v - prev.v)
            br.solutions.append(solve_elliptic(m, p, lam_to, guess, tol))
            break
        br.solutions.append(sol)
        h = min(h * 1.5, 4 * ds)
    return br


@dataclass
class ProbeResult:
    lam: float
    solutions: list
    failures: list

    @property
    def all_constant(self) -> bool:
        return not self.failures and all(s.deviation < BRANCH_THRESHOLD for s in self.solutions)

    @property
    def max_deviation(self) -> float:
        return max((s.deviation for s in self.solutions), default=math.nan)


def probe_starts(m: WarpedManifold, starts: int = 20, seed: int = 0) -> list[tuple[str, np.ndarray]]:
    """Modes 1..5 × amplitudes {0.1, 0.3} × signs, then random low-mode fields."""
    out = []
    for k in range(1, 6):
        v = m.mode(k)
        v = v / np.max(np.abs(v))
        for a in (0.1, 0.3):
            for s in (1.0, -1.0):
                out.append((f"mode{k}:amp{s * a:+g}", 1.0 + s * a * v))
    rng = np.random.default_rng(seed)
    i = 0
    while len(out) < starts:
        coef = rng.standard_normal(8) / np.arange(1, 9)
        psi = var.mode_basis(m, 8) @ coef
        out.append((f"rand{i}", np.exp(0.3 * psi / max(1e-12, np.max(np.abs(psi))))))
        i += 1
    return out[:starts]


def rigidity_probe(m: WarpedManifold, p: float, lam: float, starts: int = 20,
                   seed: int = 0) -> ProbeResult:
    sols, fails = [], []
    for label, v0 in probe_starts(m, starts, seed):
        try:
            sols.append(solve_elliptic(m, p, lam, v0))
        except (NewtonError, GeometryError) as exc:
            fails.append((label, str(exc)))
    return ProbeResult(lam, sols, fails)


# ---------------------------------------------------------------- best constant

def quotient_Q(m: WarpedManifold, p: float, v) -> float:
    """``(p-2)‖∇v‖₂²/(‖v‖_p² - ‖v‖₂²)`` for positive non-constant ``v``."""
    _check_p(p)
    v = np.asarray(v, dtype=float)
    if not np.all(v > 0):
        raise GeometryError("quotient needs a positive field")
    if np.ptp(v) <= 1e-14 * np.max(np.abs(v)):
        raise ValueError("quotient is undefined for constant fields")
    return var.InterpolationQuotient(m, p)(np.log(v))


def best_lambda_estimate(m: WarpedManifold, p: float, seed: int = 0, starts: int = 32) -> Estimate:
    _check_p(p)
    return optimize_constant(m, lambda mm: var.InterpolationQuotient(mm, p), seed, starts)


def best_lambda(m: WarpedManifold, p: float, seed: int = 0, starts: int = 32) -> float:
    return best_lambda_estimate(m, p, seed, starts).value


# ---------------------------------------------------------------- general nonlinearities

@dataclass(frozen=True)
class Nonlinearity:
    f: Callable[[np.ndarray], np.ndarray]
    fprime: Callable[[np.ndarray], np.ndarray]
    antiderivative: Callable[[np.ndarray], np.ndarray]
    p: float
    label: str = ""

    @classmethod
    def power(cls, p: float) -> "Nonlinearity":
        return cls(lambda v: v ** (p - 1), lambda v: (p - 1) * v ** (p - 2), lambda v: v**p / p,
                   p, f"v^{p - 1:g}")

    @classmethod
    def power_sum(cls, p: float, q: float) -> "Nonlinearity":
        """``v^{p-1} + v^{q-1}``."""
        return cls(lambda v: v ** (p - 1) + v ** (q - 1),
                   lambda v: (p - 1) * v ** (p - 2) + (q - 1) * v ** (q - 2),
                   lambda v: v**p / p + v**q / q, p, f"v^{p - 1:g}+v^{q - 1:g}")

    def check_hypotheses(self, v: np.ndarray) -> bool:
        """``f(0) = 0`` and ``f`` increasing on the samples."""
        return abs(float(self.f(np.array(0.0)))) < 1e-300 and bool(np.all(np.diff(self.f(v)) > 0))


def general_f_expression(f: Nonlinearity, p: float, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return (f.fprime(v) - (p - 1) * f.f(v) / v) / (p - 2)


def general_f_check(f: Nonlinearity, p: float, v_range=(1e-3, 1e3), samples: int = 4001,
                    rel_tol: float = 1e-12) -> bool:
    """True iff ``(f'(v) - (p-1)f(v)/v)/(p-2) ≤ 0`` on a dense log grid of ``v_range``.

    Intervals where the sign changes are resampled finely before deciding.
    """
    _check_p(p)
    lo, hi = v_range
    if not 0 < lo < hi:
        raise ValueError("range must be positive and increasing")
    v = np.geomspace(lo, hi, samples)
    pts = [v]
    e = general_f_expression(f, p, v)
    flips = np.nonzero(np.diff(np.sign(e)) != 0)[0]
    for i in flips:
        pts.append(np.linspace(v[i], v[i + 1], 257))
    v = np.concatenate(pts)
    e = general_f_expression(f, p, v)
    if not np.all(np.isfinite(e)):
        raise ArithmeticError("nonlinearity evaluation failed")
    scale = (np.abs(f.fprime(v)) + (p - 1) * np.abs(f.f(v) / v)) / abs(p - 2)
    return bool(np.all(e <= rel_tol * scale))


def general_flow_functional(m: WarpedManifold, ps: ParameterSet, f: Nonlinearity, u) -> float:
    """``‖∇(u^β)‖² - λ/(p-2)[(∫pF(u^β))^{2/p} - ‖u^β‖²]`` with ``λ = ps.lam``."""
    u = _pos(m, u)
    v = u**ps.beta
    v1 = m.d1 @ v
    w = m.weight
    big = float(w @ (ps.p * f.antiderivative(v))) ** (2.0 / ps.p)
    return float(w @ (v1 * v1)) - ps.lam / (ps.p - 2) * (big - float(w @ (v * v)))


def general_monitor(m: WarpedManifold, ps: ParameterSet, f: Nonlinearity, u) -> float:
    """``(β/(p-2)) ∫[(β+κ-1) f(v)/v - β f'(v)] |∇u|²`` with ``v = u^β``."""
    u = _pos(m, u)
    v = u**ps.beta
    u1 = m.d1 @ u
    coef = (ps.beta + ps.kappa - 1) * f.f(v) / v - ps.beta * f.fprime(v)
    return ps.beta / (ps.p - 2) * float(m.weight @ (coef * u1 * u1))


# ---------------------------------------------------------------- remainder

@dataclass
class RemainderResult:
    value: float
    first: float
    second: float
    lhs: float
    trace: FlowTrace = field(repr=False)

    @property
    def gap(self) -> float:
        """Left side of the corollary minus twice the remainder."""
        return self.lhs - 2.0 * self.value


def remainder_integrands(m: WarpedManifold, ps: ParameterSet, f: Nonlinearity):
    d = m.d
    w = m.weight

    def first(u):
        u1 = m.d1 @ u
        lap = m.lap @ u
        return ((1 - ps.theta) * float(w @ lap**2)
                + ps.theta * d / (d - 1) * float(w @ (q_theta_norm_sq(m, u, ps.q_coefficient)
                                                      + ricci_quadratic(m, u)))
                - ps.lam * float(w @ (u1 * u1)))

    def second(u):
        v = u**ps.beta
        u1 = m.d1 @ u
        mass = float(w @ (ps.p * f.antiderivative(v)))
        coef = (ps.beta + ps.kappa - 1) * f.f(v) / v - ps.beta * f.fprime(v)
        return mass ** (2.0 / ps.p - 1.0) * float(w @ (coef * u1 * u1))

    return first, second


def remainder(m: WarpedManifold, ps: ParameterSet, v, f: Optional[Nonlinearity] = None,
              controls: Optional[FlowControls] = None) -> RemainderResult:
    """Integral remainder along the flow started at ``u0 = v^{1/β}``; ``ps.lam`` plays Λ⋆.

    Both time integrals use the trapezoid rule over every accepted step.
    """
    if m.d < 2:
        raise GeometryError("the remainder needs d >= 2")
    f = f or Nonlinearity.power(ps.p)
    v = _pos(m, v)
    first, second = remainder_integrands(m, ps, f)
    trace = run_flow(m, ps, v ** (1.0 / ps.beta), controls,
                     monitors={"first": first, "second": second})
    if not trace.converged:
        raise RuntimeError(f"flow did not converge (status {trace.status})")
    t = np.array(trace.monitor_times)
    i1 = float(np.trapezoid(trace.monitors["first"], t))
    i2 = float(np.trapezoid(trace.monitors["second"], t))
    value = ps.beta**2 * i1 + ps.lam / (ps.p - 2) * i2
    lhs = general_flow_functional(m, ps, f, v ** (1.0 / ps.beta))
    return RemainderResult(value, ps.beta**2 * i1, ps.lam / (ps.p - 2) * i2, lhs, trace)
