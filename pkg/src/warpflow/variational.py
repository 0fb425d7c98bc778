"""Scale-invariant quotients over positive radial fields and their minimization.

Every objective is written in terms of ``ψ = log u`` so that derivatives
``u' = u ψ'`` and ``u'' = u (ψ'' + ψ'²)`` never suffer the cancellation of
differencing a nearly constant ``u``.  Each objective returns its value and
the gradient with respect to the grid values of ψ.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import optimize

from .geometry import WarpedManifold


class Objective:
    """Base class; subclasses implement ``value_and_grad(psi)``."""

    def __init__(self, m: WarpedManifold):
        self.m = m

    # beyond this spread of log u the exponentials overflow
    MAX_SPREAD = 150.0

    def __call__(self, psi) -> float:
        return self.evaluate(np.asarray(psi, dtype=float))[0]

    def evaluate(self, psi: np.ndarray) -> tuple[float, np.ndarray]:
        """Value and gradient, or ``inf`` when ψ is out of the representable range."""
        if not np.all(np.isfinite(psi)) or np.ptp(psi) > self.MAX_SPREAD:
            return math.inf, np.zeros_like(psi)
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            val, grad = self.value_and_grad(psi)
        if not (np.isfinite(val) and np.all(np.isfinite(grad))):
            return math.inf, np.zeros_like(psi)
        return val, grad

    def value_and_grad(self, psi: np.ndarray) -> tuple[float, np.ndarray]:
        raise NotImplementedError

    def _pullback(self, g0, g1, g2) -> np.ndarray:
        """Gradient of ``Σσ f(ψ, ψ', ψ'')`` given the pointwise partials."""
        m = self.m
        w = m.weight
        out = w * g0
        if g1 is not None:
            out = out + m.d1.T @ (w * g1)
        if g2 is not None:
            out = out + m.d2.T @ (w * g2)
        return out


class CurvatureQuotient(Objective):
    """``∫[(1-θ)(Δu)² + θ(‖Lu - c ∇u⊗∇u/u‖_0² · d/(d-1)) + θ d/(d-1) Ric] / ∫|∇u|²``.

    ``include_q=False`` drops the corrected-Hessian term (the λ⋆ quotient).
    With ``theta=1`` and the Choice coefficient this is the ρ⋆ quotient.
    """

    def __init__(self, m: WarpedManifold, theta: float, c: float, include_q: bool = True):
        super().__init__(m)
        if m.d < 2:
            raise ValueError("curvature quotients need d >= 2")
        self.theta = theta
        self.c = c
        self.include_q = include_q

    def parts(self, psi):
        m = self.m
        d = m.d
        p1 = m.d1 @ psi
        p2 = m.d2 @ psi
        hh = m.hp_over_h
        lap = p2 + p1**2 + (d - 1) * hh * p1
        q = p2 + (1.0 - self.c) * p1**2 - hh * p1
        ric = d / (d - 1) * m.ricci_radial
        return p1, p2, hh, lap, q, ric

    def value_and_grad(self, psi):
        m = self.m
        d = m.d
        th = self.theta
        shift = np.dot(m.weight, psi)
        u2 = np.exp(2.0 * (psi - shift))
        p1, p2, hh, lap, q, ric = self.parts(psi)
        qq = q if self.include_q else 0.0 * q
        n_pt = (1 - th) * lap**2 + th * (qq**2 + ric * p1**2)
        e_pt = p1**2
        num = np.dot(m.weight, u2 * n_pt)
        den = np.dot(m.weight, u2 * e_pt)
        if den <= 0:
            return math.inf, np.zeros_like(psi)
        val = num / den
        dn1 = 2 * (1 - th) * lap * (2 * p1 + (d - 1) * hh) + 2 * th * ric * p1
        if self.include_q:
            dn1 = dn1 + 2 * th * q * (2 * (1 - self.c) * p1 - hh)
        dn2 = 2 * (1 - th) * lap + (2 * th * q if self.include_q else 0.0)
        g_num = self._pullback(2 * u2 * n_pt, u2 * dn1, u2 * dn2)
        g_den = self._pullback(2 * u2 * e_pt, u2 * 2 * p1, None)
        return val, (g_num - val * g_den) / den


class InterpolationQuotient(Objective):
    """``(p-2)‖∇v‖₂² / (‖v‖_p² - ‖v‖₂²)`` for ``v = e^ψ``."""

    def __init__(self, m: WarpedManifold, p: float):
        super().__init__(m)
        if p == 2.0 or p <= 1.0:
            raise ValueError("p must be in (1, 2) or above 2")
        self.p = p

    def value_and_grad(self, psi):
        m, p = self.m, self.p
        w = m.weight
        psi = psi - np.dot(w, psi)
        p1 = m.d1 @ psi
        v2 = np.exp(2 * psi)
        dir_ = np.dot(w, v2 * p1**2)
        ep = np.expm1(p * psi)
        e2 = np.expm1(2 * psi)
        big_p = np.dot(w, ep)
        big_s = np.dot(w, e2)
        denom = math.expm1(2.0 / p * math.log1p(big_p)) - big_s
        if denom == 0.0 or dir_ <= 0.0:
            return math.inf, np.zeros_like(psi)
        val = (p - 2) * dir_ / denom
        g_dir = self._pullback(2 * v2 * p1**2, 2 * v2 * p1, None)
        g_den = (2.0 / p) * (1 + big_p) ** (2.0 / p - 1.0) * p * w * np.exp(p * psi) - 2 * w * v2
        grad = (p - 2) * g_dir / denom - val * g_den / denom
        return val, grad


class LogSobolevQuotient(Objective):
    """``‖∇v‖₂² / ((1/2)∫v² log(v²/‖v‖₂²))`` for ``v = e^ψ``."""

    def value_and_grad(self, psi):
        m = self.m
        w = m.weight
        psi = psi - np.dot(w, psi)
        p1 = m.d1 @ psi
        v2 = np.exp(2 * psi)
        dir_ = np.dot(w, v2 * p1**2)
        s = np.dot(w, np.expm1(2 * psi))
        log_s = math.log1p(s)
        ent = np.dot(w, 2 * psi * np.expm1(2 * psi)) + 2 * np.dot(w, psi) - (1 + s) * log_s
        if ent <= 0.0 or dir_ <= 0.0:
            return math.inf, np.zeros_like(psi)
        val = dir_ / (0.5 * ent)
        g_dir = self._pullback(2 * v2 * p1**2, 2 * v2 * p1, None)
        g_ent = 2 * w * v2 * (2 * psi - log_s)
        return val, (2.0 * g_dir - val * g_ent) / ent


# ---------------------------------------------------------------- minimization

@dataclass
class StartResult:
    label: str
    value: float
    coefficients: np.ndarray
    iterations: int
    converged: bool
    message: str = ""


@dataclass
class MinimizationResult:
    value: float
    psi: np.ndarray
    coefficients: np.ndarray
    starts: list[StartResult] = field(default_factory=list)
    cap: float = math.inf
    capped: bool = False
    stagnated: bool = False

    @property
    def best_start(self) -> Optional[StartResult]:
        good = [s for s in self.starts if np.isfinite(s.value)]
        return min(good, key=lambda s: s.value) if good else None


def mode_basis(m: WarpedManifold, n_modes: int) -> np.ndarray:
    return np.column_stack([m.mode(k) for k in range(1, n_modes + 1)])


def project_to_modes(m: WarpedManifold, psi: np.ndarray, basis: np.ndarray) -> np.ndarray:
    """Weighted least-squares coefficients of ``psi`` minus its mean."""
    w = np.sqrt(m.weight)
    centred = psi - np.dot(m.weight, psi)
    b = basis - m.weight @ basis
    coef, *_ = np.linalg.lstsq(b * w[:, None], centred * w, rcond=None)
    return coef


def symmetric_limit(obj: Objective, direction: np.ndarray, eps: float = 1e-3) -> float:
    """Quotient along ``1 ± ε v`` averaged over the two signs (O(ε²) accurate)."""
    vals = []
    for s in (eps, -eps):
        u = 1.0 + s * direction
        if np.any(u <= 0):
            raise ValueError("near-constant probe left the positive cone")
        vals.append(obj(np.log(u)))
    return 0.5 * (vals[0] + vals[1])


def minimize_quotient(obj: Objective, seeds: Sequence[tuple[str, np.ndarray]], n_modes: int,
                      refine_modes: int = 0, rel_tol: float = 1e-10, max_iter: int = 2000,
                      cap: float = math.inf) -> MinimizationResult:
    """Multistart L-BFGS over low-mode coefficients of ψ.

    ``seeds`` are grid vectors of ψ; each is projected on the mode basis.  The
    best start is optionally refined with ``refine_modes`` modes.  ``cap`` is
    an externally known upper bound (the near-constant limit); the reported
    value is ``min(best, cap)``.
    """
    m = obj.m
    basis = mode_basis(m, n_modes)

    def run(label, c0, b):
        def fun(c):
            val, g = obj.evaluate(b @ c)
            if not np.isfinite(val):
                return 1e300, np.zeros_like(c)
            return val, b.T @ g

        res = optimize.minimize(fun, c0, jac=True, method="L-BFGS-B",
                                options={"maxiter": max_iter, "ftol": rel_tol, "gtol": 1e-12,
                                         "maxcor": 20})
        val = float(res.fun) if res.fun < 1e299 else math.inf
        return StartResult(label, val, res.x, int(res.nit), bool(res.success), str(res.message))

    starts = []
    for label, psi0 in seeds:
        c0 = project_to_modes(m, psi0, basis)
        starts.append(run(label, c0, basis))
    finite = [s for s in starts if np.isfinite(s.value)]
    stagnated = not finite or not any(s.converged for s in finite)
    if finite:
        best = min(finite, key=lambda s: s.value)
        coef, b = best.coefficients, basis
        if refine_modes > n_modes:
            rb = mode_basis(m, refine_modes)
            c0 = np.zeros(refine_modes)
            c0[:n_modes] = best.coefficients
            refined = run("refine:" + best.label, c0, rb)
            starts.append(refined)
            if refined.value <= best.value:
                best, coef, b = refined, refined.coefficients, rb
        value = best.value
        psi = b @ coef
    else:
        value, psi, coef = math.inf, np.zeros(m.n), np.zeros(n_modes)
    capped = cap < value
    return MinimizationResult(min(value, cap), psi, coef, starts, cap, capped, stagnated)


def default_seeds(m: WarpedManifold, eigvecs: Sequence[np.ndarray], n_random: int, n_modes: int,
                  rng: np.random.Generator, eps: float = 0.3) -> list[tuple[str, np.ndarray]]:
    """Near-constant seeds ``log(1 + ε v_k)`` and random low-mode seeds."""
    seeds = []
    for k, v in enumerate(eigvecs, start=1):
        v = v / np.max(np.abs(v))
        seeds.append((f"eig{k}", np.log1p(eps * v)))
    for i in range(n_random):
        decay = 1.0 / np.arange(1, n_modes + 1)
        amp = rng.uniform(0.2, 2.0)
        coef = rng.standard_normal(n_modes) * decay * amp
        seeds.append((f"rand{i}", mode_basis(m, n_modes) @ coef))
    return seeds
