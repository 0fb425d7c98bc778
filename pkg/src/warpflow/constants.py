"""Spectral and variational constants of a warped profile."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import variational as var
from .geometry import WarpedManifold, rho as rho_of
from .params import ParameterSet, spectral_bound


class ConvergenceError(RuntimeError):
    pass


# ---------------------------------------------------------------- pencils

def _bordered_solver(a: sp.spmatrix, sigma: np.ndarray):
    """Factorization solving ``(A + σσᵀ) x = b`` through a sparse bordered system."""
    n = a.shape[0]
    s = sp.csc_matrix(sigma.reshape(-1, 1))
    big = sp.bmat([[a, s], [s.T, sp.csc_matrix([[-1.0]])]], format="csc")
    lu = spla.splu(big)

    def solve(b):
        return lu.solve(np.append(b, 0.0))[:n]

    return solve


@dataclass
class Eigenpair:
    value: float
    vector: np.ndarray
    iterations: int


def smallest_mean_zero_eigenpair(a, b, sigma, tol: float = 1e-12, maxiter: int = 5000,
                                 x0: Optional[np.ndarray] = None) -> Eigenpair:
    """Smallest eigenvalue of ``A x = λ B x`` on ``σᵀx = 0`` by inverse iteration.

    ``A`` must annihilate constants; both forms symmetric.
    """
    n = a.shape[0]
    solve = _bordered_solver(a, sigma)
    x = np.cos(np.linspace(0.3, 2.9, n)) if x0 is None else np.array(x0, dtype=float)
    x -= np.dot(sigma, x)
    lam_old = math.inf
    for it in range(1, maxiter + 1):
        x = solve(b @ x)
        x -= np.dot(sigma, x)
        x /= math.sqrt(abs(x @ (b @ x)))
        lam = float(x @ (a @ x)) / float(x @ (b @ x))
        if abs(lam - lam_old) <= tol * abs(lam):
            return Eigenpair(lam, x, it)
        lam_old = lam
    raise ConvergenceError(f"inverse iteration did not converge in {maxiter} steps")


def lambda1_pair(m: WarpedManifold, tol: float = 1e-12) -> Eigenpair:
    return smallest_mean_zero_eigenpair(m.stiffness, m.mass, m.weight, tol, x0=m.mode(1))


def lambda1(m: WarpedManifold, tol: float = 1e-12) -> float:
    """Poincaré constant of the radial class."""
    return lambda1_pair(m, tol).value


def eigenmodes(m: WarpedManifold, count: int = 8) -> list[np.ndarray]:
    """First ``count`` non-constant eigenvectors of the (K, W) pencil."""
    k = min(count + 1, m.n - 2)
    # fixed start vector: ARPACK otherwise draws a random one
    v0 = np.cos(np.linspace(0.0, 1.0, m.n)) + 0.5
    vals, vecs = spla.eigsh(m.stiffness.tocsc(), k=k, M=m.mass.tocsc(), sigma=-1.0, which="LM",
                            v0=v0)
    order = np.argsort(vals)
    out = []
    for i in order[1:count + 1]:
        v = vecs[:, i]
        out.append(v if v[np.argmax(np.abs(v))] > 0 else -v)
    return out


def lambda_star_forms(m: WarpedManifold, theta: float) -> sp.csr_matrix:
    """Numerator form ``(1-θ)ΔᵀWΔ + θ d/(d-1) D1ᵀ W Ric D1`` (symmetric)."""
    d = m.d
    w = m.mass
    lap = m.lap
    num = (1.0 - theta) * (lap.T @ w @ lap)
    num = num + theta * d / (d - 1) * (m.d1.T @ sp.diags(m.weight * m.ricci_radial) @ m.d1)
    num = 0.5 * (num + num.T)
    return num.tocsr()


def lambda_star(m: WarpedManifold, p: float, tol: float = 1e-10) -> float:
    if m.d < 2:
        raise ValueError("lambda_star needs d >= 2")
    th = ParameterSet.choice(m.d, p).theta
    a = lambda_star_forms(m, th)
    return smallest_mean_zero_eigenpair(a, m.stiffness, m.weight, tol, x0=m.mode(1)).value


def lv_threshold(m: WarpedManifold, p: float, lam1: Optional[float] = None) -> float:
    """``(1-θ)λ₁ + θ dρ/(d-1)`` with the optimal θ."""
    if m.d < 2:
        raise ValueError("threshold needs d >= 2")
    th = ParameterSet.choice(m.d, p).theta
    lam1 = lambda1(m) if lam1 is None else lam1
    return (1 - th) * lam1 + th * m.d * rho_of(m) / (m.d - 1)


# ---------------------------------------------------------------- optimized constants

@dataclass
class Estimate:
    """Optimizer value with provenance and a two-grid extrapolation."""

    value: float
    grid: int
    richardson: float
    near_constant: float
    capped: bool
    starts: int
    iterations: int
    stagnated: bool
    psi: np.ndarray = field(repr=False)

    def note(self, solver: str) -> str:
        return (f"{solver}; N={self.grid}; starts={self.starts}; iterations={self.iterations}; "
                f"capped={self.capped}; stagnated={self.stagnated}")


def optimize_constant(m: WarpedManifold, make_objective, seed: int = 0, starts: int = 32,
                      n_modes: int = 0, eps: float = 0.3) -> Estimate:
    """Shared driver: multistart minimization, near-constant cap, two-grid estimate.

    ``make_objective(manifold)`` builds the quotient on a given grid.
    """
    obj = make_objective(m)
    if n_modes <= 0:
        n_modes = 16 if m.topology == "sphere" else 24
    modes = eigenmodes(m, 8)
    rng = np.random.default_rng(seed)
    n_eig = min(8, starts)
    seeds = var.default_seeds(m, modes[:n_eig], starts - n_eig, n_modes, rng, eps)
    v1 = lambda1_pair(m).vector
    v1 = v1 / np.max(np.abs(v1))
    cap = var.symmetric_limit(obj, v1)
    res = var.minimize_quotient(obj, seeds, n_modes, refine_modes=2 * n_modes, cap=cap)
    iters = sum(s.iterations for s in res.starts)

    fine = m.refined()
    obj2 = make_objective(fine)
    if res.capped:
        w1 = lambda1_pair(fine).vector
        value2 = var.symmetric_limit(obj2, w1 / np.max(np.abs(w1)))
    else:
        basis2 = var.mode_basis(fine, res.coefficients.size)
        value2 = obj2(basis2 @ res.coefficients)
    rich = (16.0 * value2 - res.value) / 15.0
    return Estimate(float(res.value), m.n, float(rich), float(cap), res.capped, len(res.starts), iters,
                    res.stagnated, res.psi)


def _choice(m: WarpedManifold, p: float) -> ParameterSet:
    if m.d < 2:
        raise ValueError("needs d >= 2")
    return ParameterSet.choice(m.d, p)


def Lambda_star_estimate(m: WarpedManifold, p: float, seed: int = 0, starts: int = 32) -> Estimate:
    ps = _choice(m, p)
    return optimize_constant(
        m, lambda mm: var.CurvatureQuotient(mm, ps.theta, ps.q_coefficient), seed, starts)


def Lambda_star(m: WarpedManifold, p: float, seed: int = 0, starts: int = 32) -> float:
    return Lambda_star_estimate(m, p, seed, starts).value


def rho_star_estimate(m: WarpedManifold, p: float, seed: int = 0, starts: int = 32) -> Estimate:
    ps = _choice(m, p)
    return optimize_constant(
        m, lambda mm: var.CurvatureQuotient(mm, 1.0, ps.q_coefficient), seed, starts)


def rho_star(m: WarpedManifold, p: float, seed: int = 0, starts: int = 32) -> float:
    return rho_star_estimate(m, p, seed, starts).value


def log_sobolev_estimate(m: WarpedManifold, seed: int = 0, starts: int = 32) -> Estimate:
    return optimize_constant(m, var.LogSobolevQuotient, seed, starts)


def log_sobolev_lambda2(m: WarpedManifold, seed: int = 0, starts: int = 32) -> float:
    return log_sobolev_estimate(m, seed, starts).value


# ---------------------------------------------------------------- report

REPORT_COLUMNS = ("manifold", "d", "p", "N", "lambda1", "rho", "lvThreshold", "lambdaStar",
                  "LambdaStar", "rhoStar", "logSobolevLambda2", "bestLambdaEstimate")


@dataclass
class ConstantsReport:
    manifold: str
    d: int
    p: float
    grid: int
    lambda1: float
    rho: Optional[float] = None
    lvThreshold: Optional[float] = None
    lambdaStar: Optional[float] = None
    LambdaStar: Optional[float] = None
    rhoStar: Optional[float] = None
    bestLambdaEstimate: Optional[float] = None
    logSobolevLambda2: Optional[float] = None
    spectralLowerBound: Optional[float] = None
    provenance: dict = field(default_factory=dict)
    richardson: dict = field(default_factory=dict)
    diagnostics: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.diagnostics

    def row(self) -> dict:
        return {"manifold": self.manifold, "d": self.d, "p": self.p, "N": self.grid,
                **{k: getattr(self, k) for k in REPORT_COLUMNS[4:]}}


def estimates_chain(m: WarpedManifold, p: float, seed: int = 0, starts: int = 32,
                    pencil_tol: float = 1e-6, optimizer_tol: float = 1e-3,
                    with_best: bool = True, with_log_sobolev: bool = True) -> ConstantsReport:
    """All constants for ``(m, p)`` plus a check of lvThreshold ≤ λ⋆ ≤ Λ⋆ ≤ λ₁."""
    from .rigidity import best_lambda_estimate

    pair = lambda1_pair(m)
    rep = ConstantsReport(m.spec.name, m.d, p, m.n, pair.value)
    rep.provenance["lambda1"] = f"inverse iteration on (K, W); N={m.n}; iterations={pair.iterations}"
    if m.d < 2:
        for key in ("rho", "lvThreshold", "lambdaStar", "LambdaStar", "rhoStar",
                    "bestLambdaEstimate", "logSobolevLambda2", "spectralLowerBound"):
            rep.provenance[key] = "n/a for d = 1"
        return rep

    rep.rho = rho_of(m)
    rep.provenance["rho"] = f"grid minimum of radial and tangential Ricci; N={m.n}"
    rep.lvThreshold = lv_threshold(m, p, rep.lambda1)
    rep.provenance["lvThreshold"] = "closed form from lambda1 and rho"
    rep.lambdaStar = lambda_star(m, p)
    rep.provenance["lambdaStar"] = f"inverse iteration on the curvature pencil; N={m.n}"

    est = Lambda_star_estimate(m, p, seed, starts)
    rep.LambdaStar = est.value
    rep.richardson["LambdaStar"] = est.richardson
    rep.provenance["LambdaStar"] = est.note("multistart L-BFGS on log u")
    est = rho_star_estimate(m, p, seed, starts)
    rep.rhoStar = est.value
    rep.richardson["rhoStar"] = est.richardson
    rep.provenance["rhoStar"] = est.note("multistart L-BFGS on log u")
    if with_best:
        est = best_lambda_estimate(m, p, seed, starts)
        rep.bestLambdaEstimate = est.value
        rep.richardson["bestLambdaEstimate"] = est.richardson
        rep.provenance["bestLambdaEstimate"] = est.note("multistart L-BFGS on log v")
    if with_log_sobolev:
        est = log_sobolev_estimate(m, seed, starts)
        rep.logSobolevLambda2 = est.value
        rep.richardson["logSobolevLambda2"] = est.richardson
        rep.provenance["logSobolevLambda2"] = est.note("multistart L-BFGS on log v")
        if 1.0 < p < 2.0:
            rep.spectralLowerBound = spectral_bound(p, rep.lambda1, rep.logSobolevLambda2)
            rep.provenance["spectralLowerBound"] = "closed form"

    scale = max(1.0, abs(rep.lambda1))
    chain = [("lvThreshold", rep.lvThreshold, "lambdaStar", rep.lambdaStar, pencil_tol),
             ("lambdaStar", rep.lambdaStar, "LambdaStar", rep.LambdaStar, optimizer_tol),
             ("LambdaStar", rep.LambdaStar, "lambda1", rep.lambda1, optimizer_tol)]
    if rep.bestLambdaEstimate is not None:
        chain.append(("LambdaStar", rep.LambdaStar, "bestLambdaEstimate",
                      rep.bestLambdaEstimate, optimizer_tol))
        chain.append(("bestLambdaEstimate", rep.bestLambdaEstimate, "lambda1", rep.lambda1,
                      optimizer_tol))
    for lo_name, lo, hi_name, hi, tol in chain:
        if lo > hi + tol * scale:
            rep.diagnostics.append({"check": f"{lo_name} <= {hi_name}", "lower": lo, "upper": hi,
                                    "excess": lo - hi, "tolerance": tol * scale})
    return rep
