"""Exponent algebra: θ, β, κ, μ, the d = 1 roots β±, relaxed β intervals."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import NamedTuple, Optional

# (p, d) = (5, 2): the optimal β degenerates and θ must be picked in (1/3, 1)
DEGENERATE_THETA = 2.0 / 3.0


def two_star(d: int) -> float:
    """Critical Sobolev exponent; ``inf`` for d = 1, 2."""
    return 2.0 * d / (d - 2) if d >= 3 else math.inf


def two_sharp(d: int) -> float:
    return (2.0 * d * d + 1.0) / (d - 1) ** 2


def _is_degenerate(p: float, d: int) -> bool:
    return d == 2 and abs(p - 5.0) < 1e-12


def _check_p(p: float, d: int) -> None:
    if not (1.0 < p < two_star(d) or (d >= 3 and p == two_star(d))):
        raise ValueError(f"p = {p} outside (1, 2*) for d = {d}")


def theta_choice(p: float, d: int) -> float:
    if d < 2:
        raise ValueError("theta choice needs d >= 2")
    _check_p(p, d)
    p_ = Fraction(p)
    # correctly rounded, so that μ at the choice is limited by one rounding only
    return float((d - 1) ** 2 * (p_ - 1) / (d * (d + 2) + p_ - 1))


def beta_choice(p: float, d: int, theta: Optional[float] = None) -> float:
    """β that cancels μ; at (p, d) = (5, 2) it depends on a supplied θ ∈ (1/3, 1)."""
    if d < 2:
        raise ValueError("beta choice needs d >= 2; use beta_pm for d = 1")
    _check_p(p, d)
    if _is_degenerate(p, d):
        if theta is None:
            raise ValueError("(p, d) = (5, 2) needs theta in (1/3, 1)")
        if not 1.0 / 3.0 < theta < 1.0:
            raise ValueError(f"theta = {theta} outside (1/3, 1)")
        return math.sqrt(theta / (3.0 * theta - 1.0))
    return float((d + 2) / (d + 3 - Fraction(p)))


def kappa_of(beta: float, p: float) -> float:
    return 1.0 + beta * (p - 2.0)


# μ is evaluated exactly on its (float) arguments: near 2* the optimal β is
# large and the cancellation in aβ² + bβ + 1 would otherwise cost ~β² ulps.

def mu(beta: float, theta: float, p: float, d: int) -> float:
    """Coefficient of ``∫|∇u|⁴/u²`` once κ = 1 + β(p-2) is substituted."""
    if theta <= 0:
        raise ValueError("theta must be positive")
    b_, t, p_ = Fraction(beta), Fraction(theta), Fraction(p)
    a = Fraction(d - 1, d + 2) ** 2 * (p_ - 1) ** 2 / t - (p_ - 2)
    b = -2 * (d + 3 - p_) / (d + 2)
    return float(a * b_ * b_ + b * b_ + 1)


def mu_general(beta: float, kappa: float, theta: float, d: int) -> float:
    """Same coefficient for independent κ (before substituting κ = 1 + β(p-2))."""
    b_, k, t = Fraction(beta), Fraction(kappa), Fraction(theta)
    s = k + b_ - 1
    return float(Fraction(d - 1, d + 2) ** 2 * s * s / t - k * (b_ - 1) - s * d / (d + 2))


def mu_circle(beta: float, p: float) -> float:
    """d = 1 coefficient ``β(p-1)/3 + (1 + β(p-2))(β-1)``."""
    b, p_ = Fraction(beta), Fraction(p)
    return float(b * (p_ - 1) / 3 + (1 + b * (p_ - 2)) * (b - 1))


def beta_pm(p: float) -> tuple[float, float]:
    """Roots (β+, β-) of the d = 1 coefficient."""
    if p <= 1.0:
        raise ValueError("p must exceed 1")
    if p == 2.0:
        raise ValueError("beta_pm is undefined at p = 2")
    root = math.sqrt((p - 1.0) * (p + 2.0))
    den = 3.0 * (p - 2.0)
    return (p - 4.0 + root) / den, (p - 4.0 - root) / den


class BetaSet(NamedTuple):
    """β values with μ ≤ 0: ``[lower, upper]`` if ``inside`` else its complement."""

    lower: float
    upper: float
    inside: bool = True

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def __contains__(self, beta) -> bool:
        within = self.lower <= beta <= self.upper
        return within if self.inside else not (self.lower < beta < self.upper)


def beta_interval_relaxed(p: float, d: int, theta: float) -> Optional[BetaSet]:
    """Admissible β for a relaxed θ strictly between the optimal choice and 1.

    Returns ``None`` when μ > 0 for every β.  When the quadratic in β opens
    downward the admissible set is the complement of the open root interval.
    """
    t0 = theta_choice(p, d)
    if not t0 < theta < 1.0:
        raise ValueError(f"theta = {theta} outside ({t0}, 1)")
    a = ((d - 1.0) / (d + 2.0)) ** 2 * (p - 1.0) ** 2 / theta - (p - 2.0)
    b = -2.0 * (d + 3.0 - p) / (d + 2.0)
    if a == 0.0:
        r = -1.0 / b
        return BetaSet(r, math.inf) if b < 0 else BetaSet(-math.inf, r)
    disc = b * b - 4.0 * a
    if disc < 0:
        return None if a > 0 else BetaSet(-math.inf, math.inf)
    sq = math.sqrt(disc)
    # stable quadratic roots
    qq = -0.5 * (b + math.copysign(sq, b))
    r1, r2 = sorted((qq / a, 1.0 / qq))
    return BetaSet(r1, r2, inside=a > 0)


def spectral_bound(p: float, lambda1: float, lambda2: float) -> float:
    """``λ₁ (1 - η)/(1 - η^α)`` with ``η = p - 1`` and ``α = λ₁/Λ(2)``."""
    if not 1.0 < p < 2.0:
        raise ValueError("spectral bound needs p in (1, 2)")
    if lambda2 <= 0:
        raise ValueError("log-Sobolev constant must be positive")
    alpha = lambda1 / lambda2
    one_minus_eta = 2.0 - p
    log_eta = math.log1p(p - 2.0)
    return lambda1 * one_minus_eta / -math.expm1(alpha * log_eta)


@dataclass(frozen=True)
class ParameterSet:
    d: int
    p: float
    theta: float
    beta: float
    kappa: float
    lam: float = 0.0

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")

    @property
    def flow_compatible(self) -> bool:
        return abs(self.kappa - kappa_of(self.beta, self.p)) <= 1e-12 * max(1.0, abs(self.kappa))

    @property
    def q_coefficient(self) -> float:
        """Coefficient of the rank-one term in the corrected trace-free Hessian."""
        if self.d < 2:
            return 0.0
        return (self.d - 1.0) / (self.d + 2.0) * (self.kappa + self.beta - 1.0) / self.theta

    def with_lambda(self, lam: float) -> "ParameterSet":
        return replace(self, lam=lam)

    @classmethod
    def choice(cls, d: int, p: float, lam: float = 0.0, theta: Optional[float] = None,
               branch: str = "+") -> "ParameterSet":
        """Flow-compatible parameters: the optimal (θ, β) for d ≥ 2, β± for d = 1."""
        if d == 1:
            bp, bm = beta_pm(p)
            beta = bp if branch == "+" else bm
            return cls(1, p, 0.0, beta, kappa_of(beta, p), lam)
        if _is_degenerate(p, d):
            th = DEGENERATE_THETA if theta is None else theta
        else:
            th = theta_choice(p, d) if theta is None else theta
        beta = beta_choice(p, d, th)
        return cls(d, p, th, beta, kappa_of(beta, p), lam)
