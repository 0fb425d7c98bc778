"""Rotationally symmetric manifolds reduced to a 1D profile.

A manifold is the warped product ``dθ² + h(θ)² g_{S^{d-1}}`` and every field
is a function of ``θ`` alone.  Three families are supported:

* sphere-like: ``θ ∈ (0, π)``, ``h = sin θ · exp((1 - x²) r(x))`` with
  ``x = cos θ`` and ``r`` a polynomial.  Pole closure is built in.
* ring-like: ``θ`` is 2π-periodic and ``h`` is either ``exp`` of a Fourier
  polynomial (``log`` form) or a Fourier polynomial itself (``linear`` form).
* circle: ``d = 1``, unit length, flat.

Derivatives are 4th-order central differences on the midpoint grid
``θ_j = (j + 1/2)Δθ``.  Ghost values are even reflections at the poles
(radial fields satisfy ``u'(0) = u'(π) = 0``) and periodic wraps on rings.
The quadrature weights are the normalized left null vector of the discrete
Laplacian, so that ``Σ σ_j (Δu)_j = 0`` holds exactly for every grid field.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

SPHERE = "sphere"
RING = "ring"
CIRCLE = "circle"

_D1_STENCIL = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
_D2_STENCIL = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0

MIN_GRID = 16
POLE_TOL = 1e-10


class GeometryError(ValueError):
    """Raised for invalid profiles or fields that do not fit a manifold."""


@dataclass(frozen=True)
class ProfileSpec:
    """Closed-form description of a warped profile.

    ``coefficients`` are polynomial coefficients of ``r`` (sphere-like) or
    Fourier coefficients ``(a0, a1, b1, a2, b2, ...)`` (ring-like).
    ``ring_form`` selects whether the Fourier series is ``log h`` or ``h``.
    """

    topology: str
    d: int
    coefficients: tuple[float, ...] = ()
    grid_size: int = 256
    ring_form: str = "log"
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "coefficients", tuple(float(c) for c in self.coefficients))
        if self.topology not in (SPHERE, RING, CIRCLE):
            raise GeometryError(f"unknown topology {self.topology!r}")
        if self.grid_size < MIN_GRID:
            raise GeometryError(f"grid size {self.grid_size} < {MIN_GRID}")
        if self.topology == CIRCLE:
            if self.d != 1:
                raise GeometryError("circle requires d = 1")
        elif self.d < 2:
            raise GeometryError("d = 1 is only available as the flat circle")
        if self.topology == RING and self.ring_form not in ("log", "linear"):
            raise GeometryError(f"unknown ring form {self.ring_form!r}")

    def with_grid(self, n: int) -> "ProfileSpec":
        return ProfileSpec(self.topology, self.d, self.coefficients, n, self.ring_form, self.label)

    @property
    def name(self) -> str:
        return self.label or describe(self)


def describe(spec: ProfileSpec) -> str:
    """Render a spec back into the manifold mini-language."""
    if spec.topology == CIRCLE:
        return "circle"
    if spec.topology == SPHERE:
        if spec.coefficients and any(spec.coefficients):
            return f"sphere:d={spec.d},r=" + ",".join(repr(c) for c in spec.coefficients)
        return f"sphere:d={spec.d}"
    c = list(spec.coefficients) or [0.0]
    groups = [repr(c[0])]
    for k in range(1, len(c), 2):
        pair = c[k:k + 2] + [0.0] * (2 - len(c[k:k + 2]))
        groups.append(f"{pair[0]!r},{pair[1]!r}")
    key = "logh" if spec.ring_form == "log" else "h"
    return f"ring:d={spec.d},{key}=" + ";".join(groups)


# ---------------------------------------------------------------- warp functions

def _sphere_warp(theta: np.ndarray, coeffs: Sequence[float]):
    """Return h, h'/h, h''/h and (1 - h'^2)/h^2 for the sphere-like family."""
    x = np.cos(theta)
    s_th = np.sin(theta)
    r = np.polynomial.Polynomial(coeffs if len(coeffs) else [0.0])
    r1, r2 = r.deriv(1), r.deriv(2)
    rv, r1v, r2v = r(x), r1(x), r2(x)
    q = -2.0 * x * rv + (1.0 - x * x) * r1v
    q1 = -2.0 * rv - 4.0 * x * r1v + (1.0 - x * x) * r2v
    s = s_th**2 * rv
    ds = -s_th * q
    dds = -x * q + s_th**2 * q1
    es = np.exp(s)
    h = s_th * es
    hp_h = x / s_th + ds
    hpp_h = -1.0 - 2.0 * x * q + ds**2 + dds
    # 1 - h'^2 = (1 - h')(1 + h'), each factor written without cancellation
    em1 = np.expm1(s)
    one_minus = 2.0 * np.sin(theta / 2) ** 2 - em1 * x + es * s_th**2 * q
    one_plus = 2.0 * np.cos(theta / 2) ** 2 + em1 * x - es * s_th**2 * q
    tang = one_minus * one_plus / h**2
    return h, hp_h, hpp_h, tang


def _fourier(theta: np.ndarray, coeffs: Sequence[float]):
    c = list(coeffs) or [0.0]
    f = np.full_like(theta, c[0])
    f1 = np.zeros_like(theta)
    f2 = np.zeros_like(theta)
    for i in range(1, len(c), 2):
        k = (i + 1) // 2
        a = c[i]
        b = c[i + 1] if i + 1 < len(c) else 0.0
        ck, sk = np.cos(k * theta), np.sin(k * theta)
        f += a * ck + b * sk
        f1 += k * (-a * sk + b * ck)
        f2 += -k * k * (a * ck + b * sk)
    return f, f1, f2


def _ring_warp(theta: np.ndarray, coeffs: Sequence[float], form: str):
    if form == "log":
        ell, ell1, ell2 = _fourier(theta, coeffs)
        h = np.exp(ell)
        hp_h = ell1
        hpp_h = ell2 + ell1**2
        tang = np.exp(-2.0 * ell) - ell1**2
    else:
        h, h1, h2 = _fourier(theta, coeffs)
        if np.any(h <= 0):
            raise GeometryError("ring warp must be positive everywhere")
        hp_h = h1 / h
        hpp_h = h2 / h
        tang = (1.0 - h1**2) / h**2
    return h, hp_h, hpp_h, tang


# ---------------------------------------------------------------- stencils

def _stencil_matrix(n: int, stencil: np.ndarray, scale: float, periodic: bool) -> sp.csr_matrix:
    rows, cols, vals = [], [], []
    offsets = np.arange(-2, 3)
    for j in range(n):
        for off, c in zip(offsets, stencil):
            if c == 0.0:
                continue
            i = j + off
            if periodic:
                i %= n
            elif i < 0:
                i = -i - 1
            elif i >= n:
                i = 2 * n - 1 - i
            rows.append(j)
            cols.append(i)
            vals.append(c * scale)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def _null_weights(lap: sp.csr_matrix) -> np.ndarray:
    """Normalized left null vector of ``lap`` (Σσ = 1)."""
    n = lap.shape[0]
    a = lap.T.tolil()
    a[n // 2, :] = np.ones(n)
    rhs = np.zeros(n)
    rhs[n // 2] = 1.0
    w = spla.spsolve(a.tocsc(), rhs)
    return w / w.sum()


@dataclass(frozen=True, eq=False)
class WarpedManifold:
    """Discretized profile with curvature data and differentiation operators.

    Arrays are read-only; treat the object as immutable.
    """

    spec: ProfileSpec
    theta: np.ndarray
    dtheta: float
    h: np.ndarray
    hp_over_h: np.ndarray
    hpp_over_h: np.ndarray
    weight: np.ndarray
    ricci_radial: np.ndarray
    ricci_tangential: np.ndarray
    d1: sp.csr_matrix = field(repr=False)
    d2: sp.csr_matrix = field(repr=False)
    lap: sp.csr_matrix = field(repr=False)

    @property
    def d(self) -> int:
        return self.spec.d

    @property
    def n(self) -> int:
        return self.theta.size

    @property
    def topology(self) -> str:
        return self.spec.topology

    @property
    def length(self) -> float:
        return self.dtheta * self.n

    @cached_property
    def stiffness(self) -> sp.csr_matrix:
        """Symmetric Dirichlet form ``K = -sym(W Δ)``; ``uᵀKu ≈ ∫|∇u|²``."""
        wl = sp.diags(self.weight) @ self.lap
        return (-0.5 * (wl + wl.T)).tocsr()

    @cached_property
    def mass(self) -> sp.csr_matrix:
        return sp.diags(self.weight).tocsr()

    def refined(self, factor: int = 2) -> "WarpedManifold":
        return build_manifold(self.spec.with_grid(self.n * factor))

    def field(self, values, positive: bool = False) -> "RadialField":
        return RadialField(self, np.asarray(values, dtype=float), positive)

    def mode(self, k: int) -> np.ndarray:
        """Smooth radial test mode ``k`` (cos kθ on spheres, Fourier on rings)."""
        if self.topology == SPHERE:
            return np.cos(k * self.theta)
        if self.topology == CIRCLE:
            m = (k + 1) // 2
            arg = 2 * np.pi * m * self.theta
            return np.cos(arg) if k % 2 else np.sin(arg)
        m = (k + 1) // 2
        return np.cos(m * self.theta) if k % 2 else np.sin(m * self.theta)


def build_manifold(spec: ProfileSpec) -> WarpedManifold:
    n = spec.grid_size
    if n < MIN_GRID:
        raise GeometryError(f"grid size {n} < {MIN_GRID}")
    if spec.topology == SPHERE:
        length, periodic = np.pi, False
    elif spec.topology == RING:
        length, periodic = 2 * np.pi, True
    else:
        length, periodic = 1.0, True
    dth = length / n
    theta = (np.arange(n) + 0.5) * dth
    d = spec.d

    if spec.topology == SPHERE:
        h, hp_h, hpp_h, tang = _sphere_warp(theta, spec.coefficients)
        # closure checks on the closed form, evaluated just inside the poles
        eps = 1e-7
        ends = np.array([eps, np.pi - eps])
        he, hph, _, _ = _sphere_warp(ends, spec.coefficients)
        slopes = hph * he
        if abs(slopes[0] - 1.0) > 1e-6 or abs(slopes[1] + 1.0) > 1e-6 or np.any(np.abs(he) > 1e-6):
            raise GeometryError("pole closure violated")
    elif spec.topology == RING:
        h, hp_h, hpp_h, tang = _ring_warp(theta, spec.coefficients, spec.ring_form)
    else:
        h = np.ones(n)
        hp_h = np.zeros(n)
        hpp_h = np.zeros(n)
        tang = np.zeros(n)
    if np.any(h <= 0) or not np.all(np.isfinite(h)):
        raise GeometryError("warp function must be positive in the interior")

    if d >= 2:
        ric_r = -(d - 1) * hpp_h
        ric_t = -hpp_h + (d - 2) * tang
    else:
        ric_r = np.zeros(n)
        ric_t = np.zeros(n)

    d1 = _stencil_matrix(n, _D1_STENCIL, 1.0 / dth, periodic)
    d2 = _stencil_matrix(n, _D2_STENCIL, 1.0 / dth**2, periodic)
    lap = (d2 + sp.diags((d - 1) * hp_h) @ d1).tocsr() if d > 1 else d2
    if spec.topology == CIRCLE:
        w = np.full(n, 1.0 / n)
    else:
        w = _null_weights(lap)
    if np.any(w <= 0):
        raise GeometryError("quadrature weights lost positivity; refine the grid")

    arrays = [theta, h, hp_h, hpp_h, w, ric_r, ric_t]
    for a in arrays:
        a.setflags(write=False)
    return WarpedManifold(spec, theta, dth, h, hp_h, hpp_h, w, ric_r, ric_t, d1, d2, lap)


# ---------------------------------------------------------------- fields

class RadialField:
    """Grid values of a radial function, with cached derivatives."""

    __array_priority__ = 10

    def __init__(self, manifold: WarpedManifold, values: np.ndarray, positive: bool = False):
        values = np.asarray(values, dtype=float)
        if values.shape != (manifold.n,):
            raise GeometryError(f"field of shape {values.shape} on a grid of {manifold.n}")
        if positive and not np.all(values > 0):
            raise GeometryError("field flagged positive has non-positive values")
        self.manifold = manifold
        self.values = values
        self.positive = positive

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def __len__(self):
        return self.values.size

    @cached_property
    def d1(self) -> np.ndarray:
        return self.manifold.d1 @ self.values

    @cached_property
    def d2(self) -> np.ndarray:
        return self.manifold.d2 @ self.values


def _values(m: WarpedManifold, u) -> np.ndarray:
    if isinstance(u, RadialField):
        return u.values
    a = np.asarray(u, dtype=float)
    if a.ndim == 0:
        return np.full(m.n, float(a))
    if a.shape != (m.n,):
        raise GeometryError(f"field of shape {a.shape} on a grid of {m.n}")
    return a


def _positive(m: WarpedManifold, u) -> np.ndarray:
    a = _values(m, u)
    if not np.all(a > 0):
        raise GeometryError("field must be positive")
    return a


def derivative(m: WarpedManifold, u) -> np.ndarray:
    if isinstance(u, RadialField):
        return u.d1
    return m.d1 @ _values(m, u)


def second_derivative(m: WarpedManifold, u) -> np.ndarray:
    if isinstance(u, RadialField):
        return u.d2
    return m.d2 @ _values(m, u)


# ---------------------------------------------------------------- operators

def laplacian(m: WarpedManifold, u) -> np.ndarray:
    """Radial Laplace-Beltrami operator ``u'' + (d-1)(h'/h) u'``."""
    return m.lap @ _values(m, u)


def integrate(m: WarpedManifold, f) -> float:
    return float(np.dot(m.weight, _values(m, f)))


def lp_norm(m: WarpedManifold, u, p: float) -> float:
    if p < 1:
        raise ValueError("lp_norm needs p >= 1")
    return integrate(m, np.abs(_values(m, u)) ** p) ** (1.0 / p)


def dirichlet_energy(m: WarpedManifold, u) -> float:
    """``Σ (u'_j)² σ_j``."""
    return integrate(m, derivative(m, u) ** 2)


def dirichlet_form(m: WarpedManifold, u, w=None) -> float:
    """Symmetric energy form ``uᵀ K w`` used by the variational solvers."""
    a = _values(m, u)
    b = a if w is None else _values(m, w)
    return float(a @ (m.stiffness @ b))


def hessian_invariants(m: WarpedManifold, u) -> dict[str, np.ndarray]:
    """Pointwise ``‖H u‖²``, ``‖L u‖²`` and ``A = u'' - (h'/h) u'``."""
    if m.d < 2:
        raise GeometryError("the trace-free Hessian needs d >= 2")
    u1 = derivative(m, u)
    u2 = second_derivative(m, u)
    tang = m.hp_over_h * u1
    a = u2 - tang
    return {
        "hNormSq": u2**2 + (m.d - 1) * tang**2,
        "lNormSq": (m.d - 1) / m.d * a**2,
        "A": a,
    }


def ricci_quadratic(m: WarpedManifold, u) -> np.ndarray:
    """Pointwise ``Ric(∇u, ∇u)``."""
    return m.ricci_radial * derivative(m, u) ** 2


def rho(m: WarpedManifold) -> float:
    """Lower bound of the Ricci curvature over the grid (0 for the circle)."""
    if m.d < 2:
        return 0.0
    return float(min(m.ricci_radial.min(), m.ricci_tangential.min()))


def q_theta_norm_sq(m: WarpedManifold, u, c: float) -> np.ndarray:
    """``((d-1)/d)(A - c u'²/u)²``, the squared norm of the corrected trace-free Hessian."""
    if m.d < 2:
        raise GeometryError("needs d >= 2")
    v = _positive(m, u)
    u1 = derivative(m, v)
    a = second_derivative(m, v) - m.hp_over_h * u1
    return (m.d - 1) / m.d * (a - c * u1**2 / v) ** 2


def rank_one_norm_sq(m: WarpedManifold, u) -> np.ndarray:
    """Pointwise ``‖∇u⊗∇u/u - (g/d)|∇u|²/u‖²`` in the radial frame."""
    v = _positive(m, u)
    t = derivative(m, v) ** 2 / v
    d = m.d
    return ((d - 1) / d) ** 2 * t**2 + (d - 1) * (t / d) ** 2


def bochner_residual(m: WarpedManifold, u, relative: bool = False) -> float:
    """``∫(Δu)² - d/(d-1)∫‖Lu‖² - d/(d-1)∫Ric(∇u,∇u)``."""
    if m.d < 2:
        raise GeometryError("the integrated Bochner identity needs d >= 2")
    d = m.d
    lhs = integrate(m, laplacian(m, u) ** 2)
    rhs = d / (d - 1) * (integrate(m, hessian_invariants(m, u)["lNormSq"]) + integrate(m, ricci_quadratic(m, u)))
    res = lhs - rhs
    if relative:
        return res / max(abs(lhs), abs(rhs), np.finfo(float).tiny)
    return res


def cross_term_residual(m: WarpedManifold, u, relative: bool = False) -> float:
    """Residual of the cross-term identity for positive ``u``.

    For ``d >= 2`` this is
    ``∫Δu|∇u|²/u - d/(d+2)∫|∇u|⁴/u² + 2d/(d+2)∫[Lu]·[∇u⊗∇u/u]``; for the
    circle it is ``∫u''u'²/u - (1/3)∫u'⁴/u²``.
    """
    v = _positive(m, u)
    u1 = derivative(m, v)
    quartic = integrate(m, u1**4 / v**2)
    d = m.d
    if d == 1:
        lhs = integrate(m, second_derivative(m, v) * u1**2 / v)
        rhs = quartic / 3.0
    else:
        a = second_derivative(m, v) - m.hp_over_h * u1
        lhs = integrate(m, laplacian(m, v) * u1**2 / v)
        contraction = integrate(m, (d - 1) / d * a * u1**2 / v)
        rhs = d / (d + 2) * quartic - 2 * d / (d + 2) * contraction
    res = lhs - rhs
    if relative:
        return res / max(abs(lhs), abs(rhs), np.finfo(float).tiny)
    return res
