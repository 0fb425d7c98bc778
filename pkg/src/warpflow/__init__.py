"""Radial numerics on warped product manifolds: spectra, curvature constants,
a nonlinear diffusion flow and the associated rigidity and interpolation checks."""

__version__ = "0.1.0"

from .geometry import ProfileSpec, WarpedManifold, build_manifold  # noqa: E402
from .params import ParameterSet  # noqa: E402
from .specparse import parse_manifold  # noqa: E402

__all__ = ["ProfileSpec", "WarpedManifold", "build_manifold", "ParameterSet", "parse_manifold",
           "__version__"]
