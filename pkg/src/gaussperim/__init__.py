"""Gaussian perimeters of level sets in truncated abstract Wiener spaces."""

from .errors import ConfigError, CoverageError, DegenerateGradientError, GaussPerimError, NumericalFailure
from .estimate import Estimate, Profile
from .gaussian import TruncatedSpace, cm_norm, sample
from .shapes import Ball, Ellipsoid, Halfspace, SublevelSet, ball_thresholds, div_nu_bounds, parse_shape
from .spectrum import Spectrum, check_compactness, make_spectrum, trace

__version__ = "0.1.0"

__all__ = [
    "Ball",
    "ConfigError",
    "CoverageError",
    "DegenerateGradientError",
    "Ellipsoid",
    "Estimate",
    "GaussPerimError",
    "Halfspace",
    "NumericalFailure",
    "Profile",
    "Spectrum",
    "SublevelSet",
    "TruncatedSpace",
    "__version__",
    "ball_thresholds",
    "check_compactness",
    "cm_norm",
    "div_nu_bounds",
    "make_spectrum",
    "parse_shape",
    "sample",
    "trace",
]
