"""Deterministic perimeter oracles in one and two dimensions.

In finite dimension the Gaussian perimeter of a smooth open set ``E`` is the
boundary integral of ``||Q^{1/2} n(x)|| rho(x)`` against arc length, where
``n`` is the Euclidean unit normal and ``rho`` the Gaussian density.  The
2-D routine integrates this along closed-form parametrizations (circle,
ellipse, line) with the trapezoid rule; the error estimate is the change
between ``panels`` and ``panels / 2``.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import ndtr

from .errors import ConfigError
from .estimate import Estimate
from .gaussian import TruncatedSpace
from .shapes import Ball, Ellipsoid, Halfspace, Shape

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
#: Half-width of the integration window along a line, in conditional standard deviations.
LINE_WINDOW = 12.0


def normal_pdf(z):
    return _INV_SQRT_2PI * np.exp(-0.5 * np.asarray(z, dtype=float) ** 2)


def _density(space: TruncatedSpace, x: np.ndarray) -> np.ndarray:
    lam = space.lam
    norm = 1.0 / (2.0 * math.pi * math.sqrt(lam[0] * lam[1]))
    return norm * np.exp(-0.5 * np.sum(x * x / lam, axis=-1))


def _closed_curve(space, center, semi, m):
    """Trapezoid sums over the axis-aligned ellipse ``center + semi * (cos, sin)``."""

    def trap(k):
        theta = 2.0 * math.pi * np.arange(k) / k
        c, s = np.cos(theta), np.sin(theta)
        x = center + np.stack([semi[0] * c, semi[1] * s], axis=-1)
        tangent = np.stack([-semi[0] * s, semi[1] * c], axis=-1)
        # outward normal of the ellipse is proportional to (cos/a, sin/b)
        normal = np.stack([c / semi[0], s / semi[1]], axis=-1)
        normal /= np.linalg.norm(normal, axis=-1, keepdims=True)
        weight = np.sqrt(np.sum(space.lam * normal * normal, axis=-1))
        f = weight * _density(space, x) * np.linalg.norm(tangent, axis=-1)
        return float(np.sum(f) * (2.0 * math.pi / k))

    return trap(m), trap(m // 2)


def _line(space, a, level, m):
    """Trapezoid sums along ``{<a, x> = level}`` in 2-D."""
    a = np.asarray(a, dtype=float)
    an = np.linalg.norm(a)
    normal = a / an
    tau = np.array([-normal[1], normal[0]])
    p0 = normal * (level / an)
    inv = 1.0 / space.lam
    A = float(np.sum(tau * tau * inv))
    B = float(np.sum(tau * p0 * inv))
    s_c, sd = -B / A, 1.0 / math.sqrt(A)
    weight = math.sqrt(float(np.sum(space.lam * normal * normal)))

    def trap(k):
        s = np.linspace(s_c - LINE_WINDOW * sd, s_c + LINE_WINDOW * sd, k + 1)
        f = weight * _density(space, p0 + s[:, None] * tau)
        h = s[1] - s[0]
        return float(h * (np.sum(f) - 0.5 * (f[0] + f[-1])))

    return trap(m), trap(m // 2)


def perimeter_quadrature_2d(shape: Shape, space: TruncatedSpace, level: float, panels: int = 512) -> Estimate:
    """Gaussian perimeter of ``{u < level}`` in a 2-D space by boundary quadrature."""
    if space.n != 2:
        raise ConfigError(f"perimeter_quadrature_2d needs a 2-D space, got n = {space.n}")
    if panels < 8 or panels % 2:
        raise ConfigError("panels must be an even integer >= 8")

    if isinstance(shape, Halfspace):
        fine, coarse = _line(space, shape.normal_in(2), level, panels)
    elif isinstance(shape, (Ball, Ellipsoid)):
        if level <= 0:
            return Estimate(0.0, 0.0, 0, 0, "surface-quadrature", None)
        center = shape.center_in(space)
        t = np.ones(2) if isinstance(shape, Ball) else np.array(shape.t)
        if np.all(t > 0):
            fine, coarse = _closed_curve(space, center, math.sqrt(level) / t, panels)
        else:
            # one t_k vanishes: the set is a strip bounded by two lines
            k = int(np.argmax(t > 0))
            e = np.zeros(2)
            e[k] = 1.0
            off = math.sqrt(level) / t[k]
            f1, c1 = _line(space, e, center[k] + off, panels)
            f2, c2 = _line(space, e, center[k] - off, panels)
            fine, coarse = f1 + f2, c1 + c2
    else:
        raise ConfigError(f"no boundary parametrization for {type(shape).__name__}")
    return Estimate(fine, abs(fine - coarse), 0, 0, "surface-quadrature", None)


def interval_perimeter_1d(lo: float, hi: float, variance: float = 1.0) -> float:
    """Perimeter of the interval ``(lo, hi)`` under ``N(0, variance)``.

    The boundary is two points, each weighted by the standardized density.
    """
    if not lo < hi:
        raise ConfigError("interval needs lo < hi")
    sd = math.sqrt(variance)
    return sum(float(normal_pdf(e / sd)) for e in (lo, hi) if math.isfinite(e))


# -- closed forms -----------------------------------------------------------


def halfspace_perimeter(shape: Halfspace, space: TruncatedSpace, level: float) -> float:
    """``phi(level / s)`` with ``s = <Qa, a>**(1/2)``."""
    return float(normal_pdf(level / shape.scale(space)))


def halfspace_measure(shape: Halfspace, space: TruncatedSpace, level: float) -> float:
    return float(ndtr(level / shape.scale(space)))


def standard_disk_perimeter(radius: float) -> float:
    """Perimeter of the centered disk of given radius under the standard 2-D Gaussian."""
    return radius * math.exp(-0.5 * radius * radius)
