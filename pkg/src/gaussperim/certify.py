"""Finite-difference certification of the analytic shape formulas."""

from __future__ import annotations

import numpy as np

from .gaussian import TruncatedSpace
from .shapes import Ball, Shape, div_nu_bounds

FD_SCALE = 1e-5


def _steps(x: np.ndarray) -> np.ndarray:
    return FD_SCALE * (1.0 + np.abs(x))


def fd_gradient(shape: Shape, space: TruncatedSpace, x) -> np.ndarray:
    """Central differences of ``u`` along each ``h_j``, for a batch of points."""
    x = np.atleast_2d(space.check_points(x))
    eps = _steps(x)
    out = np.empty_like(x)
    for j in range(space.n):
        shift = np.zeros_like(x)
        shift[:, j] = eps[:, j] * space.sqrt_lam[j]
        out[:, j] = (shape.u(x + shift) - shape.u(x - shift)) / (2.0 * eps[:, j])
    return out


def fd_divergence(shape: Shape, space: TruncatedSpace, x) -> np.ndarray:
    """``sum_j (d_{h_j} nu_j - hhat_j nu_j)`` with ``d_{h_j} nu_j`` by central differences."""
    x = np.atleast_2d(space.check_points(x))
    eps = _steps(x)
    nu = shape.nu_h(space, x)
    total = -np.sum(space.standardize(x) * nu, axis=-1)
    for j in range(space.n):
        shift = np.zeros_like(x)
        shift[:, j] = eps[:, j] * space.sqrt_lam[j]
        plus = shape.nu_h(space, x + shift)[:, j]
        minus = shape.nu_h(space, x - shift)[:, j]
        total = total + (plus - minus) / (2.0 * eps[:, j])
    return total


def _rel(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    denom = np.abs(b)
    err = np.abs(a - b)
    return np.where(err == 0, 0.0, err / np.maximum(denom, 1e-300))


def gradient_rel_error(shape: Shape, space: TruncatedSpace, x) -> float:
    """Largest coordinate-wise relative error between ``grad_h`` and finite differences."""
    x = np.atleast_2d(x)
    return float(np.max(_rel(fd_gradient(shape, space, x), shape.grad_h(space, x))))


def divergence_rel_error(shape: Shape, space: TruncatedSpace, x) -> float:
    x = np.atleast_2d(x)
    return float(np.max(_rel(fd_divergence(shape, space, x), shape.div_nu(space, x))))


def sandwich_violations(shape: Ball, space: TruncatedSpace, x) -> int:
    """Points where the ball curvature escapes its pointwise bracket."""
    x = np.atleast_2d(x)
    lo, hi = div_nu_bounds(shape, space, x)
    d = shape.div_nu(space, x)
    return int(np.count_nonzero((d < lo) | (d > hi)))
