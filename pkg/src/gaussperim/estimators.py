"""Monte Carlo estimators of Gaussian perimeters and related quantities.

The primary estimator averages ``div_nu(x) * 1{u(x) < level}`` over samples
of the truncated Gaussian.  Independent routes (finite differences of the
coarea identity, level densities, boundary quadrature) exist to cross-check
it.  Every multi-level routine evaluates all levels on the same sample, so
differences between levels carry only the noise of the slab between them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, CoverageError, NumericalFailure
from .estimate import MAX_REJECTION_RATE, Estimate, Profile
from .gaussian import REPLACEMENT_BASE, Moments, TruncatedSpace, map_chunks, reduce_moments
from .shapes import Field, Shape

MIN_SAMPLES = 1000


def _check_count(n: int, minimum: int = MIN_SAMPLES) -> int:
    if int(n) != n or n < minimum:
        raise ConfigError(f"need at least {minimum} samples, got {n}")
    return int(n)


def _levels(levels) -> np.ndarray:
    lv = np.atleast_1d(np.asarray(levels, dtype=float))
    if lv.ndim != 1 or lv.size == 0:
        raise ConfigError("level grid must be a non-empty vector")
    if np.any(np.isnan(lv)) or np.any(np.diff(lv) <= 0):
        raise ConfigError("levels must be strictly increasing")
    return lv


def _field_moments(
    shape: Shape,
    space: TruncatedSpace,
    n: int,
    seed: int,
    columns: Callable[[Field], np.ndarray],
) -> tuple[Moments, int]:
    """Moments of ``columns(field)`` over ``n`` accepted points.

    Points on the critical set of ``u`` are dropped and replaced from a
    separate counter range of the same seed.
    """

    def kernel(x):
        f = shape.field(space, x)
        rejected = int(np.count_nonzero(f.degenerate))
        if rejected:
            keep = ~f.degenerate
            f = Field(*(a[keep] for a in f))
        y = columns(f)
        if not np.all(np.isfinite(y)):
            raise NumericalFailure(f"non-finite summand in {shape.kind} estimator")
        return Moments.of(y), rejected

    parts = map_chunks(space, n, seed, kernel)
    total = reduce_moments([p[0] for p in parts])
    rejected = deficit = sum(p[1] for p in parts)
    counter = REPLACEMENT_BASE
    while deficit:
        if rejected >= MAX_REJECTION_RATE * n:
            raise NumericalFailure(f"rejection rate {rejected}/{n} exceeds {MAX_REJECTION_RATE}")
        more = map_chunks(space, deficit, seed, kernel, first_counter=counter)
        counter += len(more)
        total = total.merge(reduce_moments([p[0] for p in more]))
        deficit = sum(p[1] for p in more)
        rejected += deficit
    if rejected >= MAX_REJECTION_RATE * n:
        raise NumericalFailure(f"rejection rate {rejected}/{n} exceeds {MAX_REJECTION_RATE}")
    return total, rejected


# -- perimeter via the divergence formula ------------------------------------


def perimeter_divergence_profile(shape: Shape, space: TruncatedSpace, levels, n: int, seed: int) -> Profile:
    """Perimeters of ``{u < r}`` for every ``r`` in ``levels`` from one sample."""
    n = _check_count(n)
    lv = _levels(levels)

    def columns(f):
        y = f.div_nu[:, None] * (f.u[:, None] < lv)
        return np.concatenate([y, np.diff(y, axis=1)], axis=1)

    m, rejected = _field_moments(shape, space, n, seed, columns)
    L = lv.size
    se = m.std_error
    ests = tuple(Estimate(float(m.mean[i]), float(se[i]), n, rejected, "divergence", seed) for i in range(L))
    return Profile(tuple(float(v) for v in lv), ests, tuple(float(s) for s in se[L:]))


def perimeter_divergence(shape: Shape, space: TruncatedSpace, level: float, n: int, seed: int) -> Estimate:
    """Perimeter of ``{u < level}`` as the mean of ``div_nu * 1{u < level}``."""
    return perimeter_divergence_profile(shape, space, [level], n, seed).estimates[0]


# -- perimeter via finite differences of the coarea identity -------------------


def perimeter_coarea_fd_profile(
    shape: Shape, space: TruncatedSpace, levels, delta: float, n: int, seed: int
) -> Profile:
    """Central differences of ``F(r) = E[|grad_H u|_H 1{u < r}]`` at every level.

    ``extras["bias"]`` holds the leading ``delta**2 F'''/6`` bias, estimated
    from the third difference of ``F`` at ``r +- delta``, ``r +- 3 delta`` on
    the same sample.
    """
    n = _check_count(n)
    lv = _levels(levels)
    if not delta > 0:
        raise ConfigError("delta must be positive")
    L = lv.size
    pts = np.concatenate([lv - 3 * delta, lv - delta, lv + delta, lv + 3 * delta])

    def columns(f):
        g = f.grad_norm[:, None] * (f.u[:, None] < pts)
        m3, m1, p1, p3 = g[:, :L], g[:, L : 2 * L], g[:, 2 * L : 3 * L], g[:, 3 * L :]
        fd = (p1 - m1) / (2.0 * delta)
        d3 = p3 - 3.0 * p1 + 3.0 * m1 - m3
        return np.concatenate([fd, d3], axis=1)

    m, rejected = _field_moments(shape, space, n, seed, columns)
    se = m.std_error
    ests = tuple(Estimate(float(m.mean[i]), float(se[i]), n, rejected, "coarea-fd", seed) for i in range(L))
    bias = tuple(float(abs(m.mean[L + i]) / (48.0 * delta)) for i in range(L))
    return Profile(tuple(float(v) for v in lv), ests, None, {"bias": bias})


def perimeter_coarea_fd(shape: Shape, space: TruncatedSpace, level: float, delta: float, n: int, seed: int) -> Estimate:
    return perimeter_coarea_fd_profile(shape, space, [level], delta, n, seed).estimates[0]


def default_delta(levels) -> float:
    """Half the smallest grid spacing."""
    lv = _levels(levels)
    if lv.size < 2:
        raise ConfigError("default delta needs at least two levels")
    return 0.5 * float(np.min(np.diff(lv)))


# -- density of u, measures -------------------------------------------------------


def _indicator_estimate(space, n, seed, predicate, scale=1.0, method="mc-measure") -> Estimate:
    n = _check_count(n)
    counts = map_chunks(space, n, seed, lambda x: int(np.count_nonzero(predicate(x))))
    p = sum(counts) / n
    se = math.sqrt(max(p * (1.0 - p), 0.0) / n)
    return Estimate(p * scale, se * scale, n, 0, method, seed)


def density_k(shape: Shape, space: TruncatedSpace, level: float, eps: float, n: int, seed: int) -> Estimate:
    """``gamma({level - eps <= u <= level + eps}) / (2 eps)`` with binomial error."""
    if not eps > 0:
        raise ConfigError("eps must be positive")

    def slab(x):
        u = shape.u(x)
        return (u >= level - eps) & (u <= level + eps)

    return _indicator_estimate(space, n, seed, slab, scale=1.0 / (2.0 * eps))


def measure_mc(region, space: TruncatedSpace, n: int, seed: int) -> Estimate:
    """Empirical ``gamma``-measure of a region.

    ``region`` is either a predicate on ``(m, n)`` point arrays or an object
    with ``contains(space, x)``.
    """
    pred = (lambda x: region.contains(space, x)) if hasattr(region, "contains") else region
    return _indicator_estimate(space, n, seed, pred)


def boundary_mass(shape: Shape, space: TruncatedSpace, level: float, eps_values: Sequence[float], n: int, seed: int) -> list[Estimate]:
    """``gamma({level - eps < u < level + eps})`` for each ``eps``, common random numbers."""
    n = _check_count(n)
    eps = np.asarray(eps_values, dtype=float)
    if eps.ndim != 1 or np.any(eps <= 0):
        raise ConfigError("eps values must be positive")

    def kernel(x):
        u = shape.u(x)[:, None]
        return np.count_nonzero((u > level - eps) & (u < level + eps), axis=0)

    counts = np.sum(map_chunks(space, n, seed, kernel), axis=0)
    out = []
    for c in counts:
        p = float(c) / n
        out.append(Estimate(p, math.sqrt(p * (1 - p) / n), n, 0, "mc-measure", seed))
    return out


# -- coarea identity ---------------------------------------------------------------


def _trapezoid_tail_weights(grid: np.ndarray) -> np.ndarray:
    """``W[k] = sum_{i >= k} w_i`` for trapezoid weights ``w``; ``W[len] = 0``.

    With ``k = #{i : grid_i <= u}``, ``W[k]`` is the quadrature of
    ``r -> 1{u < r}`` over the grid.
    """
    h = np.diff(grid)
    w = np.zeros(grid.size)
    w[:-1] += h / 2
    w[1:] += h / 2
    return np.concatenate([np.cumsum(w[::-1])[::-1], [0.0]])


@dataclass(frozen=True)
class CoareaCheck:
    lhs: Estimate
    rhs: Estimate
    diff_std_error: float
    quadrature_bound: float
    outside_mass: float

    @property
    def tolerance(self) -> float:
        return 3.0 * self.diff_std_error + self.quadrature_bound

    @property
    def agree(self) -> bool:
        return abs(self.lhs.value - self.rhs.value) <= self.tolerance


def coarea_check(
    shape: Shape,
    space: TruncatedSpace,
    grid,
    n: int,
    seed: int,
    max_outside: float = 1e-3,
) -> CoareaCheck:
    """Compare ``E[|grad_H u|_H]`` with the trapezoid integral of the perimeter profile.

    The right-hand side is evaluated on the same sample as the left, as the
    mean of ``div_nu(x) * W(u(x))`` where ``W(u)`` is the quadrature weight of
    the levels above ``u``.  ``quadrature_bound`` is a Richardson estimate
    from the grid with every other point removed.
    """
    n = _check_count(n)
    g = np.atleast_1d(np.asarray(grid, dtype=float))
    if g.size < 2:
        raise CoverageError("grid needs at least two levels to cover the range of u", outside_mass=1.0)
    g = _levels(g)
    coarse = g[::2] if (g.size - 1) % 2 == 0 else np.append(g[::2], g[-1])
    W = _trapezoid_tail_weights(g)
    Wc = _trapezoid_tail_weights(coarse)

    def columns(f):
        k = np.searchsorted(g, f.u, side="right")
        kc = np.searchsorted(coarse, f.u, side="right")
        rhs = f.div_nu * W[k]
        rhs_c = f.div_nu * Wc[kc]
        outside = ((f.u < g[0]) | (f.u > g[-1])).astype(float)
        return np.stack([f.grad_norm, rhs, f.grad_norm - rhs, rhs - rhs_c, outside], axis=1)

    m, rejected = _field_moments(shape, space, n, seed, columns)
    outside = float(m.mean[4])
    if outside > max_outside:
        raise CoverageError(
            f"grid [{g[0]}, {g[-1]}] leaves mass {outside:.3g} of u uncovered (limit {max_outside})",
            outside_mass=outside,
        )
    se = m.std_error
    lhs = Estimate(float(m.mean[0]), float(se[0]), n, rejected, "mc-measure", seed)
    rhs = Estimate(float(m.mean[1]), float(se[1]), n, rejected, "divergence", seed)
    return CoareaCheck(lhs, rhs, float(se[2]), abs(float(m.mean[3])) / 3.0, outside)


# -- convexity: log-concavity of t -> gamma(tC) ---------------------------------------


@dataclass(frozen=True)
class ConcavityRow:
    t: float
    g: float
    std_error: float
    second_difference: float
    second_difference_se: float
    ok: bool


@dataclass(frozen=True)
class ConcavityReport:
    rows: tuple[ConcavityRow, ...]
    verdict: bool
    vacuous: bool
    n_samples: int
    seed: int


def log_concavity_probe(body, space: TruncatedSpace, t_grid, n: int, seed: int, k: float = 3.0) -> ConcavityReport:
    """Check concavity of ``t -> log gamma(tC)`` on a grid.

    A common sample estimates ``g(t_i)`` for every ``t_i``.  At interior
    points the second difference of ``log g`` (scaled divided difference on a
    non-uniform grid) must not exceed ``k`` delta-method standard errors.
    """
    n = _check_count(n)
    t = _levels(t_grid)
    if t[0] <= 0:
        raise ConfigError("t-grid must be positive")
    if not np.all(body.contains(space, np.zeros((1, space.n)))):
        raise ConfigError("convex body must contain the origin")

    def kernel(x):
        ind = np.stack([body.contains(space, x / ti) for ti in t], axis=1).astype(float)
        return ind.sum(axis=0), ind.T @ ind

    parts = map_chunks(space, n, seed, kernel)
    counts = np.sum([p[0] for p in parts], axis=0)
    gram = np.sum([p[1] for p in parts], axis=0)
    if np.any(counts == 0):
        raise NumericalFailure(f"gamma(tC) estimated as 0 at t = {t[counts == 0][0]}; body too small for {n} samples")
    g = counts / n
    cov = gram / n - np.outer(g, g)
    se = np.sqrt(np.maximum(np.diag(cov), 0.0) / n)
    logg = np.log(g)

    rows = []
    all_ok = True
    for i in range(t.size):
        if 0 < i < t.size - 1:
            h1, h2 = t[i] - t[i - 1], t[i + 1] - t[i]
            w = np.zeros(t.size)
            w[[i - 1, i, i + 1]] = np.array([h2, -(h1 + h2), h1]) * (2.0 / (h1 + h2))
            d2 = float(w @ logg)
            grad = w / g
            d2_se = math.sqrt(max(float(grad @ cov @ grad), 0.0) / n)
            ok = d2 <= k * d2_se
        else:
            d2, d2_se, ok = math.nan, math.nan, True
        all_ok &= ok
        rows.append(ConcavityRow(float(t[i]), float(g[i]), float(se[i]), d2, d2_se, bool(ok)))
    return ConcavityReport(tuple(rows), bool(all_ok), t.size < 3, n, seed)


# -- profiles and dimension sweeps ---------------------------------------------------------


@dataclass(frozen=True)
class ProfileVerdicts:
    vanishing_low: bool
    vanishing_high: bool
    increasing_below_r0: bool
    decreasing_above_r1: bool
    argmax_radius: float
    monotone_violations: tuple[float, ...]


def profile_verdicts(profile: Profile, radii, r0: float, r1: float) -> ProfileVerdicts:
    """Check vanishing ends and monotone segments of a ball perimeter profile.

    Ends pass when the estimate is below 5 standard errors.  Adjacent pairs
    inside ``[0, r0]`` (resp. ``[r1, inf)``) must not decrease (increase) by
    more than 3 standard errors of their difference.
    """
    r = np.asarray(radii, dtype=float)
    v, se = profile.values, profile.std_errors
    step_se = np.asarray(profile.step_std_errors)
    dv = np.diff(v)
    inc = (r[1:] <= r0) & (r[:-1] <= r0)
    dec = r[:-1] >= r1
    bad_inc = inc & (dv < -3 * step_se)
    bad_dec = dec & (dv > 3 * step_se)
    bad = tuple(float(x) for x in r[1:][bad_inc | bad_dec])
    return ProfileVerdicts(
        bool(v[0] < 5 * se[0]),
        bool(v[-1] < 5 * se[-1]),
        not bool(np.any(bad_inc)),
        not bool(np.any(bad_dec)),
        float(r[int(np.argmax(v))]),
        bad,
    )


@dataclass(frozen=True)
class SweepRow:
    dim: int
    trace: float
    estimate: Estimate
    step: float
    step_se: float


def dimension_sweep(shape: Shape, spectrum, dims: Sequence[int], level: float, n: int, seed: int) -> tuple[SweepRow, ...]:
    """Perimeter of ``{u < level}`` across increasing truncation dimensions.

    Draws are coordinate-major, so the sample for dimension ``m`` extends the
    sample for every smaller dimension.  ``step`` is the change from the
    previous dimension and ``step_se`` the combined standard error.
    """
    dims = [int(d) for d in dims]
    if any(b <= a for a, b in zip(dims, dims[1:])) or dims[0] < 1:
        raise ConfigError("sweep dimensions must be positive and strictly increasing")
    rows = []
    prev = None
    for d in dims:
        space = TruncatedSpace(spectrum, d)
        est = perimeter_divergence(shape, space, level, n, seed)
        if prev is None:
            step, step_se = math.nan, math.nan
        else:
            step = est.value - prev.value
            step_se = math.hypot(est.std_error, prev.std_error)
        rows.append(SweepRow(d, space.trace, est, step, step_se))
        prev = est
    return tuple(rows)
