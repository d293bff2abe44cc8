"""The Hilbert cube with positive measure and diverging perimeter.

Thresholds ``r_k`` solve ``sqrt(2/pi) exp(-r**2/2) / r = t_k`` with
``t_k = 1 / ((k+1) log(k+1)**1.5)``.  The cube ``C_n`` is the slab
intersection ``{|x_k / sqrt(lambda_k)| <= r_k, k <= n}``; its measure and
perimeter are products and sums over the per-coordinate probabilities
``p_k = P(|Z| <= r_k)``, all evaluated in log space.

Tail sums of ``t_k`` past a cutoff are enclosed by integral comparison:
``f(x) = 1/((x+1) log(x+1)**1.5)`` is convex and decreasing on ``x >= 1``,
with primitive ``-2 / sqrt(log(x+1))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erfc

from .errors import ConfigError, NumericalFailure
from .gaussian import TruncatedSpace, sample
from .spectrum import Spectrum, check_compactness

LOG_SQRT_2_OVER_PI = 0.5 * math.log(2.0 / math.pi)
SOLVER_TOL = 1e-12
_EPS = np.finfo(float).eps


def target(k):
    """``t_k = 1 / ((k+1) log(k+1)**1.5)``."""
    k1 = np.asarray(k, dtype=float) + 1.0
    return 1.0 / (k1 * np.log(k1) ** 1.5)


def _log_target(k):
    k1 = np.asarray(k, dtype=float) + 1.0
    return -np.log(k1) - 1.5 * np.log(np.log(k1))


def _g(r, log_t):
    """``log(sqrt(2/pi) e^{-r^2/2} / r) - log t``: strictly decreasing in ``r > 0``."""
    return LOG_SQRT_2_OVER_PI - 0.5 * r * r - np.log(r) - log_t


def solve_rk_array(ks, tol: float = SOLVER_TOL) -> np.ndarray:
    """Vectorised root solve: bracket expansion, bisection, then Newton.

    The bracket starts at ``(1e-6, 10)`` and is widened until the sign
    pattern ``g(lo) > 0 > g(hi)`` holds; uniqueness follows from the
    strict monotonicity of ``g``.
    """
    ks = np.atleast_1d(np.asarray(ks))
    if np.any(ks < 1):
        raise ConfigError("k must be >= 1")
    if not tol > 0:
        raise ConfigError("tol must be positive")
    log_t = _log_target(ks)
    lo = np.full(ks.shape, 1e-6)
    hi = np.full(ks.shape, 10.0)
    for _ in range(200):
        bad = _g(lo, log_t) <= 0
        if not bad.any():
            break
        lo[bad] *= 0.5
    for _ in range(200):
        bad = _g(hi, log_t) >= 0
        if not bad.any():
            break
        hi[bad] *= 2.0
    if np.any(_g(lo, log_t) <= 0) or np.any(_g(hi, log_t) >= 0):
        raise NumericalFailure("could not bracket r_k")

    # bisection down to a bracket narrow enough for Newton to converge monotonically
    for _ in range(200):
        if np.all(hi - lo <= 1e-3 * hi):
            break
        mid = 0.5 * (lo + hi)
        pos = _g(mid, log_t) > 0
        lo = np.where(pos, mid, lo)
        hi = np.where(pos, hi, mid)

    r = 0.5 * (lo + hi)
    for _ in range(100):
        step = _g(r, log_t) / (-r - 1.0 / r)
        r_new = np.clip(r - step, lo, hi)
        done = np.abs(r_new - r) <= tol * r_new
        r = r_new
        if np.all(done):
            break
    else:
        raise NumericalFailure("Newton iteration for r_k did not converge")
    return r


def solve_rk(k: int, tol: float = SOLVER_TOL) -> float:
    return float(solve_rk_array([k], tol)[0])


def rk_residuals(k, r) -> np.ndarray:
    """Relative residuals ``|f(r_k) - t_k| / t_k``."""
    return np.abs(np.expm1(_g(np.asarray(r, dtype=float), _log_target(k))))


def _neumaier_cumsum(values: np.ndarray) -> np.ndarray:
    out = np.empty(values.size)
    s = 0.0
    c = 0.0
    for i, v in enumerate(values.tolist()):
        t = s + v
        if abs(s) >= abs(v):
            c += (s - t) + v
        else:
            c += (v - t) + s
        s = t
        out[i] = s + c
    return out


@dataclass(frozen=True)
class CubeFamily:
    r: np.ndarray
    solver_tol: float
    log_p: np.ndarray = field(repr=False)
    log_c: np.ndarray = field(repr=False)

    @classmethod
    def solve(cls, n_max: int, tol: float = SOLVER_TOL) -> "CubeFamily":
        if n_max < 1:
            raise ConfigError("n_max must be >= 1")
        k = np.arange(1, n_max + 1)
        r = solve_rk_array(k, tol)
        log_p = np.log1p(-erfc(r / math.sqrt(2.0)))
        log_c = LOG_SQRT_2_OVER_PI - 0.5 * r * r
        for a in (r, log_p, log_c):
            a.setflags(write=False)
        return cls(r, tol, log_p, log_c)

    def __len__(self):
        return self.r.size

    @property
    def k(self) -> np.ndarray:
        return np.arange(1, self.r.size + 1)

    @property
    def p(self) -> np.ndarray:
        return np.exp(self.log_p)

    @property
    def residuals(self) -> np.ndarray:
        return rk_residuals(self.k, self.r)

    @property
    def k_star(self) -> int | None:
        """Smallest ``k*`` such that ``sqrt(log(k+1)) <= r_k <= 2 sqrt(log(k+1))`` for all ``k* <= k <= n_max``."""
        s = np.sqrt(np.log(self.k + 1.0))
        bad = np.nonzero((self.r < s) | (self.r > 2 * s))[0]
        if bad.size == 0:
            return 1
        if bad[-1] == self.r.size - 1:
            return None
        return int(bad[-1]) + 2

    def _check(self, n):
        if not 0 <= n <= self.r.size:
            raise ConfigError(f"n = {n} outside the solved family (n_max = {self.r.size})")

    def contains(self, space: TruncatedSpace, x) -> np.ndarray:
        """Membership in the cylinder ``C_n``, ``n = min(len(family), space.n)``."""
        z = space.standardize(space.check_points(x))
        m = min(self.r.size, space.n)
        return np.all(np.abs(z[..., :m]) <= self.r[:m], axis=-1)

    def body(self, n: int) -> "CubeBody":
        self._check(n)
        return CubeBody(self.r[:n])


@dataclass(frozen=True)
class CubeBody:
    """``C_n`` as a convex body for measure and log-concavity probes."""

    radii: np.ndarray

    def contains(self, space: TruncatedSpace, x) -> np.ndarray:
        z = space.standardize(space.check_points(x))
        m = self.radii.size
        if space.n < m:
            raise ConfigError(f"cube C_{m} needs a space of dimension >= {m}")
        return np.all(np.abs(z[..., :m]) <= self.radii, axis=-1)


# -- measure ----------------------------------------------------------------------


def cube_measure(family: CubeFamily, n: int) -> float:
    """``gamma(C_n) = prod_{k <= n} p_k``."""
    family._check(n)
    return math.exp(math.fsum(family.log_p[:n]))


def cube_measure_column(family: CubeFamily) -> np.ndarray:
    """``gamma(C_n)`` for ``n = 1 .. n_max``."""
    return np.exp(_neumaier_cumsum(family.log_p))


def cube_measure_lower_bound(n: int) -> float:
    """``prod_{k <= n} (1 - t_k)``."""
    if n < 1:
        raise ConfigError("n must be >= 1")
    return math.exp(math.fsum(np.log1p(-target(np.arange(1, n + 1)))))


def lower_bound_column(n_max: int) -> np.ndarray:
    return np.exp(_neumaier_cumsum(np.log1p(-target(np.arange(1, n_max + 1)))))


@dataclass(frozen=True)
class Enclosure:
    lo: float
    hi: float

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def mid(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def __contains__(self, x: float) -> bool:
        return self.lo <= x <= self.hi


def _primitive(x: float) -> float:
    """``int_x^inf f``."""
    return 2.0 / math.sqrt(math.log(x + 1.0))


def target_tail_sum(n: int) -> Enclosure:
    """Enclosure of ``sum_{k > n} t_k``.

    Convexity gives ``int_{n+1}^inf f + f(n+1)/2 <= sum <= int_{n+1/2}^inf f``.
    """
    if n < 1:
        raise ConfigError("n must be >= 1")
    lo = _primitive(n + 1.0) + 0.5 * float(target(n + 1))
    hi = _primitive(n + 0.5)
    return Enclosure(lo * (1 - 4 * _EPS), hi * (1 + 4 * _EPS))


def log_tail_enclosure(n: int) -> Enclosure:
    """Enclosure of ``T_n = -sum_{k > n} log(1 - t_k)``.

    Uses ``t + t**2/2 <= -log(1 - t) <= t + t**2 / (2 (1 - t))`` and
    ``sum_{k > n} t_k**2 <= f(n + 1/2) int_{n+1/2}^inf f``.
    """
    s1 = target_tail_sum(n)
    tau = float(target(n + 1))
    s2_hi = float(target(n + 0.5)) * _primitive(n + 0.5)
    return Enclosure(s1.lo, s1.hi + s2_hi / (2.0 * (1.0 - tau)))


def limit_lower_bound(n_terms: int = 10**6) -> Enclosure:
    """Certified enclosure of ``a = prod_{k >= 1} (1 - t_k)``.

    The first ``n_terms`` factors are summed in log space; the rest is the
    integral-comparison enclosure of the tail.  Rounding in the head sum is
    covered by a margin of a few ulps per term.
    """
    logs = np.log1p(-target(np.arange(1, n_terms + 1)))
    head = math.fsum(logs)
    margin = 4 * _EPS * float(np.sum(np.abs(logs))) + 1e-300
    tail = log_tail_enclosure(n_terms)
    return Enclosure(math.exp(head - margin - tail.hi) * (1 - 4 * _EPS), math.exp(head + margin - tail.lo) * (1 + 4 * _EPS))


# -- perimeter ------------------------------------------------------------------


def cube_perimeter(family: CubeFamily, n: int) -> float:
    """``P(C_n) = sum_k sqrt(2/pi) e^{-r_k^2/2} prod_{j <= n, j != k} p_j``."""
    family._check(n)
    if n == 0:
        return 0.0
    total_log = math.fsum(family.log_p[:n])
    terms = np.exp(total_log - family.log_p[:n] + family.log_c[:n])
    return math.fsum(terms)


def perimeter_column(family: CubeFamily) -> np.ndarray:
    """``P(C_n)`` for ``n = 1 .. n_max``, as ``gamma(C_n) * sum_{k<=n} c_k / p_k``."""
    ratio = np.exp(family.log_c - family.log_p)
    return cube_measure_column(family) * _neumaier_cumsum(ratio)


def perimeter_lower_bound_sum(family: CubeFamily, lo: int, hi: int) -> float:
    """``sum_{lo <= k <= hi} r_k t_k`` (the perimeter chain without the factor ``a``)."""
    family._check(hi)
    k = np.arange(lo, hi + 1)
    return math.fsum(family.r[lo - 1 : hi] * target(k))


def threshold_crossings(perimeters: np.ndarray, thresholds=(1.0, 2.0, 3.0)) -> dict[float, int | None]:
    """First ``n`` with ``P(C_n) > M``, ``None`` if not reached within the column."""
    out = {}
    for m in thresholds:
        idx = np.nonzero(perimeters > m)[0]
        out[float(m)] = int(idx[0]) + 1 if idx.size else None
    return out


# -- alpha_m ----------------------------------------------------------------------


@dataclass(frozen=True)
class AlphaM:
    m: int
    n_max: int
    partial: float
    lower: float
    union_bound: float

    @property
    def enclosure(self) -> Enclosure:
        return Enclosure(self.lower, self.partial)


def alpha_m(family: CubeFamily, m: int, n_max: int | None = None) -> AlphaM:
    """``alpha_m = prod_{j > m} p_j``.

    ``partial`` is the product up to ``n_max`` (an upper bound), ``lower``
    multiplies in a certified lower bound for the factors past ``n_max``,
    and ``union_bound`` is the enclosure's upper end for ``sum_{j > m} t_j``,
    which dominates ``1 - alpha_m``.
    """
    n_max = len(family) if n_max is None else n_max
    family._check(n_max)
    if not 0 <= m < n_max:
        raise ConfigError("need 0 <= m < n_max")
    partial = math.exp(math.fsum(family.log_p[m:n_max]))
    tail = log_tail_enclosure(n_max)
    lower = partial * math.exp(-tail.hi)
    union = math.fsum(target(np.arange(m + 1, n_max + 1))) + target_tail_sum(n_max).hi
    return AlphaM(m, n_max, partial, lower, union)


# -- compactness --------------------------------------------------------------------


@dataclass(frozen=True)
class CubeCompactness:
    sum_rl: float
    verdict: str
    lambda_log_verdict: str
    bracket_ok: bool

    @property
    def criteria_agree(self) -> bool:
        return self.verdict == self.lambda_log_verdict


def cube_compactness(spectrum: Spectrum, family: CubeFamily, n_max: int, tol: float = 1e-2) -> CubeCompactness:
    """Partial sum of ``r_j**2 lambda_j`` and a compactness verdict.

    From ``k*`` on, ``log(j+1) <= r_j**2 <= 4 log(j+1)``, so the series
    converges exactly when ``sum lambda_j log j`` does.  For ``j >= 3``,
    ``log(j+1) <= 2 log j``, which turns the tail bound of the latter into
    one for ``sum r_j**2 lambda_j`` with factor 8.
    """
    family._check(n_max)
    lam = spectrum.series_terms(n_max)
    sum_rl = math.fsum(family.r[:n_max] ** 2 * lam)
    base = check_compactness(spectrum, max(n_max, 2), tol)
    ks = family.k_star
    bracket_ok = ks is not None and ks <= max(n_max, 1)
    if base.verdict == "diverging":
        verdict = "diverging"
    elif base.verdict == "converging" and bracket_ok and 8.0 * base.tail_bound < tol:
        verdict = "converging"
    else:
        verdict = "inconclusive"
    return CubeCompactness(sum_rl, verdict, base.verdict, bracket_ok)


def cm_ball_inclusion(family: CubeFamily, n: int, count: int = 100, seed: int = 0) -> int:
    """Count violations of ``{|h|_H <= min_k r_k} subset C_n`` on random H-ball points.

    Points are drawn uniformly in the standardized ball of radius
    ``min_k r_k`` (all of it lies in H).
    """
    family._check(n)
    radius = float(np.min(family.r[:n]))
    space = TruncatedSpace(Spectrum("explicit", values=(1.0,) * n), n)
    z = sample(space, count, seed)
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    u = np.random.Generator(np.random.Philox(key=seed + 1)).random(count) ** (1.0 / n)
    pts = z * (radius * u)[:, None]
    return int(np.count_nonzero(~family.contains(space, pts)))
