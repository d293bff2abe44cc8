"""Level-set functions with their Cameron-Martin gradients and curvature fields.

Three analytic families, all in natural coordinates of a truncated space:

* ``Ball``:       ``u(x) = ||x - x0||**2``
* ``Ellipsoid``:  ``u(x) = ||T(x - x0)||**2`` with ``T = diag(t)``
* ``Halfspace``:  ``u(x) = <x, a>``

For each, the H-gradient is expressed in the h-basis (``d_{h_j} u =
sqrt(lambda_j) du/dx_j``) and ``div_nu`` is the Gaussian divergence
``sum_j (d_{h_j} nu_j - x_j nu_j / sqrt(lambda_j))`` of the unit normal
``nu = grad_H u / |grad_H u|_H``, evaluated in closed form.

All evaluation methods are vectorised over a leading batch axis.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Any, Mapping, NamedTuple

import numpy as np

from .errors import ConfigError, DegenerateGradientError
from .gaussian import TruncatedSpace, cm_norm

#: Points with ``<Q(x - x0), x - x0>`` (or its ellipsoid analogue) below this are rejected.
DEGENERACY_THRESHOLD = 1e-24


class Field(NamedTuple):
    """Pointwise quantities needed by the estimators."""

    u: np.ndarray
    grad_norm: np.ndarray
    div_nu: np.ndarray
    degenerate: np.ndarray


class CurvatureSample(NamedTuple):
    point: np.ndarray
    u_value: float
    grad_h: np.ndarray
    grad_norm: float
    div_nu: float


def _vec(v, name) -> tuple[float, ...] | None:
    if v is None:
        return None
    arr = np.atleast_1d(np.asarray(v, dtype=float))
    if arr.ndim != 1 or not np.all(np.isfinite(arr)):
        raise ConfigError(f"{name} must be a finite vector")
    return tuple(float(a) for a in arr)


def _fit(v: tuple[float, ...] | None, n: int, name: str, fill: float = 0.0) -> np.ndarray:
    """Vector ``v`` as an array of length ``n``; ``None`` means all ``fill``."""
    if v is None:
        return np.full(n, fill)
    if len(v) != n:
        raise ConfigError(f"{name} has length {len(v)}, space has dimension {n}")
    return np.array(v)


class Shape:
    kind: str

    def u(self, x) -> np.ndarray:
        raise NotImplementedError

    def grad_h(self, space: TruncatedSpace, x) -> np.ndarray:
        raise NotImplementedError

    def field(self, space: TruncatedSpace, x) -> Field:
        raise NotImplementedError

    def nu_h(self, space: TruncatedSpace, x) -> np.ndarray:
        g = self.grad_h(space, x)
        return g / cm_norm(g)[..., None] if g.ndim > 1 else g / cm_norm(g)

    def div_nu(self, space: TruncatedSpace, x) -> np.ndarray:
        f = self.field(space, x)
        if np.any(f.degenerate):
            raise DegenerateGradientError(f"{self.kind}: gradient vanishes at a query point")
        return f.div_nu

    def curvature(self, space: TruncatedSpace, x) -> CurvatureSample:
        x = space.check_points(x)
        if x.ndim != 1:
            raise ConfigError("curvature() takes a single point")
        g = self.grad_h(space, x)
        return CurvatureSample(x, float(self.u(x)), g, cm_norm(g), float(self.div_nu(space, x)))

    def essential_infimum(self) -> float:
        return -math.inf

    def to_dict(self) -> dict[str, Any]:
        raise NotImplementedError


@dataclass(frozen=True)
class Ball(Shape):
    center: tuple[float, ...] | None = None
    kind = "ball"

    def __post_init__(self):
        object.__setattr__(self, "center", _vec(self.center, "center"))

    def center_in(self, space: TruncatedSpace) -> np.ndarray:
        return _fit(self.center, space.n, "center")

    def u(self, x):
        x = np.asarray(x, dtype=float)
        d = x - _fit(self.center, x.shape[-1], "center")
        return np.sum(d * d, axis=-1)

    def grad_h(self, space, x):
        x = space.check_points(x)
        return 2.0 * space.sqrt_lam * (x - self.center_in(space))

    def field(self, space, x):
        x = space.check_points(x)
        lam = space.lam
        d = x - self.center_in(space)
        u = np.sum(d * d, axis=-1)
        qdd = np.sum(lam * d * d, axis=-1)
        degenerate = qdd < DEGENERACY_THRESHOLD
        s = np.sqrt(np.where(degenerate, 1.0, qdd))
        qd2 = np.sum((lam * d) ** 2, axis=-1)
        xd = np.sum(x * d, axis=-1)
        # Tr Q - ||d||^2 - <d, x0> = Tr Q - <x, d>
        div = (space.trace - xd) / s - qd2 / (s * s * s)
        div = np.where(degenerate, np.nan, div)
        return Field(u, 2.0 * np.sqrt(qdd), div, degenerate)

    def essential_infimum(self):
        return 0.0

    def to_dict(self):
        return {"kind": "ball", "center": None if self.center is None else list(self.center)}


@dataclass(frozen=True)
class Ellipsoid(Shape):
    t: tuple[float, ...] = ()
    center: tuple[float, ...] | None = None
    kind = "ellipsoid"

    def __post_init__(self):
        t = _vec(self.t, "t")
        if not t or any(tk < 0 for tk in t) or not any(tk > 0 for tk in t):
            raise ConfigError("ellipsoid needs t_k >= 0 with at least one t_k > 0")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "center", _vec(self.center, "center"))

    def center_in(self, space):
        return _fit(self.center, space.n, "center")

    def u(self, x):
        x = np.asarray(x, dtype=float)
        n = x.shape[-1]
        d = _fit(self.t, n, "t") * (x - _fit(self.center, n, "center"))
        return np.sum(d * d, axis=-1)

    def grad_h(self, space, x):
        x = space.check_points(x)
        w = _fit(self.t, space.n, "t") ** 2
        return 2.0 * space.sqrt_lam * w * (x - self.center_in(space))

    def field(self, space, x):
        x = space.check_points(x)
        lam = space.lam
        w = _fit(self.t, space.n, "t") ** 2
        d = x - self.center_in(space)
        wd = w * d
        u = np.sum(wd * d, axis=-1)
        s2 = np.sum(lam * wd * wd, axis=-1)
        degenerate = s2 < DEGENERACY_THRESHOLD
        s = np.sqrt(np.where(degenerate, 1.0, s2))
        tr_qw = math.fsum(lam * w)
        curv = np.sum(lam * lam * w * wd * wd, axis=-1)
        div = (tr_qw - np.sum(x * wd, axis=-1)) / s - curv / (s * s * s)
        div = np.where(degenerate, np.nan, div)
        return Field(u, 2.0 * np.sqrt(s2), div, degenerate)

    def essential_infimum(self):
        return 0.0

    def to_dict(self):
        return {
            "kind": "ellipsoid",
            "t": list(self.t),
            "center": None if self.center is None else list(self.center),
        }


@dataclass(frozen=True)
class Halfspace(Shape):
    a: tuple[float, ...] = (1.0,)
    kind = "halfspace"

    def __post_init__(self):
        a = _vec(self.a, "a")
        if not a or not any(v != 0 for v in a):
            raise ConfigError("halfspace normal a must be non-zero")
        object.__setattr__(self, "a", a)

    def normal_in(self, n: int) -> np.ndarray:
        """``a`` zero-padded to dimension ``n``."""
        if len(self.a) > n:
            raise ConfigError(f"halfspace normal has length {len(self.a)}, space has dimension {n}")
        out = np.zeros(n)
        out[: len(self.a)] = self.a
        return out

    def scale(self, space: TruncatedSpace) -> float:
        """``<Qa, a>**(1/2)``: the constant H-norm of the gradient."""
        a = self.normal_in(space.n)
        return math.sqrt(math.fsum(space.lam * a * a))

    def u(self, x):
        x = np.asarray(x, dtype=float)
        return x @ self.normal_in(x.shape[-1])

    def grad_h(self, space, x):
        x = space.check_points(x)
        return np.broadcast_to(space.sqrt_lam * self.normal_in(space.n), x.shape).copy()

    def field(self, space, x):
        x = space.check_points(x)
        s = self.scale(space)
        u = x @ self.normal_in(space.n)
        return Field(u, np.full_like(u, s), -u / s, np.zeros(u.shape, dtype=bool))

    def to_dict(self):
        return {"kind": "halfspace", "a": list(self.a)}


@dataclass(frozen=True)
class SublevelSet:
    """The open set ``{u < level}``, used as a convex body."""

    shape: Shape
    level: float

    def contains(self, space: TruncatedSpace, x) -> np.ndarray:
        return self.shape.u(space.check_points(x)) < self.level

    def to_dict(self):
        return {"shape": self.shape.to_dict(), "level": self.level}


# -- module-level API ---------------------------------------------------------


def eval_u(shape: Shape, x) -> np.ndarray:
    return shape.u(x)


def grad_H(shape: Shape, space: TruncatedSpace, x) -> np.ndarray:
    return shape.grad_h(space, x)


def div_nu(shape: Shape, space: TruncatedSpace, x) -> np.ndarray:
    return shape.div_nu(space, x)


def ball_thresholds(shape: Ball, space: TruncatedSpace) -> tuple[float, float]:
    """Radii ``(r0, r1)``: curvature is >= 0 inside ``r0`` and <= 0 outside ``r1``."""
    if not isinstance(shape, Ball):
        raise ConfigError("ball_thresholds needs a ball")
    c = float(np.linalg.norm(shape.center_in(space)))
    tr = space.trace
    r0 = (-c + math.sqrt(c * c + 4.0 * max(tr - space.lambda_max, 0.0))) / 2.0
    r1 = (c + math.sqrt(c * c + 4.0 * tr)) / 2.0
    return r0, r1


def div_nu_bounds(shape: Ball, space: TruncatedSpace, x) -> tuple[np.ndarray, np.ndarray]:
    """Pointwise bracket ``lo <= div_nu(x) <= hi`` for balls."""
    if not isinstance(shape, Ball):
        raise ConfigError("div_nu_bounds needs a ball")
    x = space.check_points(x)
    x0 = shape.center_in(space)
    d = x - x0
    qdd = np.sum(space.lam * d * d, axis=-1)
    if np.any(qdd < DEGENERACY_THRESHOLD):
        raise DegenerateGradientError("ball: gradient vanishes at a query point")
    s = np.sqrt(qdd)
    r = np.sqrt(np.sum(d * d, axis=-1))
    c = float(np.linalg.norm(x0))
    tr = space.trace
    lo = (tr - r * r - c * r - space.lambda_max) / s
    hi = (tr - r * r + c * r) / s
    return lo, hi


# -- serialization ------------------------------------------------------------


def shape_from_dict(d: Mapping[str, Any]) -> Shape:
    kind = d.get("kind")
    if kind == "ball":
        return Ball(center=d.get("center"))
    if kind == "ellipsoid":
        if "t" not in d:
            raise ConfigError("ellipsoid needs a t-vector")
        return Ellipsoid(t=d["t"], center=d.get("center"))
    if kind == "halfspace":
        return Halfspace(a=d.get("a", (1.0,)))
    raise ConfigError(f"unknown shape kind {kind!r}")


def parse_shape(text: str | Mapping[str, Any] | Shape) -> Shape:
    """Parse ``"ball"``, ``"ball:center=0.5,0"``, ``"ellipsoid:t=1,0.5;center=0,0"``,
    ``"halfspace:a=1,0"``, or the equivalent JSON object."""
    if isinstance(text, Shape):
        return text
    if isinstance(text, Mapping):
        return shape_from_dict(text)
    text = text.strip()
    if text.startswith("{"):
        try:
            return shape_from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"bad shape JSON: {exc}") from None
    kind, _, rest = text.partition(":")
    d: dict[str, Any] = {"kind": kind.strip()}
    for item in filter(None, (p.strip() for p in rest.split(";"))):
        key, eq, val = item.partition("=")
        if not eq:
            raise ConfigError(f"bad shape field {item!r}; expected key=v1,v2,...")
        try:
            d[key.strip()] = [float(v) for v in val.split(",")]
        except ValueError:
            raise ConfigError(f"bad numbers in shape field {item!r}") from None
    return shape_from_dict(d)
