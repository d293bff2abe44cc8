"""Result records for estimators."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Sequence

import numpy as np

from .errors import ConfigError

METHODS = ("divergence", "coarea-fd", "surface-quadrature", "analytic", "mc-measure")
#: Runs rejecting at least this fraction of draws are invalid.
MAX_REJECTION_RATE = 1e-3


@dataclass(frozen=True)
class Estimate:
    value: float
    std_error: float
    n_samples: int
    n_rejected: int
    method: str
    seed: int | None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method tag {self.method!r}")
        if not self.std_error >= 0:
            raise ValueError(f"std_error must be >= 0, got {self.std_error}")

    @property
    def valid(self) -> bool:
        return not self.n_samples or self.n_rejected / self.n_samples < MAX_REJECTION_RATE

    def agrees_with(self, other: "Estimate | float", k: float = 3.0, slack: float = 0.0) -> bool:
        """``|self - other| <= k * combined std_error + slack``."""
        if isinstance(other, Estimate):
            se = math.hypot(self.std_error, other.std_error)
            other = other.value
        else:
            se = self.std_error
        return abs(self.value - other) <= k * se + slack

    def to_dict(self, **context: Any) -> dict[str, Any]:
        d = asdict(self)
        d.update(context)
        return d


@dataclass(frozen=True)
class Profile:
    """Estimates along a strictly increasing grid of levels.

    ``step_std_errors[i]`` is the standard error of ``value[i+1] - value[i]``
    under common random numbers, when the estimator provides it.
    """

    levels: tuple[float, ...]
    estimates: tuple[Estimate, ...]
    step_std_errors: tuple[float, ...] | None = None
    extras: dict[str, tuple[float, ...]] = field(default_factory=dict)

    def __post_init__(self):
        if len(self.levels) != len(self.estimates):
            raise ConfigError("levels and estimates must align")
        if any(b <= a for a, b in zip(self.levels, self.levels[1:])):
            raise ConfigError("profile levels must be strictly increasing")

    @property
    def values(self) -> np.ndarray:
        return np.array([e.value for e in self.estimates])

    @property
    def std_errors(self) -> np.ndarray:
        return np.array([e.std_error for e in self.estimates])

    def to_csv(self, header: Sequence[str] = (), abscissa: Sequence[float] | None = None, name: str = "r") -> str:
        """CSV text with columns ``(name, value, std_error)``; ``header`` lines become ``#`` comments."""
        buf = io.StringIO()
        for line in header:
            buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([name, "value", "std_error"])
        xs = self.levels if abscissa is None else abscissa
        for x, e in zip(xs, self.estimates):
            w.writerow([repr(float(x)), repr(e.value), repr(e.std_error)])
        return buf.getvalue()
