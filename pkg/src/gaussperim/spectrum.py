"""Covariance spectra of diagonal Gaussian measures.

A spectrum is the non-increasing sequence of covariance eigenvalues
``lambda_1 >= lambda_2 >= ... > 0``.  Four rules are supported:

* ``explicit``        a finite list of values
* ``power``           ``lambda_j = j**-alpha`` with ``alpha > 1``
* ``geometric``       ``lambda_j = q**j`` with ``0 < q < 1``
* ``log-borderline``  ``lambda_j = 1 / (j log(j)**2)`` for ``j >= 2`` and
  ``lambda_1 = lambda_2``; trace class, yet ``sum lambda_j log j`` diverges.

Each infinite rule carries an analytic bound on the tail of
``sum_j lambda_j log j`` so that compactness verdicts never rest on
numerical extrapolation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Any, Mapping

import numpy as np
from scipy.special import zeta

from .errors import ConfigError

#: Smallest admissible eigenvalue; standardization divides by sqrt(lambda_j).
EIGENVALUE_FLOOR = 1e-300

KINDS = ("explicit", "power", "geometric", "log-borderline")


@dataclass(frozen=True)
class Spectrum:
    kind: str
    alpha: float | None = None
    q: float | None = None
    values: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown spectrum kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "power":
            if self.alpha is None or not math.isfinite(self.alpha) or self.alpha <= 1:
                raise ConfigError(f"power-law spectrum needs alpha > 1 (trace diverges), got {self.alpha}")
        elif self.kind == "geometric":
            if self.q is None or not 0 < self.q < 1:
                raise ConfigError(f"geometric spectrum needs 0 < q < 1, got {self.q}")
        elif self.kind == "explicit":
            if not self.values:
                raise ConfigError("explicit spectrum needs at least one value")
            vals = tuple(float(v) for v in self.values)
            object.__setattr__(self, "values", vals)
            for v in vals:
                if not math.isfinite(v) or v <= 0:
                    raise ConfigError(f"eigenvalues must be positive and finite, got {v}")
                if v < EIGENVALUE_FLOOR:
                    raise ConfigError(f"eigenvalue {v} below floor {EIGENVALUE_FLOOR}")
            if any(b > a for a, b in zip(vals, vals[1:])):
                raise ConfigError("eigenvalues must be non-increasing")

    # -- evaluation ---------------------------------------------------------

    @property
    def length(self) -> int | None:
        """Number of available eigenvalues, ``None`` for infinite rules."""
        return len(self.values) if self.kind == "explicit" else None

    def eigenvalues(self, n: int) -> np.ndarray:
        """Return ``lambda_1 .. lambda_n`` as a float array."""
        lam = self.series_terms(n)
        if lam[-1] < EIGENVALUE_FLOOR:
            raise ConfigError(f"lambda_{n} = {lam[-1]:.3g} is below the floor {EIGENVALUE_FLOOR}")
        return lam

    def series_terms(self, n: int) -> np.ndarray:
        """``lambda_1 .. lambda_n`` without the floor check (terms may underflow to 0).

        For series sums only; never standardize with these.
        """
        if n < 1:
            raise ConfigError(f"dimension must be >= 1, got {n}")
        if self.kind == "explicit":
            if n > len(self.values):
                raise ConfigError(f"explicit spectrum has {len(self.values)} values, {n} requested")
            lam = np.array(self.values[:n], dtype=float)
        else:
            j = np.arange(1, n + 1, dtype=float)
            if self.kind == "power":
                lam = j ** -self.alpha
            elif self.kind == "geometric":
                lam = self.q ** j
            else:
                jj = np.maximum(j, 2.0)
                lam = 1.0 / (jj * np.log(jj) ** 2)
        return lam

    def __getitem__(self, j: int) -> float:
        if j < 1:
            raise IndexError("eigenvalues are indexed from 1")
        return float(self.eigenvalues(j)[-1])

    @property
    def embedding_constant(self) -> float:
        """``c_H = sqrt(lambda_1)``: the norm of the embedding of H into X."""
        return math.sqrt(self[1])

    @property
    def total_trace(self) -> float:
        """Trace of the untruncated covariance."""
        if self.kind == "explicit":
            return math.fsum(self.values)
        if self.kind == "power":
            return float(zeta(self.alpha))
        if self.kind == "geometric":
            return self.q / (1.0 - self.q)
        # tail past 10**6 approximated by the midpoint integral 1/log(n + 1/2)
        n = 10**6
        return math.fsum(self.eigenvalues(n)) + 1.0 / math.log(n + 0.5)

    # -- tail bounds for sum_j lambda_j log j ---------------------------------

    def lambda_log_tail_bound(self, n: int) -> float:
        """Upper bound on ``sum_{j > n} lambda_j log j``.

        ``inf`` when no finite bound is known (divergent rule, or a ratio
        test that has not kicked in yet).  Explicit spectra have no tail.
        """
        if self.kind == "explicit":
            return 0.0
        if self.kind == "power":
            # x**-a log x is decreasing for x > e**(1/a); integral comparison from n >= 3
            a = self.alpha
            if n < 3:
                return math.inf
            return n ** (1.0 - a) * (math.log(n) / (a - 1.0) + 1.0 / (a - 1.0) ** 2)
        if self.kind == "geometric":
            if n < 2:
                return math.inf
            ratio = self.q * math.log(n + 2) / math.log(n + 1)
            if ratio >= 1:
                return math.inf
            return self.q ** (n + 1) * math.log(n + 1) / (1.0 - ratio)
        return math.inf

    def lambda_log_partial_lower_bound(self, n: int) -> float:
        """Analytic lower bound on ``sum_{2 <= j <= n} lambda_j log j``.

        Only informative for the divergent rule, where it grows like
        ``log log n``; other rules return 0.
        """
        if self.kind != "log-borderline" or n < 2:
            return 0.0
        return math.log(math.log(n + 1)) - math.log(math.log(2))

    @property
    def lambda_log_diverges(self) -> bool:
        return self.kind == "log-borderline"

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"kind": self.kind}
        if self.kind == "power":
            d["alpha"] = self.alpha
        elif self.kind == "geometric":
            d["q"] = self.q
        elif self.kind == "explicit":
            d["values"] = list(self.values)
        return d

    def __str__(self) -> str:
        if self.kind == "power":
            return f"power:{self.alpha!r}"
        if self.kind == "geometric":
            return f"geometric:{self.q!r}"
        if self.kind == "explicit":
            return "explicit:" + ",".join(repr(v) for v in self.values)
        return "log-borderline"


def make_spectrum(rule: str | Mapping[str, Any] | Spectrum) -> Spectrum:
    """Build a spectrum from a rule.

    Accepted forms: a mapping ``{"kind": ..., "alpha"|"q"|"values": ...}``,
    its JSON text, or the compact strings ``"explicit:1,1"``,
    ``"power:2"``, ``"geometric:0.5"``, ``"log-borderline"``.
    """
    if isinstance(rule, Spectrum):
        return rule
    if isinstance(rule, str):
        text = rule.strip()
        if text.startswith("{"):
            try:
                rule = json.loads(text)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"bad spectrum JSON: {exc}") from None
        else:
            return _parse_compact(text)
    if not isinstance(rule, Mapping) or "kind" not in rule:
        raise ConfigError(f"spectrum rule must name a kind, got {rule!r}")
    kind = rule["kind"]
    try:
        if kind == "power":
            return Spectrum("power", alpha=float(rule["alpha"]))
        if kind == "geometric":
            return Spectrum("geometric", q=float(rule["q"]))
        if kind == "explicit":
            return Spectrum("explicit", values=tuple(float(v) for v in rule["values"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad spectrum rule {dict(rule)!r}: {exc}") from None
    return Spectrum(kind)


def _parse_compact(text: str) -> Spectrum:
    kind, _, arg = text.partition(":")
    kind = kind.strip()
    try:
        if kind == "power":
            return Spectrum("power", alpha=float(arg))
        if kind == "geometric":
            return Spectrum("geometric", q=float(arg))
        if kind == "explicit":
            return Spectrum("explicit", values=tuple(float(v) for v in arg.split(",") if v.strip()))
    except ValueError as exc:
        raise ConfigError(f"bad spectrum {text!r}: {exc}") from None
    if arg:
        raise ConfigError(f"spectrum kind {kind!r} takes no parameters")
    return Spectrum(kind)


def trace(spectrum: Spectrum, n: int) -> float:
    """Partial trace ``sum_{j <= n} lambda_j``, correctly rounded."""
    return math.fsum(spectrum.eigenvalues(n))


@dataclass(frozen=True)
class CompactnessReport:
    partial_sum: float
    tail_bound: float
    verdict: str  # "converging" | "diverging" | "inconclusive"


def check_compactness(spectrum: Spectrum, n_max: int, tol: float = 1e-2) -> CompactnessReport:
    """Decide whether ``sum_j lambda_j log j`` converges.

    The verdict is ``converging`` when the rule's analytic tail bound past
    ``n_max`` is below ``tol``, ``diverging`` when the rule has an unbounded
    analytic lower bound, and ``inconclusive`` otherwise (including every
    explicit list, which says nothing about the infinite tail).
    """
    if n_max < 2:
        raise ConfigError("check_compactness needs n_max >= 2")
    n_eff = n_max if spectrum.length is None else min(n_max, spectrum.length)
    if n_eff < 2:
        partial = 0.0
    else:
        lam = spectrum.series_terms(n_eff)
        j = np.arange(2, n_eff + 1, dtype=float)
        partial = math.fsum(lam[1:] * np.log(j))
    if spectrum.kind == "explicit":
        return CompactnessReport(partial, 0.0, "inconclusive")
    if spectrum.lambda_log_diverges:
        return CompactnessReport(partial, math.inf, "diverging")
    tail = spectrum.lambda_log_tail_bound(n_max)
    verdict = "converging" if tail < tol else "inconclusive"
    return CompactnessReport(partial, tail, verdict)
