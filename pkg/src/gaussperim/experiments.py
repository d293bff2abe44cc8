"""Reproducible experiment runners behind the command-line interface.

Each ``cmd_*`` function takes a :class:`RunConfig`, writes its output files
under ``config.out`` and returns the summary dictionary it wrote.  Outputs
embed the resolved configuration (without the output directory) and the
package version, and contain nothing else that varies between runs.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import asdict, dataclass, fields, is_dataclass, replace
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from . import __version__
from . import cube as cb
from .certify import divergence_rel_error, gradient_rel_error, sandwich_violations
from .errors import ConfigError
from .estimate import Estimate
from .estimators import (
    boundary_mass,
    coarea_check,
    dimension_sweep,
    log_concavity_probe,
    perimeter_coarea_fd_profile,
    perimeter_divergence,
    perimeter_divergence_profile,
    profile_verdicts,
)
from .gaussian import TruncatedSpace, sample
from .quadrature import halfspace_perimeter, perimeter_quadrature_2d
from .shapes import Ball, Ellipsoid, Halfspace, Shape, SublevelSet, ball_thresholds, parse_shape
from .spectrum import make_spectrum

COMMANDS = ("profile", "coarea", "cube", "convexity", "validate")

_DEFAULTS: dict[str, dict[str, Any]] = {
    "profile": {"shape": "ball", "levels": "0.05:4:80", "samples": 10**6},
    "coarea": {"shape": "ball", "samples": 10**8},
    "cube": {"n_max": 10**6},
    "convexity": {"shape": "ball", "level": 1.0, "t_grid": "0.2:3:15", "samples": 10**6, "eps": (0.1, 0.01, 0.001)},
    "validate": {"samples": 10**6},
}
_QUICK = {"profile": 10**5, "coarea": 10**6, "convexity": 10**5, "validate": 10**5}
_QUICK_N_MAX = 10**4
# grid bounds for coarea runs, chosen per shape so that at most ~1e-4 of u's mass is uncovered
_COAREA_GRIDS = {"ball": "0:20:2001", "ellipsoid": "0:20:2001", "halfspace": "-6:6:1201"}
# cube CSV keeps every row up to this k, then a log-spaced selection
CUBE_DENSE_ROWS = 10**4
CUBE_SPARSE_ROWS = 400


@dataclass(frozen=True)
class RunConfig:
    command: str
    shape: str | None = None
    spectrum: str = "explicit:1,1"
    dim: int | None = None
    levels: str | None = None
    samples: int | None = None
    seed: int = 0
    delta: float | None = None
    eps: tuple[float, ...] | None = None
    out: str = "."
    level: float | None = None
    t_grid: str | None = None
    sweep: tuple[int, ...] | None = None
    n_max: int | None = None
    quick: bool = False

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}; expected one of {', '.join(COMMANDS)}")
        if self.samples is not None and self.samples < 1:
            raise ConfigError("samples must be positive")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        if self.eps is not None:
            object.__setattr__(self, "eps", tuple(float(e) for e in self.eps))
        if self.sweep is not None:
            object.__setattr__(self, "sweep", tuple(int(d) for d in self.sweep))

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any], **overrides: Any) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        merged = {**data, **{k: v for k, v in overrides.items() if v is not None}}
        unknown = set(merged) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        if "command" not in merged:
            raise ConfigError("config needs a command")
        return cls(**merged)

    def resolved(self) -> "RunConfig":
        """Fill command defaults so the embedded record fully determines the run."""
        d = dict(_DEFAULTS[self.command])
        if self.quick and self.command in _QUICK:
            d["samples"] = _QUICK[self.command]
        if self.quick and self.command == "cube":
            d["n_max"] = _QUICK_N_MAX
        if self.command == "coarea":
            kind = parse_shape(self.shape or d["shape"]).kind
            d["levels"] = _COAREA_GRIDS[kind]
        updates = {k: v for k, v in d.items() if getattr(self, k) is None}
        cfg = replace(self, **updates)
        if cfg.command != "cube" and cfg.dim is None:
            spectrum_rule = make_spectrum(cfg.spectrum)
            cfg = replace(cfg, dim=spectrum_rule.length or 10)
        return cfg

    def embedded(self) -> dict[str, Any]:
        d = asdict(self)
        d.pop("out")
        return d


# -- parsing helpers ----------------------------------------------------------------


def parse_grid(text: str | Sequence[float], name: str = "levels") -> np.ndarray:
    """``"a:b:steps"`` (inclusive, ``steps`` points) or a comma list."""
    if not isinstance(text, str):
        g = np.asarray(text, dtype=float)
    elif ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError(f"{name} must look like a:b:steps, got {text!r}")
        try:
            a, b, steps = float(parts[0]), float(parts[1]), int(parts[2])
        except ValueError:
            raise ConfigError(f"bad {name} grid {text!r}") from None
        if steps < 1:
            raise ConfigError(f"{name} grid {text!r} is empty")
        if steps > 1 and not b > a:
            raise ConfigError(f"{name} grid needs a < b, got {text!r}")
        g = np.linspace(a, b, steps)
    else:
        try:
            g = np.array([float(v) for v in text.split(",") if v.strip()])
        except ValueError:
            raise ConfigError(f"bad {name} list {text!r}") from None
    if g.size == 0:
        raise ConfigError(f"{name} grid is empty")
    if not np.all(np.isfinite(g)) or np.any(np.diff(g) <= 0):
        raise ConfigError(f"{name} grid must be finite and strictly increasing")
    return g


def _space(cfg: RunConfig, dim: int | None = None) -> TruncatedSpace:
    return TruncatedSpace(make_spectrum(cfg.spectrum), int(dim or cfg.dim))


def _u_levels(shape: Shape, radii: np.ndarray) -> np.ndarray:
    """Radii map to ``u``-levels ``r**2`` for quadratic shapes, unchanged for halfspaces."""
    if isinstance(shape, Halfspace):
        return radii
    if np.any(radii <= 0):
        raise ConfigError("ball and ellipsoid radii must be positive")
    return radii * radii


def _clean(obj: Any) -> Any:
    """JSON-ready copy: numpy scalars to Python, non-finite floats to ``None``."""
    if is_dataclass(obj) and not isinstance(obj, type):
        return _clean(asdict(obj))
    if isinstance(obj, Mapping):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    return obj


def _envelope(cfg: RunConfig, body: Mapping[str, Any]) -> dict[str, Any]:
    return {"version": __version__, "config": cfg.embedded(), **body}


def _write(cfg: RunConfig, name: str, text: str) -> str:
    os.makedirs(cfg.out, exist_ok=True)
    path = os.path.join(cfg.out, name)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return path


def _write_json(cfg: RunConfig, name: str, body: Mapping[str, Any]) -> dict[str, Any]:
    doc = _clean(_envelope(cfg, body))
    _write(cfg, name, json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n")
    return doc


def _csv_header(cfg: RunConfig) -> list[str]:
    return [f"gaussperim {__version__}", "config " + json.dumps(_clean(cfg.embedded()), sort_keys=True)]


def _estimate_record(e: Estimate, **context) -> dict[str, Any]:
    return e.to_dict(**context)


# -- profile ---------------------------------------------------------------------------


def cmd_profile(cfg: RunConfig) -> dict[str, Any]:
    cfg = cfg.resolved()
    shape = parse_shape(cfg.shape)
    space = _space(cfg)
    radii = parse_grid(cfg.levels)
    levels = _u_levels(shape, radii)
    prof = perimeter_divergence_profile(shape, space, levels, cfg.samples, cfg.seed)

    body: dict[str, Any] = {
        "shape": shape.to_dict(),
        "spectrum": make_spectrum(cfg.spectrum).to_dict(),
        "n_samples": cfg.samples,
        "n_rejected": prof.estimates[0].n_rejected,
        "argmax_radius": float(radii[int(np.argmax(prof.values))]),
    }
    if isinstance(shape, Ball):
        r0, r1 = ball_thresholds(shape, space)
        body["thresholds"] = {"r0": r0, "r1": r1}
        body["verdicts"] = profile_verdicts(prof, radii, r0, r1)
    if space.n == 2:
        body["quadrature"] = [perimeter_quadrature_2d(shape, space, float(lv)).value for lv in levels]
    if cfg.sweep:
        level = 1.0 if cfg.level is None else cfg.level
        rows = dimension_sweep(shape, make_spectrum(cfg.spectrum), cfg.sweep, level, cfg.samples, cfg.seed)
        last = rows[-1]
        body["sweep"] = {
            "level": level,
            "rows": [
                {"dim": r.dim, "trace": r.trace, "value": r.estimate.value, "std_error": r.estimate.std_error,
                 "step": r.step, "step_se": r.step_se}
                for r in rows
            ],
            "cauchy": bool(len(rows) < 2 or abs(last.step) <= 3 * last.step_se),
        }
    _write(cfg, "profile.csv", prof.to_csv(_csv_header(cfg), abscissa=radii, name="r"))
    return _write_json(cfg, "profile.json", body)


# -- coarea ------------------------------------------------------------------------------


def cmd_coarea(cfg: RunConfig) -> dict[str, Any]:
    cfg = cfg.resolved()
    shape = parse_shape(cfg.shape)
    space = _space(cfg)
    grid = parse_grid(cfg.levels)
    chk = coarea_check(shape, space, grid, cfg.samples, cfg.seed)
    body = {
        "shape": shape.to_dict(),
        "spectrum": make_spectrum(cfg.spectrum).to_dict(),
        "lhs": _estimate_record(chk.lhs),
        "rhs": _estimate_record(chk.rhs),
        "difference": chk.lhs.value - chk.rhs.value,
        "difference_std_error": chk.diff_std_error,
        "quadrature_bound": chk.quadrature_bound,
        "outside_mass": chk.outside_mass,
        "tolerance": chk.tolerance,
        "verdict": "agree" if chk.agree else "disagree",
    }
    return _write_json(cfg, "coarea.json", body)


# -- cube ----------------------------------------------------------------------------------


def _cube_rows(n_max: int) -> np.ndarray:
    dense = np.arange(1, min(n_max, CUBE_DENSE_ROWS) + 1)
    if n_max <= CUBE_DENSE_ROWS:
        return dense
    sparse = np.unique(np.round(np.logspace(math.log10(CUBE_DENSE_ROWS), math.log10(n_max), CUBE_SPARSE_ROWS)).astype(int))
    return np.unique(np.concatenate([dense, sparse, [n_max]]))


def cube_summary(n_max: int, margin_range: tuple[int, int] = (10, 10**4), alpha_ms: Sequence[int] = (10, 100, 1000)) -> tuple[dict[str, Any], dict[str, np.ndarray]]:
    """Run the Hilbert-cube pipeline; returns the JSON body and the full columns."""
    fam = cb.CubeFamily.solve(n_max)
    G = cb.cube_measure_column(fam)
    P = cb.perimeter_column(fam)
    B = cb.lower_bound_column(n_max)
    a = cb.limit_lower_bound()
    dP = np.diff(P)
    dG = np.diff(G)
    nonincr = np.nonzero(dP <= 0)[0] + 2

    k_stars = {repr(tol): cb.CubeFamily.solve(n_max, tol).k_star for tol in (1e-8, 1e-10, cb.SOLVER_TOL)}
    body: dict[str, Any] = {
        "n_max": n_max,
        "solver": {"tol": fam.solver_tol, "max_residual": float(np.max(fam.residuals))},
        "k_star": fam.k_star,
        "k_star_by_tol": k_stars,
        "a_enclosure": {"lo": a.lo, "hi": a.hi, "width": a.width},
        "measure": {
            "strictly_decreasing": bool(np.all(dG < 0)),
            "lower_bound_violations": int(np.count_nonzero(G < B)),
            "above_a": bool(np.all(G >= a.lo)),
            "final": float(G[-1]),
        },
        "perimeter": {
            "strictly_increasing": bool(nonincr.size == 0),
            "non_increasing_steps": int(nonincr.size),
            "first_non_increase": int(nonincr[0]) if nonincr.size else None,
            "last_non_increase": int(nonincr[-1]) if nonincr.size else None,
            "final": float(P[-1]),
        },
        "crossings": {repr(m): n for m, n in cb.threshold_crossings(P).items()},
    }
    lo, hi = margin_range
    if hi <= n_max:
        chain = cb.perimeter_lower_bound_sum(fam, lo + 1, hi)
        gain = float(P[hi - 1] - P[lo - 1])
        body["perimeter"]["margin"] = {
            "from": lo, "to": hi, "gain": gain, "required": a.lo * chain, "holds": bool(gain > a.lo * chain),
        }
    alphas = []
    for m in alpha_ms:
        if m < n_max:
            am = cb.alpha_m(fam, m)
            alphas.append({"m": m, "partial": am.partial, "lower": am.lower, "union_bound": am.union_bound,
                           "holds": bool(1.0 - am.lower <= am.union_bound)})
    body["alpha_m"] = alphas
    body["alpha_increasing"] = bool(all(x["lower"] <= y["lower"] and x["partial"] <= y["partial"] for x, y in zip(alphas, alphas[1:])))
    verdicts = {}
    for rule in ("power:2", "log-borderline"):
        c = cb.cube_compactness(make_spectrum(rule), fam, n_max)
        verdicts[rule] = {"sum_rl": c.sum_rl, "verdict": c.verdict, "lambda_log_verdict": c.lambda_log_verdict,
                          "criteria_agree": c.criteria_agree}
    body["compactness_verdicts"] = verdicts
    body["cm_ball_violations"] = cb.cm_ball_inclusion(fam, min(n_max, 20))
    cols = {"k": fam.k, "r": fam.r, "p": fam.p, "measure": G, "perimeter": P, "bound": B}
    return body, cols


def cmd_cube(cfg: RunConfig) -> dict[str, Any]:
    cfg = cfg.resolved()
    if cfg.n_max < 1:
        raise ConfigError("n_max must be >= 1")
    body, cols = cube_summary(cfg.n_max)
    buf = io.StringIO()
    for line in _csv_header(cfg):
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["k", "r_k", "p_k", "gamma_C_k", "perimeter_C_k", "bound_k"])
    for k in _cube_rows(cfg.n_max):
        i = k - 1
        w.writerow([int(k)] + [repr(float(cols[c][i])) for c in ("r", "p", "measure", "perimeter", "bound")])
    _write(cfg, "cube.csv", buf.getvalue())
    return _write_json(cfg, "cube.json", body)


# -- convexity ---------------------------------------------------------------------------


def _convex_body(cfg: RunConfig, space: TruncatedSpace):
    """``cube:n`` gives the Hilbert cube ``C_n``; any other shape the sublevel set at ``cfg.level``."""
    text = cfg.shape.strip()
    if text.startswith("cube"):
        _, _, n = text.partition(":")
        n = int(n or space.n)
        return cb.CubeFamily.solve(n).body(n), None
    shape = parse_shape(text)
    return SublevelSet(shape, float(cfg.level)), shape


def cmd_convexity(cfg: RunConfig) -> dict[str, Any]:
    cfg = cfg.resolved()
    space = _space(cfg)
    body_set, shape = _convex_body(cfg, space)
    t = parse_grid(cfg.t_grid, "t-grid")
    rep = log_concavity_probe(body_set, space, t, cfg.samples, cfg.seed)
    body: dict[str, Any] = {
        "body": cfg.shape,
        "level": cfg.level,
        "concavity": {"rows": rep.rows, "verdict": "pass" if rep.verdict else "fail", "vacuous": rep.vacuous},
    }
    if shape is not None:
        masses = boundary_mass(shape, space, float(cfg.level), cfg.eps, cfg.samples, cfg.seed)
        vals = [m.value for m in masses]
        order = np.argsort(cfg.eps)[::-1]
        body["boundary_mass"] = {
            "rows": [{"eps": e, "mass": m.value, "std_error": m.std_error, "density": m.value / (2 * e)}
                     for e, m in zip(cfg.eps, masses)],
            "decreasing": bool(all(vals[i] >= vals[j] for i, j in zip(order, order[1:]))),
        }
    return _write_json(cfg, "convexity.json", body)


# -- validate ------------------------------------------------------------------------------


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str


def _validation_spaces() -> list[TruncatedSpace]:
    return [TruncatedSpace("explicit:1,0.5", 2), TruncatedSpace("power:2", 10)]


def default_validation_shapes(n: int) -> list[Shape]:
    c = np.linspace(0.3, -0.2, n)
    return [Ball(center=c), Ellipsoid(t=np.linspace(1.0, 0.3, n), center=0.5 * c), Halfspace(a=np.linspace(1.0, -1.0, n))]


def validation_matrix(
    samples: int,
    seed: int = 0,
    quick: bool = False,
    shapes: Callable[[int], list[Shape]] = default_validation_shapes,
) -> list[Check]:
    """Run the invariant suite.  ``shapes`` builds the shapes for an ``n``-dimensional space.

    Quick mode divides sample counts by ten and widens the statistical
    bands from 3 (4 for the zero-mean test) to 4 (5) standard errors.
    """
    k_agree, k_zero = (4.0, 5.0) if quick else (3.0, 4.0)
    out: list[Check] = []

    for space in _validation_spaces():
        tag = f"n={space.n}"
        pts = sample(space, 100, seed + 1)
        field_pts = sample(space, 10**4 if quick else 10**5, seed + 2)
        for sh in shapes(space.n):
            g = gradient_rel_error(sh, space, pts)
            out.append(Check(f"gradient-fd/{sh.kind}/{tag}", g <= 1e-6, f"max rel err {g:.2e} (tol 1e-6)"))
            d = divergence_rel_error(sh, space, pts)
            out.append(Check(f"divergence-fd/{sh.kind}/{tag}", d <= 1e-4, f"max rel err {d:.2e} (tol 1e-4)"))
            if isinstance(sh, Ball):
                v = sandwich_violations(sh, space, field_pts)
                out.append(Check(f"sandwich/{sh.kind}/{tag}", v == 0, f"{v} violations in {field_pts.shape[0]} points"))
        for sh in shapes(space.n):
            if isinstance(sh, Ellipsoid):
                continue
            e = perimeter_divergence(sh, space, math.inf, samples, seed + 3)
            ok = abs(e.value) < k_zero * e.std_error
            out.append(Check(f"zero-mean-divergence/{sh.kind}/{tag}", ok,
                             f"mean {e.value:.3e}, {k_zero:g} se = {k_zero * e.std_error:.3e}"))

    std2 = TruncatedSpace("explicit:1,1", 2)
    for name, sh, level in (("halfspace", Halfspace(), 0.0), ("ball", Ball(), 1.0),
                            ("ellipse", Ellipsoid(t=(1.0, 0.5), center=(0.2, 0.0)), 1.0)):
        ref = perimeter_quadrature_2d(sh, std2, level)
        div = perimeter_divergence(sh, std2, level, samples, seed + 4)
        prof = perimeter_coarea_fd_profile(sh, std2, [level], 0.01, samples, seed + 4)
        fd, bias = prof.estimates[0], prof.extras["bias"][0]
        out.append(Check(f"agreement/divergence-vs-quadrature/{name}", div.agrees_with(ref, k_agree, ref.std_error),
                         f"{div.value:.5f} +- {div.std_error:.1e} vs {ref.value:.5f}"))
        out.append(Check(f"agreement/coarea-fd-vs-quadrature/{name}", fd.agrees_with(ref, k_agree, ref.std_error + bias),
                         f"{fd.value:.5f} +- {fd.std_error:.1e} vs {ref.value:.5f}"))
        out.append(Check(f"agreement/divergence-vs-coarea-fd/{name}", div.agrees_with(fd, k_agree, bias),
                         f"diff {div.value - fd.value:.2e}"))
    h = Halfspace()
    closed = halfspace_perimeter(h, std2, 0.0)
    quad = perimeter_quadrature_2d(h, std2, 0.0).value
    out.append(Check("oracle/halfspace-closed-form-vs-quadrature", abs(closed - quad) <= 1e-10, f"diff {closed - quad:.1e}"))
    return out


def format_matrix(checks: Sequence[Check]) -> str:
    width = max(len(c.name) for c in checks)
    lines = [f"{'PASS' if c.passed else 'FAIL'}  {c.name:<{width}}  {c.detail}" for c in checks]
    failed = sum(not c.passed for c in checks)
    lines.append(f"{len(checks) - failed}/{len(checks)} checks passed")
    return "\n".join(lines) + "\n"


def cmd_validate(cfg: RunConfig, shapes: Callable[[int], list[Shape]] = default_validation_shapes) -> dict[str, Any]:
    cfg = cfg.resolved()
    checks = validation_matrix(cfg.samples, cfg.seed, cfg.quick, shapes)
    body = {"checks": [asdict(c) for c in checks], "passed": all(c.passed for c in checks)}
    body["matrix"] = format_matrix(checks)
    if cfg.out != ".":
        _write_json(cfg, "validate.json", {k: v for k, v in body.items() if k != "matrix"})
    return body


RUNNERS: dict[str, Callable[[RunConfig], dict[str, Any]]] = {
    "profile": cmd_profile,
    "coarea": cmd_coarea,
    "cube": cmd_cube,
    "convexity": cmd_convexity,
    "validate": cmd_validate,
}


def run(cfg: RunConfig) -> dict[str, Any]:
    return RUNNERS[cfg.command](cfg)
