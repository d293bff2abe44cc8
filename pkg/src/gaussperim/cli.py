"""``gaussperim`` command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 invariant failure,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import Sequence

from . import __version__
from .errors import ConfigError, CoverageError, DegenerateGradientError, NumericalFailure
from .experiments import COMMANDS, RunConfig, run

EXIT_OK, EXIT_CONFIG, EXIT_INVARIANT, EXIT_NUMERICAL = 0, 2, 3, 4

_HELP = {
    "profile": "perimeter profile r -> P({u < r}) of a ball, ellipsoid or halfspace",
    "coarea": "compare E|grad_H u| with the integral of the perimeter profile",
    "cube": "thresholds, measures and perimeters of the Hilbert cube",
    "convexity": "log-concavity of t -> gamma(tC) and boundary mass near the level",
    "validate": "run the invariant suite and print a pass/fail matrix",
}


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _add_common(p: argparse.ArgumentParser) -> None:
    # defaults are None so that a --config file is only overridden by flags actually given
    p.add_argument("--config", help="JSON file with RunConfig fields; flags override it")
    p.add_argument("--shape", help='e.g. "ball", "ball:center=0.5,0", "ellipsoid:t=1,0.5", "halfspace:a=1,0"')
    p.add_argument("--spectrum", help='e.g. "explicit:1,1", "power:2", "geometric:0.5", "log-borderline"')
    p.add_argument("--dim", type=int, help="truncation dimension n")
    p.add_argument("--levels", help="level grid a:b:steps or a comma list (radii for profile)")
    p.add_argument("--samples", type=int, help="Monte Carlo sample count")
    p.add_argument("--seed", type=int)
    p.add_argument("--delta", type=float, help="coarea finite-difference half-width")
    p.add_argument("--eps", type=_floats, help="slab half-widths for the boundary-mass probe")
    p.add_argument("--out", help="output directory (default: current directory)")
    p.add_argument("--level", type=float, help="u-level of the convex body / sweep level")
    p.add_argument("--t-grid", dest="t_grid", help="dilation grid a:b:steps for the log-concavity probe")
    p.add_argument("--sweep", type=_ints, help="comma list of dimensions for a dimension sweep")
    p.add_argument("--n-max", dest="n_max", type=int, help="number of cube coordinates")
    p.add_argument("--quick", action="store_true", default=None, help="reduced sample counts, wider bands")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gaussperim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        _add_common(sub.add_parser(name, help=_HELP[name], description=_HELP[name]))
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    base = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                base = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(base, dict):
            raise ConfigError("config file must hold a JSON object")
        if base.get("command", args.command) != args.command:
            raise ConfigError(f"config is for {base['command']!r}, not {args.command!r}")
    flags = {k: v for k, v in vars(args).items() if k != "config"}
    return RunConfig.from_mapping(base, **flags)


def _status(cfg: RunConfig, result: dict) -> int:
    if cfg.command == "validate":
        return EXIT_OK if result["passed"] else EXIT_INVARIANT
    if cfg.command == "coarea":
        return EXIT_OK if result["verdict"] == "agree" else EXIT_INVARIANT
    if cfg.command == "convexity":
        return EXIT_OK if result["concavity"]["verdict"] == "pass" else EXIT_INVARIANT
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
        result = run(cfg)
    except CoverageError as exc:
        print(f"coverage error: {exc} (outside mass {exc.outside_mass})", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalFailure, DegenerateGradientError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    if cfg.command == "validate":
        sys.stdout.write(result["matrix"])
    else:
        summary = {k: result[k] for k in ("verdict", "verdicts", "lhs", "rhs", "k_star", "a_enclosure") if k in result}
        if "concavity" in result:
            summary["concavity"] = result["concavity"]["verdict"]
        print(json.dumps(summary, sort_keys=True))
    return _status(cfg, result)


if __name__ == "__main__":
    sys.exit(main())
