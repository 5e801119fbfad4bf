"""Command-line front end.

Two subcommands:

* ``solve`` — assemble and solve one problem over a mesh sweep, emitting a
  CSV report (and optionally an SVG convergence plot and a rule dump);
* ``quadbench`` — the quadrature-error table for the singular rules.

All failures exit nonzero after printing a machine-readable JSON error
record to stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .bench import (
    QUAD_FAMILIES,
    RunConfig,
    run_convergence,
    run_quad_bench,
    run_solve,
    write_convergence_svg,
    write_csv,
)
from .errors import UsageError, WqbemError
from .problems import PROBLEM_NAMES

__all__ = ["main", "build_parser"]


def _parse_h(text: str) -> int:
    """Mesh flag: '1/k' (element width over a unit-like interval) or
    a plain element count."""
    text = text.strip()
    if "/" in text:
        num, den = text.split("/", 1)
        if int(num) != 1:
            raise UsageError(f"mesh width must be 1/k, got '{text}'")
        return int(den)
    return int(text)


def _parse_int_list(text: str) -> list[int]:
    """'2:5' (inclusive range) or '10,20,40' (explicit list)."""
    text = text.strip()
    if ":" in text:
        lo, hi = (int(p) for p in text.split(":", 1))
        if hi < lo:
            raise UsageError(f"empty range '{text}'")
        return list(range(lo, hi + 1))
    return [int(p) for p in text.split(",") if p]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wqbem",
        description="Galerkin BEM benchmarks with weighted quadrature",
    )
    parser.add_argument(
        "--config",
        type=Path,
        help="JSON file whose keys mirror the subcommand flags "
        "(command-line flags take precedence)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("solve", help="assemble + solve + error report")
    sp.add_argument("--problem", choices=PROBLEM_NAMES)
    sp.add_argument("--degree", help="spline degree(s), e.g. 2 or 2:5")
    sp.add_argument("--h", dest="h", help="element width 1/k (or count k); "
                    "comma/range lists sweep the mesh")
    sp.add_argument("--nref", type=int)
    sp.add_argument("--strategy", choices=("weighted", "element"))
    sp.add_argument("--ng", type=int, help="baseline far-pair Gauss order")
    sp.add_argument("--out", type=Path, help="output directory")
    sp.add_argument("--dump-rules", action="store_true",
                    help="embed nodes and rule weights in the report")
    sp.add_argument("--svg", action="store_true",
                    help="also write a log-log convergence plot")

    qp = sub.add_parser("quadbench", help="singular-rule error table")
    qp.add_argument("--degrees", help="e.g. 2:5")
    qp.add_argument("--nh", help="e.g. 10,20,40,80,100")
    qp.add_argument("--nref", type=int)
    qp.add_argument("--families",
                    help=f"comma list among {','.join(QUAD_FAMILIES)}")
    qp.add_argument("--out", type=Path, help="output directory")
    return parser


_DEFAULTS = {
    "solve": {
        "problem": "parabola",
        "degree": "2",
        "h": "1/10",
        "nref": 1,
        "strategy": "weighted",
        "ng": 12,
        "out": Path("."),
    },
    "quadbench": {
        "degrees": "2:5",
        "nh": "10,20,40,80,100",
        "nref": 2,
        "families": ",".join(QUAD_FAMILIES),
        "out": Path("."),
    },
}


def _merge_config(args: argparse.Namespace) -> dict:
    """defaults < config file < explicit flags."""
    merged = dict(_DEFAULTS[args.command])
    if args.config is not None:
        with open(args.config) as fh:
            file_cfg = json.load(fh)
        unknown = set(file_cfg) - set(merged)
        if unknown:
            raise UsageError(
                f"unknown config keys for '{args.command}': {sorted(unknown)}"
            )
        merged.update(file_cfg)
    for key in merged:
        val = getattr(args, key.replace("-", "_"), None)
        if val is not None:
            merged[key] = val
    merged["out"] = Path(merged["out"])
    return merged


def _cmd_solve(args: argparse.Namespace) -> int:
    cfg = _merge_config(args)
    degrees = _parse_int_list(str(cfg["degree"]))
    nhs = [_parse_h(p) for p in str(cfg["h"]).split(",") if p]
    out = cfg["out"]
    out.mkdir(parents=True, exist_ok=True)
    if args.dump_rules:
        rows = [
            run_solve(
                RunConfig(problem=cfg["problem"], degree=d, nh=nh,
                          nref=int(cfg["nref"]), strategy=cfg["strategy"],
                          ng=int(cfg["ng"])),
                dump_rules=True,
            )
            for d in degrees
            for nh in nhs
        ]
    else:
        rows = run_convergence(
            cfg["problem"], degrees, nhs, int(cfg["nref"]),
            strategies=(cfg["strategy"],), ng=int(cfg["ng"]),
        )
    csv_path = out / f"solve_{cfg['problem']}_{cfg['strategy']}.csv"
    write_csv(rows, csv_path)
    print(csv_path)
    if args.svg:
        svg_path = csv_path.with_suffix(".svg")
        write_convergence_svg(rows, svg_path)
        print(svg_path)
    return 0


def _cmd_quadbench(args: argparse.Namespace) -> int:
    cfg = _merge_config(args)
    degrees = _parse_int_list(str(cfg["degrees"]))
    nhs = _parse_int_list(str(cfg["nh"]))
    families = [f for f in str(cfg["families"]).split(",") if f]
    out = cfg["out"]
    out.mkdir(parents=True, exist_ok=True)
    rows = run_quad_bench(degrees, nhs, nref=int(cfg["nref"]),
                          families=families)
    csv_path = out / "quadbench.csv"
    write_csv(rows, csv_path)
    print(csv_path)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "solve":
            return _cmd_solve(args)
        return _cmd_quadbench(args)
    except WqbemError as exc:
        record = {
            "error": type(exc).__name__,
            "message": str(exc),
            "command": args.command,
        }
        print(json.dumps(record), file=sys.stderr)
        return 2
    except OSError as exc:
        print(
            json.dumps({"error": "OSError", "message": str(exc)}),
            file=sys.stderr,
        )
        return 3


if __name__ == "__main__":
    sys.exit(main())
