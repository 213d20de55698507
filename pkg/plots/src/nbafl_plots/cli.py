"""Command line entry point: one subcommand per figure kind."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .figures import FIGURE_KINDS, FigureSpec, render
from .io import FingerprintMismatchError, InputFormatError

EXIT_OK = 0
EXIT_ERROR = 1

_HELP = {
    "gap_vs_round": "mean trajectory gap with seed range, bound overlay, or sweep series",
    "bounds_vs_round": "every bound variant of one bounds CSV",
    "gap_vs_epsilon": "final gap against the swept parameter",
    "audit_margins": "per-step audit margins colored by status",
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plots",
        description="Render comparison figures from the testbed's output files.",
    )
    sub = parser.add_subparsers(dest="kind", required=True)
    for kind in FIGURE_KINDS:
        p = sub.add_parser(kind, help=_HELP[kind])
        p.add_argument(
            "--in",
            dest="inputs",
            type=Path,
            nargs="+",
            required=True,
            help="input data file(s)",
        )
        p.add_argument("--out", type=Path, required=True, help="output PNG path")
        p.add_argument("--log-x", action="store_true", help="logarithmic x axis")
        p.add_argument("--log-y", action="store_true", help="logarithmic y axis")
        if kind == "gap_vs_round":
            p.add_argument(
                "--bounds", type=Path, default=None, help="bounds CSV to overlay"
            )
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    spec = FigureSpec(
        kind=args.kind,
        inputs=tuple(args.inputs),
        out=args.out,
        bounds=getattr(args, "bounds", None),
        log_x=args.log_x,
        log_y=args.log_y,
    )
    try:
        out = render(spec)
    except (InputFormatError, FingerprintMismatchError, OSError) as exc:
        payload = {"error": {"type": type(exc).__name__, "message": str(exc)}}
        print(json.dumps(payload, sort_keys=True), file=sys.stderr)
        return EXIT_ERROR
    print(out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
