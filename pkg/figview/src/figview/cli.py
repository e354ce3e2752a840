"""figview command line: render scaling figures from a results.csv."""

from __future__ import annotations

import argparse
import sys

from .render import FigureSpec, SchemaError, render_scaling_figure


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="figview", description=__doc__)
    parser.add_argument("--csv", required=True, help="path to results.csv")
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--format", default="png", choices=["png", "svg"])
    parser.add_argument(
        "--case",
        action="append",
        default=None,
        help="restrict to a case (repeatable); default renders every case present",
    )
    parser.add_argument("--manifest", default=None, help="manifest.json (default: sibling)")
    args = parser.parse_args(argv)
    spec = FigureSpec(
        input_csv=args.csv,
        out_dir=args.out,
        fmt=args.format,
        cases=tuple(args.case) if args.case else None,
        manifest=args.manifest,
    )
    try:
        written = render_scaling_figure(spec)
    except (SchemaError, FileNotFoundError) as exc:
        print(f"figview: {exc}", file=sys.stderr)
        return 2
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
