"""rdsplots command line: render one figure from one CSV."""

from __future__ import annotations

import argparse
import sys

from .figures import KINDS, FigureSpec, InputError, render


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="rdsplots", description="Render rdslab experiment CSVs as figures."
    )
    sub = parser.add_subparsers(dest="command", required=True)
    rend = sub.add_parser("render", help="render one figure")
    rend.add_argument("--kind", required=True, choices=KINDS)
    rend.add_argument("--in", dest="input", required=True, help="input CSV path")
    rend.add_argument("--out", required=True, help="output PNG path")
    rend.add_argument("--title", default=None)
    args = parser.parse_args(argv)

    try:
        out = render(FigureSpec(args.kind, [args.input], args.out, args.title))
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
