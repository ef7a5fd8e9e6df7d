"""Command line for rendering figures from simulator output files."""

from __future__ import annotations

import argparse

from .figures import KINDS, FigureSpec, render


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="usdplots",
        description="render figures from undecided-state-dynamics outputs",
    )
    parser.add_argument("inputs", nargs="+",
                        help="input files (CSV; trajectory also needs the "
                             "aggregate JSON)")
    parser.add_argument("--kind", choices=KINDS, required=True)
    parser.add_argument("--out", required=True, help="output image path")
    parser.add_argument("--trial", type=int, default=None,
                        help="trajectory: trial id to draw")
    parser.add_argument("--logx", action="store_true")
    parser.add_argument("--logy", action="store_true")
    parser.add_argument("--title", default=None)
    args = parser.parse_args(argv)
    result = render(FigureSpec(
        inputs=tuple(args.inputs), kind=args.kind, out=args.out,
        logx=args.logx, logy=args.logy, title=args.title, trial=args.trial,
    ))
    print(f"wrote {result.path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
