"""Batch entry point: python -m qembed_plots <kind> <inputs...> --out FILE."""

import argparse
import sys

from .artifacts import ArtifactError
from .render import KINDS, PlotSpec, render


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="qembed-plots",
        description="render harness CSV/JSON artifacts as figures",
    )
    parser.add_argument("kind", choices=KINDS)
    parser.add_argument("inputs", nargs="+", help="artifact files, in panel order")
    parser.add_argument("--out", required=True, help="output image path (.png/.svg/.pdf)")
    parser.add_argument(
        "--overlay",
        action="append",
        default=[],
        help="exact-curve CSV overlaid on the matching input (repeatable)",
    )
    parser.add_argument("--xlabel")
    parser.add_argument("--ylabel")
    parser.add_argument("--title")
    args = parser.parse_args(argv)

    try:
        spec = PlotSpec(
            kind=args.kind,
            inputs=tuple(args.inputs),
            out=args.out,
            overlays=tuple(args.overlay),
            xlabel=args.xlabel,
            ylabel=args.ylabel,
            title=args.title,
        )
        out = render(spec)
    except (ArtifactError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
