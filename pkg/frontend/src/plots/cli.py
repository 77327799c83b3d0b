"""Command line entry point: `plots render --in DIR --out DIR [--figs ...]`."""

import argparse
import sys

from .figures import FIGURES, FigureError, render_figures


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="plots", description="render figures from experiment CSV output")
    sub = parser.add_subparsers(dest="command", required=True)
    render = sub.add_parser("render", help="render figures")
    render.add_argument("--in", dest="input_dir", required=True,
                        help="directory containing the experiment CSVs")
    render.add_argument("--out", dest="output_dir", required=True,
                        help="directory for the rendered images")
    render.add_argument("--figs", default=None,
                        help="comma-separated figure ids "
                        f"(default: all of {','.join(sorted(FIGURES))})")
    args = parser.parse_args(argv)

    ids = None
    if args.figs is not None:
        ids = [f.strip() for f in args.figs.split(",") if f.strip()]
    try:
        written = render_figures(args.input_dir, ids, args.output_dir)
    except (FigureError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
