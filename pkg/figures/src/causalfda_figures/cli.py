"""Batch figure CLI: render panels from simulation output directories."""

from __future__ import annotations

import argparse
import sys

from .io import SchemaError
from .plots import make_all, plot_band, plot_coverage, plot_mse_box, plot_mse_vs_alpha


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="causalfda-figures",
        description="Render figures from causalfda result CSVs and curve dumps.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    allp = sub.add_parser("make-all", help="render the standard panel set")
    allp.add_argument("--results", required=True, help="simulation output directory")
    allp.add_argument("--out", required=True, help="directory for rendered images")

    band = sub.add_parser("band", help="truth, estimates, and band from one curve dump")
    band.add_argument("--dump", required=True)
    band.add_argument("--out", required=True, help="output image path")

    mse = sub.add_parser("mse", help="mean error along one corruption axis")
    mse.add_argument("--results-csv", required=True)
    mse.add_argument("--slice", required=True, choices=["alpha_pi", "alpha_mu"])
    mse.add_argument("--out", required=True)

    cov = sub.add_parser("coverage", help="empirical coverage with the nominal line")
    cov.add_argument("--results-csv", required=True)
    cov.add_argument("--out", required=True)

    box = sub.add_parser("boxplot", help="per-cell error boxplots")
    box.add_argument("--results-csv", required=True)
    box.add_argument("--out", required=True)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "make-all":
            written = make_all(args.results, args.out)
            for path in written:
                print(f"wrote {path}")
        elif args.command == "band":
            plot_band(args.dump, args.out)
            print(f"wrote {args.out}")
        elif args.command == "mse":
            plot_mse_vs_alpha(args.results_csv, args.slice, args.out)
            print(f"wrote {args.out}")
        elif args.command == "coverage":
            plot_coverage(args.results_csv, args.out)
            print(f"wrote {args.out}")
        else:
            plot_mse_box(args.results_csv, args.out)
            print(f"wrote {args.out}")
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
