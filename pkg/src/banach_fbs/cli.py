"""Command-line harness: sparse-demo, tv and diagnose subcommands.

Exit codes: 0 success, 2 configuration error, 3 solver failure.  The
environment variable BANACH_FBS_SEED overrides the configured seed.
"""

from __future__ import annotations

import argparse
import os
import sys

from .config import load_config
from .errors import ConfigError, DomainError, SolverError


def _seed_override():
    raw = os.environ.get("BANACH_FBS_SEED")
    if raw is None:
        return None
    try:
        return int(raw)
    except ValueError as exc:
        raise ConfigError(f"BANACH_FBS_SEED must be an integer, got {raw!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="banach-fbs",
        description="Forward-backward splitting experiments: sparse deconvolution "
        "and total-variation restoration with rate diagnostics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sparse = sub.add_parser("sparse-demo", help="spike deconvolution by iterative thresholding")
    sparse.add_argument("--config", required=True, help="flat key = value config file")
    sparse.add_argument("--jobs", type=int, default=1, help="parallel solves across p values")
    sparse.add_argument("--no-figures", action="store_true", help="skip PNG rendering")

    tv = sub.add_parser("tv", help="total-variation denoising / deblurring")
    tv.add_argument("--config", required=True)
    tv.add_argument("--no-figures", action="store_true")

    diag = sub.add_parser("diagnose", help="rate fit of a recorded history CSV")
    diag.add_argument("--history", required=True)
    diag.add_argument("--ref", type=float, required=True, help="reference objective value")
    diag.add_argument("--p", type=float, required=True, help="smoothness exponent of the run")
    diag.add_argument("--burn-in", type=int, default=10)
    diag.add_argument("--out", default=None, help="output directory (default: next to the CSV)")
    diag.add_argument("--no-figures", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    from . import experiments

    try:
        if args.command == "sparse-demo":
            if args.jobs < 1:
                raise ConfigError("--jobs must be >= 1")
            cfg = load_config(args.config, _seed_override())
            rows = experiments.cmd_sparse_demo(cfg, jobs=args.jobs, figures=not args.no_figures)
            for p, disc, nnz, derr, alpha in rows:
                print(f"p={p:g}: discrepancy={disc:.6g} nnz={nnz} "
                      f"data_error={derr:.6g} alpha={alpha:.6g}")
            print(f"wrote {cfg.out_dir}/summary.csv")
        elif args.command == "tv":
            cfg = load_config(args.config, _seed_override())
            history, _ = experiments.cmd_tv(cfg, figures=not args.no_figures)
            final = history.objective[-1] if len(history) else float("nan")
            print(f"status={history.status} iterations={len(history)} objective={final:.6g}")
            print(f"wrote {cfg.out_dir}/summary.csv")
        else:
            envelope, slope = experiments.cmd_diagnose(
                args.history, args.ref, args.p,
                out_dir=args.out, burn_in=args.burn_in, figures=not args.no_figures,
            )
            print(f"C={envelope:.6g} slope={slope:.3f}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (SolverError, DomainError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
