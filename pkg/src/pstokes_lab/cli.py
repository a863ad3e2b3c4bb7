"""Command-line entry point ``pstokes-lab``."""
from __future__ import annotations

import argparse
import logging
import sys

from .experiments import ConfigError, ExperimentConfig, load_config, run_glacier, run_infsup, run_ms


def _eps_list(text: str) -> tuple:
    try:
        vals = tuple(float(s) for s in text.split(",") if s.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad eps list {text!r}") from None
    if not vals or any(v <= 0 for v in vals):
        raise argparse.ArgumentTypeError("eps list must be nonempty and positive")
    return vals


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pstokes-lab", description="p-Stokes preconditioner spectra experiments")
    ap.add_argument("experiment", choices=["ms", "glacier", "infsup"])
    ap.add_argument("--config", help="plain-text key = value file")
    ap.add_argument("--eps", type=_eps_list, help="comma-separated regularization values")
    ap.add_argument("--element", choices=["p2p1", "mini"])
    ap.add_argument("--method", choices=["picard", "newton"])
    ap.add_argument("--schur", choices=["m", "mnu", "both"])
    ap.add_argument("--out", help="output directory")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def config_from_args(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    kw = {"experiment": args.experiment}
    if args.eps is not None:
        kw["eps_list"] = args.eps
    if args.element:
        kw["element"] = args.element
    if args.method:
        kw["method"] = args.method
    if args.schur:
        kw["schur"] = args.schur
    if args.out:
        kw["out_dir"] = args.out
    return cfg.replace(**kw)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = config_from_args(args)
    except (ConfigError, OSError) as exc:
        print(f"pstokes-lab: {exc}", file=sys.stderr)
        return 2
    if cfg.experiment == "infsup":
        table = run_infsup(cfg)
        for r in table.rows:
            print(f"{r['mesh']:>20s}  eps={r['eps']:.1e}  c0={r['c0']:.4f}  c_nu={r['c_nu']:.4f}")
        print(f"wrote {table.csv_path}")
        return 0
    report = run_ms(cfg) if cfg.experiment == "ms" else run_glacier(cfg)
    for row in report.rows():
        print(
            f"eps={row['eps']:.1e} {row['schur']:>3s}  lambda=[{row['lambda_min']:.4e}, {row['lambda_max']:.4e}]"
            f"  bounds=[{row['bound_lower']:.4e}, {row['bound_upper']:.4e}]  iters={row['nonlinear_iters']}"
            f"  gmres={row['gmres_iters_mean']:.1f}"
        )
    print(f"wrote {report.csv_path}")
    return 0 if all(report.converged) else 1


if __name__ == "__main__":
    sys.exit(main())
