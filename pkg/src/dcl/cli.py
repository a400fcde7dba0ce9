"""Command-line harness: run algorithm comparisons and emit trajectory CSV.

Usage::

    dcl cs --algo pg-extra,async-pd --seed 3 --horizon-ms 2760 --out run.csv
    dcl matcomp --bounds

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .errors import DclError, NoConvergence
from .experiments import (
    ALGORITHMS,
    EXPERIMENTS,
    ExperimentConfig,
    experiment_bounds,
    run_experiment,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dcl",
        description="Decentralized consensus optimization benchmark runner",
    )
    parser.add_argument("experiment", choices=EXPERIMENTS, help="benchmark family")
    parser.add_argument(
        "--algo",
        default="pg-extra,async-pd",
        help=f"comma-separated subset of {{{','.join(ALGORITHMS)}}}",
    )
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--horizon-ms", type=float, default=None, help="simulated-time budget")
    parser.add_argument("--alpha", type=float, default=None, help="step size (family default)")
    parser.add_argument("--eta", type=float, default=None, help="relaxation scale (family default)")
    parser.add_argument("--record-every", type=int, default=50)
    parser.add_argument("--out", default=None, help="CSV output path")
    parser.add_argument(
        "--bounds",
        action="store_true",
        help="print spectral data, step-size bound, activation law, and relaxation "
        "ceilings for the instance, then exit without running",
    )
    return parser


def _print_bounds(experiment: str, seed: int) -> None:
    info = experiment_bounds(experiment, seed)
    print(f"experiment={info['experiment']} seed={info['seed']} n={info['n']} m={info['m']}")
    print(f"rho_min          = {info['rho_min']:.12g}")
    print(f"lambda_max_G     = {info['lambda_max_G']:.12g}")
    print(f"kappa            = {info['kappa']:.12g}")
    print(f"max_lipschitz    = {info['max_lipschitz']:.12g}")
    print(f"alpha bound 2*rho_min/L = {info['alpha_bound']:.12g}")
    q = info["predicted_q"]
    print("predicted_q      = " + " ".join(f"{v:.6f}" for v in q))
    print(f"eta_max (tau=0)  = {info['eta_max_tau0']:.12g}")
    print(f"eta_max (tau=10) = {info['eta_max_tau10']:.12g}")


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on bad usage already; normalize other codes
        return EXIT_CONFIG if exc.code not in (0,) else EXIT_OK
    try:
        if args.bounds:
            _print_bounds(args.experiment, args.seed)
            return EXIT_OK
        algorithms = tuple(a.strip() for a in args.algo.split(",") if a.strip())
        cfg = ExperimentConfig(
            experiment=args.experiment,
            algorithms=algorithms,
            seed=args.seed,
            horizon_ms=args.horizon_ms,
            record_every=args.record_every,
            alpha=args.alpha,
            eta=args.eta,
            out=args.out,
        )
    except (ValueError, DclError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        records = run_experiment(cfg)
    except (NoConvergence, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except DclError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    dest = cfg.out if cfg.out else "(stdout only)"
    print(f"wrote {len(records)} records for {len(cfg.algorithms)} algorithm(s) -> {dest}")
    if not cfg.out:
        from .experiments import CSV_HEADER

        print(CSV_HEADER)
        for r in records:
            print(f"{r.algo},{r.seed},{r.k},{r.sim_time_ms!r},{r.rel_error!r},{r.residual!r}")
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
