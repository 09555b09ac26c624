"""``precselect`` command line.

Exit status: 0 on success, 1 on configuration or input errors, 2 on numerical
failure (a block that is not positive definite, CG breakdown, ...).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from .errors import ConfigError
from .experiments import (
    ExperimentConfig,
    dump_json,
    run_estimate,
    run_kernel_experiment,
    run_sparse_experiment,
)

log = logging.getLogger("precselect")


def build_parser():
    p = argparse.ArgumentParser(
        prog="precselect",
        description="Estimate preconditioner stability and select preconditioners by sketching.",
    )
    p.add_argument("--config", help="JSON configuration file; flags below override it")
    p.add_argument("--mode", choices=["sparse", "kernel", "estimate"])
    p.add_argument("--matrix", help="Matrix Market (.mtx) file")
    p.add_argument("--synthetic", help='synthetic system as JSON, e.g. \'{"kind": "block", "d": 500}\'')
    p.add_argument("--candidates", help="comma-separated candidates, e.g. I,Blk_10,RCM_25")
    p.add_argument("--k", type=int, help="sketch size")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--algorithm", choices=["alg2", "alg3"],
                   help="alg2: argmin at a fixed sketch size; alg3: adaptive rounds that drop losing candidates")
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--exact", action="store_true", default=None, help="also compute the exact stability")
    p.add_argument("--dataset", help="CSV dataset for kernel mode")
    p.add_argument("--target", help="target column of the CSV dataset")
    p.add_argument("--out", help="output directory for JSON/CSV reports")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def make_config(args) -> ExperimentConfig:
    values = {}
    if args.config:
        values = ExperimentConfig.from_file(args.config).__dict__.copy()
    for key in ("mode", "matrix", "k", "epsilon", "delta", "algorithm", "trials", "seed", "threads",
                "exact", "dataset", "target", "out"):
        v = getattr(args, key)
        if v is not None:
            values[key] = v
    if args.synthetic:
        try:
            values["synthetic"] = json.loads(args.synthetic)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"--synthetic is not valid JSON: {exc}") from None
    if args.candidates:
        values["candidates"] = [c.strip() for c in args.candidates.split(",") if c.strip()]
    return ExperimentConfig.from_dict(values)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = make_config(args)
        cfg.validate()
        run = {"sparse": run_sparse_experiment, "kernel": run_kernel_experiment, "estimate": run_estimate}[cfg.mode]
        report = run(cfg)
    except np.linalg.LinAlgError as exc:
        print(f"precselect: numerical failure: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        # ConfigError, MatrixMarketError and bad parameter values are all ValueErrors
        print(f"precselect: error: {exc}", file=sys.stderr)
        return 1
    sys.stdout.write(dump_json(report))
    return 0


if __name__ == "__main__":
    sys.exit(main())
