"""Experiment drivers behind the command line.

Configuration is a flat JSON object (see :class:`ExperimentConfig` for the
keys); command-line flags override file values. Reports are deterministic for
a given configuration: every random draw comes from a stream derived from
``seed`` and a fixed offset, and no timings go into the JSON.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .kernel import Dataset, kernel_experiment
from .krylov import StoppingRule, pcg_solve
from .preconditioners import BlockSpec
from .selection import adaptive_select, select_preconditioner
from .sparse import CSRMatrix, read_matrix_market, substream
from .stability import exact_stability, sample_size_select, stab_estimate
from . import synthetic

__all__ = [
    "SCHEMA_VERSION",
    "PAPER_CANDIDATES",
    "ExperimentConfig",
    "ApproximationRatioRow",
    "approximation_ratios",
    "load_system",
    "run_sparse_experiment",
    "run_kernel_experiment",
    "run_estimate",
    "dump_json",
]

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
PAPER_CANDIDATES = ["I", "Blk_1", "Blk_10", "Blk_25", "Blk_50", "Blk_75", "Blk_100", "RCM_75", "RCM_100"]


@dataclass
class ExperimentConfig:
    """Declarative experiment description.

    ``matrix`` is a Matrix Market path; otherwise ``synthetic`` describes a
    generated system, e.g. ``{"kind": "block", "d": 500, "block": 25}`` or
    ``{"kind": "tridiagonal", "d": 100}``. For kernel runs ``dataset`` is a
    CSV path with ``target`` naming the target column, or
    ``synthetic_dataset`` such as ``{"d": 500, "dim": 8, "n_blobs": 10}``.
    """

    mode: str = "sparse"
    matrix: str | None = None
    synthetic: dict | None = None
    candidates: list = field(default_factory=lambda: list(PAPER_CANDIDATES))
    k: int | None = None
    epsilon: float | None = None
    delta: float | None = None
    algorithm: str = "alg2"
    reuse_sketch: bool = True
    relative_tol: float | None = 1e-9
    absolute_tol: float | None = None
    max_iterations: int = 50_000
    trials: int = 100
    seed: int = 0
    threads: int = 1
    exact: bool = False
    out: str | None = None
    # kernel mode
    dataset: str | None = None
    target: str | None = None
    synthetic_dataset: dict | None = None
    length_scales: list = field(default_factory=lambda: [1e-2, 1e-1, 1.0, 10.0])
    noises: list = field(default_factory=lambda: [1e-2, 1e-4])
    rank: int = 25
    clusters: int | None = None
    geometric_only: bool = False

    @classmethod
    def from_dict(cls, values):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
        return cls(**values)

    @classmethod
    def from_file(cls, path):
        try:
            with open(path) as fh:
                values = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(values, dict):
            raise ConfigError(f"{path}: top level must be an object")
        return cls.from_dict(values)

    def validate(self):
        if self.mode not in ("sparse", "kernel", "estimate"):
            raise ConfigError(f"mode must be sparse, kernel or estimate, got {self.mode!r}")
        if self.algorithm not in ("alg2", "alg3"):
            raise ConfigError(f"algorithm must be alg2 or alg3, got {self.algorithm!r}")
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if self.mode in ("sparse", "estimate") and self.matrix is None and self.synthetic is None:
            raise ConfigError(f"{self.mode} mode needs 'matrix' or 'synthetic'")
        if self.mode == "kernel" and self.dataset is None and self.synthetic_dataset is None:
            raise ConfigError("kernel mode needs 'dataset' or 'synthetic_dataset'")
        if self.mode == "kernel" and self.dataset is not None and self.target is None:
            raise ConfigError("kernel mode with a CSV dataset needs 'target'")
        if self.algorithm == "alg3" and (self.epsilon is None or self.delta is None):
            raise ConfigError("alg3 needs epsilon and delta")
        if not self.candidates:
            raise ConfigError("candidate list is empty")
        try:
            specs = [BlockSpec.parse(c) for c in self.candidates]
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"bad candidate entry: {exc}") from None
        if self.k is not None and self.k < 1:
            raise ConfigError("k must be at least 1")
        return specs

    def resolved_k(self, n):
        """``k`` for fixed-size selection: explicit, from (epsilon, delta), or 10."""
        if self.k is not None:
            return int(self.k)
        if self.epsilon is not None and self.delta is not None:
            return sample_size_select(self.epsilon, self.delta, n)
        return 10


@dataclass
class ApproximationRatioRow:
    label: str
    worst_case: float
    random: float
    selector_min: float
    selector_mean: float
    selector_max: float
    censored: bool = False
    all_nonconvergent: bool = False

    def to_dict(self):
        return dataclasses.asdict(self)


def approximation_ratios(label, iterations, converged, cap, chosen):
    """Approximation ratios (iterations over the best candidate's) from per-candidate counts.

    Non-converged candidates count as ``cap`` iterations and mark the row
    censored (worst-case and random ratios are then lower bounds).
    """
    its = np.array([it if ok else cap for it, ok in zip(iterations, converged)], dtype=np.float64)
    best = max(its.min(), 1.0)
    sel = its[np.asarray(chosen, dtype=np.int64)] / best
    return ApproximationRatioRow(
        label=label,
        worst_case=float(its.max() / best),
        random=float(its.mean() / best),
        selector_min=float(sel.min()),
        selector_mean=float(sel.mean()),
        selector_max=float(sel.max()),
        censored=not all(converged),
        all_nonconvergent=not any(converged),
    )


def load_system(cfg: ExperimentConfig):
    """Return ``(label, A)`` for the configured matrix."""
    if cfg.matrix is not None:
        return os.path.splitext(os.path.basename(cfg.matrix))[0], read_matrix_market(cfg.matrix)
    spec = dict(cfg.synthetic)
    kind = spec.pop("kind", "block")
    rng = substream(cfg.seed, 99)
    try:
        if kind == "block":
            return f"block{spec.get('d', 500)}", synthetic.block_structured_spd(rng=rng, **spec)
        if kind == "tridiagonal":
            return f"tridiag{spec.get('d')}", synthetic.tridiagonal_spd(rng=rng, **spec)
        if kind == "random":
            return f"random{spec.get('d')}", synthetic.random_spd(rng=rng, **spec)
    except TypeError as exc:
        raise ConfigError(f"bad synthetic spec: {exc}") from None
    raise ConfigError(f"unknown synthetic kind {kind!r}")


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dump_json(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def _write(out, name, text):
    if out is None:
        return None
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, name)
    with open(path, "w", newline="") as fh:
        fh.write(text)
    return path


def _csv_text(header, rows):
    import io

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _map(fn, items, threads):
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def run_sparse_experiment(cfg: ExperimentConfig):
    """Solve with every candidate, run the selector ``trials`` times, report ratios.

    Writes ``sparse_report.json``, ``iterations.csv`` and ``ratios.csv`` into
    ``cfg.out`` when set; returns the report dictionary.
    """
    specs = cfg.validate()
    label, A = load_system(cfg)
    cands = [s.build(A) for s in specs]
    labels = [s.label for s in specs]
    n = len(cands)
    b = substream(cfg.seed, 0).standard_normal(A.dim)
    rule = StoppingRule(cfg.relative_tol, cfg.absolute_tol, cfg.max_iterations)

    t0 = time.perf_counter()
    solves = _map(lambda M: pcg_solve(A, M, b, rule), cands, cfg.threads)
    log.info("solved %d candidates in %.2fs", n, time.perf_counter() - t0)

    k = cfg.resolved_k(n)

    def trial(t):
        rng = substream(cfg.seed, 1, t)
        if cfg.algorithm == "alg3":
            return adaptive_select(A, cands, cfg.epsilon, cfg.delta, rng, labels=labels)
        return select_preconditioner(A, cands, k, rng, reuse_sketch=cfg.reuse_sketch, labels=labels)

    t0 = time.perf_counter()
    reports = _map(trial, range(cfg.trials), cfg.threads)
    log.info("ran %d selection trials in %.2fs", cfg.trials, time.perf_counter() - t0)

    chosen = [r.chosen_index for r in reports]
    row = approximation_ratios(label, [s.iterations for s in solves], [s.converged for s in solves],
                               cfg.max_iterations, chosen)
    counts = np.bincount(chosen, minlength=n)
    report = {
        "schema_version": SCHEMA_VERSION,
        "mode": "sparse",
        "matrix": label,
        "dim": A.dim,
        "nnz": A.nnz,
        "seed": cfg.seed,
        "algorithm": cfg.algorithm,
        "k": k if cfg.algorithm == "alg2" else None,
        "epsilon": cfg.epsilon,
        "delta": cfg.delta,
        "trials": cfg.trials,
        "stopping_rule": dataclasses.asdict(rule),
        "candidates": [
            {"label": lab, "iterations": s.iterations, "converged": s.converged,
             "final_residual_norm": s.final_residual_norm, "true_residual_norm": s.true_residual_norm,
             "times_chosen": int(c)}
            for lab, s, c in zip(labels, solves, counts)
        ],
        "ratios": row.to_dict(),
        "selection_cost": {
            "mean_solves": float(np.mean([r.total_solves for r in reports])),
            "mean_spmv": float(np.mean([r.total_spmv for r in reports])),
            "mean_gaussian_draws": float(np.mean([r.gaussian_draws for r in reports])),
        },
        "trial_choices": chosen,
    }
    _write(cfg.out, "sparse_report.json", dump_json(report))
    _write(cfg.out, "iterations.csv", _csv_text(
        ["matrix"] + labels,
        [[label] + [str(s.iterations) if s.converged else "---" for s in solves]]))
    _write(cfg.out, "ratios.csv", _csv_text(
        ["matrix", "worst_case", "random", "min", "mean", "max", "censored"],
        [[label, f"{row.worst_case:.2f}", f"{row.random:.2f}", f"{row.selector_min:.2f}",
          f"{row.selector_mean:.2f}", f"{row.selector_max:.2f}", str(row.censored).lower()]]))
    return report


def _load_dataset(cfg):
    if cfg.dataset is not None:
        return os.path.splitext(os.path.basename(cfg.dataset))[0], Dataset.from_csv(cfg.dataset, cfg.target)
    spec = dict(cfg.synthetic_dataset)
    try:
        return "blobs", synthetic.blob_dataset(rng=substream(cfg.seed, 98), **spec)
    except TypeError as exc:
        raise ConfigError(f"bad synthetic dataset spec: {exc}") from None


def run_kernel_experiment(cfg: ExperimentConfig):
    """The (length scale × noise) grid; writes ``kernel_grid.json`` and ``kernel_grid.csv``."""
    cfg.validate()
    name, data = _load_dataset(cfg)
    k = cfg.k if cfg.k is not None else 10
    cells = kernel_experiment(data, cfg.length_scales, cfg.noises, rank=cfg.rank, k=k, seed=cfg.seed,
                              clusters=cfg.clusters, geometric_only=cfg.geometric_only,
                              max_workers=cfg.threads)
    report = {
        "schema_version": SCHEMA_VERSION,
        "mode": "kernel",
        "dataset": name,
        "dim": data.size,
        "features": data.points.shape[1],
        "seed": cfg.seed,
        "k": k,
        "rank": cfg.rank,
        "cells": [c.to_dict() for c in cells],
    }
    _write(cfg.out, "kernel_grid.json", dump_json(report))
    header = ["length_scale", "noise", "iters_none", "iters_blk", "iters_lowrank", "iters_selected", "chosen",
              "log10_blk", "log10_lowrank", "log10_selected"]
    rows = [[repr(c.length_scale), repr(c.noise), c.iters_none, c.iters_blk, c.iters_lowrank, c.iters_selected,
             c.chosen, f"{c.log_ratio_blk:.2f}", f"{c.log_ratio_lowrank:.2f}", f"{c.log_ratio_selected:.2f}"]
            for c in cells]
    _write(cfg.out, "kernel_grid.csv", _csv_text(header, rows))
    return report


def run_estimate(cfg: ExperimentConfig):
    """Single stability estimate for the first configured candidate (plus the exact value with ``exact``)."""
    specs = cfg.validate()
    label, A = load_system(cfg)
    M = specs[0].build(A)
    k = cfg.k if cfg.k is not None else 10
    est = stab_estimate(A, M, k, rng=substream(cfg.seed, 2), seed=cfg.seed)
    report = {
        "schema_version": SCHEMA_VERSION,
        "mode": "estimate",
        "matrix": label,
        "candidate": specs[0].label,
        "estimate": est.value,
        "k": est.k,
        "seed": cfg.seed,
        "spmv_count": est.spmv_count,
        "solve_count": est.solve_count,
    }
    if cfg.exact:
        ex = exact_stability(A, M)
        report["exact"] = ex
        report["relative_error"] = abs(est.value / ex - 1.0) if ex > 0 else (0.0 if est.value == 0 else None)
    _write(cfg.out, "estimate.json", dump_json(report))
    return report
