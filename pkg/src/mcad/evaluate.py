"""ROC/AUC computation, confidence intervals, rate diagnostics, and the
seeded benchmark harness that sweeps normal-category combinations."""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import fusion
from .data import Dataset, SplitSpec, enumerate_combinations, select_normal
from .detectors import Hyperparams
from .errors import ConfigurationError, EvaluationError, InputError
from .multiclass import (
    train_algorithm1,
    train_algorithm2,
    train_deepmad,
    predict_scores,
)

ALGORITHMS = ("alg1", "alg2", "deepmad")

_TRAINERS = {
    "alg1": train_algorithm1,
    "alg2": train_algorithm2,
    "deepmad": train_deepmad,
}


@dataclass(frozen=True)
class RocResult:
    """ROC curve points (fpr, tpr) from (0,0) to (1,1) and their trapezoidal
    area."""

    points: tuple[tuple[float, float], ...]
    auc: float


def _validated_scores_labels(scores, labels):
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel().astype(bool)
    if s.shape != y.shape:
        raise InputError(f"scores shape {s.shape} vs labels shape {y.shape}")
    if s.size == 0:
        raise EvaluationError("empty score set")
    if not np.all(np.isfinite(s)):
        raise EvaluationError("non-finite scores")
    if y.all() or not y.any():
        raise EvaluationError("need at least one anomalous and one normal label")
    return s, y


def roc_auc(scores, labels):
    """ROC curve over anomaly scores; positives are the anomalous samples.

    Thresholds sweep the distinct score values in descending order with tied
    scores entering as one group, which makes the trapezoidal area equal the
    pairwise ranking probability.
    """
    s, y = _validated_scores_labels(scores, labels)
    order = np.argsort(-s, kind="stable")
    s_sorted = s[order]
    y_sorted = y[order]
    group_ends = np.flatnonzero(np.diff(s_sorted) != 0)
    group_ends = np.append(group_ends, s_sorted.size - 1)
    tp = np.cumsum(y_sorted)[group_ends]
    fp = (group_ends + 1) - tp
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    tpr = tp / n_pos
    fpr = fp / n_neg
    fpr_pts = np.concatenate(([0.0], fpr))
    tpr_pts = np.concatenate(([0.0], tpr))
    auc = float(np.trapezoid(tpr_pts, fpr_pts))
    points = tuple((float(a), float(b)) for a, b in zip(fpr_pts, tpr_pts))
    return RocResult(points=points, auc=auc)


def auc_mannwhitney(scores, labels):
    """Pairwise-comparison oracle for roc_auc: the fraction of
    (anomalous, normal) pairs ranked correctly, ties counting half."""
    s, y = _validated_scores_labels(scores, labels)
    pos = s[y]
    neg = s[~y]
    wins = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                wins += 1.0
            elif p == q:
                wins += 0.5
    return wins / (pos.size * neg.size)


def ci95(values):
    """Mean and 1.96 * s / sqrt(n) half-width with sample std s (0 if n=1)."""
    vals = np.asarray(list(values), dtype=np.float64)
    if vals.size == 0:
        raise InputError("no values supplied")
    mean = float(vals.mean())
    if vals.size == 1:
        return mean, 0.0
    half = 1.96 * float(vals.std(ddof=1)) / math.sqrt(vals.size)
    return mean, half


@dataclass(frozen=True)
class AucSummary:
    """Per-combination AUC aggregate over repeated seeded runs."""

    combination: tuple[int, ...]
    per_run: tuple[float, ...]
    mean: float
    ci95: float

    @classmethod
    def from_runs(cls, combination, per_run):
        mean, half = ci95(per_run)
        return cls(
            combination=tuple(combination),
            per_run=tuple(float(v) for v in per_run),
            mean=mean,
            ci95=half,
        )


def lemma1_rates(p_normal, p_anomalous, threshold, mode):
    """Empirical acceptance rates when rejection masses are thresholded.

    Rows of each pool hold the per-detector acceptance probabilities of one
    sample; a sample is called anomalous when its aggregated rejection mass
    (product or mean of complements) is at least the threshold. Positives
    are the normal samples: tpr is the fraction of the normal pool accepted,
    fpr the fraction of the anomalous pool accepted.
    """
    pn = np.atleast_2d(np.asarray(p_normal, dtype=np.float64))
    pa = np.atleast_2d(np.asarray(p_anomalous, dtype=np.float64))
    if pn.size == 0 or pa.size == 0:
        raise InputError("both pools must be non-empty")
    for pool in (pn, pa):
        if pool.min() < 0.0 or pool.max() > 1.0:
            raise InputError("probabilities must lie in [0, 1]")

    def accepted_fraction(pool):
        agg = np.array([fusion.aggregate_rates(row, mode) for row in pool])
        return float(np.mean(agg < threshold))

    return accepted_fraction(pn), accepted_fraction(pa)


@dataclass(frozen=True)
class BenchRow:
    """One trained-and-evaluated benchmark cell."""

    algorithm: str
    combination: tuple[int, ...]
    seed: int
    auc: float
    runtime_s: float


@dataclass(frozen=True)
class BenchmarkPlan:
    """What to run: dataset, algorithms, combinations, repetitions."""

    dataset: Dataset
    algorithms: tuple[str, ...]
    m: int | None = None
    normal_ids: tuple[int, ...] | None = None
    sweep: bool = False
    combination_limit: int | None = 20
    seeds: int = 10
    base_seed: int = 0
    train_fraction: float = 0.8
    hyperparams: Hyperparams = field(default_factory=Hyperparams)

    def __post_init__(self):
        if not self.algorithms:
            raise ConfigurationError("at least one algorithm is required")
        for name in self.algorithms:
            if name not in ALGORITHMS:
                raise ConfigurationError(
                    f"unknown algorithm {name!r}, expected subset of {ALGORITHMS}"
                )
        if self.seeds < 1:
            raise ConfigurationError("seeds must be >= 1")
        if self.normal_ids is None and self.m is None:
            raise ConfigurationError("either normal_ids or m must be given")


@dataclass(frozen=True)
class BenchmarkResult:
    rows: tuple[BenchRow, ...]
    summaries: dict  # algorithm -> list[AucSummary], combination order


def plan_combinations(plan):
    """The normal-category combinations a plan will run, in output order."""
    if plan.normal_ids is not None:
        return [tuple(sorted(plan.normal_ids))]
    k = plan.dataset.k
    if not plan.sweep:
        return [tuple(range(plan.m))]
    combos = enumerate_combinations(k, plan.m)
    limit = plan.combination_limit
    if limit is not None and len(combos) > limit:
        rng = np.random.default_rng(plan.base_seed)
        chosen = rng.choice(len(combos), size=limit, replace=False)
        combos = [combos[i] for i in sorted(chosen)]
    return combos


def _run_cell(plan, algorithm, combination, run_index):
    run_seed = plan.base_seed + run_index
    split = select_normal(
        plan.dataset,
        SplitSpec(
            normal_ids=combination,
            train_fraction=plan.train_fraction,
            seed=run_seed,
        ),
    )
    hp = replace(plan.hyperparams, seed=run_seed)
    started = time.perf_counter()
    detector = _TRAINERS[algorithm](split.train_by_category, hp)
    scores = predict_scores(detector, split.test_features)
    auc = roc_auc(scores, split.test_is_anomaly).auc
    elapsed = time.perf_counter() - started
    return BenchRow(
        algorithm=algorithm,
        combination=tuple(combination),
        seed=run_seed,
        auc=auc,
        runtime_s=elapsed,
    )


def _worker_count(n_cells):
    raw = os.environ.get("MCAD_THREADS", "0").strip()
    try:
        n = int(raw)
    except ValueError as exc:
        raise ConfigurationError(f"MCAD_THREADS={raw!r} is not an integer") from exc
    return max(0, min(n, n_cells))


def run_benchmark(plan, on_row=None):
    """Train and score every (combination, algorithm, seed) cell.

    Cells are independent and seeded, so results do not depend on execution
    order; MCAD_THREADS >= 2 enables a worker pool. on_row, when given, is
    called with each BenchRow in deterministic order as soon as it (and all
    earlier cells) completed, so partial results survive a failing cell.
    """
    combos = plan_combinations(plan)
    cells = [
        (algorithm, combination, run)
        for combination in combos
        for algorithm in plan.algorithms
        for run in range(plan.seeds)
    ]
    workers = _worker_count(len(cells))
    rows = []

    def finish(row):
        rows.append(row)
        if on_row is not None:
            on_row(row)

    if workers >= 2:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_cell, plan, *cell) for cell in cells]
            for fut in futures:
                finish(fut.result())
    else:
        for cell in cells:
            finish(_run_cell(plan, *cell))

    summaries = {}
    for algorithm in plan.algorithms:
        per_algo = []
        for combination in combos:
            runs = [
                r.auc
                for r in rows
                if r.algorithm == algorithm and r.combination == tuple(combination)
            ]
            per_algo.append(AucSummary.from_runs(combination, runs))
        summaries[algorithm] = per_algo
    return BenchmarkResult(rows=tuple(rows), summaries=summaries)
