"""Cross-validated evaluation of consensus learners.

Per fold and algorithm: bootstrap-consensus learning on the training split,
train BIC at the structure-learning smoothing, and held-out log-likelihood
under a refit with predictive smoothing (so unseen contexts do not send the
test score to -inf). Test rows never reach any learner.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass

import numpy as np

from .consensus import run_bootstrap_consensus
from .dataset import Dataset, ResamplePlan, derived_seed, kfold_split
from .errors import ModelError
from .learning import order_search_dp
from .tree import FitConfig, StagedTree, bic, fit, log_likelihood, n_parameters

__all__ = ["CvRecord", "CvReport", "SummaryRow", "run_cv", "summarize", "report_export"]


@dataclass(frozen=True)
class CvRecord:
    fold: int
    algorithm: str
    train_bic: float
    test_loglik: float
    n_parameters: int
    wall_time: float


@dataclass(frozen=True)
class CvReport:
    folds: int
    records: tuple[CvRecord, ...]


@dataclass(frozen=True)
class SummaryRow:
    algorithm: str
    metric: str
    minimum: float
    q1: float
    median: float
    q3: float
    maximum: float


def run_cv(
    d: Dataset,
    algorithms,
    folds: int,
    bootstrap_replicates: int,
    cut: float = 0.5,
    seed: int = 0,
    order=None,
    fixed_last: int | None = None,
    predictive_smoothing: float = 1.0,
    linkage: str = "average",
    threads: int = 1,
    reorder_per_fold: bool = False,
) -> CvReport:
    """Evaluate each algorithm with within-fold bootstrap consensus.

    The variable ordering is learned once on the full data per algorithm and
    reused across folds, unless an explicit ``order`` is supplied or
    ``reorder_per_fold`` asks for a per-fold search.
    """
    algorithms = list(algorithms)
    if not algorithms:
        raise ModelError("need at least one algorithm")

    full_orders = {}
    if order is not None:
        for cfg in algorithms:
            full_orders[cfg.label()] = tuple(order)
    elif not reorder_per_fold:
        for cfg in algorithms:
            full_orders[cfg.label()], _ = order_search_dp(d, cfg, fixed_last=fixed_last)

    splits = kfold_split(d, folds, derived_seed(seed, 0))
    records = []
    for fold_index, (train, test) in enumerate(splits):
        plan = ResamplePlan(bootstrap_replicates, derived_seed(seed, 1 + fold_index))
        for cfg in algorithms:
            started = time.perf_counter()
            if reorder_per_fold and order is None:
                fold_order, _ = order_search_dp(train, cfg, fixed_last=fixed_last)
            else:
                fold_order = full_orders[cfg.label()]
            result = run_bootstrap_consensus(
                train, fold_order, plan, cfg, cut=cut, linkage=linkage, threads=threads
            )
            model: StagedTree = result.averaged
            train_score = bic(model, train)
            predictive = fit(model, train, FitConfig(predictive_smoothing))
            test_score = log_likelihood(predictive, test)
            elapsed = time.perf_counter() - started
            records.append(
                CvRecord(
                    fold_index,
                    cfg.label(),
                    train_score,
                    test_score,
                    n_parameters(model),
                    elapsed,
                )
            )
    return CvReport(folds, tuple(records))


_METRICS = ("train_bic", "test_loglik", "n_parameters")


def summarize(report: CvReport, include_timings: bool = False) -> list[SummaryRow]:
    """Quartile summary per algorithm and metric (linear interpolation)."""
    metrics = _METRICS + (("wall_time",) if include_timings else ())
    algorithms = sorted({r.algorithm for r in report.records})
    rows = []
    for algorithm in algorithms:
        values = [r for r in report.records if r.algorithm == algorithm]
        for metric in metrics:
            data = np.asarray([getattr(r, metric) for r in values], dtype=float)
            q = np.percentile(data, [0, 25, 50, 75, 100])
            rows.append(SummaryRow(algorithm, metric, *(float(x) for x in q)))
    return rows


def report_export(report: CvReport, records_path: str, summary_path: str, include_timings: bool = True) -> None:
    """Write raw records and quartile summaries as CSV.

    Floats use full precision so recomputing the summary from the records
    file reproduces it exactly.
    """
    with open(records_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        header = ["fold", "algorithm", "train_bic", "test_loglik", "n_parameters"]
        if include_timings:
            header.append("wall_time")
        writer.writerow(header)
        for r in report.records:
            row = [r.fold, r.algorithm, repr(r.train_bic), repr(r.test_loglik), r.n_parameters]
            if include_timings:
                row.append(repr(r.wall_time))
            writer.writerow(row)
    with open(summary_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["algorithm", "metric", "min", "q1", "median", "q3", "max"])
        for s in summarize(report, include_timings=include_timings):
            writer.writerow(
                [s.algorithm, s.metric]
                + [repr(v) for v in (s.minimum, s.q1, s.median, s.q3, s.maximum)]
            )
