"""Robust structure learning by bootstrap aggregation.

One replicate pipeline = resample, learn, summarize. Replicates run as a
parallel map with per-replicate seeds derived from the master seed, then a
single-threaded reduce tallies orderings, co-staging disagreement, and edge
labels. All aggregate statistics are kept as integer counts internally so
invariants like "the two directions of an order vote sum to M" hold exactly.
"""

from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage as scipy_linkage
from scipy.spatial.distance import squareform

from .aldag import compress
from .dataset import Dataset, ResamplePlan, bootstrap_replicate
from .errors import DataError, ModelError
from .learning import LearnConfig, learn, order_search_dp
from .tree import (
    FitConfig,
    Ordering,
    StageAssignment,
    StagedTree,
    canonical_stage_assignment,
    context_label,
    context_tuples,
    fit,
    validate_order,
)

__all__ = [
    "OrderVoteMatrix",
    "ConsensusOrder",
    "StagingEnsemble",
    "ConsensusResult",
    "EdgeStrengthRow",
    "tally_orders",
    "bootstrap_orders",
    "consensus_order",
    "ensemble_from_stagings",
    "bootstrap_stagings",
    "consensus_staging",
    "averaged_tree",
    "edge_strength_table",
    "staging_heatmap_export",
    "load_dissimilarity_csv",
    "run_bootstrap_consensus",
]


@dataclass(frozen=True, eq=False)
class OrderVoteMatrix:
    """Pairwise precedence votes over M learned orderings.

    ``counts[j, k]`` is the number of replicates in which variable j preceded
    variable k; the diagonal is unused and held at zero.
    """

    counts: np.ndarray = field(repr=False)
    replicates: int

    def __post_init__(self):
        counts = np.ascontiguousarray(self.counts, dtype=np.int64)
        p = counts.shape[0]
        if counts.shape != (p, p):
            raise ModelError("vote counts must be a square matrix")
        if np.diag(counts).any():
            raise ModelError("vote matrix diagonal must be zero")
        off = ~np.eye(p, dtype=bool)
        if not np.array_equal((counts + counts.T)[off], np.full(p * p - p, self.replicates)):
            raise ModelError("votes for (j,k) and (k,j) must sum to the replicate count")
        counts.flags.writeable = False
        object.__setattr__(self, "counts", counts)

    @property
    def p(self) -> int:
        return self.counts.shape[0]

    @property
    def frequencies(self) -> np.ndarray:
        return self.counts / self.replicates


@dataclass(frozen=True)
class ConsensusOrder:
    """A linearization of the vote matrix; ``cyclic`` flags intransitive
    pairwise majorities that no ordering can fully respect."""

    order: Ordering
    cyclic: bool


def tally_orders(orders, p: int) -> OrderVoteMatrix:
    counts = np.zeros((p, p), dtype=np.int64)
    n = 0
    for order in orders:
        order = tuple(order)
        if sorted(order) != list(range(p)):
            raise ModelError(f"order {order} is not a permutation of 0..{p - 1}")
        position = np.empty(p, dtype=np.int64)
        for idx, v in enumerate(order):
            position[v] = idx
        counts += position[:, None] < position[None, :]
        n += 1
    if n == 0:
        raise ModelError("cannot tally an empty collection of orders")
    return OrderVoteMatrix(counts, n)


def _order_chunk_worker(payload):
    d, cfg, fixed_last, seeds = payload
    out = []
    for seed in seeds:
        replicate = bootstrap_replicate(d, seed)
        order, _ = order_search_dp(replicate, cfg, fixed_last=fixed_last)
        out.append(order)
    return out


def _staging_chunk_worker(payload):
    d, order, cfg, seeds = payload
    out = []
    for seed in seeds:
        replicate = bootstrap_replicate(d, seed)
        tree = learn(replicate, order, cfg)
        stages = tuple(s.stage_of for s in tree.stagings)
        aldag = compress(tree)
        edges = tuple((e.parent, e.child, e.label) for e in aldag.edges)
        out.append((stages, edges))
    return out


def _parallel_chunks(worker, make_payload, seeds, threads):
    if threads <= 1:
        return worker(make_payload(list(seeds)))
    seeds = list(seeds)
    n_chunks = min(len(seeds), max(threads * 4, 1))
    base, extra = divmod(len(seeds), n_chunks)
    chunks = []
    start = 0
    for c in range(n_chunks):
        size = base + (1 if c < extra else 0)
        chunks.append(seeds[start:start + size])
        start += size
    flat = []
    with ProcessPoolExecutor(max_workers=threads) as pool:
        for part in pool.map(worker, [make_payload(c) for c in chunks]):
            flat.extend(part)
    return flat


def bootstrap_orders(
    d: Dataset,
    plan: ResamplePlan,
    cfg: LearnConfig,
    fixed_last: int | None = None,
    threads: int = 1,
) -> OrderVoteMatrix:
    """Learn one optimal ordering per bootstrap replicate and tally pairwise
    precedence frequencies."""
    seeds = [plan.replicate_seed(i) for i in range(plan.replicates)]
    orders = _parallel_chunks(
        _order_chunk_worker, lambda c: (d, cfg, fixed_last, c), seeds, threads
    )
    return tally_orders(orders, len(d.schema))


def consensus_order(votes: OrderVoteMatrix, tie_seed: int | None = None) -> ConsensusOrder:
    """Linearize the vote matrix by descending Copeland score.

    A variable's score counts the opponents it beats or ties at the majority
    threshold. When the pairwise majorities are transitive this reproduces the
    order they define; otherwise the result is flagged cyclic. Score ties go
    to the smaller variable index, or to a seeded random rank when
    ``tie_seed`` is given.
    """
    counts = votes.counts
    m = votes.replicates
    p = votes.p
    wins = np.zeros(p, dtype=np.int64)
    for j in range(p):
        for k in range(p):
            if j != k and 2 * counts[j, k] >= m:
                wins[j] += 1
    if tie_seed is None:
        tiebreak = np.arange(p)
    else:
        tiebreak = np.random.default_rng(tie_seed).permutation(p)
    order = tuple(sorted(range(p), key=lambda j: (-wins[j], int(tiebreak[j]))))
    cyclic = any(
        2 * counts[order[a], order[b]] < m
        for a in range(p)
        for b in range(a + 1, p)
    )
    return ConsensusOrder(order, cyclic)


@dataclass(frozen=True, eq=False)
class StagingEnsemble:
    """Replicate stagings per depth plus their co-staging disagreement.

    ``z[j]`` has one column per replicate holding the stage id of every
    depth-j context; ``dissimilarity[j][u, v]`` is the fraction of replicates
    that place contexts u and v in different stages.
    """

    order: Ordering
    z: tuple[np.ndarray, ...]
    dissimilarity: tuple[np.ndarray, ...]

    @property
    def replicates(self) -> int:
        return self.z[0].shape[1]

    @property
    def depths(self) -> int:
        return len(self.z)


def _disagreement(z: np.ndarray) -> np.ndarray:
    diff = z[:, None, :] != z[None, :, :]
    return diff.mean(axis=2)


def ensemble_from_stagings(order, replicate_stagings) -> StagingEnsemble:
    """Assemble the per-depth stage-id matrices from replicate stagings.

    ``replicate_stagings`` holds, per replicate, one stage-id array (or
    StageAssignment) per depth.
    """
    replicate_stagings = list(replicate_stagings)
    if not replicate_stagings:
        raise ModelError("need at least one replicate staging")
    depths = len(replicate_stagings[0])
    z = []
    for depth in range(depths):
        cols = []
        for rep in replicate_stagings:
            stage_of = rep[depth].stage_of if isinstance(rep[depth], StageAssignment) else rep[depth]
            cols.append(np.asarray(stage_of, dtype=np.int64))
        z.append(np.column_stack(cols))
    dissimilarity = tuple(_disagreement(mat) for mat in z)
    return StagingEnsemble(tuple(order), tuple(z), dissimilarity)


def _replicate_results(d: Dataset, order, plan: ResamplePlan, cfg: LearnConfig, threads: int):
    """Per-replicate stagings and compressed edge lists, in replicate order."""
    order = validate_order(d.schema, order)
    seeds = [plan.replicate_seed(i) for i in range(plan.replicates)]
    return _parallel_chunks(
        _staging_chunk_worker, lambda c: (d, order, cfg, c), seeds, threads
    )


def bootstrap_stagings(
    d: Dataset,
    order,
    plan: ResamplePlan,
    cfg: LearnConfig,
    threads: int = 1,
) -> StagingEnsemble:
    """Learn one staging per bootstrap replicate at a fixed ordering and
    aggregate them into per-depth stage matrices with their disagreement."""
    order = validate_order(d.schema, order)
    results = _replicate_results(d, order, plan, cfg, threads)
    return ensemble_from_stagings(order, [stages for stages, _ in results])


def consensus_staging(
    d_matrix: np.ndarray, cut: float, depth: int, linkage: str = "average"
) -> StageAssignment:
    """Cluster the disagreement matrix and cut the dendrogram at ``cut``.

    Contexts whose merge heights stay at or below the cut end up in the same
    consensus stage.
    """
    d_matrix = np.asarray(d_matrix, dtype=float)
    k = d_matrix.shape[0]
    if d_matrix.shape != (k, k) or not np.allclose(d_matrix, d_matrix.T, atol=0):
        raise ModelError("dissimilarity matrix must be square and symmetric")
    if np.diag(d_matrix).any():
        raise ModelError("dissimilarity matrix must have a zero diagonal")
    if (d_matrix < 0).any() or (d_matrix > 1).any():
        raise ModelError("dissimilarity entries must lie in [0, 1]")
    if not 0 < cut < 1:
        raise ModelError("cut height must lie strictly between 0 and 1")
    if linkage not in ("average", "complete", "single"):
        raise ModelError(f"unsupported linkage {linkage!r}")
    if k == 1:
        return StageAssignment(depth, np.zeros(1, dtype=np.int64), 1)
    merges = scipy_linkage(squareform(d_matrix, checks=False), method=linkage)
    labels = fcluster(merges, t=cut, criterion="distance")
    return canonical_stage_assignment(depth, labels)


def averaged_tree(d: Dataset, order, stagings, smoothing: float = 0.0) -> StagedTree:
    """Fit stage probabilities on the full dataset under consensus stagings."""
    skeleton = StagedTree(d.schema, tuple(order), tuple(stagings))
    return fit(skeleton, d, FitConfig(smoothing))


@dataclass(frozen=True)
class EdgeStrengthRow:
    """How often an edge appeared across replicates, and with which labels.

    Counts are integers out of ``replicates`` so the identity
    sum(label counts) == present holds exactly.
    """

    parent: str
    child: str
    replicates: int
    present: int
    label_counts: dict[str, int]

    @property
    def strength(self) -> float:
        return self.present / self.replicates

    def label_fraction(self, label: str) -> float:
        return self.label_counts.get(label, 0) / self.replicates


def _edge_table_from_lists(edge_lists, names) -> tuple[EdgeStrengthRow, ...]:
    m = len(edge_lists)
    present: dict[tuple[int, int], int] = {}
    labels: dict[tuple[int, int], dict[str, int]] = {}
    for edges in edge_lists:
        for parent, child, label in edges:
            key = (parent, child)
            present[key] = present.get(key, 0) + 1
            slot = labels.setdefault(key, {})
            slot[label] = slot.get(label, 0) + 1
    rows = []
    for key in sorted(present):
        parent, child = key
        rows.append(
            EdgeStrengthRow(
                names[parent], names[child], m, present[key], dict(sorted(labels[key].items()))
            )
        )
    return tuple(rows)


def edge_strength_table(aldags) -> tuple[EdgeStrengthRow, ...]:
    """Presence frequency and per-label frequency of every edge appearing in
    a collection of compressed graphs over the same variables."""
    aldags = list(aldags)
    if not aldags:
        raise ModelError("need at least one graph")
    names = aldags[0].schema.names
    for g in aldags:
        if g.schema.names != names:
            raise ModelError("all graphs must share one variable set")
    edge_lists = [tuple((e.parent, e.child, e.label) for e in g.edges) for g in aldags]
    return _edge_table_from_lists(edge_lists, names)


@dataclass(frozen=True, eq=False)
class ConsensusResult:
    """Everything the bootstrap pipeline produces for one dataset."""

    averaged: StagedTree
    stagings: tuple[StageAssignment, ...]
    ensemble: StagingEnsemble
    edge_table: tuple[EdgeStrengthRow, ...]
    votes: OrderVoteMatrix | None = None


def run_bootstrap_consensus(
    d: Dataset,
    order,
    plan: ResamplePlan,
    cfg: LearnConfig,
    cut: float = 0.5,
    linkage: str = "average",
    threads: int = 1,
    votes: OrderVoteMatrix | None = None,
) -> ConsensusResult:
    """Bootstrap stagings at a fixed ordering, cluster them into a consensus
    staging per depth, and fit the averaged tree on the full data."""
    order = validate_order(d.schema, order)
    results = _replicate_results(d, order, plan, cfg, threads)
    ensemble = ensemble_from_stagings(order, [stages for stages, _ in results])
    edge_lists = tuple(edges for _, edges in results)
    stagings = tuple(
        consensus_staging(ensemble.dissimilarity[depth], cut, depth, linkage)
        for depth in range(len(order))
    )
    averaged = averaged_tree(d, order, stagings, cfg.smoothing)
    edge_table = _edge_table_from_lists(edge_lists, d.schema.names)
    return ConsensusResult(averaged, stagings, ensemble, edge_table, votes)


def staging_heatmap_export(d_matrix: np.ndarray, labels, path: str) -> None:
    """Write a dissimilarity matrix as CSV plus a sidecar plot description.

    Floats are written with full precision so a re-import is bit-exact.
    """
    d_matrix = np.asarray(d_matrix, dtype=float)
    labels = list(labels)
    if d_matrix.shape != (len(labels), len(labels)):
        raise DataError("label count does not match the matrix size")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["context"] + labels)
        for i, row_label in enumerate(labels):
            writer.writerow([row_label] + [repr(float(v)) for v in d_matrix[i]])
    sidecar = {
        "kind": "heatmap",
        "source_csv": os.path.basename(path),
        "labels": labels,
        "vmin": 0.0,
        "vmax": 1.0,
        "colormap": "viridis",
    }
    with open(path + ".plot.json", "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2)
        fh.write("\n")


def load_dissimilarity_csv(path: str) -> tuple[list[str], np.ndarray]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    labels = rows[0][1:]
    values = np.array([[float(cell) for cell in row[1:]] for row in rows[1:]])
    return labels, values


def context_labels_for_depth(schema, order, depth: int) -> list[str]:
    """Row labels for a depth's dissimilarity matrix, in enumeration order."""
    return [context_label(schema, order, ctx) for ctx in context_tuples(schema, order, depth)]
