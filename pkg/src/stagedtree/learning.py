"""Structure learning: greedy stage merging, CMI parent selection, order search.

All searches are pure functions of (data, config); every tie is broken
deterministically so repeated runs give bit-identical results.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .dataset import Dataset
from .errors import ModelError
from .tree import (
    FitConfig,
    Ordering,
    StageAssignment,
    StagedTree,
    canonical_stage_assignment,
    context_shape,
    fit,
    n_contexts,
    stage_counts,
    validate_order,
)

__all__ = [
    "LearnConfig",
    "OrderSearchConfig",
    "bhc_stage_depth",
    "bhc",
    "exhaustive_stage",
    "kparents_learn",
    "learn",
    "cmi",
    "variable_score",
    "ordering_score",
    "order_search",
    "order_search_dp",
    "order_search_grouped",
]

# A merge must improve BIC by more than this to be accepted; guards against
# floating-point merge cycles.
MERGE_TOLERANCE = 1e-9

MAX_ORACLE_CONTEXTS = 8
MAX_DP_VARIABLES = 12


@dataclass(frozen=True)
class LearnConfig:
    """Staging algorithm selection: plain greedy merging or the CMI-restricted
    variant with at most k parents per variable."""

    algorithm: str = "bhc"
    k: int | None = None
    score: str = "bic"
    smoothing: float = 0.0

    def __post_init__(self):
        if self.algorithm not in ("bhc", "kparents"):
            raise ModelError(f"unknown algorithm {self.algorithm!r}")
        if self.score != "bic":
            raise ModelError(f"unsupported score {self.score!r}")
        if self.algorithm == "kparents" and (self.k is None or self.k < 1):
            raise ModelError("kparents requires k >= 1")
        if self.smoothing < 0:
            raise ModelError("smoothing must be non-negative")

    def label(self) -> str:
        return "bhc" if self.algorithm == "bhc" else f"kparents:{self.k}"


@dataclass(frozen=True)
class OrderSearchConfig:
    """How to pick a variable ordering before staging."""

    mode: str = "dp"
    groups: tuple[tuple[int, ...], ...] | None = None
    max_p: int = MAX_DP_VARIABLES

    def __post_init__(self):
        if self.mode not in ("fixed", "dp", "grouped"):
            raise ModelError(f"unknown order-search mode {self.mode!r}")
        if self.mode == "grouped" and not self.groups:
            raise ModelError("grouped mode needs a group specification")


def _stage_loglik(counts: np.ndarray, smoothing: float) -> np.ndarray:
    """Multinomial log-likelihood of each row of pooled counts at its own MLE
    (or smoothed estimate)."""
    counts = np.asarray(counts, dtype=float)
    if counts.ndim == 1:
        counts = counts[None, :]
    levels = counts.shape[1]
    totals = counts.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        probs = (counts + smoothing) / (totals + smoothing * levels)
        terms = np.where(counts > 0, counts * np.log(probs), 0.0)
    return terms.sum(axis=1)


def depth_bic(counts: np.ndarray, n_rows: int, smoothing: float) -> float:
    """BIC contribution of one depth given pooled per-stage counts."""
    levels = counts.shape[1]
    loglik = float(_stage_loglik(counts, smoothing).sum())
    return -2.0 * loglik + counts.shape[0] * (levels - 1) * math.log(n_rows)


def _bhc_merge(counts: np.ndarray, n_rows: int, smoothing: float, trace=None) -> np.ndarray:
    """Greedy agglomeration of the rows of a pooled count matrix.

    Starts from the given rows as stages and repeatedly applies the merge with
    the best (most negative) BIC delta until no merge improves the score by
    more than MERGE_TOLERANCE. Among bit-equal deltas the pair with the lowest
    (i, j) ids wins, where ids index the initial rows and a merged pair keeps
    the lower id. Returns the final stage id of every initial row; ``trace``,
    if given, collects the accepted BIC deltas in order.
    """
    k = counts.shape[0]
    assign = np.arange(k)
    if k < 2:
        return assign
    levels = counts.shape[1]
    param_gain = (levels - 1) * math.log(n_rows)

    pooled = np.asarray(counts, dtype=float).copy()
    ll = _stage_loglik(pooled, smoothing)
    active = np.ones(k, dtype=bool)

    delta = np.full((k, k), np.inf)
    for i in range(k - 1):
        merged_ll = _stage_loglik(pooled[i] + pooled[i + 1:], smoothing)
        delta[i, i + 1:] = -2.0 * (merged_ll - ll[i] - ll[i + 1:]) - param_gain

    while True:
        flat = int(np.argmin(delta))
        i, j = divmod(flat, k)
        if delta[i, j] >= -MERGE_TOLERANCE:
            break
        if trace is not None:
            trace.append(float(delta[i, j]))
        pooled[i] += pooled[j]
        ll[i] = float(_stage_loglik(pooled[i], smoothing)[0])
        active[j] = False
        delta[j, :] = np.inf
        delta[:, j] = np.inf
        assign[assign == j] = i
        others = np.flatnonzero(active)
        others = others[others != i]
        if others.size:
            merged_ll = _stage_loglik(pooled[i] + pooled[others], smoothing)
            pair_delta = -2.0 * (merged_ll - ll[i] - ll[others]) - param_gain
            lo = np.minimum(others, i)
            hi = np.maximum(others, i)
            delta[lo, hi] = pair_delta
    return assign


def bhc_stage_depth(d: Dataset, order, depth: int, smoothing: float = 0.0) -> StageAssignment:
    """Backward hill-climbing staging of one depth, starting from singletons."""
    order = validate_order(d.schema, order)
    total = n_contexts(d.schema, order, depth)
    singleton = np.arange(total)
    counts = stage_counts(d, order, depth, singleton, total)
    assign = _bhc_merge(counts, d.n, smoothing)
    return canonical_stage_assignment(depth, assign)


def bhc(d: Dataset, order, smoothing: float = 0.0) -> StagedTree:
    """Full backward hill-climbing learner: stages every depth independently,
    then fits the stage probabilities."""
    order = validate_order(d.schema, order)
    stagings = tuple(bhc_stage_depth(d, order, depth, smoothing) for depth in range(len(order)))
    skeleton = StagedTree(d.schema, order, stagings)
    return fit(skeleton, d, FitConfig(smoothing))


def _set_partitions(n: int):
    """All set partitions of range(n) as restricted-growth strings."""
    code = [0] * n

    def rec(i: int, maximum: int):
        if i == n:
            yield tuple(code)
            return
        for value in range(maximum + 2):
            code[i] = value
            yield from rec(i + 1, max(maximum, value))

    yield from rec(1, 0) if n > 1 else iter([tuple(code)])


def exhaustive_stage(d: Dataset, order, depth: int, smoothing: float = 0.0) -> StageAssignment:
    """Globally BIC-optimal staging of one depth by enumerating all partitions.

    Only usable as a small-scale oracle: the context count is capped at 8
    (Bell(9) partitions would be too many to enumerate).
    """
    order = validate_order(d.schema, order)
    total = n_contexts(d.schema, order, depth)
    if total > MAX_ORACLE_CONTEXTS:
        raise ModelError(
            f"exhaustive staging supports at most {MAX_ORACLE_CONTEXTS} contexts, got {total}"
        )
    base = stage_counts(d, order, depth, np.arange(total), total)
    best_code = None
    best_score = math.inf
    for code in _set_partitions(total):
        stages = max(code) + 1
        pooled = np.zeros((stages, base.shape[1]))
        np.add.at(pooled, np.asarray(code), base)
        score = depth_bic(pooled, d.n, smoothing)
        if score < best_score:
            best_score = score
            best_code = code
    return canonical_stage_assignment(depth, np.asarray(best_code))


def cmi(d: Dataset, i: int, s: int, conditioning=()) -> float:
    """Plug-in conditional mutual information I(X_i, X_s | X_C) in nats.

    Computed from the empirical contingency table; clamped at zero against
    floating-point noise.
    """
    conditioning = tuple(int(c) for c in conditioning)
    if i == s:
        raise ModelError("cmi requires two distinct variables")
    if i in conditioning or s in conditioning:
        raise ModelError("conditioning set must not contain the pair")
    counts = d.schema.level_counts
    li, ls = counts[i], counts[s]
    if conditioning:
        shape = tuple(counts[c] for c in conditioning)
        ccode = np.ravel_multi_index([d.rows[:, c] for c in conditioning], dims=shape)
        n_cond = int(np.prod(shape))
    else:
        ccode = np.zeros(d.n, dtype=np.int64)
        n_cond = 1
    flat = np.bincount((ccode * li + d.rows[:, i]) * ls + d.rows[:, s], minlength=n_cond * li * ls)
    table = flat.reshape(n_cond, li, ls).astype(float)

    n_c = table.sum(axis=(1, 2), keepdims=True)
    n_ca = table.sum(axis=2, keepdims=True)
    n_cb = table.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = table * n_c / (n_ca * n_cb)
        terms = np.where(table > 0, table * np.log(ratio), 0.0)
    value = float(terms.sum()) / d.n
    return max(value, 0.0)


def _greedy_parents(d: Dataset, var: int, candidates: tuple[int, ...], k: int) -> tuple[int, ...]:
    """Forward selection of k parents by conditional mutual information.

    Ties in the argmax go to the smallest variable index.
    """
    selected: list[int] = []
    pool = list(candidates)
    for _ in range(min(k, len(pool))):
        best_var = None
        best_value = -math.inf
        for cand in sorted(set(pool) - set(selected)):
            value = cmi(d, var, cand, tuple(selected))
            if value > best_value:
                best_value = value
                best_var = cand
        selected.append(best_var)
    return tuple(sorted(selected))


def _projection_staging(d: Dataset, order: Ordering, depth: int, parents: tuple[int, ...]) -> np.ndarray:
    """Initial stage id of every depth-j context: contexts that agree on the
    selected parent coordinates start in the same stage."""
    shape = context_shape(d.schema, order, depth)
    total = int(np.prod(shape)) if depth else 1
    if depth == 0:
        return np.zeros(1, dtype=np.int64)
    parent_pos = [i for i in range(depth) if order[i] in parents]
    if not parent_pos:
        return np.zeros(total, dtype=np.int64)
    coords = np.unravel_index(np.arange(total), shape)
    par_shape = tuple(shape[i] for i in parent_pos)
    return np.ravel_multi_index([coords[i] for i in parent_pos], dims=par_shape).astype(np.int64)


def _restricted_stage_depth(
    d: Dataset, order: Ordering, depth: int, parents: tuple[int, ...], smoothing: float
) -> StageAssignment:
    """BHC merging started from the parent-projection staging."""
    init = _projection_staging(d, order, depth, parents)
    n_init = int(init.max()) + 1
    counts = stage_counts(d, order, depth, init, n_init)
    merged = _bhc_merge(counts, d.n, smoothing)
    return canonical_stage_assignment(depth, merged[init])


def kparents_learn(
    d: Dataset, order, k: int, smoothing: float = 0.0
) -> tuple[StagedTree, tuple[tuple[int, ...], ...]]:
    """Learn a staged tree whose compressed graph has in-degree at most k.

    Each variable first receives up to k parents among its predecessors by
    greedy conditional-mutual-information selection (all predecessors when
    there are at most k of them). Its staging then starts from the partition
    induced by the parent values and is merged greedily, which can only
    coarsen within that partition, so the in-degree bound survives learning.
    """
    if k < 1:
        raise ModelError("k must be >= 1")
    order = validate_order(d.schema, order)
    stagings = []
    parent_sets = []
    for depth in range(len(order)):
        predecessors = tuple(order[:depth])
        if depth <= k:
            parents = tuple(sorted(predecessors))
        else:
            parents = _greedy_parents(d, order[depth], predecessors, k)
        parent_sets.append(parents)
        stagings.append(_restricted_stage_depth(d, order, depth, parents, smoothing))
    skeleton = StagedTree(d.schema, order, tuple(stagings))
    return fit(skeleton, d, FitConfig(smoothing)), tuple(parent_sets)


def learn(d: Dataset, order, cfg: LearnConfig) -> StagedTree:
    """Dispatch to the configured staging learner at a fixed ordering."""
    if cfg.algorithm == "bhc":
        return bhc(d, order, cfg.smoothing)
    tree, _ = kparents_learn(d, order, cfg.k, cfg.smoothing)
    return tree


def variable_score(d: Dataset, var: int, predecessors, cfg: LearnConfig, cache=None) -> float:
    """BIC contribution of one variable given an unordered predecessor set.

    The contribution depends on the set only (context counts pool the same
    rows under any internal order), which is what makes subset dynamic
    programming over orderings exact.
    """
    predecessors = tuple(sorted(int(v) for v in predecessors))
    key = (var, predecessors)
    if cache is not None and key in cache:
        return cache[key]
    cols = list(predecessors) + [var]
    sub = d.select_columns(cols)
    sub_order = tuple(range(len(cols)))
    depth = len(predecessors)
    if cfg.algorithm == "kparents" and depth > cfg.k:
        parents = _greedy_parents(sub, depth, tuple(range(depth)), cfg.k)
        staging = _restricted_stage_depth(sub, sub_order, depth, parents, cfg.smoothing)
    else:
        staging = bhc_stage_depth(sub, sub_order, depth, cfg.smoothing)
    counts = stage_counts(sub, sub_order, depth, staging.stage_of, staging.n_stages)
    score = depth_bic(counts, d.n, cfg.smoothing)
    if cache is not None:
        cache[key] = score
    return score


def ordering_score(d: Dataset, order, cfg: LearnConfig, cache=None) -> float:
    """Total BIC of the learned tree under one ordering.

    Summed with math.fsum so the total does not depend on the order in which
    the per-depth terms accumulate; orderings whose terms form the same
    multiset score bit-identically.
    """
    order = validate_order(d.schema, order)
    terms = [
        variable_score(d, var, order[:depth], cfg, cache) for depth, var in enumerate(order)
    ]
    return math.fsum(terms)


def order_search_dp(
    d: Dataset,
    cfg: LearnConfig,
    fixed_last: int | None = None,
    max_p: int = MAX_DP_VARIABLES,
    cache=None,
) -> tuple[Ordering, float]:
    """Exact minimum-score ordering by dynamic programming over subsets.

    The per-variable score is order-invariant within a predecessor set, so the
    best arrangement of each subset extends optimal arrangements of its
    one-smaller subsets. Ties resolve to the lexicographically smallest
    permutation. Optionally one response variable is pinned to the last
    position and the search runs over the rest.
    """
    p = len(d.schema)
    variables = list(range(p))
    if fixed_last is not None:
        if not 0 <= fixed_last < p:
            raise ModelError(f"fixed_last={fixed_last} out of range")
        variables.remove(fixed_last)
    m = len(variables)
    if m > max_p:
        raise ModelError(
            f"{m} variables exceed the dynamic-programming guard ({max_p}); "
            "use grouped order search instead"
        )
    if cache is None:
        cache = {}

    full = (1 << m) - 1
    # rem_terms[mask] holds the per-depth scores of the best arrangement of
    # the variables outside ``mask``; candidates are compared through
    # math.fsum so ties between equal term multisets are exact.
    rem_terms: list[tuple[float, ...]] = [()] * (1 << m)
    best_next = np.full(1 << m, -1, dtype=np.int64)

    masks_by_size: list[list[int]] = [[] for _ in range(m + 1)]
    for mask in range(1 << m):
        masks_by_size[bin(mask).count("1")].append(mask)

    for size in range(m - 1, -1, -1):
        for mask in masks_by_size[size]:
            prefix = tuple(variables[b] for b in range(m) if mask >> b & 1)
            best = math.inf
            choice = -1
            chosen_terms: tuple[float, ...] = ()
            for b in range(m):
                if mask >> b & 1:
                    continue
                term = variable_score(d, variables[b], prefix, cfg, cache)
                terms = (term,) + rem_terms[mask | (1 << b)]
                value = math.fsum(terms)
                if value < best:
                    best = value
                    choice = b
                    chosen_terms = terms
            rem_terms[mask] = chosen_terms
            best_next[mask] = choice

    order: list[int] = []
    mask = 0
    while mask != full:
        b = int(best_next[mask])
        order.append(variables[b])
        mask |= 1 << b
    if fixed_last is not None:
        order.append(fixed_last)
    result = tuple(order)
    return result, ordering_score(d, result, cfg, cache)


def order_search(
    d: Dataset,
    cfg: LearnConfig,
    search: OrderSearchConfig,
    fixed_last: int | None = None,
) -> tuple[Ordering, float]:
    """Dispatch an order search according to its configuration."""
    if search.mode == "dp":
        return order_search_dp(d, cfg, fixed_last=fixed_last, max_p=search.max_p)
    if search.mode == "grouped":
        return order_search_grouped(d, search.groups, cfg, max_p=search.max_p)
    raise ModelError("mode 'fixed' carries no search; pass the ordering directly")


def order_search_grouped(
    d: Dataset,
    groups,
    cfg: LearnConfig,
    max_p: int = MAX_DP_VARIABLES,
) -> tuple[Ordering, float]:
    """Two-stage order search for larger variable sets.

    Each group is ordered internally by dynamic programming with the other
    groups absent; the groups themselves (internal orders pinned) are then
    arranged by exhaustive block enumeration against the full data.
    """
    p = len(d.schema)
    groups = [tuple(int(v) for v in g) for g in groups]
    flat = [v for g in groups for v in g]
    if sorted(flat) != list(range(p)):
        raise ModelError("groups must partition the variable set")
    if len(groups) > 8:
        raise ModelError("at most 8 groups are supported")

    internal: list[tuple[int, ...]] = []
    for group in groups:
        if len(group) > max_p:
            raise ModelError(f"group {group} exceeds the guard of {max_p} variables")
        cols = sorted(group)
        sub = d.select_columns(cols)
        sub_order, _ = order_search_dp(sub, cfg, max_p=max_p)
        internal.append(tuple(cols[i] for i in sub_order))

    cache: dict = {}
    best_order: Ordering | None = None
    best_score = math.inf
    for perm in itertools.permutations(range(len(groups))):
        candidate = tuple(v for gi in perm for v in internal[gi])
        score = ordering_score(d, candidate, cfg, cache)
        if score < best_score:
            best_score = score
            best_order = candidate
    return best_order, best_score
