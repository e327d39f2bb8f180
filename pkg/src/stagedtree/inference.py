"""Exact queries on a fitted staged tree.

Everything here works by forward passes over the tree's depth tensors or by
materializing (part of) the joint outcome table, which is capped at desk
scale. Queries never mutate the tree and may run concurrently.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, ModelError
from .tree import MAX_CONTEXTS, StagedTree, context_shape

__all__ = [
    "EvidenceSpec",
    "QueryResult",
    "SweepRow",
    "joint_table",
    "joint_level_iter",
    "marginal",
    "condition_hard",
    "condition_soft",
    "condition_virtual",
    "run_query",
    "mutual_information",
    "whatif_sweep",
]


@dataclass(frozen=True)
class EvidenceSpec:
    """Hard findings (observed levels) and soft findings (asserted marginals)."""

    hard: dict[str, str] = field(default_factory=dict)
    soft: dict[str, tuple[float, ...]] = field(default_factory=dict)

    def __post_init__(self):
        overlap = set(self.hard) & set(self.soft)
        if overlap:
            raise ModelError(f"variables {sorted(overlap)} appear as both hard and soft evidence")
        for name, target in self.soft.items():
            arr = np.asarray(target, dtype=float)
            if (arr < 0).any() or abs(float(arr.sum()) - 1.0) > 1e-9:
                raise ModelError(f"soft target for {name!r} is not a probability distribution")


@dataclass(frozen=True)
class QueryResult:
    """Posterior marginals plus, where applicable, the evidence probability
    and the soft-update convergence diagnostics."""

    marginals: dict[str, np.ndarray]
    evidence_probability: float | None = None
    iterations: int | None = None
    max_deviation: float | None = None


def _depth_tensor(tree: StagedTree, depth: int) -> np.ndarray:
    """Conditional probabilities at one depth, shaped (pred levels..., levels)."""
    probs = tree.require_fitted()
    staging = tree.stagings[depth]
    shape = context_shape(tree.schema, tree.order, depth)
    levels = tree.schema.level_counts[tree.order[depth]]
    return probs[depth][staging.stage_of].reshape(shape + (levels,))


def _check_atom_budget(tree: StagedTree) -> None:
    total = 1
    for count in tree.schema.level_counts:
        total *= count
        if total > MAX_CONTEXTS:
            raise ModelError(
                f"outcome space exceeds {MAX_CONTEXTS} atoms; exact enumeration refused"
            )


def _prefix_joint(tree: StagedTree, last_depth: int) -> np.ndarray:
    """Joint distribution of the first ``last_depth + 1`` ordering variables,
    with axes in ordering positions."""
    total = 1
    for depth in range(last_depth + 1):
        total *= tree.schema.level_counts[tree.order[depth]]
        if total > MAX_CONTEXTS:
            raise ModelError(
                f"prefix outcome space exceeds {MAX_CONTEXTS} cells; exact enumeration refused"
            )
    joint = np.ones(())
    for depth in range(last_depth + 1):
        joint = joint[..., None] * _depth_tensor(tree, depth)
    return joint


def joint_table(tree: StagedTree) -> np.ndarray:
    """Full outcome table, axes in schema variable order.

    The returned array maps every full level-index assignment to its atom
    probability: ``table[i1, ..., ip]``.
    """
    _check_atom_budget(tree)
    joint = _prefix_joint(tree, tree.p - 1)
    inverse = np.argsort(np.asarray(tree.order))
    return np.ascontiguousarray(joint.transpose(inverse))


def joint_level_iter(tree: StagedTree):
    """Yield (level labels, probability) per atom, in lexicographic order of
    the schema's level indices."""
    table = joint_table(tree)
    variables = tree.schema.variables
    for idx in np.ndindex(*tree.schema.level_counts):
        labels = tuple(variables[j].levels[idx[j]] for j in range(tree.p))
        yield labels, float(table[idx])


def marginal(tree: StagedTree, var) -> np.ndarray:
    """Marginal distribution of one variable via a forward pass over the
    ordering prefix that ends at it."""
    var = tree.schema.index(var) if isinstance(var, str) else int(var)
    depth = tree.depth_of(var)
    joint = _prefix_joint(tree, depth)
    axes = tuple(i for i in range(depth + 1) if i != depth)
    return joint.sum(axis=axes)


def _coerce_hard(tree: StagedTree, evidence: dict) -> dict[int, int]:
    out = {}
    for name, label in evidence.items():
        var = tree.schema.index(name) if isinstance(name, str) else int(name)
        level = tree.schema.level_index(var, label) if isinstance(label, str) else int(label)
        if not 0 <= level < tree.schema.level_counts[var]:
            raise ModelError(f"level index {level} out of range for {tree.schema.names[var]!r}")
        out[var] = level
    return out


def condition_hard(tree: StagedTree, evidence: dict) -> QueryResult:
    """Exact conditioning on observed levels.

    Evidence axes are fixed during the forward pass, so memory scales with
    the non-evidence outcome space only.
    """
    ev = _coerce_hard(tree, evidence)
    if not ev:
        raise ModelError("hard conditioning needs at least one finding")
    kept_vars: list[int] = []
    joint = np.ones(())
    for depth in range(tree.p):
        tensor = _depth_tensor(tree, depth)
        var = tree.order[depth]
        index = tuple(
            ev[tree.order[i]] if tree.order[i] in ev else slice(None) for i in range(depth)
        )
        sliced = tensor[index]
        if var in ev:
            joint = joint * sliced[..., ev[var]]
        else:
            joint = joint[..., None] * sliced
            kept_vars.append(var)

    prob = float(joint.sum())
    if prob == 0.0:
        findings = {tree.schema.names[v]: tree.schema.variables[v].levels[l] for v, l in ev.items()}
        raise ModelError(f"evidence has probability zero: {findings}")

    marginals: dict[str, np.ndarray] = {}
    for axis, var in enumerate(kept_vars):
        other = tuple(a for a in range(len(kept_vars)) if a != axis)
        marginals[tree.schema.names[var]] = joint.sum(axis=other) / prob
    for var, level in ev.items():
        one_hot = np.zeros(tree.schema.level_counts[var])
        one_hot[level] = 1.0
        marginals[tree.schema.names[var]] = one_hot
    ordered = {name: marginals[name] for name in tree.schema.names}
    return QueryResult(ordered, evidence_probability=prob)


def _coerce_soft(tree: StagedTree, soft: dict) -> dict[int, np.ndarray]:
    out = {}
    for name, target in soft.items():
        var = tree.schema.index(name) if isinstance(name, str) else int(name)
        arr = np.asarray(target, dtype=float)
        if arr.shape != (tree.schema.level_counts[var],):
            raise ModelError(f"soft target for {tree.schema.names[var]!r} has wrong length")
        if (arr < 0).any() or abs(float(arr.sum()) - 1.0) > 1e-9:
            raise ModelError(f"soft target for {tree.schema.names[var]!r} is not a distribution")
        out[var] = arr
    return out


def _ipf(joint: np.ndarray, targets: dict[int, np.ndarray], tol: float, max_iter: int):
    """Cyclically rescale the joint until every target marginal is matched.

    Axis keys index axes of ``joint``. Returns (joint, iterations, deviation).
    """

    def deviation() -> float:
        worst = 0.0
        for axis, target in targets.items():
            other = tuple(a for a in range(joint.ndim) if a != axis)
            worst = max(worst, float(np.abs(joint.sum(axis=other) - target).max()))
        return worst

    dev = deviation()
    if dev < tol:
        return joint, 0, dev
    for iteration in range(1, max_iter + 1):
        for axis in sorted(targets):
            target = targets[axis]
            other = tuple(a for a in range(joint.ndim) if a != axis)
            current = joint.sum(axis=other)
            impossible = (current == 0) & (target > 0)
            if impossible.any():
                raise ModelError(
                    f"soft target puts mass on a level the model assigns probability zero "
                    f"(axis {axis}, levels {np.flatnonzero(impossible).tolist()})"
                )
            with np.errstate(invalid="ignore", divide="ignore"):
                scale = np.where(current > 0, target / current, 0.0)
            shape = [1] * joint.ndim
            shape[axis] = scale.size
            joint = joint * scale.reshape(shape)
        dev = deviation()
        if dev < tol:
            return joint, iteration, dev
    raise ConvergenceError(
        f"soft-evidence update failed to converge after {max_iter} cycles "
        f"(deviation {dev:.3e}, tolerance {tol:.3e})",
        dev,
    )


def condition_soft(
    tree: StagedTree, soft: dict, tol: float = 1e-9, max_iter: int = 1000
) -> QueryResult:
    """Update the joint so the given variables take asserted marginals.

    With one finding this is an exact single-pass update that preserves the
    conditionals given the evidence variable; with several findings the
    rescaling cycles until all targets agree within tolerance.
    """
    targets = _coerce_soft(tree, soft)
    if not targets:
        raise ModelError("soft conditioning needs at least one target")
    joint = joint_table(tree)
    joint, iterations, dev = _ipf(joint, targets, tol, max_iter)
    marginals = {}
    for var, name in enumerate(tree.schema.names):
        other = tuple(a for a in range(tree.p) if a != var)
        marginals[name] = joint.sum(axis=other)
    return QueryResult(marginals, iterations=iterations, max_deviation=dev)


def condition_virtual(tree: StagedTree, weights: dict) -> QueryResult:
    """Likelihood (virtual) evidence: reweight the joint by per-level factors
    and renormalize, instead of pinning posterior marginals.

    Offered as the alternative reading of a soft finding; the factors need not
    sum to one.
    """
    joint = joint_table(tree)
    for name, factor in weights.items():
        var = tree.schema.index(name) if isinstance(name, str) else int(name)
        arr = np.asarray(factor, dtype=float)
        if arr.shape != (tree.schema.level_counts[var],) or (arr < 0).any():
            raise ModelError(f"virtual-evidence weights for {tree.schema.names[var]!r} are invalid")
        shape = [1] * tree.p
        shape[var] = arr.size
        joint = joint * arr.reshape(shape)
    prob = float(joint.sum())
    if prob == 0.0:
        raise ModelError("virtual evidence removed all probability mass")
    joint = joint / prob
    marginals = {}
    for var, name in enumerate(tree.schema.names):
        other = tuple(a for a in range(tree.p) if a != var)
        marginals[name] = joint.sum(axis=other)
    return QueryResult(marginals, evidence_probability=prob)


def run_query(
    tree: StagedTree, spec: EvidenceSpec, tol: float = 1e-9, max_iter: int = 1000
) -> QueryResult:
    """Apply hard findings first, then soft findings on the conditioned joint."""
    if spec.soft and spec.hard:
        ev = _coerce_hard(tree, spec.hard)
        joint = joint_table(tree)
        index = tuple(ev.get(var, slice(None)) for var in range(tree.p))
        reduced = joint[index]
        prob = float(reduced.sum())
        if prob == 0.0:
            raise ModelError(f"evidence has probability zero: {spec.hard}")
        reduced = reduced / prob
        kept = [var for var in range(tree.p) if var not in ev]
        targets = {
            kept.index(v): arr
            for v, arr in _coerce_soft(tree, dict(spec.soft)).items()
            if v in kept
        }
        if len(targets) != len(spec.soft):
            raise ModelError("soft evidence may not target a hard-evidence variable")
        reduced, iterations, dev = _ipf(reduced, targets, tol, max_iter)
        marginals = {}
        for axis, var in enumerate(kept):
            other = tuple(a for a in range(len(kept)) if a != axis)
            marginals[tree.schema.names[var]] = reduced.sum(axis=other)
        for var, level in ev.items():
            one_hot = np.zeros(tree.schema.level_counts[var])
            one_hot[level] = 1.0
            marginals[tree.schema.names[var]] = one_hot
        ordered = {name: marginals[name] for name in tree.schema.names}
        return QueryResult(ordered, evidence_probability=prob, iterations=iterations, max_deviation=dev)
    if spec.soft:
        return condition_soft(tree, dict(spec.soft), tol, max_iter)
    if spec.hard:
        return condition_hard(tree, dict(spec.hard))
    raise ModelError("the evidence specification is empty")


def mutual_information(tree: StagedTree, a, b) -> float:
    """Mutual information (nats) between two variables under the model."""
    a = tree.schema.index(a) if isinstance(a, str) else int(a)
    b = tree.schema.index(b) if isinstance(b, str) else int(b)
    if a == b:
        raise ModelError("mutual information needs two distinct variables")
    pos_a, pos_b = tree.depth_of(a), tree.depth_of(b)
    last = max(pos_a, pos_b)
    joint = _prefix_joint(tree, last)
    keep = sorted((pos_a, pos_b))
    other = tuple(i for i in range(last + 1) if i not in keep)
    pair = joint.sum(axis=other)
    if keep[0] == pos_b:
        pair = pair.T
    pa = pair.sum(axis=1)
    pb = pair.sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = pair / (pa[:, None] * pb[None, :])
        terms = np.where(pair > 0, pair * np.log(ratio), 0.0)
    value = float(terms.sum())
    if value < -1e-12:
        raise ModelError(f"mutual information computed as {value}; joint table is inconsistent")
    return max(value, 0.0)


@dataclass(frozen=True)
class SweepRow:
    """Largest response of one target level to fixing one predictor."""

    predictor: str
    target_level: str
    max_change: float
    direction: str


def whatif_sweep(tree: StagedTree, target, predictors=None) -> list[SweepRow]:
    """Condition on every level of every predictor and summarize the movement
    of the target's marginal.

    ``direction`` tracks the target-level probability along the predictor's
    level order: increase, decrease, mixed, or flat. Predictor levels the
    model gives zero probability are skipped with a warning.
    """
    target = tree.schema.index(target) if isinstance(target, str) else int(target)
    if predictors is None:
        predictors = [v for v in range(tree.p) if v != target]
    else:
        predictors = [tree.schema.index(v) if isinstance(v, str) else int(v) for v in predictors]
    if target in predictors:
        raise ModelError("the target cannot be one of the predictors")

    target_name = tree.schema.names[target]
    target_levels = tree.schema.variables[target].levels
    rows: list[SweepRow] = []
    for pred in predictors:
        pred_name = tree.schema.names[pred]
        level_probs = marginal(tree, pred)
        responses = []
        for level, level_name in enumerate(tree.schema.variables[pred].levels):
            if level_probs[level] == 0.0:
                warnings.warn(
                    f"skipping zero-probability level {pred_name}={level_name}",
                    stacklevel=2,
                )
                continue
            result = condition_hard(tree, {pred_name: level_name})
            responses.append(result.marginals[target_name])
        if len(responses) < 2:
            continue
        stacked = np.vstack(responses)
        for t, level_name in enumerate(target_levels):
            series = stacked[:, t]
            max_change = float(series.max() - series.min())
            diffs = np.diff(series)
            if max_change == 0.0:
                direction = "flat"
            elif (diffs >= 0).all():
                direction = "increase"
            elif (diffs <= 0).all():
                direction = "decrease"
            else:
                direction = "mixed"
            rows.append(SweepRow(pred_name, level_name, max_change, direction))
    return rows
