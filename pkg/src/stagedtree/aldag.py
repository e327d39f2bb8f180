"""Compression of a staged tree into a labeled DAG of minimal parent sets.

For each variable, predecessors whose value never changes the stage (for any
fixed configuration of the other predecessors) are dropped jointly; dropping
them together is safe because any two configurations that agree on the kept
coordinates are connected by a chain of single-coordinate moves through
invariant coordinates. Each surviving edge is labeled by the kind of equality
pattern the staging imposes between the child's conditional distributions.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ModelError
from .tree import StagedTree, context_shape

__all__ = [
    "SYMMETRIC",
    "CONTEXT_SPECIFIC",
    "PARTIAL",
    "LOCAL",
    "LABELS",
    "LABEL_COLORS",
    "AldagEdge",
    "Aldag",
    "DependenceSubtree",
    "compress",
    "classify_edge",
    "dependence_subtree",
    "render_dot",
    "to_dot",
    "aldag_to_json",
]

SYMMETRIC = "symmetric"
CONTEXT_SPECIFIC = "context_specific"
PARTIAL = "partial"
LOCAL = "local"
LABELS = (SYMMETRIC, CONTEXT_SPECIFIC, PARTIAL, LOCAL)

LABEL_COLORS = {
    SYMMETRIC: "black",
    CONTEXT_SPECIFIC: "red",
    PARTIAL: "blue",
    LOCAL: "green",
}


@dataclass(frozen=True)
class AldagEdge:
    parent: int
    child: int
    label: str
    detected: tuple[str, ...] = ()


@dataclass(frozen=True)
class Aldag:
    """Directed acyclic graph over the tree's variables with labeled edges.

    Edges always point from earlier to later variables in the tree ordering,
    so acyclicity holds by construction.
    """

    schema: object
    order: tuple[int, ...]
    edges: tuple[AldagEdge, ...]

    def parents_of(self, child: int) -> tuple[int, ...]:
        position = {v: i for i, v in enumerate(self.order)}
        pars = [e.parent for e in self.edges if e.child == child]
        return tuple(sorted(pars, key=lambda v: position[v]))

    def in_degree(self, child: int) -> int:
        return sum(1 for e in self.edges if e.child == child)

    def max_in_degree(self) -> int:
        return max((self.in_degree(v) for v in range(len(self.schema))), default=0)

    def edge(self, parent: int, child: int) -> AldagEdge | None:
        for e in self.edges:
            if e.parent == parent and e.child == child:
                return e
        return None


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, x: int) -> int:
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[rb] = ra


def _same_stage_components(grid: np.ndarray) -> np.ndarray:
    """Connected components of the graph on parent configurations linking
    same-stage configurations that differ in exactly one coordinate."""
    size = grid.size
    uf = _UnionFind(size)
    flat_index = np.arange(size).reshape(grid.shape)
    for axis in range(grid.ndim):
        values = np.moveaxis(grid, axis, 0).reshape(grid.shape[axis], -1)
        indices = np.moveaxis(flat_index, axis, 0).reshape(grid.shape[axis], -1)
        for u in range(grid.shape[axis]):
            for v in range(u + 1, grid.shape[axis]):
                match = values[u] == values[v]
                for a, b in zip(indices[u][match], indices[v][match]):
                    uf.union(int(a), int(b))
    comp = np.empty(size, dtype=np.int64)
    for x in range(size):
        comp[x] = uf.find(x)
    return comp


def _local_evidence_axes(grid: np.ndarray) -> set[int]:
    """Axes touched by same-stage equalities that the single-coordinate graph
    cannot explain (pairs in different connected components)."""
    comp = _same_stage_components(grid)
    flat_stage = grid.reshape(-1)
    coords = np.column_stack(np.unravel_index(np.arange(grid.size), grid.shape))
    evidence: set[int] = set()
    for stage in np.unique(flat_stage):
        members = np.flatnonzero(flat_stage == stage)
        if members.size < 2:
            continue
        groups: dict[int, list[int]] = {}
        for m in members:
            groups.setdefault(int(comp[m]), []).append(int(m))
        if len(groups) < 2:
            continue
        reps = list(groups.values())
        for gi in range(len(reps)):
            for gj in range(gi + 1, len(reps)):
                for a in reps[gi]:
                    for b in reps[gj]:
                        differ = np.flatnonzero(coords[a] != coords[b])
                        evidence.update(int(ax) for ax in differ)
    return evidence


def _slice_blocks(grid: np.ndarray, axis: int):
    """For every configuration of the other axes, the partition of the axis
    values induced by stage equality, as a list of block-size lists."""
    rows = np.moveaxis(grid, axis, -1).reshape(-1, grid.shape[axis])
    out = []
    for row in rows:
        _, counts = np.unique(row, return_counts=True)
        out.append(sorted(int(c) for c in counts))
    return out


def classify_edge(grid: np.ndarray, axis: int) -> tuple[str, tuple[str, ...]]:
    """Label the dependence of the child on the parent at the given axis.

    ``grid`` holds the stage id for every configuration of the child's
    parents. Raises if the axis is removable (the stage never varies with it),
    since such an axis must not be an edge at all.
    """
    if grid.ndim == 0 or axis >= grid.ndim:
        raise ModelError("axis out of range for the parent grid")
    reference = np.take(grid, [0], axis=axis)
    if bool((grid == reference).all()):
        raise ModelError(f"axis {axis} is removable; it cannot carry an edge label")

    level_count = grid.shape[axis]
    blocks = _slice_blocks(grid, axis)
    has_proper = any(any(1 < size < level_count for size in sizes) for sizes in blocks)
    has_full = any(sizes == [level_count] for sizes in blocks)

    detected = []
    if has_full:
        detected.append(CONTEXT_SPECIFIC)
    if has_proper:
        detected.append(PARTIAL)
    if axis in _local_evidence_axes(grid):
        detected.append(LOCAL)

    if LOCAL in detected:
        label = LOCAL
    elif PARTIAL in detected:
        label = PARTIAL
    elif CONTEXT_SPECIFIC in detected:
        label = CONTEXT_SPECIFIC
    else:
        label = SYMMETRIC
    return label, tuple(detected)


def _reduced_grid(tree: StagedTree, depth: int) -> tuple[np.ndarray, list[int]]:
    """Stage grid of one depth restricted to its non-removable predecessors.

    Returns the reduced grid and the kept predecessor positions.
    """
    shape = context_shape(tree.schema, tree.order, depth)
    grid = tree.stagings[depth].stage_of.reshape(shape) if depth else np.zeros((), dtype=np.int64)
    kept: list[int] = []
    for axis in range(depth):
        reference = np.take(grid, [0], axis=axis)
        if not bool((grid == reference).all()):
            kept.append(axis)
    slicer = tuple(slice(None) if axis in kept else 0 for axis in range(depth))
    return np.asarray(grid[slicer]), kept


def compress(tree: StagedTree) -> Aldag:
    """Minimal labeled DAG representation of the tree's staging."""
    edges: list[AldagEdge] = []
    for depth in range(1, tree.p):
        reduced, kept = _reduced_grid(tree, depth)
        child = tree.order[depth]
        for axis_pos, pred_pos in enumerate(kept):
            label, detected = classify_edge(reduced, axis_pos)
            edges.append(AldagEdge(tree.order[pred_pos], child, label, detected))
    return Aldag(tree.schema, tree.order, tuple(edges))


@dataclass(frozen=True, eq=False)
class DependenceSubtree:
    """One variable's staging shown over its ALDAG parents only."""

    child: int
    parents: tuple[int, ...]
    stage_grid: np.ndarray = field(repr=False)
    probs: dict[int, np.ndarray] = field(repr=False)
    schema: object = None

    def stage_and_probs(self, parent_levels: tuple[int, ...]) -> tuple[int, np.ndarray]:
        sid = int(self.stage_grid[tuple(parent_levels)])
        return sid, self.probs[sid]

    def items(self):
        for combo in itertools.product(*(range(n) for n in self.stage_grid.shape)):
            sid = int(self.stage_grid[combo])
            yield combo, sid, self.probs[sid]


def dependence_subtree(tree: StagedTree, aldag: Aldag, child: int) -> DependenceSubtree:
    """Project one variable's staging onto its parents; well-defined because
    the staging is invariant in every dropped predecessor."""
    depth = tree.depth_of(child)
    reduced, kept = _reduced_grid(tree, depth)
    parents = tuple(tree.order[pos] for pos in kept)
    if parents != aldag.parents_of(child):
        raise ModelError("the ALDAG does not match the tree's staging")
    prob_matrix = tree.require_fitted()[depth]
    probs = {int(s): prob_matrix[int(s)] for s in np.unique(reduced)}
    return DependenceSubtree(child, parents, reduced, probs, tree.schema)


# Vertex fill colors cycle through this palette, per depth, by stage id.
_PALETTE = (
    "#e6194b", "#3cb44b", "#ffe119", "#4363d8", "#f58231", "#911eb4",
    "#46f0f0", "#f032e6", "#bcf60c", "#fabebe", "#008080", "#e6beff",
    "#9a6324", "#fffac8", "#800000", "#aaffc3", "#808000", "#ffd8b1",
)


def _aldag_dot(aldag: Aldag, highlight=frozenset(), annotations=None) -> str:
    annotations = annotations or {}
    names = aldag.schema.names
    lines = ["digraph aldag {", "  rankdir=LR;", "  node [shape=ellipse];"]
    for v in range(len(names)):
        attrs = []
        label = names[v]
        if names[v] in annotations:
            label += "\\n" + annotations[names[v]]
        attrs.append(f'label="{label}"')
        if names[v] in highlight:
            attrs.append('style=filled fillcolor=gray80')
        lines.append(f'  "{names[v]}" [{" ".join(attrs)}];')
    for e in sorted(aldag.edges, key=lambda e: (e.parent, e.child)):
        color = LABEL_COLORS[e.label]
        lines.append(
            f'  "{names[e.parent]}" -> "{names[e.child]}" [color={color} label="{e.label}"];'
        )
    lines.append("}")
    return "\n".join(lines) + "\n"


def _tree_dot(tree: StagedTree) -> str:
    names = tree.schema.names
    probs = tree.probs
    lines = ["digraph staged_tree {", "  rankdir=LR;", '  node [shape=circle label=""];']
    for depth in range(tree.p):
        staging = tree.stagings[depth]
        var = tree.variable_at(depth)
        for code in range(staging.stage_of.size):
            stage = int(staging.stage_of[code])
            color = _PALETTE[stage % len(_PALETTE)]
            lines.append(
                f'  "d{depth}_c{code}" [fillcolor="{color}" style=filled '
                f'tooltip="{names[tree.order[depth]]} stage {stage}"];'
            )
            for level, level_name in enumerate(var.levels):
                child_code = code * len(var.levels) + level
                target = (
                    f'"d{depth + 1}_c{child_code}"' if depth + 1 < tree.p else f'"leaf_{child_code}"'
                )
                label = level_name
                if probs is not None:
                    label += f" {probs[depth][stage, level]:.6g}"
                lines.append(f'  "d{depth}_c{code}" -> {target} [label="{label}"];')
    n_leaves = tree.stagings[-1].stage_of.size * len(tree.variable_at(tree.p - 1).levels)
    for leaf in range(n_leaves):
        lines.append(f'  "leaf_{leaf}" [shape=point];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def _subtree_dot(sub: DependenceSubtree) -> str:
    names = sub.schema.names
    child_levels = sub.schema.variables[sub.child].levels
    lines = [f'digraph dependence_subtree_{names[sub.child]} {{', "  rankdir=LR;"]
    lines.append('  "root" [shape=point];')
    seen: set[str] = set()
    for combo, sid, vec in sub.items():
        path = "root"
        for i, level in enumerate(combo):
            var = sub.schema.variables[sub.parents[i]]
            node = f"p{i}_" + "_".join(str(c) for c in combo[: i + 1])
            if node not in seen:
                seen.add(node)
                lines.append(f'  "{node}" [shape=circle label=""];')
                lines.append(f'  "{path}" -> "{node}" [label="{var.name}={var.levels[level]}"];')
            path = node
        color = _PALETTE[sid % len(_PALETTE)]
        dist = ", ".join(f"{child_levels[i]}={vec[i]:.4g}" for i in range(len(child_levels)))
        stage_node = "stage_" + "_".join(str(c) for c in combo) if combo else "stage_root"
        lines.append(
            f'  "{stage_node}" [shape=box style=filled fillcolor="{color}" '
            f'label="stage {sid}\\n{dist}"];'
        )
        lines.append(f'  "{path}" -> "{stage_node}";')
    lines.append("}")
    return "\n".join(lines) + "\n"


def render_dot(obj, highlight=frozenset(), annotations=None) -> str:
    """Deterministic DOT text for an ALDAG, staged tree, or dependence subtree."""
    if isinstance(obj, Aldag):
        return _aldag_dot(obj, highlight=highlight, annotations=annotations)
    if isinstance(obj, StagedTree):
        return _tree_dot(obj)
    if isinstance(obj, DependenceSubtree):
        return _subtree_dot(obj)
    raise ModelError(f"cannot render {type(obj).__name__} as DOT")


def to_dot(obj, path: str, highlight=frozenset(), annotations=None) -> None:
    text = render_dot(obj, highlight=highlight, annotations=annotations)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def aldag_to_json(aldag: Aldag) -> str:
    names = aldag.schema.names
    payload = {
        "format_version": 1,
        "variables": list(names),
        "order": [names[v] for v in aldag.order],
        "edges": [
            {
                "from": names[e.parent],
                "to": names[e.child],
                "label": e.label,
                "detected_types": list(e.detected),
            }
            for e in sorted(aldag.edges, key=lambda e: (e.parent, e.child))
        ],
    }
    return json.dumps(payload, indent=2)
