"""Categorical datasets: CSV ingestion, schemas, resampling and splits."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError

__all__ = [
    "Variable",
    "Schema",
    "Dataset",
    "ResamplePlan",
    "load_csv",
    "save_csv",
    "bootstrap_replicate",
    "kfold_split",
    "dichotomize",
    "derived_seed",
    "schema_to_json",
    "schema_from_json",
]


@dataclass(frozen=True)
class Variable:
    """A named categorical variable with an ordered set of level labels."""

    name: str
    levels: tuple[str, ...]

    def __post_init__(self):
        if len(self.levels) < 2:
            raise DataError(f"variable {self.name!r} needs at least 2 levels, got {len(self.levels)}")
        if len(set(self.levels)) != len(self.levels):
            raise DataError(f"variable {self.name!r} has duplicate level labels")


@dataclass(frozen=True)
class Schema:
    """Ordered collection of categorical variables."""

    variables: tuple[Variable, ...]

    def __post_init__(self):
        names = [v.name for v in self.variables]
        if len(set(names)) != len(names):
            raise DataError("variable names must be unique")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.variables)

    @property
    def level_counts(self) -> tuple[int, ...]:
        return tuple(len(v.levels) for v in self.variables)

    def __len__(self) -> int:
        return len(self.variables)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise DataError(f"unknown variable {name!r}; have {list(self.names)}") from None

    def level_index(self, var: int, label: str) -> int:
        levels = self.variables[var].levels
        try:
            return levels.index(label)
        except ValueError:
            raise DataError(
                f"unknown level {label!r} for variable {self.variables[var].name!r}; have {list(levels)}"
            ) from None


@dataclass(frozen=True, eq=False)
class Dataset:
    """An N x p matrix of level indices together with its schema.

    Immutable after construction; the row matrix is marked read-only so a
    dataset can be shared freely across worker processes and threads.
    """

    schema: Schema
    rows: np.ndarray = field(repr=False)

    def __post_init__(self):
        rows = np.ascontiguousarray(self.rows, dtype=np.int64)
        if rows.ndim != 2 or rows.shape[1] != len(self.schema):
            raise DataError(f"rows must be N x {len(self.schema)}, got shape {rows.shape}")
        if rows.shape[0] < 1:
            raise DataError("dataset needs at least one row")
        counts = np.asarray(self.schema.level_counts)
        if rows.min(initial=0) < 0 or (rows >= counts[None, :]).any():
            bad = np.argwhere((rows < 0) | (rows >= counts[None, :]))[0]
            raise DataError(f"cell ({bad[0]}, {bad[1]}) holds an out-of-range level index")
        rows.flags.writeable = False
        object.__setattr__(self, "rows", rows)

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @property
    def p(self) -> int:
        return self.rows.shape[1]

    def decode(self) -> list[list[str]]:
        """Return the rows as lists of level labels (inverse of CSV encoding)."""
        out = []
        for row in self.rows:
            out.append([self.schema.variables[j].levels[row[j]] for j in range(self.p)])
        return out

    def select_columns(self, cols: list[int]) -> "Dataset":
        """Project onto a subset of variables, keeping their relative order."""
        sub = Schema(tuple(self.schema.variables[c] for c in cols))
        return Dataset(sub, np.ascontiguousarray(self.rows[:, cols]))

    def take_rows(self, idx: np.ndarray) -> "Dataset":
        return Dataset(self.schema, np.ascontiguousarray(self.rows[idx]))


@dataclass(frozen=True)
class ResamplePlan:
    """How many bootstrap replicates to draw and from which master seed."""

    replicates: int
    seed: int = 0

    def __post_init__(self):
        if self.replicates < 1:
            raise DataError("replicates must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise DataError("seed must be a 64-bit unsigned integer")

    def replicate_seed(self, i: int) -> int:
        return derived_seed(self.seed, i)


def derived_seed(master: int, index: int) -> int:
    """Derive an independent 64-bit stream seed from (master seed, counter)."""
    ss = np.random.SeedSequence(entropy=(int(master), int(index)))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def load_csv(path: str, has_header: bool = True) -> Dataset:
    """Read a categorical CSV file into an index-encoded dataset.

    Levels for each column are the lexicographically sorted distinct strings,
    which makes schemas deterministic across runs and platforms.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        raw = list(reader)
    if not raw:
        raise DataError(f"{path}: file is empty")

    if has_header:
        header = [h.strip() for h in raw[0]]
        body = raw[1:]
        first_line = 2
    else:
        header = [f"X{j + 1}" for j in range(len(raw[0]))]
        body = raw
        first_line = 1
    if not body:
        raise DataError(f"{path}: no data rows")

    width = len(header)
    cells: list[list[str]] = []
    for i, row in enumerate(body):
        if len(row) != width:
            raise DataError(f"{path}: line {first_line + i} has {len(row)} cells, expected {width}")
        stripped = [c.strip() for c in row]
        for j, c in enumerate(stripped):
            if c == "":
                raise DataError(f"{path}: empty cell at row {i + 1}, column {header[j]!r}")
        cells.append(stripped)

    variables = []
    for j, name in enumerate(header):
        distinct = sorted({row[j] for row in cells})
        if len(distinct) < 2:
            raise DataError(f"{path}: column {name!r} has a single distinct value {distinct[0]!r}")
        variables.append(Variable(name, tuple(distinct)))
    schema = Schema(tuple(variables))

    lookup = [{lv: i for i, lv in enumerate(v.levels)} for v in variables]
    rows = np.empty((len(cells), width), dtype=np.int64)
    for i, row in enumerate(cells):
        for j, c in enumerate(row):
            rows[i, j] = lookup[j][c]
    return Dataset(schema, rows)


def save_csv(d: Dataset, path: str) -> None:
    """Write a dataset back to CSV with a header row, decoding level labels."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(d.schema.names)
        writer.writerows(d.decode())


def bootstrap_replicate(d: Dataset, seed: int) -> Dataset:
    """Resample N rows uniformly with replacement; deterministic in the seed."""
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, d.n, size=d.n)
    return d.take_rows(idx)


def kfold_indices(n: int, k: int, seed: int) -> list[np.ndarray]:
    """Sorted test-row indices per fold; folds partition range(n), sizes
    differing by at most one."""
    if k < 2:
        raise DataError(f"k must be >= 2, got {k}")
    if k > n:
        raise DataError(f"k={k} exceeds the number of rows N={n}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    base, extra = divmod(n, k)
    out = []
    start = 0
    for f in range(k):
        size = base + (1 if f < extra else 0)
        out.append(np.sort(perm[start:start + size]))
        start += size
    return out


def kfold_split(d: Dataset, k: int, seed: int) -> list[tuple[Dataset, Dataset]]:
    """Partition rows into k folds of near-equal size; returns (train, test) pairs."""
    folds = []
    for test_idx in kfold_indices(d.n, k, seed):
        train_idx = np.setdiff1d(np.arange(d.n), test_idx)
        folds.append((d.take_rows(train_idx), d.take_rows(test_idx)))
    return folds


def dichotomize(column, labels: tuple[str, str] = ("low", "high")) -> list[str]:
    """Median-split a numeric vector into two labels.

    Values less than or equal to the median get the first label. A constant
    column cannot be split and is rejected.
    """
    values = np.asarray(column, dtype=float)
    if values.ndim != 1 or values.size == 0:
        raise DataError("expected a non-empty 1-d numeric vector")
    if np.unique(values).size < 2:
        raise DataError("cannot dichotomize a constant column")
    median = float(np.median(values))
    out = [labels[0] if v <= median else labels[1] for v in values]
    if labels[1] not in out:
        # Happens when the median equals the maximum, e.g. [1, 2, 2].
        raise DataError("median split leaves the upper level empty; column is too skewed")
    return out


def schema_to_json(schema: Schema) -> str:
    payload = {"variables": [{"name": v.name, "levels": list(v.levels)} for v in schema.variables]}
    return json.dumps(payload, indent=2)


def schema_from_json(text: str) -> Schema:
    payload = json.loads(text)
    variables = tuple(Variable(v["name"], tuple(v["levels"])) for v in payload["variables"])
    return Schema(variables)
