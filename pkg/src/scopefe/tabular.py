"""Column-typed tabular dataset with deterministic splitting and sampling.

The dataset is immutable after loading: numeric columns live in one
float64 matrix (NaN marks missing), categorical columns in one integer
code matrix (-1 marks missing) plus per-column dictionaries.  All row
selections are value objects (`RowIndexSet`) holding sorted unique row
indices, so they can be handed to workers freely.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

NUMERIC = "numeric"
CATEGORICAL = "categorical"

REGRESSION = "regression"
BINARY = "binary"

MISSING_STRINGS = ("", "NA")


@dataclass(frozen=True)
class ColumnMeta:
    name: str
    kind: str
    index: int


@dataclass
class Column:
    """A single materialized column: float values or category codes."""

    kind: str
    values: np.ndarray
    categories: list[str] | None = None

    def missing_mask(self) -> np.ndarray:
        if self.kind == NUMERIC:
            return ~np.isfinite(self.values)
        return self.values < 0


@dataclass(frozen=True)
class RowIndexSet:
    """Sorted, duplicate-free row indices with the seed that produced them."""

    indices: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        if idx.ndim != 1:
            raise ValueError("row indices must be one-dimensional")
        idx = np.sort(idx)
        if idx.size and (idx[0] < 0 or np.any(np.diff(idx) <= 0)):
            raise ValueError("row indices must be unique and nonnegative")
        object.__setattr__(self, "indices", idx)

    def __len__(self) -> int:
        return int(self.indices.size)


@dataclass
class BlockSchedule:
    """Nested training blocks, doubling in size up to the full set."""

    rounds: list[RowIndexSet]

    def __len__(self) -> int:
        return len(self.rounds)


class Dataset:
    """Immutable column-typed table with a numeric or binary target."""

    def __init__(self, columns, numeric, cat_codes, cat_categories, y, task,
                 target_name="target", target_levels=None):
        self.columns: list[ColumnMeta] = list(columns)
        self._numeric = numeric
        self._cat = cat_codes
        self._cat_categories = cat_categories
        self.y = y
        self.task = task
        self.target_name = target_name
        self.target_levels = target_levels
        self.n = int(y.shape[0])
        self._storage_pos = {}
        num_i = cat_i = 0
        for meta in self.columns:
            if meta.kind == NUMERIC:
                self._storage_pos[meta.index] = num_i
                num_i += 1
            else:
                self._storage_pos[meta.index] = cat_i
                cat_i += 1

    @property
    def d(self) -> int:
        return len(self.columns)

    @property
    def feature_names(self) -> list[str]:
        return [c.name for c in self.columns]

    def meta(self, index: int) -> ColumnMeta:
        return self.columns[index]

    def column(self, index: int) -> Column:
        """Full-length view of one feature column."""
        meta = self.columns[index]
        pos = self._storage_pos[index]
        if meta.kind == NUMERIC:
            return Column(NUMERIC, self._numeric[:, pos])
        return Column(CATEGORICAL, self._cat[:, pos], self._cat_categories[pos])

    def numeric_values(self, index: int) -> np.ndarray:
        col = self.column(index)
        if col.kind != NUMERIC:
            raise ValueError(f"column {self.columns[index].name} is not numeric")
        return col.values

    def cat_codes(self, index: int) -> np.ndarray:
        col = self.column(index)
        if col.kind != CATEGORICAL:
            raise ValueError(f"column {self.columns[index].name} is not categorical")
        return col.values

    @classmethod
    def from_arrays(cls, names, kinds, arrays, y, task, categories=None,
                    target_name="target"):
        """Assemble a dataset from per-column arrays (mostly for tests/demos)."""
        categories = categories or {}
        metas, num_cols, cat_cols, cat_dicts = [], [], [], []
        for i, (name, kind) in enumerate(zip(names, kinds)):
            metas.append(ColumnMeta(name, kind, i))
            if kind == NUMERIC:
                num_cols.append(np.asarray(arrays[i], dtype=np.float64))
            else:
                cat_cols.append(np.asarray(arrays[i], dtype=np.int64))
                cat_dicts.append(categories.get(name) or
                                 [str(v) for v in range(int(np.max(arrays[i])) + 1)])
        numeric = (np.column_stack(num_cols) if num_cols
                   else np.empty((len(y), 0)))
        cats = (np.column_stack(cat_cols) if cat_cols
                else np.empty((len(y), 0), dtype=np.int64))
        y = np.asarray(y, dtype=np.float64 if task == REGRESSION else np.int64)
        return cls(metas, numeric, cats, cat_dicts, y, task, target_name)


def _parse_cell(cell: str):
    """Float value of a cell, or None if it does not parse."""
    try:
        return float(cell)
    except ValueError:
        return None


def load_csv(path, target, task, kind_overrides=None, categorical_threshold=20):
    """Load a headered CSV into a typed Dataset.

    A feature column becomes numeric when every non-missing cell parses as
    a real number and its distinct-value count exceeds the categorical
    threshold (capped at rowcount-1 so short files with all-distinct
    numeric cells stay numeric); otherwise it is categorical.  Empty cells
    and the literal "NA" are missing.  Per-column kinds can be forced via
    `kind_overrides`.
    """
    kind_overrides = kind_overrides or {}
    if task not in (REGRESSION, BINARY):
        raise ValueError(f"unsupported task {task!r}: only regression and binary "
                         "classification are supported")
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            rows = list(reader)
    except OSError as exc:
        raise ValueError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise ValueError("file is empty (no header row)")
    header = [h.strip() for h in rows[0]]
    data = rows[1:]
    if not data:
        raise ValueError("zero data rows")
    if target not in header:
        raise ValueError(f"target column {target!r} not found in header")
    n = len(data)
    cells = [[(r[j].strip() if j < len(r) else "") for r in data]
             for j in range(len(header))]

    t_pos = header.index(target)
    y, target_levels = _parse_target(cells[t_pos], task, target)

    metas, num_cols, cat_cols, cat_dicts = [], [], [], []
    feat_idx = 0
    for j, name in enumerate(header):
        if j == t_pos:
            continue
        raw = cells[j]
        missing = np.array([c in MISSING_STRINGS for c in raw])
        if missing.all():
            raise ValueError(f"column {name!r} has zero non-missing cells")
        parsed = [None if m else _parse_cell(c) for c, m in zip(raw, missing)]
        parseable = all(v is not None for v, m in zip(parsed, missing) if not m)
        if parseable:
            present = [v for v, m in zip(parsed, missing) if not m]
        else:
            present = [c for c, m in zip(raw, missing) if not m]
        distinct = len(set(present))
        threshold = min(categorical_threshold, len(present) - 1)
        kind = kind_overrides.get(name)
        if kind is None:
            kind = NUMERIC if parseable and distinct > threshold else CATEGORICAL
        elif kind not in (NUMERIC, CATEGORICAL):
            raise ValueError(f"unknown kind override {kind!r} for column {name!r}")
        if kind == NUMERIC and not parseable:
            raise ValueError(f"column {name!r} forced numeric but has "
                             "non-numeric cells")
        metas.append(ColumnMeta(name, kind, feat_idx))
        feat_idx += 1
        if kind == NUMERIC:
            vals = np.array([np.nan if m else v for v, m in zip(parsed, missing)],
                            dtype=np.float64)
            num_cols.append(vals)
        else:
            cats = sorted(set(c for c, m in zip(raw, missing) if not m))
            lookup = {c: k for k, c in enumerate(cats)}
            codes = np.array([-1 if m else lookup[c]
                              for c, m in zip(raw, missing)], dtype=np.int64)
            cat_cols.append(codes)
            cat_dicts.append(cats)

    numeric = np.column_stack(num_cols) if num_cols else np.empty((n, 0))
    cats = (np.column_stack(cat_cols) if cat_cols
            else np.empty((n, 0), dtype=np.int64))
    return Dataset(metas, numeric, cats, cat_dicts, y, task, target,
                   target_levels)


def _parse_target(raw, task, name):
    missing = [c in MISSING_STRINGS for c in raw]
    if any(missing):
        raise ValueError(f"target column {name!r} has missing values")
    if task == REGRESSION:
        vals = [_parse_cell(c) for c in raw]
        if any(v is None for v in vals):
            raise ValueError(f"target column {name!r} has non-numeric cells")
        return np.asarray(vals, dtype=np.float64), None
    levels = sorted(set(raw), key=lambda c: (_parse_cell(c) is None,
                                             _parse_cell(c), c))
    if len(levels) != 2:
        raise ValueError(f"binary task needs exactly 2 target classes, "
                         f"got {len(levels)}")
    lookup = {c: k for k, c in enumerate(levels)}
    return np.asarray([lookup[c] for c in raw], dtype=np.int64), levels


def split(ds: Dataset, valid_ratio: float, stratify: bool, seed: int):
    """Disjoint, exhaustive (train, valid) row index sets."""
    if not 0.0 < valid_ratio < 1.0:
        raise ValueError("valid_ratio must be in (0, 1)")
    if stratify and ds.task != BINARY:
        raise ValueError("stratified split requires a classification task")
    rng = np.random.default_rng(seed)
    n = ds.n
    if stratify:
        valid_parts = []
        for cls in np.unique(ds.y):
            rows = np.flatnonzero(ds.y == cls)
            if rows.size < 2:
                raise ValueError(f"class {cls} has fewer than 2 rows")
            take = int(round(valid_ratio * rows.size))
            take = min(take, rows.size - 1)
            perm = rng.permutation(rows)
            valid_parts.append(perm[:take])
        valid_idx = np.concatenate(valid_parts) if valid_parts else np.array([], int)
        if valid_idx.size == 0:
            all_perm = rng.permutation(n)
            valid_idx = all_perm[:1]
    else:
        take = int(round(valid_ratio * n))
        take = min(max(take, 1), n - 1)
        perm = rng.permutation(n)
        valid_idx = perm[:take]
    mask = np.ones(n, dtype=bool)
    mask[valid_idx] = False
    train = RowIndexSet(np.flatnonzero(mask), seed=seed)
    valid = RowIndexSet(np.asarray(valid_idx), seed=seed)
    return train, valid


def subsample(src: RowIndexSet, ratio: float, stratify: bool = False,
              labels=None, seed: int = 0, min_size: int = 1) -> RowIndexSet:
    """Draw round(ratio * |src|) rows from src without replacement.

    `labels`, when stratifying, is a full-length class vector indexed by
    absolute row id.  `min_size` floors the draw (capped at |src|).
    """
    if not 0.0 < ratio <= 1.0:
        raise ValueError("ratio must be in (0, 1]")
    if stratify and labels is None:
        raise ValueError("stratified subsample requires labels")
    n = len(src)
    size = int(round(ratio * n))
    size = min(max(size, min_size, 1), n)
    if size == n:
        return RowIndexSet(src.indices.copy(), seed=seed)
    rng = np.random.default_rng(seed)
    if stratify:
        labels = np.asarray(labels)
        src_labels = labels[src.indices]
        chosen = []
        for cls in np.unique(src_labels):
            rows = src.indices[src_labels == cls]
            take = int(round(size * rows.size / n))
            take = min(max(take, 0), rows.size)
            perm = rng.permutation(rows)
            chosen.append(perm[:take])
        idx = np.concatenate(chosen) if chosen else np.array([], dtype=np.int64)
        if idx.size == 0:
            idx = rng.permutation(src.indices)[:size]
    else:
        idx = rng.permutation(src.indices)[:size]
    return RowIndexSet(idx, seed=seed)


def make_blocks(train: RowIndexSet, n_blocks_log2: int, seed: int) -> BlockSchedule:
    """Doubling data blocks: nested prefixes of a seeded shuffle of train."""
    if n_blocks_log2 < 0:
        raise ValueError("n_blocks_log2 must be nonnegative")
    n = len(train)
    if 2 ** n_blocks_log2 > n:
        raise ValueError("2**n_blocks_log2 exceeds the training size")
    rng = np.random.default_rng(seed)
    order = rng.permutation(train.indices)
    rounds = []
    for r in range(n_blocks_log2 + 1):
        if r == n_blocks_log2:
            size = n
        else:
            size = int(round(n / 2 ** (n_blocks_log2 - r)))
        rounds.append(RowIndexSet(order[:size], seed=seed))
    return BlockSchedule(rounds)
