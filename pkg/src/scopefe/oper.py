"""Operator vocabulary, candidate enumeration, and column materialization.

A candidate feature is one operator applied to one or two base features.
Commutative operators store operands in ascending feature-index order,
which is also the canonical textual form `op(name1,name2)` used in every
report.  Materialization evaluates a candidate over `rows` while drawing
every data-dependent statistic (frequencies, group aggregates, rank
references) from `stats_rows` only, so validation rows never feed their
own statistics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cluster import pair_allowed
from .tabular import CATEGORICAL, NUMERIC, Column, ColumnMeta, Dataset, RowIndexSet

ANY = "any"

LOG_EPS = 1e-10


@dataclass(frozen=True)
class OperatorSpec:
    name: str
    arity: int
    slots: tuple[str, ...]
    output: str
    commutative: bool = False

    def slot_accepts(self, pos: int, kind: str) -> bool:
        slot = self.slots[pos]
        return slot == ANY or slot == kind


@dataclass(frozen=True)
class CandidateFeature:
    op: OperatorSpec
    operands: tuple[int, ...]
    names: tuple[str, ...]

    @property
    def expression(self) -> str:
        return f"{self.op.name}({','.join(self.names)})"

    @property
    def output_kind(self) -> str:
        return self.op.output


def make_candidate(op: OperatorSpec, operands, features) -> CandidateFeature:
    """Build a candidate with canonical (ascending) order for commutative ops."""
    operands = tuple(int(i) for i in operands)
    if op.commutative and len(operands) == 2 and operands[0] > operands[1]:
        operands = (operands[1], operands[0])
    names = tuple(features[i].name for i in operands)
    return CandidateFeature(op, operands, names)


def default_operator_set() -> list[OperatorSpec]:
    """The 22 default operators: 7 unary, 6 binary-numeric, 9 categorical."""
    unary = [
        OperatorSpec("abs", 1, (NUMERIC,), NUMERIC),
        OperatorSpec("log", 1, (NUMERIC,), NUMERIC),
        OperatorSpec("sqrt", 1, (NUMERIC,), NUMERIC),
        OperatorSpec("square", 1, (NUMERIC,), NUMERIC),
        OperatorSpec("sigmoid", 1, (NUMERIC,), NUMERIC),
        OperatorSpec("round", 1, (NUMERIC,), NUMERIC),
        OperatorSpec("freq", 1, (ANY,), NUMERIC),
    ]
    binary_numeric = [
        OperatorSpec("add", 2, (NUMERIC, NUMERIC), NUMERIC, commutative=True),
        OperatorSpec("sub", 2, (NUMERIC, NUMERIC), NUMERIC),
        OperatorSpec("mul", 2, (NUMERIC, NUMERIC), NUMERIC, commutative=True),
        OperatorSpec("div", 2, (NUMERIC, NUMERIC), NUMERIC),
        OperatorSpec("min", 2, (NUMERIC, NUMERIC), NUMERIC, commutative=True),
        OperatorSpec("max", 2, (NUMERIC, NUMERIC), NUMERIC, commutative=True),
    ]
    group_by = [
        OperatorSpec(name, 2, (CATEGORICAL, NUMERIC), NUMERIC)
        for name in ("GroupByThenMean", "GroupByThenMin", "GroupByThenMax",
                     "GroupByThenMedian", "GroupByThenStd", "GroupByThenRank")
    ]
    cat_cat = [
        OperatorSpec("Combine", 2, (CATEGORICAL, CATEGORICAL), CATEGORICAL),
        OperatorSpec("CombineThenFreq", 2, (CATEGORICAL, CATEGORICAL), NUMERIC),
        OperatorSpec("GroupByThenNUnique", 2, (CATEGORICAL, CATEGORICAL), NUMERIC),
    ]
    return unary + binary_numeric + group_by + cat_cat


def operator_by_name(name: str, ops=None) -> OperatorSpec:
    for op in ops or default_operator_set():
        if op.name == name:
            return op
    raise ValueError(f"unknown operator {name!r}")


def enumerate_candidates(features: list[ColumnMeta], ops: list[OperatorSpec],
                         assign=None) -> list[CandidateFeature]:
    """All type-compatible candidates, in (operator, operand-index) order.

    Unary candidates ignore clustering.  Binary candidates keep ordered
    pairs for non-commutative operators, deduplicate commutative pairs by
    canonical order, and - when `assign` is given - keep only pairs
    admitted by the cluster indicator.
    """
    out: list[CandidateFeature] = []
    for op in ops:
        if op.arity == 1:
            for meta in features:
                if op.slot_accepts(0, meta.kind):
                    out.append(make_candidate(op, (meta.index,), features))
            continue
        left = [m.index for m in features if op.slot_accepts(0, m.kind)]
        right = [m.index for m in features if op.slot_accepts(1, m.kind)]
        for i in left:
            for j in right:
                if i == j or (op.commutative and j < i):
                    continue
                if assign is not None and not pair_allowed(assign, i, j):
                    continue
                out.append(make_candidate(op, (i, j), features))
    return out


def count_unconstrained(features: list[ColumnMeta], ops: list[OperatorSpec]):
    """Closed-form candidate counts without clustering (never enumerates)."""
    unary = binary = 0
    for op in ops:
        if op.arity == 1:
            unary += sum(1 for m in features if op.slot_accepts(0, m.kind))
            continue
        left = {m.index for m in features if op.slot_accepts(0, m.kind)}
        right = {m.index for m in features if op.slot_accepts(1, m.kind)}
        ordered = len(left) * len(right) - len(left & right)
        binary += ordered // 2 if op.commutative else ordered
    return {"unary": unary, "binary": binary, "total": unary + binary}


def _clean(values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    return np.where(np.isfinite(values), values, np.nan)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _freq_numeric(apply_vals, stats_vals):
    stats_vals = stats_vals[np.isfinite(stats_vals)]
    uniq, counts = np.unique(stats_vals, return_counts=True)
    out = np.full(apply_vals.shape, np.nan)
    ok = np.isfinite(apply_vals)
    pos = np.searchsorted(uniq, apply_vals[ok])
    pos = np.clip(pos, 0, max(uniq.size - 1, 0))
    if uniq.size:
        hit = uniq[pos] == apply_vals[ok]
        vals = np.where(hit, counts[pos].astype(np.float64), np.nan)
        out[ok] = vals
    return out


def _freq_codes(apply_codes, stats_codes):
    seen = stats_codes[stats_codes >= 0]
    size = int(max(apply_codes.max(initial=-1), seen.max(initial=-1))) + 1
    counts = np.bincount(seen, minlength=size).astype(np.float64)
    out = np.full(apply_codes.shape, np.nan)
    ok = apply_codes >= 0
    vals = counts[apply_codes[ok]]
    out[ok] = np.where(vals > 0, vals, np.nan)
    return out


def _group_stats(key, val):
    """Per-key count/sum/sumsq/min/max over jointly present (key, val) pairs."""
    ok = (key >= 0) & np.isfinite(val)
    k, v = key[ok], val[ok]
    size = int(k.max(initial=-1)) + 1
    count = np.bincount(k, minlength=size).astype(np.float64)
    total = np.bincount(k, weights=v, minlength=size)
    sq = np.bincount(k, weights=v * v, minlength=size)
    gmin = np.full(size, np.inf)
    gmax = np.full(size, -np.inf)
    np.minimum.at(gmin, k, v)
    np.maximum.at(gmax, k, v)
    return count, total, sq, gmin, gmax, k, v


def _apply_group(apply_key, agg, count):
    out = np.full(apply_key.shape, np.nan)
    ok = (apply_key >= 0) & (apply_key < count.size)
    idx = apply_key[ok]
    vals = np.where(count[idx] > 0, agg[idx], np.nan)
    out[ok] = vals
    return out


def _group_sorted_values(k, v, size):
    order = np.lexsort((v, k))
    ks, vs = k[order], v[order]
    bounds = np.searchsorted(ks, np.arange(size + 1))
    return vs, bounds


def _group_median(key, val):
    count, _, _, _, _, k, v = _group_stats(key, val)
    vs, bounds = _group_sorted_values(k, v, count.size)
    med = np.full(count.size, np.nan)
    for g in range(count.size):
        lo, hi = bounds[g], bounds[g + 1]
        if hi > lo:
            med[g] = np.median(vs[lo:hi])
    return med, count


def _group_rank(apply_key, apply_val, key, val):
    count, _, _, _, _, k, v = _group_stats(key, val)
    vs, bounds = _group_sorted_values(k, v, count.size)
    out = np.full(apply_key.shape, np.nan)
    ok = (apply_key >= 0) & (apply_key < count.size) & np.isfinite(apply_val)
    for g in np.unique(apply_key[ok]):
        if count[g] == 0:
            continue
        lo, hi = bounds[g], bounds[g + 1]
        grp = vs[lo:hi]
        rows = ok & (apply_key == g)
        less = np.searchsorted(grp, apply_val[rows], side="left")
        upto = np.searchsorted(grp, apply_val[rows], side="right")
        out[rows] = less + (upto - less + 1) / 2.0
    return out


def _pair_codes(a, b, width):
    ok = (a >= 0) & (b >= 0)
    combo = np.where(ok, a * width + b, -1)
    return combo, ok


def materialize(c: CandidateFeature, ds: Dataset, rows: RowIndexSet,
                stats_rows: RowIndexSet) -> Column:
    """Evaluate a candidate over `rows` using statistics from `stats_rows`.

    Non-finite results (division by zero, overflow) become missing; log is
    ln(|x| + 1e-10) and sqrt is sqrt(|x|); unseen categories or pairs at
    apply time map to missing.
    """
    op = c.op
    cols = [ds.column(i) for i in c.operands]
    for pos, col in enumerate(cols):
        if not op.slot_accepts(pos, col.kind):
            raise ValueError(f"operand {c.names[pos]!r} kind {col.kind} does not "
                             f"fit slot {pos} of {op.name}")
    r = rows.indices
    s = stats_rows.indices

    if op.arity == 1:
        col = cols[0]
        if op.name == "freq":
            if col.kind == NUMERIC:
                return Column(NUMERIC, _freq_numeric(col.values[r], col.values[s]))
            return Column(NUMERIC, _freq_codes(col.values[r], col.values[s]))
        x = col.values[r]
        if op.name == "abs":
            out = np.abs(x)
        elif op.name == "log":
            out = np.log(np.abs(x) + LOG_EPS)
        elif op.name == "sqrt":
            out = np.sqrt(np.abs(x))
        elif op.name == "square":
            out = x * x
        elif op.name == "sigmoid":
            out = _sigmoid(x)
        elif op.name == "round":
            out = np.round(x)
        else:
            raise ValueError(f"unknown operator {op.name!r}")
        return Column(NUMERIC, _clean(out))

    a, b = cols
    if op.slots == (NUMERIC, NUMERIC):
        x, y = a.values[r], b.values[r]
        if op.name == "add":
            out = x + y
        elif op.name == "sub":
            out = x - y
        elif op.name == "mul":
            out = x * y
        elif op.name == "div":
            with np.errstate(divide="ignore", invalid="ignore"):
                out = np.where(y == 0, np.nan, x / y)
        elif op.name == "min":
            out = np.where(np.isnan(x) | np.isnan(y), np.nan, np.minimum(x, y))
        elif op.name == "max":
            out = np.where(np.isnan(x) | np.isnan(y), np.nan, np.maximum(x, y))
        else:
            raise ValueError(f"unknown operator {op.name!r}")
        return Column(NUMERIC, _clean(out))

    if op.slots == (CATEGORICAL, NUMERIC):
        key_apply, key_stats = a.values[r], a.values[s]
        val_apply, val_stats = b.values[r], b.values[s]
        if op.name == "GroupByThenRank":
            return Column(NUMERIC, _group_rank(key_apply, val_apply,
                                               key_stats, val_stats))
        if op.name == "GroupByThenMedian":
            med, count = _group_median(key_stats, val_stats)
            return Column(NUMERIC, _apply_group(key_apply, med, count))
        count, total, sq, gmin, gmax, _, _ = _group_stats(key_stats, val_stats)
        with np.errstate(divide="ignore", invalid="ignore"):
            if op.name == "GroupByThenMean":
                agg = total / count
            elif op.name == "GroupByThenMin":
                agg = gmin
            elif op.name == "GroupByThenMax":
                agg = gmax
            elif op.name == "GroupByThenStd":
                # sample std; singleton groups have no spread estimate
                var = (sq - total * total / count) / (count - 1)
                agg = np.sqrt(np.maximum(var, 0.0))
                agg[count < 2] = np.nan
            else:
                raise ValueError(f"unknown operator {op.name!r}")
        return Column(NUMERIC, _clean(_apply_group(key_apply, agg, count)))

    if op.slots == (CATEGORICAL, CATEGORICAL):
        width = max(len(b.categories), 1)
        combo_apply, ok_apply = _pair_codes(a.values[r], b.values[r], width)
        combo_stats, ok_stats = _pair_codes(a.values[s], b.values[s], width)
        seen = combo_stats[ok_stats]
        if op.name == "GroupByThenNUnique":
            key_apply, key_stats = a.values[r], a.values[s]
            pairs = np.unique(seen)
            size = int(key_stats[ok_stats].max(initial=-1)) + 1
            nuniq = np.bincount(pairs // width,
                                minlength=size).astype(np.float64)
            count = np.bincount(key_stats[ok_stats],
                                minlength=size).astype(np.float64)
            return Column(NUMERIC, _apply_group(key_apply, nuniq, count))
        uniq, counts = np.unique(seen, return_counts=True)
        pos = np.searchsorted(uniq, combo_apply)
        pos = np.clip(pos, 0, max(uniq.size - 1, 0))
        hit = ok_apply & (uniq.size > 0) & (uniq[pos] == combo_apply)
        if op.name == "CombineThenFreq":
            out = np.full(combo_apply.shape, np.nan)
            out[hit] = counts[pos[hit]].astype(np.float64)
            return Column(NUMERIC, out)
        if op.name == "Combine":
            cats = [f"{a.categories[int(p) // width]}&"
                    f"{b.categories[int(p) % width]}" for p in uniq]
            codes = np.where(hit, pos, -1).astype(np.int64)
            return Column(CATEGORICAL, codes, cats)
    raise ValueError(f"unknown operator {op.name!r}")
