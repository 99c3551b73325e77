"""Compact deterministic histogram gradient booster.

Purpose-built for incremental feature scoring: fits accept per-row
initial margins so a model can learn residuals on top of existing
predictions, record the validation loss after every round, and expose
cumulative split gain per feature.  Squared error drives regression
(validation loss reported as RMSE); logistic loss drives binary tasks,
with all predictions kept in margin (log-odds) space.

Numeric features are quantile-binned on the training rows; categorical
features are first mapped to a training-frequency ordinal and then binned
the same way.  Missing values occupy a dedicated bin and route to a
per-split direction learned from data.  Everything is deterministic:
no sampling, stable tie-breaks (lowest feature, then lowest bin).

Columns, targets, and margins are all full-length arrays indexed by
absolute row id; `train_pos` / `valid_pos` select the rows a fit may see.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tabular import BINARY, CATEGORICAL, REGRESSION, Column, Dataset, RowIndexSet

REG_LAMBDA = 1e-6
MIN_GAIN = 1e-12


@dataclass
class BoostParams:
    rounds: int = 100
    learning_rate: float = 0.1
    max_depth: int = 3
    min_leaf: int = 20
    bins: int = 32
    early_stop_patience: int = 5

    def validate(self):
        if self.rounds < 0:
            raise ValueError("rounds must be nonnegative")
        for name in ("learning_rate", "max_depth", "min_leaf", "bins",
                     "early_stop_patience"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class Tree:
    feature: list[int] = field(default_factory=list)
    threshold: list[int] = field(default_factory=list)
    miss_left: list[bool] = field(default_factory=list)
    left: list[int] = field(default_factory=list)
    right: list[int] = field(default_factory=list)
    value: list[float] = field(default_factory=list)

    def add_node(self):
        self.feature.append(-1)
        self.threshold.append(-1)
        self.miss_left.append(True)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(0.0)
        return len(self.feature) - 1


@dataclass
class BoostModel:
    task: str
    params: BoostParams
    base_score: float
    trees: list[Tree]
    feature_gain: np.ndarray
    total_gain: float
    best_round: int
    bin_edges: list[np.ndarray]
    cat_orders: list
    n_bins: np.ndarray

    def predict_margin(self, columns: list[Column], n_rounds=None) -> np.ndarray:
        """Margins (base + shrunken leaf values) for raw columns."""
        B, miss_code = _bin_with(columns, self.bin_edges, self.cat_orders,
                                 self.n_bins)
        n_rounds = self.best_round if n_rounds is None else n_rounds
        out = np.full(B.shape[0], self.base_score)
        rows = np.arange(B.shape[0])
        for tree in self.trees[:n_rounds]:
            out += self.params.learning_rate * _leaf_values(tree, B, miss_code,
                                                            rows)
        return out


@dataclass
class FitResult:
    model: BoostModel
    valid_losses: list[float]
    train_losses: list[float]
    valid_loss_round0: float
    margins: np.ndarray
    margins_best: np.ndarray


def rmse(y: np.ndarray, pred: np.ndarray) -> float:
    return float(np.sqrt(np.mean((y - pred) ** 2)))


def logistic_loss(y01: np.ndarray, margin: np.ndarray) -> float:
    sign = 2.0 * y01 - 1.0
    return float(np.mean(np.logaddexp(0.0, -margin * sign)))


def validation_loss(task: str, y: np.ndarray, margin: np.ndarray) -> float:
    if task == REGRESSION:
        return rmse(y, margin)
    return logistic_loss(y, margin)


def auc(y01: np.ndarray, score: np.ndarray) -> float:
    """Rank-based ROC-AUC with tied scores averaged."""
    y01 = np.asarray(y01)
    order = np.argsort(score, kind="stable")
    ranks = np.empty(order.size, dtype=np.float64)
    sorted_scores = score[order]
    i = 0
    while i < order.size:
        j = i
        while j + 1 < order.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    n_pos = int(y01.sum())
    n_neg = y01.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both classes present")
    return float((ranks[y01 == 1].sum() - n_pos * (n_pos + 1) / 2.0)
                 / (n_pos * n_neg))


def _quantile_edges(train_vals: np.ndarray, bins: int) -> np.ndarray:
    if train_vals.size == 0:
        return np.empty(0)
    qs = np.linspace(0.0, 1.0, bins + 1)[1:-1]
    return np.unique(np.quantile(train_vals, qs))


def _ordinal_values(col: Column, order: np.ndarray) -> np.ndarray:
    codes = col.values
    return np.where((codes >= 0) & (codes < order.size),
                    order[np.clip(codes, 0, max(order.size - 1, 0))], np.nan)


def _bin_with(columns, edges_list, cat_orders, n_bins):
    """Bin raw columns with precomputed edges; missing goes to the top code."""
    n = columns[0].values.shape[0]
    stride = int(n_bins.max(initial=0)) + 1
    miss_code = stride - 1
    B = np.empty((n, len(columns)), dtype=np.int32)
    for f, col in enumerate(columns):
        if col.kind == CATEGORICAL:
            vals = _ordinal_values(col, cat_orders[f])
        else:
            vals = col.values
        binned = np.searchsorted(edges_list[f], vals, side="right")
        binned[~np.isfinite(vals)] = miss_code
        B[:, f] = binned
    return B, miss_code


def _bin_columns(columns, train_pos, bins):
    """Learn per-feature edges / category orders on train rows, bin everything."""
    edges_list, cat_orders, nb = [], [], []
    for col in columns:
        if col.kind == CATEGORICAL:
            codes = col.values
            ncat = max(len(col.categories or []),
                       int(codes.max(initial=-1)) + 1, 1)
            tr = codes[train_pos]
            counts = np.bincount(tr[tr >= 0], minlength=ncat)
            order = np.lexsort((np.arange(ncat), -counts))
            ordinal = np.empty(ncat, dtype=np.float64)
            ordinal[order] = np.arange(ncat)
            cat_orders.append(ordinal)
            vals = _ordinal_values(col, ordinal)
        else:
            cat_orders.append(None)
            vals = col.values
        tv = vals[train_pos]
        edges = _quantile_edges(tv[np.isfinite(tv)], bins)
        edges_list.append(edges)
        nb.append(edges.size + 1)
    n_bins = np.asarray(nb, dtype=np.int64)
    B, miss_code = _bin_with(columns, edges_list, cat_orders, n_bins)
    return B, n_bins, edges_list, cat_orders, miss_code + 1


def _leaf_values(tree: Tree, B: np.ndarray, miss_code: int,
                 rows: np.ndarray) -> np.ndarray:
    """Leaf value per row of `rows`, aligned with B's full row axis."""
    out = np.zeros(B.shape[0])
    stack = [(0, rows)]
    while stack:
        node, idx = stack.pop()
        if idx.size == 0:
            continue
        f = tree.feature[node]
        if f < 0:
            out[idx] = tree.value[node]
            continue
        bins = B[idx, f]
        missing = bins == miss_code
        go_left = (bins <= tree.threshold[node]) | (missing & tree.miss_left[node])
        stack.append((tree.left[node], idx[go_left]))
        stack.append((tree.right[node], idx[~go_left]))
    return out


def _score(G, H):
    return G * G / (H + REG_LAMBDA)


def _best_split(B, offsets, stride, n_bins, g, h, rows, min_leaf):
    """Best (gain, feature, threshold-bin, missing-direction) for one node."""
    F = B.shape[1]
    combo = (B[rows] + offsets[None, :]).ravel()
    reps = np.repeat(g[rows], F) if F > 1 else g[rows]
    hist_g = np.bincount(combo, weights=reps, minlength=F * stride)
    reps = np.repeat(h[rows], F) if F > 1 else h[rows]
    hist_h = np.bincount(combo, weights=reps, minlength=F * stride)
    hist_c = np.bincount(combo, minlength=F * stride)
    hist_g = hist_g.reshape(F, stride)
    hist_h = hist_h.reshape(F, stride)
    hist_c = hist_c.reshape(F, stride).astype(np.float64)

    gm = hist_g[:, -1:]
    hm = hist_h[:, -1:]
    cm = hist_c[:, -1:]
    pg = np.cumsum(hist_g[:, :-1], axis=1)[:, :-1]
    ph = np.cumsum(hist_h[:, :-1], axis=1)[:, :-1]
    pc = np.cumsum(hist_c[:, :-1], axis=1)[:, :-1]
    if pg.shape[1] == 0:
        return None
    G = float(g[rows].sum())
    H = float(h[rows].sum())
    C = float(rows.size)
    parent = _score(G, H)
    positions = np.arange(pg.shape[1])
    # splits exist only below each feature's own real-bin count
    in_range = positions[None, :] < (n_bins[:, None] - 1)

    best = None
    for miss_left in (True, False):
        GL = pg + gm if miss_left else pg
        HL = ph + hm if miss_left else ph
        CL = pc + cm if miss_left else pc
        GR, HR, CR = G - GL, H - HL, C - CL
        gains = 0.5 * (_score(GL, HL) + _score(GR, HR) - parent)
        valid = in_range & (CL >= min_leaf) & (CR >= min_leaf)
        gains = np.where(valid, gains, -np.inf)
        flat = int(np.argmax(gains))
        gain = float(gains.ravel()[flat])
        if gain > MIN_GAIN and (best is None or gain > best[0]):
            f, t = divmod(flat, gains.shape[1])
            best = (gain, int(f), int(t), miss_left)
    return best


def _build_tree(B, offsets, stride, n_bins, g, h, train_rows, params,
                feature_gain):
    tree = Tree()
    total_gain = 0.0
    root = tree.add_node()
    stack = [(root, train_rows, 0)]
    miss_code = stride - 1
    while stack:
        node, rows, depth = stack.pop()
        G = float(g[rows].sum())
        H = float(h[rows].sum())
        split = None
        if depth < params.max_depth and rows.size >= 2 * params.min_leaf:
            split = _best_split(B, offsets, stride, n_bins, g, h, rows,
                                params.min_leaf)
        if split is None:
            tree.value[node] = -G / (H + REG_LAMBDA)
            continue
        gain, f, t, miss_left = split
        feature_gain[f] += gain
        total_gain += gain
        tree.feature[node] = f
        tree.threshold[node] = t
        tree.miss_left[node] = miss_left
        bins = B[rows, f]
        missing = bins == miss_code
        go_left = (bins <= t) | (missing & miss_left)
        left = tree.add_node()
        right = tree.add_node()
        tree.left[node] = left
        tree.right[node] = right
        stack.append((left, rows[go_left], depth + 1))
        stack.append((right, rows[~go_left], depth + 1))
    return tree, total_gain


def fit_booster(columns: list[Column], y: np.ndarray, train_pos, valid_pos,
                task: str, params: BoostParams, init_scores=None,
                seed: int = 0) -> FitResult:
    """Boost greedy histogram trees on the given columns.

    With `init_scores` (full-length margins) the model learns residuals on
    top of them and its own base score is 0.  The validation loss is
    recorded after every round; fitting stops once `early_stop_patience`
    rounds pass without improving on the best loss seen so far (the
    round-0 loss included).  `margins_best` holds each row's margin at the
    best round.
    """
    params.validate()
    if len(columns) == 0:
        raise ValueError("need at least one feature column")
    train_pos = np.asarray(train_pos, dtype=np.int64)
    valid_pos = np.asarray(valid_pos, dtype=np.int64)
    if train_pos.size == 0:
        raise ValueError("empty training rows")
    present = np.zeros(train_pos.size, dtype=bool)
    for col in columns:
        present |= ~col.missing_mask()[train_pos]
    if not present.any():
        raise ValueError("all feature values missing on the training rows")

    B, n_bins, edges_list, cat_orders, stride = _bin_columns(
        columns, train_pos, params.bins)
    offsets = np.arange(len(columns), dtype=np.int64) * stride
    n = B.shape[0]
    active = np.union1d(train_pos, valid_pos)

    if init_scores is not None:
        margins = np.asarray(init_scores, dtype=np.float64).copy()
        base = 0.0
    else:
        if task == REGRESSION:
            base = float(np.mean(y[train_pos]))
        else:
            p = float(np.clip(np.mean(y[train_pos]), 1e-6, 1 - 1e-6))
            base = float(np.log(p / (1.0 - p)))
        margins = np.full(n, base)

    y = np.asarray(y, dtype=np.float64)
    y_tr = y[train_pos]
    sign_tr = 2.0 * y_tr - 1.0

    def grad_hess():
        m = margins[train_pos]
        if task == REGRESSION:
            return m - y_tr, np.ones_like(m)
        p = 1.0 / (1.0 + np.exp(-np.clip(m, -500, 500)))
        return p - y_tr, np.maximum(p * (1.0 - p), 1e-16)

    def vloss():
        return validation_loss(task, y[valid_pos], margins[valid_pos])

    def tloss():
        if task == REGRESSION:
            return rmse(y_tr, margins[train_pos])
        return float(np.mean(np.logaddexp(0.0, -margins[train_pos] * sign_tr)))

    have_valid = valid_pos.size > 0
    valid_losses: list[float] = []
    train_losses: list[float] = []
    loss0 = vloss() if have_valid else float("nan")
    best_loss = loss0 if have_valid else float("inf")
    best_round = 0
    margins_best = margins.copy()
    trees: list[Tree] = []
    feature_gain = np.zeros(len(columns))
    total_gain = 0.0
    lr = params.learning_rate
    miss_code = stride - 1

    for r in range(1, params.rounds + 1):
        g, h = grad_hess()
        g_full = np.zeros(n)
        h_full = np.zeros(n)
        g_full[train_pos] = g
        h_full[train_pos] = h
        tree, gain = _build_tree(B, offsets, stride, n_bins, g_full, h_full,
                                 train_pos, params, feature_gain)
        total_gain += gain
        trees.append(tree)
        margins[active] += lr * _leaf_values(tree, B, miss_code, active)[active]
        train_losses.append(tloss())
        if have_valid:
            loss = vloss()
            valid_losses.append(loss)
            if loss < best_loss - MIN_GAIN:
                best_loss = loss
                best_round = r
                margins_best = margins.copy()
            elif r - best_round >= params.early_stop_patience:
                break
        else:
            best_round = r
            margins_best = margins.copy()

    model = BoostModel(task, params, base, trees, feature_gain, total_gain,
                       best_round, edges_list, cat_orders, n_bins)
    return FitResult(model, valid_losses, train_losses, loss0, margins,
                     margins_best)


def attribution(model: BoostModel) -> np.ndarray:
    """Cumulative split gain per feature over all fitted trees."""
    return model.feature_gain.copy()


def oof_baseline(ds: Dataset, train: RowIndexSet, valid: RowIndexSet,
                 folds: int, params: BoostParams, seed: int):
    """Out-of-fold baseline margins on the base features.

    Each training row is predicted by the fold model that held it out
    (early-stopped on that held-out fold); validation rows receive the
    average of all fold models' margins.  Returns a full-length margin
    array (NaN outside train and valid) and the baseline validation loss.
    """
    if folds < 2:
        raise ValueError("need at least 2 folds")
    columns = [ds.column(i) for i in range(ds.d)]
    y = ds.y.astype(np.float64)
    train_pos = train.indices
    valid_pos = valid.indices
    rng = np.random.default_rng(seed)
    fold_id = np.empty(train_pos.size, dtype=np.int64)
    if ds.task == BINARY:
        y_tr = y[train_pos]
        for cls in np.unique(y_tr):
            rows = np.flatnonzero(y_tr == cls)
            perm = rng.permutation(rows)
            fold_id[perm] = np.arange(perm.size) % folds
    else:
        perm = rng.permutation(train_pos.size)
        fold_id[perm] = np.arange(train_pos.size) % folds
    yhat = np.full(ds.n, np.nan)
    yhat[valid_pos] = 0.0
    for f in range(folds):
        held = train_pos[fold_id == f]
        used = train_pos[fold_id != f]
        if held.size == 0 or used.size == 0:
            raise ValueError("a fold has no rows; reduce the fold count")
        if ds.task == BINARY and np.unique(y[used]).size < 2:
            raise ValueError("a training fold contains a single class")
        res = fit_booster(columns, y, used, held, ds.task, params,
                          seed=seed + f)
        yhat[held] = res.margins_best[held]
        yhat[valid_pos] += res.margins_best[valid_pos] / folds
    l_init = validation_loss(ds.task, y[valid_pos], yhat[valid_pos])
    return yhat, l_init


def feature_boost(train: RowIndexSet, valid: RowIndexSet,
                  columns: list[Column], y: np.ndarray, task: str,
                  yhat: np.ndarray, params: BoostParams,
                  seed: int = 0) -> float:
    """Incremental improvement of candidate columns over baseline margins.

    Fits a booster on the candidate columns alone with the baseline `yhat`
    as initial margins.  The improvement is the baseline validation loss
    minus the best validation loss over rounds 1..R (round 0 excluded),
    so it may be negative.
    """
    if params.rounds < 1:
        raise ValueError("feature_boost needs at least 1 boosting round")
    train_pos = train.indices
    all_missing = all(col.missing_mask()[train_pos].all() for col in columns)
    if all_missing:
        raise ValueError("candidate is entirely missing on the training rows")
    l_init = validation_loss(task, y[valid.indices], yhat[valid.indices])
    res = fit_booster(columns, y, train_pos, valid.indices, task, params,
                      init_scores=yhat, seed=seed)
    l_best = min(res.valid_losses)
    return l_init - l_best
