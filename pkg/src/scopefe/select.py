"""Reliability-scored ranking, successive halving, and final selection.

Round 0 scores every candidate `n_sub` times on independent subsamples of
the smallest training block (validation fixed) and ranks by the
variance-penalized score R = mu - lambda * sigma / sqrt(n_sub).  Each
later round keeps the top `keep_ratio` share of the pool, rescores the
keepers once on the next (doubled) block, and the final round drops any
candidate whose improvement is not positive.  Survivors are then ranked
by split gain in one jointly fitted booster.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .booster import BoostParams, attribution, feature_boost, fit_booster
from .oper import CandidateFeature, materialize
from .parallel import run_map
from .seeding import derive_seed
from .tabular import BlockSchedule, Dataset, RowIndexSet, subsample

log = logging.getLogger(__name__)


@dataclass
class ScoreRecord:
    """Per-candidate improvement samples and the penalized score."""

    candidate: CandidateFeature
    deltas: list[float]
    mu: float
    sigma: float
    se: float
    score: float

    @property
    def expression(self) -> str:
        return self.candidate.expression

    @classmethod
    def from_deltas(cls, candidate, deltas, lam: float) -> "ScoreRecord":
        deltas = [float(d) for d in deltas]
        n = len(deltas)
        if all(d == deltas[0] for d in deltas):
            # identical samples have exactly zero spread
            mu, sigma = deltas[0], 0.0
        else:
            mu = float(np.mean(deltas))
            sigma = float(np.std(deltas, ddof=1))
        se = sigma / math.sqrt(n)
        return cls(candidate, deltas, mu, sigma, se, mu - lam * se)


@dataclass
class HalvingOutcome:
    survivors: list[CandidateFeature]
    history: list[list[tuple[str, float]]]
    survival_round: dict[str, int]
    final_deltas: dict[str, float]


def all_rows(ds: Dataset) -> RowIndexSet:
    return RowIndexSet(np.arange(ds.n))


def candidate_delta(ds: Dataset, cand: CandidateFeature, fit_rows: RowIndexSet,
                    valid_rows: RowIndexSet, yhat: np.ndarray,
                    params: BoostParams, seed: int = 0) -> float:
    """Materialize one candidate (statistics from fit rows) and score it."""
    col = materialize(cand, ds, all_rows(ds), fit_rows)
    return feature_boost(fit_rows, valid_rows, [col], ds.y.astype(np.float64),
                         ds.task, yhat, params, seed=seed)


def reliability_subsample(block0: RowIndexSet, r_rel: float, seed: int,
                          s: int) -> RowIndexSet:
    """The s-th (1-based) scoring subsample of the round-0 training block."""
    return subsample(block0, r_rel, seed=derive_seed(seed, "reliability", s))


def reliability_round(candidates, ds: Dataset, block0: RowIndexSet,
                      valid: RowIndexSet, yhat: np.ndarray, n_sub: int,
                      r_rel: float, lam: float, seed: int,
                      params: BoostParams, workers: int = 1):
    """Rank candidates by the variance-penalized mean of n_sub improvements.

    Each subsample is drawn once and scored against the fixed validation
    rows for every candidate.  Candidates whose evaluation fails are
    dropped with a warning.  Ties in the score break on the canonical
    expression string.
    """
    if n_sub < 1:
        raise ValueError("n_sub must be at least 1")
    if not 0.0 < r_rel <= 1.0:
        raise ValueError("r_rel must be in (0, 1]")
    subs = [reliability_subsample(block0, r_rel, seed, s)
            for s in range(1, n_sub + 1)]
    for sub in subs:
        if len(sub) < params.min_leaf:
            raise ValueError("reliability subsample smaller than the "
                             "booster's min_leaf")

    def job(task):
        s, ci, cand = task
        try:
            return candidate_delta(ds, cand, subs[s - 1], valid, yhat, params,
                                   seed=derive_seed(seed, "reliability-eval",
                                                    s, ci))
        except ValueError as exc:
            log.warning("dropping %s: %s", cand.expression, exc)
            return None

    tasks = [(s, ci, cand) for s in range(1, n_sub + 1)
             for ci, cand in enumerate(candidates)]
    results = run_map(job, tasks, workers)
    per_cand: dict[int, list] = {ci: [] for ci in range(len(candidates))}
    for (s, ci, _), delta in zip(tasks, results):
        per_cand[ci].append(delta)
    records = []
    for ci, cand in enumerate(candidates):
        deltas = per_cand[ci]
        if any(d is None for d in deltas):
            continue
        records.append(ScoreRecord.from_deltas(cand, deltas, lam))
    records.sort(key=lambda rec: (-rec.score, rec.expression))
    return records


def successive_halving(records, blocks: BlockSchedule, ds: Dataset,
                       valid: RowIndexSet, yhat: np.ndarray,
                       keep_ratio: float, params: BoostParams, seed: int,
                       workers: int = 1,
                       round_baselines=None) -> HalvingOutcome:
    """Eliminate candidates over doubling blocks, starting from the round-0
    ranking.

    Each round keeps ceil(keep_ratio * count) candidates (at least one)
    from the previous ordering and rescores them once on the next block.
    Final-round candidates with nonpositive improvement are dropped.
    `round_baselines`, when given, maps round index to an alternative
    (yhat, ) baseline for that round's rescoring.
    """
    if not records:
        raise ValueError("successive_halving needs a non-empty ranking")
    if not 0.0 < keep_ratio <= 1.0:
        raise ValueError("keep_ratio must be in (0, 1]")
    history: list[list[tuple[str, float]]] = []
    survival = {rec.expression: 0 for rec in records}
    # order by R, but positivity in the degenerate no-halving case uses mu
    current = [(rec.candidate, rec.mu) for rec in records]
    final_deltas = {rec.expression: rec.mu for rec in records}
    n_rounds = len(blocks)
    for r in range(1, n_rounds):
        keep = max(1, math.ceil(keep_ratio * len(current)))
        current = current[:keep]
        block = blocks.rounds[r]
        yhat_r = yhat if round_baselines is None else round_baselines(r)

        def job(task):
            ci, cand = task
            try:
                return candidate_delta(ds, cand, block, valid, yhat_r, params,
                                       seed=derive_seed(seed, "halving", r, ci))
            except ValueError as exc:
                log.warning("dropping %s in round %d: %s",
                            cand.expression, r, exc)
                return None

        tasks = list(enumerate(cand for cand, _ in current))
        deltas = run_map(job, tasks, workers)
        scored = [(cand, d) for (ci, cand), d in zip(tasks, deltas)
                  if d is not None]
        scored.sort(key=lambda cd: (-cd[1], cd[0].expression))
        history.append([(cand.expression, d) for cand, d in scored])
        for cand, d in scored:
            survival[cand.expression] = r
            final_deltas[cand.expression] = d
        current = scored
    survivors = [cand for cand, d in current if d > 0.0]
    return HalvingOutcome(survivors, history, survival,
                          {expr: final_deltas[expr] for expr in survival})


def final_select(survivors, ds: Dataset, train: RowIndexSet,
                 valid: RowIndexSet, yhat: np.ndarray, top_k: int,
                 params: BoostParams, seed: int = 0):
    """Rank survivors by split gain in one joint residual fit; keep top_k
    with positive gain."""
    if top_k < 1:
        raise ValueError("top_k must be at least 1")
    if not survivors:
        return [], {}
    cols = [materialize(cand, ds, all_rows(ds), train) for cand in survivors]
    res = fit_booster(cols, ds.y.astype(np.float64), train.indices,
                      valid.indices, ds.task, params, init_scores=yhat,
                      seed=seed)
    gains = attribution(res.model)
    order = sorted(range(len(survivors)),
                   key=lambda i: (-gains[i], survivors[i].expression))
    selected = [survivors[i] for i in order if gains[i] > 0.0][:top_k]
    gain_map = {survivors[i].expression: float(gains[i])
                for i in range(len(survivors))}
    return selected, gain_map
