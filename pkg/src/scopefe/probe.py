"""Operator pre-screening on a probe subsample.

Each operator is scored by the mean of its top-k candidate improvements
over a small, separately subsampled train/validation pair; only the
N_top best-scoring operators survive into candidate generation.  Taking
the top-k mean keeps one strong pairing from being diluted by the random
majority of uninformative ones.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .booster import BoostParams, oof_baseline
from .oper import OperatorSpec, enumerate_candidates
from .parallel import run_map
from .seeding import derive_seed
from .select import candidate_delta
from .tabular import BINARY, Dataset, RowIndexSet, subsample

log = logging.getLogger(__name__)

NEG_INF = float("-inf")


@dataclass
class ProbeConfig:
    r_probe: float = 0.1
    n_cand: int = 32
    k: int = 8
    n_top: int | None = None
    min_rows: int = 500

    def validate(self, p: int):
        if not 0.0 < self.r_probe <= 1.0:
            raise ValueError("r_probe must be in (0, 1]")
        if not 1 <= self.k <= self.n_cand:
            raise ValueError("need 1 <= k <= n_cand")
        n_top = self.effective_n_top(p)
        if not 1 <= n_top <= p:
            raise ValueError("need 1 <= n_top <= number of operators")

    def effective_n_top(self, p: int) -> int:
        return self.n_top if self.n_top is not None else math.ceil(p / 2)


@dataclass
class OperatorScore:
    name: str
    candidates: list[str]
    deltas: list[float]
    score: float
    selected: bool = False


def topk_mean(deltas, k: int) -> float:
    """Mean of the k largest values (fewer if fewer exist)."""
    if not deltas:
        return NEG_INF
    top = sorted(deltas, reverse=True)[:k]
    return float(np.mean(top))


def type_aware_sample(op: OperatorSpec, features, n_cand: int,
                      seed: int) -> list:
    """Uniform sample without replacement from the operator's compatible
    candidate universe (unconstrained by clustering)."""
    universe = enumerate_candidates(features, [op], None)
    if len(universe) <= n_cand:
        return universe
    rng = np.random.default_rng(seed)
    picks = np.sort(rng.choice(len(universe), size=n_cand, replace=False))
    return [universe[i] for i in picks]


def operator_probing(ds: Dataset, train: RowIndexSet, valid: RowIndexSet,
                     ops: list[OperatorSpec], cfg: ProbeConfig,
                     params: BoostParams, folds: int, seed: int,
                     workers: int = 1):
    """Select the top operators by probing on a subsample.

    Train and validation are subsampled separately (stratified for binary
    tasks) so the out-of-fold structure is preserved.  Operators with no
    compatible candidates score -inf and are never selected.  Returns the
    kept operators in roster order plus one score record per operator.
    """
    cfg.validate(len(ops))
    stratify = ds.task == BINARY
    labels = ds.y if stratify else None
    probe_tr = subsample(train, cfg.r_probe, stratify, labels,
                         seed=derive_seed(seed, "probe", "train"),
                         min_size=cfg.min_rows)
    probe_vl = subsample(valid, cfg.r_probe, stratify, labels,
                         seed=derive_seed(seed, "probe", "valid"),
                         min_size=cfg.min_rows)
    yhat, _ = oof_baseline(ds, probe_tr, probe_vl, folds, params,
                           derive_seed(seed, "probe", "oof"))

    sampled = [type_aware_sample(op, ds.columns, cfg.n_cand,
                                 derive_seed(seed, "probe", "sample", io))
               for io, op in enumerate(ops)]

    def job(task):
        io, jc, cand = task
        try:
            return candidate_delta(ds, cand, probe_tr, probe_vl, yhat, params,
                                   seed=derive_seed(seed, "probe", "eval",
                                                    io, jc))
        except ValueError as exc:
            log.warning("probe skipping %s: %s", cand.expression, exc)
            return None

    tasks = [(io, jc, cand) for io, cands in enumerate(sampled)
             for jc, cand in enumerate(cands)]
    results = run_map(job, tasks, workers)
    deltas_by_op: dict[int, list[float]] = {io: [] for io in range(len(ops))}
    for (io, jc, _), delta in zip(tasks, results):
        if delta is not None:
            deltas_by_op[io].append(delta)

    scores = []
    for io, op in enumerate(ops):
        deltas = deltas_by_op[io]
        scores.append(OperatorScore(op.name,
                                    [c.expression for c in sampled[io]],
                                    deltas, topk_mean(deltas, cfg.k)))
    n_top = cfg.effective_n_top(len(ops))
    eligible = [io for io in range(len(ops)) if scores[io].score > NEG_INF]
    ranked = sorted(eligible, key=lambda io: (-scores[io].score, io))[:n_top]
    chosen = set(ranked)
    for io in chosen:
        scores[io].selected = True
    selected = [ops[io] for io in range(len(ops)) if io in chosen]
    return selected, scores
