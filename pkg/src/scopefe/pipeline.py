"""End-to-end pipeline: cluster, probe, generate, score, select.

Stages run in order (clustering and probing are independent given the
data): A builds the similarity matrix and cluster assignment, B probes
operators, C enumerates constrained candidates, D computes the baseline
and runs the reliability round plus successive halving, E ranks the
survivors by attribution and keeps the top K.  The report records
per-stage wall times (split into generation-side RUN and scoring-side
Eval), candidate counts with predicted and measured reduction ratios,
per-candidate scores, and a variability summary.

A stage failure aborts the run with the partial report flagged
incomplete rather than silently degrading.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import assoc, cluster, oper, probe, select, tabular
from .booster import BoostParams, auc, fit_booster, oof_baseline
from .seeding import derive_seed
from .tabular import BINARY, Dataset, RowIndexSet

log = logging.getLogger(__name__)

MODES = ("off", "hard", "soft")


@dataclass
class PipelineConfig:
    mode: str = "soft"
    tau: int = 16
    m: float = 2.0
    fcm_tol: float = 1e-5
    fcm_max_iter: int = 300
    probing: bool = True
    probe: probe.ProbeConfig = field(default_factory=probe.ProbeConfig)
    reliability: bool = True
    n_sub: int = 3
    lam: float = 0.2
    r_rel: float = 0.8
    keep_ratio: float = 0.5
    top_k: int = 10
    blocks_log2: int = 3
    folds: int = 5
    valid_ratio: float = 0.2
    baseline_per_round: bool = False
    booster: BoostParams = field(default_factory=BoostParams)
    seed: int = 0
    workers: int = 1

    def validate(self):
        if self.mode not in MODES:
            raise ValueError(f"clustering mode must be one of {MODES}")
        if self.mode == "soft" and self.m <= 1.0:
            raise ValueError("soft clustering needs fuzziness m > 1")
        if self.n_sub < 1:
            raise ValueError("n_sub must be at least 1")
        if not 0.0 < self.r_rel <= 1.0:
            raise ValueError("r_rel must be in (0, 1]")
        if not 0.0 < self.keep_ratio <= 1.0:
            raise ValueError("keep_ratio must be in (0, 1]")
        if self.top_k < 1:
            raise ValueError("top_k must be at least 1")
        self.booster.validate()


class PipelineError(RuntimeError):
    """A stage failed; carries the partial report for inspection."""

    def __init__(self, stage: str, message: str, report: dict):
        super().__init__(f"stage {stage!r} failed: {message}")
        self.stage = stage
        self.report = report


@dataclass
class PipelineResult:
    report: dict
    selected: list
    selected_columns: list
    dataset: Dataset
    train: RowIndexSet
    valid: RowIndexSet


def predicted_reduction(d: int, p: int, tau: int, n_top: int) -> float:
    """Predicted binary-space shrinkage (n_top / p) * (tau / d)."""
    if min(d, p, tau, n_top) <= 0:
        raise ValueError("all arguments must be positive")
    if tau > d or n_top > p:
        raise ValueError("need tau <= d and n_top <= p")
    return (n_top / p) * (tau / d)


def variability_summary(records) -> dict:
    """|mu|/sigma per candidate, their mean, and the largest sigma.

    Zero-variance candidates are excluded from the ratio aggregate and
    listed separately.
    """
    ratios = {}
    zero_variance = []
    sigma_max = None
    for rec in records:
        if sigma_max is None or rec.sigma > sigma_max:
            sigma_max = rec.sigma
        if rec.sigma == 0.0:
            zero_variance.append(rec.expression)
        else:
            ratios[rec.expression] = abs(rec.mu) / rec.sigma
    mean_ratio = (float(np.mean(list(ratios.values()))) if ratios else None)
    return {
        "per_candidate": ratios,
        "mean_abs_mu_over_sigma": mean_ratio,
        "sigma_max": sigma_max,
        "zero_variance": sorted(zero_variance),
    }


def _cluster_assignment(ds, S, cfg):
    if cfg.mode == "hard":
        assign = cluster.hard_cluster(S, cfg.tau)
        return assign, {"mode": "hard", "K": assign.K, "theta": None,
                        "assignments": {ds.columns[i].name: [int(l)]
                                        for i, l in enumerate(assign.labels)}}
    K = cluster.cluster_count(ds.d, cfg.tau)
    emb = cluster.spectral_embed(S, K)
    mem = cluster.fcm(emb, K, cfg.m, cfg.fcm_tol, cfg.fcm_max_iter,
                      seed=derive_seed(cfg.seed, "fcm"))
    assign = cluster.soft_assign(mem.U, K)
    info = {"mode": "soft", "K": K, "theta": assign.theta,
            "assignments": {ds.columns[i].name: list(labels)
                            for i, labels in enumerate(assign.label_sets)}}
    return assign, info


def evaluate_downstream(ds, train, valid, selected, params, seed):
    """Validation metric of a model on base plus selected features."""
    cols = [ds.column(i) for i in range(ds.d)]
    cols += [oper.materialize(c, ds, select.all_rows(ds), train)
             for c in selected]
    res = fit_booster(cols, ds.y.astype(np.float64), train.indices,
                      valid.indices, ds.task, params, seed=seed)
    margins = res.margins_best[valid.indices]
    if ds.task == BINARY:
        return {"name": "auc", "value": auc(ds.y[valid.indices], margins)}
    from .booster import rmse
    return {"name": "rmse", "value": rmse(ds.y[valid.indices].astype(float),
                                          margins)}


def run(ds: Dataset, cfg: PipelineConfig) -> PipelineResult:
    """Execute the full pipeline and return the report plus selections."""
    cfg.validate()
    timings: dict[str, float] = {}
    report: dict = {
        "incomplete": False,
        "error": None,
        "task": ds.task,
        "n_rows": ds.n,
        "n_features": ds.d,
        "seed": cfg.seed,
        "mode": cfg.mode,
        "probing": cfg.probing,
        "reliability": cfg.reliability,
        "timings": timings,
    }
    stage = "split"

    def fail(exc):
        report["incomplete"] = True
        report["error"] = {"stage": stage, "message": str(exc)}
        raise PipelineError(stage, str(exc), report) from exc

    try:
        stratify = ds.task == BINARY
        train, valid = tabular.split(ds, cfg.valid_ratio, stratify,
                                     derive_seed(cfg.seed, "split"))

        # Stage A: similarity + clustering
        assign = None
        timings["similarity"] = 0.0
        timings["clustering"] = 0.0
        if cfg.mode != "off":
            stage = "similarity"
            t0 = time.monotonic()
            S = assoc.similarity_matrix(ds, train)
            timings["similarity"] = time.monotonic() - t0
            stage = "clustering"
            t0 = time.monotonic()
            assign, cluster_info = _cluster_assignment(ds, S, cfg)
            timings["clustering"] = time.monotonic() - t0
            report["clusters"] = cluster_info

        # Stage B: operator probing
        ops = oper.default_operator_set()
        selected_ops = ops
        timings["probing"] = 0.0
        if cfg.probing:
            stage = "probing"
            t0 = time.monotonic()
            selected_ops, op_scores = probe.operator_probing(
                ds, train, valid, ops, cfg.probe, cfg.booster, cfg.folds,
                cfg.seed, cfg.workers)
            timings["probing"] = time.monotonic() - t0
            report["operators"] = {
                "total": len(ops),
                "selected": [op.name for op in selected_ops],
                "scores": [{"name": s.name, "score": s.score,
                            "top_deltas": sorted(s.deltas, reverse=True)[:cfg.probe.k],
                            "selected": s.selected} for s in op_scores],
            }
        else:
            report["operators"] = {"total": len(ops),
                                   "selected": [op.name for op in ops],
                                   "scores": None}

        # Stage C: constrained candidate generation
        stage = "generation"
        t0 = time.monotonic()
        candidates = oper.enumerate_candidates(ds.columns, selected_ops, assign)
        timings["generation"] = time.monotonic() - t0
        theoretical = oper.count_unconstrained(ds.columns, ops)
        gen_binary = sum(1 for c in candidates if c.op.arity == 2)
        counts = {
            "theoretical_unary": theoretical["unary"],
            "theoretical_binary": theoretical["binary"],
            "theoretical_total": theoretical["total"],
            "generated_unary": len(candidates) - gen_binary,
            "generated_binary": gen_binary,
            "generated_total": len(candidates),
        }
        report["counts"] = counts
        p = len(ops)
        n_top = cfg.probe.effective_n_top(p) if cfg.probing else p
        op_factor = n_top / p if cfg.probing else 1.0
        pair_factor = min(cfg.tau / ds.d, 1.0) if cfg.mode != "off" else 1.0
        report["reduction"] = {
            "predicted": op_factor * pair_factor,
            "measured": (counts["generated_total"] / counts["theoretical_total"]
                         if counts["theoretical_total"] else None),
            "measured_binary": (counts["generated_binary"]
                                / counts["theoretical_binary"]
                                if counts["theoretical_binary"] else None),
        }
        if not candidates:
            fail(ValueError("no candidates were generated"))

        # Stage D: baseline, reliability round, successive halving
        stage = "baseline"
        t0 = time.monotonic()
        yhat, l_init = oof_baseline(ds, train, valid, cfg.folds, cfg.booster,
                                    derive_seed(cfg.seed, "oof"))
        timings["baseline"] = time.monotonic() - t0
        report["l_init"] = l_init
        blocks = tabular.make_blocks(train, cfg.blocks_log2,
                                     derive_seed(cfg.seed, "blocks"))

        stage = "reliability"
        n_sub = cfg.n_sub if cfg.reliability else 1
        lam = cfg.lam if cfg.reliability else 0.0
        t0 = time.monotonic()
        records = select.reliability_round(candidates, ds, blocks.rounds[0],
                                           valid, yhat, n_sub, cfg.r_rel, lam,
                                           cfg.seed, cfg.booster, cfg.workers)
        timings["reliability"] = time.monotonic() - t0

        stage = "halving"
        round_baselines = None
        if cfg.baseline_per_round:
            cache: dict[int, np.ndarray] = {}

            def round_baselines(r):
                if r not in cache:
                    cache[r], _ = oof_baseline(ds,
                                               blocks.rounds[r], valid,
                                               cfg.folds, cfg.booster,
                                               derive_seed(cfg.seed, "oof", r))
                return cache[r]

        t0 = time.monotonic()
        halving = select.successive_halving(records, blocks, ds, valid, yhat,
                                            cfg.keep_ratio, cfg.booster,
                                            cfg.seed, cfg.workers,
                                            round_baselines)
        timings["halving"] = time.monotonic() - t0

        # Stage E: attribution + top-K
        stage = "attribution"
        t0 = time.monotonic()
        selected, gain_map = select.final_select(
            halving.survivors, ds, train, valid, yhat, cfg.top_k, cfg.booster,
            derive_seed(cfg.seed, "final"))
        timings["attribution"] = time.monotonic() - t0

        stage = "downstream"
        t0 = time.monotonic()
        metric = evaluate_downstream(ds, train, valid, selected, cfg.booster,
                                     derive_seed(cfg.seed, "downstream"))
        timings["downstream"] = time.monotonic() - t0
        report["validation_metric"] = metric

        survivor_counts = [len(records)]
        for round_scores in halving.history:
            survivor_counts.append(len(round_scores))
        counts["round_survivors"] = survivor_counts
        counts["final_survivors"] = len(halving.survivors)
        counts["selected"] = len(selected)

        by_expr = {rec.expression: rec for rec in records}
        scoring = []
        for rec in records:
            expr = rec.expression
            scoring.append({
                "expression": expr,
                "deltas": rec.deltas,
                "mu": rec.mu,
                "sigma": rec.sigma,
                "se": rec.se,
                "score": rec.score,
                "survival_round": halving.survival_round.get(expr, 0),
                "final_delta": halving.final_deltas.get(expr),
                "gain": gain_map.get(expr),
            })
        report["scoring"] = scoring
        report["variability"] = variability_summary(records)
        report["selected_features"] = [
            {"expression": cand.expression,
             "gain": gain_map.get(cand.expression),
             "score": by_expr[cand.expression].score
             if cand.expression in by_expr else None}
            for cand in selected
        ]

        timings["run_seconds"] = (timings["similarity"] + timings["clustering"]
                                  + timings["probing"] + timings["generation"])
        timings["eval_seconds"] = (timings["baseline"] + timings["reliability"]
                                   + timings["halving"]
                                   + timings["attribution"]
                                   + timings["downstream"])
        timings["total_seconds"] = (timings["run_seconds"]
                                    + timings["eval_seconds"])

        stage = "materialize"
        selected_columns = [oper.materialize(c, ds, select.all_rows(ds), train)
                            for c in selected]
    except PipelineError:
        raise
    except Exception as exc:  # noqa: BLE001 - abort policy wants the report
        fail(exc)

    return PipelineResult(report, selected, selected_columns, ds, train, valid)
