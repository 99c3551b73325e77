"""Command-line interface.

Subcommands: `run` (full pipeline), `assoc` / `cluster` / `probe`
(standalone stage tools producing the same intermediates a full run
would), `sweep` (one parameter, many values), and `ablate` (the 2^3 grid
over clustering / probing / reliability).  Every output is a pure
function of (input file hash, config, seed); wall times are the only
thing that varies between identical runs.  Exit codes: 0 success,
1 stage failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import __version__, assoc, cluster, oper, probe, tabular
from .booster import BoostParams, oof_baseline
from .pipeline import PipelineConfig, PipelineError, run
from .seeding import derive_seed

log = logging.getLogger(__name__)


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)!r}")


def _sanitize(obj):
    """Replace non-finite floats so the emitted JSON stays standard."""
    if isinstance(obj, dict):
        return {k: _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


def dump_json(obj) -> str:
    return json.dumps(_sanitize(obj), indent=2, sort_keys=True,
                      default=_json_default) + "\n"


def load_config(path) -> dict:
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def build_pipeline_config(raw: dict, seed=None, workers=None,
                          clustering=None) -> PipelineConfig:
    clust = raw.get("clustering", {})
    prob = raw.get("probing", {})
    rel = raw.get("reliability", {})
    sel = raw.get("selection", {})
    boost = raw.get("booster", {})
    params = BoostParams(
        rounds=boost.get("rounds", 100),
        learning_rate=boost.get("learning_rate", 0.1),
        max_depth=boost.get("max_depth", 3),
        min_leaf=boost.get("min_leaf", 20),
        bins=boost.get("bins", 32),
        early_stop_patience=boost.get("early_stop_patience", 5),
    )
    probe_cfg = probe.ProbeConfig(
        r_probe=prob.get("r_probe", 0.1),
        n_cand=prob.get("n_cand", 32),
        k=prob.get("k", 8),
        n_top=prob.get("n_top"),
        min_rows=prob.get("min_rows", 500),
    )
    cfg = PipelineConfig(
        mode=clustering if clustering else clust.get("mode", "soft"),
        tau=clust.get("tau", 16),
        m=clust.get("m", 2.0),
        fcm_tol=clust.get("tol", 1e-5),
        fcm_max_iter=clust.get("max_iter", 300),
        probing=prob.get("enabled", True),
        probe=probe_cfg,
        reliability=rel.get("enabled", True),
        n_sub=rel.get("n_sub", 3),
        lam=rel.get("lambda", 0.2),
        r_rel=rel.get("r_rel", 0.8),
        keep_ratio=sel.get("keep_ratio", 0.5),
        top_k=sel.get("top_k", 10),
        blocks_log2=sel.get("blocks_log2", 3),
        folds=boost.get("folds", 5),
        valid_ratio=raw.get("valid_ratio", 0.2),
        baseline_per_round=sel.get("baseline_per_round", False),
        booster=params,
        seed=seed if seed is not None else raw.get("seed", 0),
        workers=workers if workers is not None else raw.get("workers", 1),
    )
    return cfg


def config_snapshot(raw: dict, cfg: PipelineConfig) -> dict:
    return {
        "target": raw.get("target"),
        "task": raw.get("task"),
        "valid_ratio": cfg.valid_ratio,
        "categorical_threshold": raw.get("categorical_threshold", 20),
        "columns": raw.get("columns", {}),
        "clustering": {"mode": cfg.mode, "tau": cfg.tau, "m": cfg.m,
                       "tol": cfg.fcm_tol, "max_iter": cfg.fcm_max_iter},
        "probing": {"enabled": cfg.probing, "r_probe": cfg.probe.r_probe,
                    "n_cand": cfg.probe.n_cand, "k": cfg.probe.k,
                    "n_top": cfg.probe.n_top,
                    "min_rows": cfg.probe.min_rows},
        "reliability": {"enabled": cfg.reliability, "n_sub": cfg.n_sub,
                        "lambda": cfg.lam, "r_rel": cfg.r_rel},
        "selection": {"keep_ratio": cfg.keep_ratio, "top_k": cfg.top_k,
                      "blocks_log2": cfg.blocks_log2,
                      "baseline_per_round": cfg.baseline_per_round},
        "booster": {"rounds": cfg.booster.rounds,
                    "learning_rate": cfg.booster.learning_rate,
                    "max_depth": cfg.booster.max_depth,
                    "min_leaf": cfg.booster.min_leaf,
                    "bins": cfg.booster.bins,
                    "early_stop_patience": cfg.booster.early_stop_patience,
                    "folds": cfg.folds},
        "seed": cfg.seed,
    }


def load_dataset(raw: dict, data_path) -> tabular.Dataset:
    target = raw.get("target")
    if not target:
        raise ValueError("config key 'target' is required")
    task = raw.get("task", tabular.REGRESSION)
    overrides = raw.get("columns", {})
    threshold = raw.get("categorical_threshold", 20)
    return tabular.load_csv(data_path, target, task, overrides, threshold)


def _format_cell(col: tabular.Column, i: int) -> str:
    if col.kind == tabular.NUMERIC:
        v = col.values[i]
        return "" if not np.isfinite(v) else repr(float(v))
    code = int(col.values[i])
    return "" if code < 0 else col.categories[code]


def write_engineered_csv(path, ds: tabular.Dataset, selected, selected_columns):
    header = ds.feature_names + [ds.target_name]
    header += [c.expression for c in selected]
    cols = [ds.column(i) for i in range(ds.d)]
    if ds.task == tabular.BINARY and ds.target_levels:
        target_cells = [ds.target_levels[int(v)] for v in ds.y]
    else:
        target_cells = [repr(float(v)) for v in ds.y]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i in range(ds.n):
            row = [_format_cell(c, i) for c in cols]
            row.append(target_cells[i])
            row += [_format_cell(c, i) for c in selected_columns]
            writer.writerow(row)


def _sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _split_for(ds, cfg):
    return tabular.split(ds, cfg.valid_ratio, ds.task == tabular.BINARY,
                         derive_seed(cfg.seed, "split"))


def cmd_run(args) -> int:
    raw = load_config(args.config)
    cfg = build_pipeline_config(raw, args.seed, args.workers, args.clustering)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ds = load_dataset(raw, args.data)
    manifest = {
        "tool": "scopefe",
        "version": __version__,
        "seed": cfg.seed,
        "data_path": str(args.data),
        "data_sha256": _sha256_file(args.data),
        "config": config_snapshot(raw, cfg),
        "outputs": {"engineered_csv": "engineered.csv",
                    "report_json": "report.json"},
    }
    try:
        result = run(ds, cfg)
    except PipelineError as exc:
        (out / "report.json").write_text(dump_json(exc.report), encoding="utf-8")
        (out / "manifest.json").write_text(dump_json(manifest), encoding="utf-8")
        log.error("pipeline failed in stage %s: %s", exc.stage, exc)
        return 1
    write_engineered_csv(out / "engineered.csv", ds, result.selected,
                         result.selected_columns)
    (out / "report.json").write_text(dump_json(result.report), encoding="utf-8")
    (out / "manifest.json").write_text(dump_json(manifest), encoding="utf-8")
    return 0


def cmd_assoc(args) -> int:
    raw = load_config(args.config)
    cfg = build_pipeline_config(raw, args.seed, args.workers, args.clustering)
    ds = load_dataset(raw, args.data)
    train, _ = _split_for(ds, cfg)
    S = assoc.similarity_matrix(ds, train)
    lines = [",".join(S.names)]
    for i in range(S.d):
        lines.append(",".join(repr(float(v)) for v in S.values[i]))
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_cluster(args) -> int:
    raw = load_config(args.config)
    cfg = build_pipeline_config(raw, args.seed, args.workers, args.clustering)
    if cfg.mode == "off":
        raise ValueError("cluster subcommand needs clustering mode hard or soft")
    ds = load_dataset(raw, args.data)
    train, _ = _split_for(ds, cfg)
    S = assoc.similarity_matrix(ds, train)
    from .pipeline import _cluster_assignment
    _, info = _cluster_assignment(ds, S, cfg)
    text = dump_json(info)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_probe(args) -> int:
    raw = load_config(args.config)
    cfg = build_pipeline_config(raw, args.seed, args.workers, args.clustering)
    ds = load_dataset(raw, args.data)
    train, valid = _split_for(ds, cfg)
    ops = oper.default_operator_set()
    selected, scores = probe.operator_probing(ds, train, valid, ops, cfg.probe,
                                              cfg.booster, cfg.folds, cfg.seed,
                                              cfg.workers)
    payload = {
        "selected": [op.name for op in selected],
        "operators": [{"name": s.name, "score": s.score,
                       "top_deltas": sorted(s.deltas, reverse=True)[:cfg.probe.k],
                       "selected": s.selected} for s in scores],
    }
    text = dump_json(payload)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def _metric_of(report) -> float:
    metric = report.get("validation_metric") or {}
    return metric.get("value")


def _sweep_row(value, report) -> list:
    timings = report.get("timings", {})
    counts = report.get("counts", {})
    return [value,
            round(timings.get("run_seconds", 0.0), 3),
            round(timings.get("eval_seconds", 0.0), 3),
            round(timings.get("total_seconds", 0.0), 3),
            counts.get("generated_total"),
            counts.get("selected"),
            _metric_of(report)]


def cmd_sweep(args) -> int:
    raw = load_config(args.config)
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not values:
        raise ValueError("sweep needs a non-empty value list")
    ds = load_dataset(raw, args.data)
    rows = [["value", "run_seconds", "eval_seconds", "total_seconds",
             "generated", "selected", "metric"]]
    for text in values:
        cfg = build_pipeline_config(raw, args.seed, args.workers,
                                    args.clustering)
        if args.param == "tau":
            cfg.tau = int(text)
            value = int(text)
        elif args.param == "lambda":
            cfg.lam = float(text)
            cfg.reliability = True
            value = float(text)
        else:  # nsub
            cfg.n_sub = int(text)
            cfg.reliability = True
            value = int(text)
        result = run(ds, cfg)
        rows.append(_sweep_row(value, result.report))
    text = "\n".join(",".join(str(c) for c in row) for row in rows) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


ABLATION_GRID = [(s, o, r) for s in (False, True) for o in (False, True)
                 for r in (False, True)]


def cmd_ablate(args) -> int:
    raw = load_config(args.config)
    ds = load_dataset(raw, args.data)
    rows = [["clustering", "probing", "reliability", "run_seconds",
             "eval_seconds", "metric", "generated", "selected"]]
    base_cfg = build_pipeline_config(raw, args.seed, args.workers,
                                     args.clustering)
    cluster_mode = base_cfg.mode if base_cfg.mode != "off" else "soft"
    for s, o, r in ABLATION_GRID:
        cfg = build_pipeline_config(raw, args.seed, args.workers, None)
        cfg.mode = cluster_mode if s else "off"
        cfg.probing = o
        cfg.reliability = r
        result = run(ds, cfg)
        report = result.report
        timings = report["timings"]
        counts = report["counts"]
        rows.append([cfg.mode if s else "off", o, r,
                     round(timings["run_seconds"], 3),
                     round(timings["eval_seconds"], 3),
                     _metric_of(report),
                     counts.get("generated_total"),
                     counts.get("selected")])
    text = "\n".join(",".join(str(c) for c in row) for row in rows) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scopefe",
        description="Search-space-controlled feature engineering")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, need_out=False):
        p.add_argument("--config", required=True, help="TOML config file")
        p.add_argument("--data", required=True, help="input CSV")
        if need_out:
            p.add_argument("--out", required=True, help="output directory")
        else:
            p.add_argument("--out", help="output file (default stdout)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--workers", type=int,
                       help="cap intra-stage parallelism")
        p.add_argument("--clustering", choices=["off", "hard", "soft"],
                       help="override the clustering mode")

    p_run = sub.add_parser("run", help="run the full pipeline")
    common(p_run, need_out=True)
    p_run.set_defaults(func=cmd_run)

    p_assoc = sub.add_parser("assoc", help="emit the similarity matrix as CSV")
    common(p_assoc)
    p_assoc.set_defaults(func=cmd_assoc)

    p_cluster = sub.add_parser("cluster", help="emit cluster assignments")
    common(p_cluster)
    p_cluster.set_defaults(func=cmd_cluster)

    p_probe = sub.add_parser("probe", help="emit operator probing scores")
    common(p_probe)
    p_probe.set_defaults(func=cmd_probe)

    p_sweep = sub.add_parser("sweep", help="sweep one parameter")
    common(p_sweep)
    p_sweep.add_argument("--param", required=True,
                         choices=["tau", "lambda", "nsub"])
    p_sweep.add_argument("--values", required=True,
                         help="comma-separated values")
    p_sweep.set_defaults(func=cmd_sweep)

    p_ablate = sub.add_parser("ablate", help="run the 8-cell ablation grid")
    common(p_ablate)
    p_ablate.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("SCOPEFE_LOG", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        return args.func(args)
    except PipelineError as exc:
        log.error("%s", exc)
        return 1
    except (ValueError, OSError) as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
