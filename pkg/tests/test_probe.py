import numpy as np
import pytest

from scopefe import tabular
from scopefe.booster import BoostParams, oof_baseline
from scopefe.oper import default_operator_set, operator_by_name
from scopefe.probe import (ProbeConfig, operator_probing, topk_mean,
                           type_aware_sample)
from scopefe.tabular import CATEGORICAL, NUMERIC, ColumnMeta

from conftest import mixed_dataset, numeric_dataset

FAST = BoostParams(rounds=25, early_stop_patience=2, min_leaf=10)


def metas(kinds):
    return [ColumnMeta(f"x{i + 1}", k, i) for i, k in enumerate(kinds)]


class TestTopkMean:
    def test_hand_value(self):
        assert topk_mean([0.5, 0.2, -0.1, 0.3], 2) == pytest.approx(0.4)

    def test_fewer_than_k(self):
        assert topk_mean([0.5, 0.1], 8) == pytest.approx(0.3)

    def test_empty_is_neg_inf(self):
        assert topk_mean([], 4) == float("-inf")

    def test_monotone_when_adding_small_values(self):
        rng = np.random.default_rng(2)
        for _ in range(30):
            deltas = sorted(rng.normal(size=10).tolist(), reverse=True)
            k = int(rng.integers(1, 6))
            base = topk_mean(deltas, k)
            smaller = deltas + [min(deltas[:k]) - rng.uniform(0.1, 1.0)]
            assert topk_mean(smaller, k) <= base + 1e-12


class TestTypeAwareSample:
    def test_sample_size(self):
        feats = metas([NUMERIC] * 5)
        out = type_aware_sample(operator_by_name("abs"), feats, 3, seed=1)
        assert len(out) == 3
        assert len({c.expression for c in out}) == 3

    def test_empty_universe(self):
        feats = metas([CATEGORICAL] * 3)
        out = type_aware_sample(operator_by_name("mul"), feats, 4, seed=1)
        assert out == []

    def test_exhausts_small_universe(self):
        feats = metas([NUMERIC] * 4)
        op = operator_by_name("mul")
        out = type_aware_sample(op, feats, 100, seed=1)
        assert len(out) == 6  # C(4, 2)

    def test_deterministic(self):
        feats = metas([NUMERIC] * 12)
        op = operator_by_name("mul")
        a = type_aware_sample(op, feats, 10, seed=3)
        b = type_aware_sample(op, feats, 10, seed=3)
        assert [c.expression for c in a] == [c.expression for c in b]


class TestOperatorProbing:
    def test_n_top_equal_p_keeps_roster_order(self):
        ds = mixed_dataset(300, seed=1)
        train, valid = tabular.split(ds, 0.25, False, 3)
        ops = default_operator_set()
        cfg = ProbeConfig(r_probe=1.0, n_cand=4, k=2, n_top=len(ops),
                          min_rows=1)
        selected, scores = operator_probing(ds, train, valid, ops, cfg, FAST,
                                            folds=3, seed=5)
        assert [op.name for op in selected] == [op.name for op in ops]

    def test_empty_universe_operator_never_selected(self):
        ds = numeric_dataset(300, 5, seed=2)
        train, valid = tabular.split(ds, 0.25, False, 3)
        ops = default_operator_set()
        cfg = ProbeConfig(r_probe=1.0, n_cand=4, k=2, n_top=len(ops),
                          min_rows=1)
        selected, scores = operator_probing(ds, train, valid, ops, cfg, FAST,
                                            folds=3, seed=5)
        selected_names = {op.name for op in selected}
        assert "GroupByThenMean" not in selected_names
        assert "Combine" not in selected_names
        by_name = {s.name: s for s in scores}
        assert by_name["GroupByThenMean"].score == float("-inf")
        # |O*| = min(N_top, operators with at least one valid candidate)
        assert len(selected) == 13

    def test_planted_product_signal(self):
        hits = 0
        for seed in range(5):
            ds = numeric_dataset(2000, 10, seed=300 + seed, signal="product")
            train, valid = tabular.split(ds, 0.2, False, seed)
            ops = default_operator_set()
            cfg = ProbeConfig()
            selected, _ = operator_probing(ds, train, valid, ops, cfg, FAST,
                                           folds=3, seed=seed)
            hits += "mul" in {op.name for op in selected}
        assert hits >= 4

    def test_schedule_independence(self):
        ds = numeric_dataset(400, 6, seed=3)
        train, valid = tabular.split(ds, 0.25, False, 3)
        ops = default_operator_set()
        cfg = ProbeConfig(r_probe=1.0, n_cand=6, k=3, min_rows=1)
        _, seq = operator_probing(ds, train, valid, ops, cfg, FAST,
                                  folds=3, seed=9, workers=1)
        _, par = operator_probing(ds, train, valid, ops, cfg, FAST,
                                  folds=3, seed=9, workers=4)
        for a, b in zip(seq, par):
            assert a.name == b.name
            assert a.deltas == b.deltas
            assert a.score == b.score

    def test_config_validation(self):
        with pytest.raises(ValueError):
            ProbeConfig(r_probe=0.0).validate(22)
        with pytest.raises(ValueError):
            ProbeConfig(k=40, n_cand=32).validate(22)
        with pytest.raises(ValueError):
            ProbeConfig(n_top=0).validate(22)

    def test_default_n_top_is_half(self):
        assert ProbeConfig().effective_n_top(22) == 11
        assert ProbeConfig().effective_n_top(5) == 3
