import math

import numpy as np
import pytest

from scopefe.cluster import HardAssignment, SoftAssignment, pair_allowed
from scopefe.oper import (count_unconstrained, default_operator_set,
                          enumerate_candidates, make_candidate, materialize,
                          operator_by_name)
from scopefe.tabular import (CATEGORICAL, NUMERIC, REGRESSION, ColumnMeta,
                             Dataset, RowIndexSet)

from conftest import mixed_dataset


def metas(kinds):
    return [ColumnMeta(f"x{i + 1}", k, i) for i, k in enumerate(kinds)]


def tiny_ds(arrays, kinds, names=None, categories=None):
    names = names or [f"x{i + 1}" for i in range(len(arrays))]
    n = len(arrays[0])
    return Dataset.from_arrays(names, kinds, arrays, np.zeros(n), REGRESSION,
                               categories=categories)


class TestDefaultOperatorSet:
    def test_roster_size(self):
        ops = default_operator_set()
        assert len(ops) == 22
        assert sum(1 for op in ops if op.arity == 1) == 7

    def test_commutativity_flags(self):
        assert operator_by_name("mul").commutative
        assert not operator_by_name("sub").commutative
        assert operator_by_name("add").commutative
        assert operator_by_name("min").commutative
        assert operator_by_name("max").commutative
        assert not operator_by_name("div").commutative

    def test_group_by_slots(self):
        op = operator_by_name("GroupByThenMean")
        assert op.slots == (CATEGORICAL, NUMERIC)

    def test_names_unique(self):
        names = [op.name for op in default_operator_set()]
        assert len(names) == len(set(names))


class TestEnumerate:
    def test_commutative_counts(self):
        feats = metas([NUMERIC] * 6)
        mul = [operator_by_name("mul")]
        cands = enumerate_candidates(feats, mul)
        assert len(cands) == 15  # C(6, 2)

    def test_cluster_constraint(self):
        feats = metas([NUMERIC] * 6)
        mul = [operator_by_name("mul")]
        assign = HardAssignment(np.array([0, 0, 0, 1, 1, 1]), 2)
        cands = enumerate_candidates(feats, mul, assign)
        assert len(cands) == 6  # 2 * C(3, 2)
        unconstrained = enumerate_candidates(feats, mul)
        want = [c for c in unconstrained
                if pair_allowed(assign, c.operands[0], c.operands[1])]
        assert [c.expression for c in cands] == [c.expression for c in want]

    def test_ordered_pairs_for_noncommutative(self):
        feats = metas([NUMERIC] * 3)
        sub = [operator_by_name("sub")]
        cands = enumerate_candidates(feats, sub)
        assert len(cands) == 6

    def test_unary_ignores_clustering(self):
        feats = metas([NUMERIC] * 4)
        ops = [operator_by_name("abs")]
        assign = HardAssignment(np.array([0, 1, 2, 3]), 4)
        assert len(enumerate_candidates(feats, ops, assign)) == 4

    def test_single_cluster_equals_unconstrained(self):
        feats = metas([NUMERIC] * 5 + [CATEGORICAL] * 2)
        ops = default_operator_set()
        assign = HardAssignment(np.zeros(7, dtype=int), 1)
        a = [c.expression for c in enumerate_candidates(feats, ops, assign)]
        b = [c.expression for c in enumerate_candidates(feats, ops)]
        assert a == b

    def test_constrained_never_exceeds_unconstrained(self):
        rng = np.random.default_rng(0)
        feats = metas([NUMERIC] * 6 + [CATEGORICAL] * 3)
        ops = default_operator_set()
        for trial in range(10):
            K = int(rng.integers(1, 5))
            sets = [tuple(sorted(set(rng.integers(0, K, size=2).tolist())))
                    for _ in range(9)]
            assign = SoftAssignment(sets, K, K / 10)
            a = enumerate_candidates(feats, ops, assign)
            b = enumerate_candidates(feats, ops)
            assert len(a) <= len(b)

    def test_balanced_cluster_count_law(self):
        # K clusters of size tau: commutative ops give K*C(tau,2) pairs,
        # ordered ops give K*tau*(tau-1)
        for tau, K in [(3, 4), (4, 2), (5, 3)]:
            d = tau * K
            feats = metas([NUMERIC] * d)
            labels = np.repeat(np.arange(K), tau)
            assign = HardAssignment(labels, K)
            comm = enumerate_candidates(feats, [operator_by_name("mul")],
                                        assign)
            assert len(comm) == K * math.comb(tau, 2)
            ordered = enumerate_candidates(feats, [operator_by_name("sub")],
                                           assign)
            assert len(ordered) == K * tau * (tau - 1)

    def test_count_unconstrained_matches_enumeration(self):
        feats = metas([NUMERIC] * 5 + [CATEGORICAL] * 3)
        ops = default_operator_set()
        counts = count_unconstrained(feats, ops)
        cands = enumerate_candidates(feats, ops)
        assert counts["total"] == len(cands)
        assert counts["binary"] == sum(1 for c in cands if c.op.arity == 2)

    def test_canonical_order_for_commutative(self):
        feats = metas([NUMERIC] * 3)
        cand = make_candidate(operator_by_name("mul"), (2, 0), feats)
        assert cand.operands == (0, 2)
        assert cand.expression == "mul(x1,x3)"


class TestMaterialize:
    def all_rows(self, n):
        return RowIndexSet(np.arange(n))

    def test_mul(self):
        ds = tiny_ds([np.array([1.0, 2, 3]), np.array([4.0, 5, 6])],
                     [NUMERIC, NUMERIC])
        cand = make_candidate(operator_by_name("mul"), (0, 1), ds.columns)
        col = materialize(cand, ds, self.all_rows(3), self.all_rows(3))
        assert np.allclose(col.values, [4, 10, 18])

    def test_div_by_zero_is_missing(self):
        ds = tiny_ds([np.array([1.0, 2.0]), np.array([0.0, 4.0])],
                     [NUMERIC, NUMERIC])
        cand = make_candidate(operator_by_name("div"), (0, 1), ds.columns)
        col = materialize(cand, ds, self.all_rows(2), self.all_rows(2))
        assert np.isnan(col.values[0]) and col.values[1] == 0.5

    def test_group_mean(self):
        ds = tiny_ds([np.array([0, 0, 1]), np.array([1.0, 3.0, 10.0])],
                     [CATEGORICAL, NUMERIC], categories={"x1": ["A", "B"]})
        cand = make_candidate(operator_by_name("GroupByThenMean"), (0, 1),
                              ds.columns)
        col = materialize(cand, ds, self.all_rows(3), self.all_rows(3))
        assert np.allclose(col.values, [2.0, 2.0, 10.0])

    def test_log_and_sqrt_domains(self):
        ds = tiny_ds([np.array([-4.0, 0.0, 9.0])], [NUMERIC])
        log_c = materialize(make_candidate(operator_by_name("log"), (0,),
                                           ds.columns),
                            ds, self.all_rows(3), self.all_rows(3))
        assert np.allclose(log_c.values,
                           np.log(np.abs([-4.0, 0.0, 9.0]) + 1e-10))
        sqrt_c = materialize(make_candidate(operator_by_name("sqrt"), (0,),
                                            ds.columns),
                             ds, self.all_rows(3), self.all_rows(3))
        assert np.allclose(sqrt_c.values, [2.0, 0.0, 3.0])

    def test_freq_numeric_from_stats_rows(self):
        vals = np.array([1.0, 1.0, 2.0, 5.0])
        ds = tiny_ds([vals], [NUMERIC])
        cand = make_candidate(operator_by_name("freq"), (0,), ds.columns)
        stats = RowIndexSet(np.array([0, 1, 2]))
        col = materialize(cand, ds, self.all_rows(4), stats)
        # value 5.0 never occurs in the stats rows
        assert col.values[0] == 2.0 and col.values[2] == 1.0
        assert np.isnan(col.values[3])

    def test_freq_categorical(self):
        codes = np.array([0, 0, 1, 2])
        ds = tiny_ds([codes], [CATEGORICAL], categories={"x1": list("abc")})
        cand = make_candidate(operator_by_name("freq"), (0,), ds.columns)
        stats = RowIndexSet(np.array([0, 1, 2]))
        col = materialize(cand, ds, self.all_rows(4), stats)
        assert col.values[0] == 2.0 and col.values[2] == 1.0
        assert np.isnan(col.values[3])

    def test_unseen_group_key_is_missing(self):
        key = np.array([0, 0, 1, 2])
        val = np.array([1.0, 2.0, 3.0, 4.0])
        ds = tiny_ds([key, val], [CATEGORICAL, NUMERIC],
                     categories={"x1": list("abc")})
        cand = make_candidate(operator_by_name("GroupByThenMax"), (0, 1),
                              ds.columns)
        stats = RowIndexSet(np.array([0, 1, 2]))
        col = materialize(cand, ds, self.all_rows(4), stats)
        assert col.values[0] == 2.0 and col.values[2] == 3.0
        assert np.isnan(col.values[3])

    def test_group_std_and_median(self):
        key = np.array([0, 0, 0, 1])
        val = np.array([1.0, 2.0, 4.0, 7.0])
        ds = tiny_ds([key, val], [CATEGORICAL, NUMERIC],
                     categories={"x1": ["A", "B"]})
        std_c = materialize(make_candidate(operator_by_name("GroupByThenStd"),
                                           (0, 1), ds.columns),
                            ds, self.all_rows(4), self.all_rows(4))
        assert std_c.values[0] == pytest.approx(np.std([1, 2, 4], ddof=1))
        assert np.isnan(std_c.values[3])  # singleton group has no spread
        med_c = materialize(
            make_candidate(operator_by_name("GroupByThenMedian"), (0, 1),
                           ds.columns),
            ds, self.all_rows(4), self.all_rows(4))
        assert med_c.values[0] == 2.0 and med_c.values[3] == 7.0

    def test_group_rank_reference(self):
        key = np.zeros(4, dtype=int)
        val = np.array([1.0, 2.0, 2.0, 3.0])
        ds = tiny_ds([key, val], [CATEGORICAL, NUMERIC],
                     categories={"x1": ["A"]})
        cand = make_candidate(operator_by_name("GroupByThenRank"), (0, 1),
                              ds.columns)
        col = materialize(cand, ds, self.all_rows(4), self.all_rows(4))
        # average ranks of [1, 2, 2, 3]
        assert np.allclose(col.values, [1.0, 2.5, 2.5, 4.0])

    def test_combine_and_pair_freq(self):
        a = np.array([0, 0, 1, 1])
        b = np.array([0, 1, 0, 0])
        ds = tiny_ds([a, b], [CATEGORICAL, CATEGORICAL],
                     categories={"x1": ["A", "B"], "x2": ["u", "v"]})
        comb = materialize(make_candidate(operator_by_name("Combine"), (0, 1),
                                          ds.columns),
                           ds, self.all_rows(4), self.all_rows(4))
        assert comb.kind == CATEGORICAL
        assert comb.categories == ["A&u", "A&v", "B&u"]
        assert comb.values.tolist() == [0, 1, 2, 2]
        freq = materialize(
            make_candidate(operator_by_name("CombineThenFreq"), (0, 1),
                           ds.columns),
            ds, self.all_rows(4), self.all_rows(4))
        assert freq.values.tolist() == [1.0, 1.0, 2.0, 2.0]

    def test_nunique(self):
        a = np.array([0, 0, 0, 1])
        b = np.array([0, 1, 1, 0])
        ds = tiny_ds([a, b], [CATEGORICAL, CATEGORICAL],
                     categories={"x1": ["A", "B"], "x2": ["u", "v"]})
        col = materialize(
            make_candidate(operator_by_name("GroupByThenNUnique"), (0, 1),
                           ds.columns),
            ds, self.all_rows(4), self.all_rows(4))
        assert col.values.tolist() == [2.0, 2.0, 2.0, 1.0]

    def test_training_stats_ignore_other_rows(self):
        # changing rows outside stats_rows must not change applied statistics
        key = np.array([0, 1, 0, 1])
        val1 = np.array([1.0, 2.0, 5.0, 100.0])
        val2 = np.array([1.0, 2.0, -9.0, 3.0])
        kinds = [CATEGORICAL, NUMERIC]
        cats = {"x1": ["A", "B"]}
        ds1 = tiny_ds([key, val1], kinds, categories=cats)
        ds2 = tiny_ds([key, val2], kinds, categories=cats)
        stats = RowIndexSet(np.array([0, 1]))
        rows = RowIndexSet(np.array([0, 1]))
        cand = make_candidate(operator_by_name("GroupByThenMean"), (0, 1),
                              ds1.columns)
        c1 = materialize(cand, ds1, rows, stats)
        c2 = materialize(cand, ds2, rows, stats)
        assert np.array_equal(c1.values, c2.values)

    def test_kind_mismatch_rejected(self):
        ds = tiny_ds([np.array([1.0, 2.0])], [NUMERIC])
        cand = make_candidate(operator_by_name("abs"), (0,), ds.columns)
        bad = cand.__class__(operator_by_name("GroupByThenMean"),
                             (0, 0), ("x1", "x1"))
        with pytest.raises(ValueError, match="slot"):
            materialize(bad, ds, self.all_rows(2), self.all_rows(2))

    def test_sigmoid_round_square(self):
        x = np.array([-700.0, 0.0, 1.5])
        ds = tiny_ds([x], [NUMERIC])
        sig = materialize(make_candidate(operator_by_name("sigmoid"), (0,),
                                         ds.columns),
                          ds, self.all_rows(3), self.all_rows(3))
        assert sig.values[0] == pytest.approx(0.0, abs=1e-12)
        assert sig.values[1] == 0.5
        rnd = materialize(make_candidate(operator_by_name("round"), (0,),
                                         ds.columns),
                          ds, self.all_rows(3), self.all_rows(3))
        assert rnd.values[2] == 2.0
        sq = materialize(make_candidate(operator_by_name("square"), (0,),
                                        ds.columns),
                         ds, self.all_rows(3), self.all_rows(3))
        assert sq.values[2] == 2.25

    def test_missing_propagates(self):
        x = np.array([np.nan, 2.0])
        y = np.array([1.0, np.nan])
        ds = tiny_ds([x, y], [NUMERIC, NUMERIC])
        for name in ("add", "sub", "mul", "div", "min", "max"):
            cand = make_candidate(operator_by_name(name), (0, 1), ds.columns)
            col = materialize(cand, ds, self.all_rows(2), self.all_rows(2))
            assert np.isnan(col.values).all()


def test_candidate_counting_on_mixed_data():
    ds = mixed_dataset(50, seed=1)
    ops = default_operator_set()
    counts = count_unconstrained(ds.columns, ops)
    # 2 numeric, 2 categorical: unary 6*2 + freq*4; binary numeric comm 4*1,
    # ordered 2*2; group-by 6*(2*2); cat-cat ordered 3*2
    assert counts["unary"] == 6 * 2 + 4
    assert counts["binary"] == 4 * 1 + 2 * 2 + 6 * 4 + 3 * 2
