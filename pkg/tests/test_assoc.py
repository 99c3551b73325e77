import numpy as np
import pytest

from scopefe.assoc import (cramers_v, eta_squared, pearson_abs,
                           similarity_matrix)
from scopefe.tabular import CATEGORICAL, NUMERIC, RowIndexSet

from conftest import mixed_dataset, numeric_dataset
from oracles import cramers_v_oracle, eta_squared_oracle, pearson_abs_oracle


class TestPearson:
    def test_perfect_linear(self):
        assert pearson_abs([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0)

    def test_perfect_negative(self):
        assert pearson_abs([1, 2, 3], [3, 2, 1]) == pytest.approx(1.0)

    def test_hand_value(self):
        # cov -0.5, stds sqrt(1.25) and 1 => 1/sqrt(5)
        val = pearson_abs([1, 2, 3, 4], [1, -1, 1, -1])
        assert val == pytest.approx(1 / np.sqrt(5), abs=1e-12)

    def test_zero_variance(self):
        assert pearson_abs([1, 1, 1], [1, 2, 3]) == 0.0

    def test_too_few_rows(self):
        with pytest.raises(ValueError):
            pearson_abs([1.0, np.nan], [np.nan, 2.0])

    def test_pairwise_complete(self):
        x = np.array([1.0, np.nan, 2.0, 3.0, 4.0])
        y = np.array([1.0, 5.0, -1.0, 1.0, -1.0])
        assert pearson_abs(x, y) == pytest.approx(
            pearson_abs([1, 2, 3, 4], [1, -1, 1, -1]))


class TestCramersV:
    def test_perfect_association(self):
        x = np.array([0] * 10 + [1] * 10)
        y = np.array([0] * 10 + [1] * 10)
        assert cramers_v(x, y) == pytest.approx(1.0, abs=1e-12)

    def test_constant_column_is_zero(self):
        x = np.zeros(20, dtype=int)
        y = np.array([0, 1] * 10)
        assert cramers_v(x, y) == 0.0

    def test_identical_three_category(self):
        rng = np.random.default_rng(1)
        x = rng.integers(0, 3, size=300)
        assert cramers_v(x, x) == pytest.approx(1.0, abs=1e-9)
        assert cramers_v(x, x) == pytest.approx(cramers_v_oracle(x, x),
                                                abs=1e-12)

    def test_no_joint_rows(self):
        with pytest.raises(ValueError):
            cramers_v(np.array([-1, 0]), np.array([0, -1]))


class TestEtaSquared:
    def test_equal_group_means(self):
        cat = np.array([0, 0, 1, 1])
        num = np.array([1.0, 3.0, 1.0, 3.0])
        assert eta_squared(cat, num) == 0.0

    def test_constant_groups(self):
        cat = np.array([0, 0, 1, 1])
        num = np.array([2.0, 2.0, 5.0, 5.0])
        assert eta_squared(cat, num) == pytest.approx(1.0)

    def test_hand_value(self):
        cat = np.array([0, 0, 1, 1])
        num = np.array([1.0, 2.0, 3.0, 4.0])
        assert eta_squared(cat, num) == pytest.approx(0.8, abs=1e-12)

    def test_zero_total_variance(self):
        assert eta_squared(np.array([0, 1]), np.array([3.0, 3.0])) == 0.0

    def test_no_joint_rows(self):
        with pytest.raises(ValueError):
            eta_squared(np.array([-1]), np.array([1.0]))


class TestOracleAgreement:
    def test_pearson_random(self):
        rng = np.random.default_rng(7)
        for _ in range(60):
            n = int(rng.integers(2, 500))
            x = rng.normal(size=n)
            y = rng.normal(size=n)
            if rng.random() < 0.3:
                x[rng.integers(0, n, size=max(1, n // 10))] = np.nan
            if (np.isfinite(x) & np.isfinite(y)).sum() < 2:
                continue
            assert pearson_abs(x, y) == pytest.approx(
                pearson_abs_oracle(x, y), abs=1e-9)

    def test_cramers_random(self):
        rng = np.random.default_rng(8)
        for _ in range(60):
            n = int(rng.integers(2, 500))
            x = rng.integers(0, int(rng.integers(1, 9)), size=n)
            y = rng.integers(0, int(rng.integers(1, 9)), size=n)
            assert cramers_v(x, y) == pytest.approx(
                cramers_v_oracle(x, y), abs=1e-9)

    def test_eta_random(self):
        rng = np.random.default_rng(9)
        for _ in range(60):
            n = int(rng.integers(2, 500))
            cat = rng.integers(0, int(rng.integers(1, 9)), size=n)
            num = rng.normal(size=n)
            assert eta_squared(cat, num) == pytest.approx(
                eta_squared_oracle(cat, num), abs=1e-9)


class TestSimilarityMatrix:
    def test_identical_numeric_columns(self):
        rng = np.random.default_rng(3)
        from scopefe.tabular import Dataset, REGRESSION
        x = rng.normal(size=100)
        ds = Dataset.from_arrays(["a", "b"], [NUMERIC, NUMERIC], [x, x.copy()],
                                 rng.normal(size=100), REGRESSION)
        S = similarity_matrix(ds, RowIndexSet(np.arange(100)))
        assert S[0, 1] == pytest.approx(1.0)

    def test_independent_pair_is_small_and_matches_oracle(self):
        rng = np.random.default_rng(4)
        from scopefe.tabular import Dataset, REGRESSION
        n = 500
        num = rng.normal(size=n)
        cat = rng.integers(0, 4, size=n)
        ds = Dataset.from_arrays(["num", "cat"], [NUMERIC, CATEGORICAL],
                                 [num, cat], rng.normal(size=n), REGRESSION,
                                 categories={"cat": list("abcd")})
        rows = RowIndexSet(np.arange(n))
        S = similarity_matrix(ds, rows)
        assert S[0, 1] < 0.1
        assert S[0, 1] == pytest.approx(eta_squared_oracle(cat, num),
                                        abs=1e-12)

    def test_mixed_shape_and_symmetry(self):
        ds = mixed_dataset(200, seed=5)
        rows = RowIndexSet(np.arange(200))
        S = similarity_matrix(ds, rows)
        assert S.values.shape == (4, 4)
        assert np.array_equal(S.values, S.values.T)
        assert np.all(np.diag(S.values) == 1.0)

    def test_degenerate_pair_becomes_zero(self, caplog):
        from scopefe.tabular import Dataset, REGRESSION
        n = 30
        rng = np.random.default_rng(6)
        x = rng.normal(size=n)
        dead = np.full(n, np.nan)
        dead[0] = 1.0
        ds = Dataset.from_arrays(["a", "dead"], [NUMERIC, NUMERIC], [x, dead],
                                 rng.normal(size=n), REGRESSION)
        with caplog.at_level("WARNING"):
            S = similarity_matrix(ds, RowIndexSet(np.arange(n)))
        assert S[0, 1] == 0.0
        assert any("similarity" in r.message for r in caplog.records)

    def test_needs_two_features(self):
        ds = numeric_dataset(20, 1, seed=0, signal="none")
        with pytest.raises(ValueError):
            similarity_matrix(ds, RowIndexSet(np.arange(20)))

    def test_joint_row_permutation_invariance(self):
        ds = mixed_dataset(150, seed=7)
        rows = RowIndexSet(np.arange(150))
        S1 = similarity_matrix(ds, rows).values
        # permuting rows jointly = reordering storage; stats are row-order free
        perm = np.random.default_rng(0).permutation(150)
        from scopefe.tabular import Dataset, REGRESSION
        arrays = [ds.column(i).values[perm] for i in range(ds.d)]
        ds2 = Dataset.from_arrays(
            [m.name for m in ds.columns], [m.kind for m in ds.columns],
            arrays, ds.y[perm], REGRESSION,
            categories={"c1": ["p", "q", "r"], "c2": ["u", "v", "w", "z"]})
        S2 = similarity_matrix(ds2, rows).values
        assert np.allclose(S1, S2, atol=1e-12)
