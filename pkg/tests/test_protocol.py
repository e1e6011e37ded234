import numpy as np
import pytest

from aidistress.protocol import (
    apply_preprocessing,
    compute_class_weights,
    fit_window_stats,
    make_split_plan,
    select_hyperparameters,
    stratified_folds,
)


class TestSplitPlan:
    def test_default_yields_14_windows(self):
        plan = make_split_plan(2023, 2009, 2022)
        assert len(plan) == 14
        assert plan.windows[0] == (2009, 2022)
        assert plan.windows[-1] == (2022, 2022)

    def test_single_window(self):
        plan = make_split_plan(2023, 2022, 2022)
        assert len(plan) == 1

    def test_inverted_range_raises(self):
        with pytest.raises(ValueError):
            make_split_plan(2023, 2024, 2022)
        with pytest.raises(ValueError):
            make_split_plan(2022, 2009, 2022)


class TestWindowStats:
    def test_percentiles_linear_interpolation(self):
        x = np.arange(1.0, 1001.0).reshape(-1, 1)
        stats = fit_window_stats(x)
        assert stats.p1[0] == pytest.approx(10.99)
        assert stats.p99[0] == pytest.approx(990.01)

    def test_against_sorted_interpolation_oracle(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(137, 1))
        stats = fit_window_stats(x)
        s = np.sort(x[:, 0])
        for q, got in ((0.01, stats.p1[0]), (0.99, stats.p99[0])):
            pos = q * (len(s) - 1)
            lo = int(np.floor(pos))
            frac = pos - lo
            expect = s[lo] * (1 - frac) + s[min(lo + 1, len(s) - 1)] * frac
            assert got == pytest.approx(expect, abs=1e-12)

    def test_constant_feature(self):
        x = np.full((10, 1), 3.5)
        stats = fit_window_stats(x)
        assert stats.p1[0] == stats.p99[0] == stats.mean[0] == 3.5
        assert stats.sd[0] == 0.0
        assert stats.degenerate[0]

    def test_too_few_rows(self):
        with pytest.raises(ValueError):
            fit_window_stats(np.ones((1, 2)))


class TestApplyPreprocessing:
    def test_mean_maps_to_zero(self):
        rng = np.random.default_rng(1)
        X = rng.normal(2.0, 3.0, size=(200, 2))
        stats = fit_window_stats(X)
        z = apply_preprocessing(stats.mean.reshape(1, -1), stats)
        assert np.abs(z).max() <= 1e-12

    def test_clamp_before_zscore(self):
        X = np.concatenate([np.arange(100.0), [1e9]]).reshape(-1, 1)
        stats = fit_window_stats(X[:100])
        z_huge = apply_preprocessing(np.array([[1e9]]), stats)
        z_p99 = apply_preprocessing(stats.p99.reshape(1, -1), stats)
        assert z_huge[0, 0] == z_p99[0, 0]

    def test_degenerate_feature_outputs_zero(self):
        X = np.column_stack([np.arange(10.0), np.full(10, 7.0)])
        stats = fit_window_stats(X)
        z = apply_preprocessing(np.array([[3.0, 100.0]]), stats)
        assert z[0, 1] == 0.0

    def test_matches_straight_line_oracle(self):
        rng = np.random.default_rng(2)
        X = rng.normal(size=(300, 4))
        Xt = rng.normal(size=(50, 4))
        stats = fit_window_stats(X)
        got = apply_preprocessing(Xt, stats)
        # independent two-pass reference
        p1 = np.quantile(X, 0.01, axis=0)
        p99 = np.quantile(X, 0.99, axis=0)
        W = np.minimum(np.maximum(X, p1), p99)
        mu, sd = W.mean(axis=0), W.std(axis=0, ddof=1)
        ref = (np.minimum(np.maximum(Xt, p1), p99) - mu) / sd
        assert np.abs(got - ref).max() <= 1e-12

    def test_schema_mismatch(self):
        stats = fit_window_stats(np.ones((5, 2)) * np.arange(5).reshape(-1, 1))
        with pytest.raises(ValueError):
            apply_preprocessing(np.ones((3, 3)), stats)


class TestClassWeights:
    def test_balanced(self):
        y = np.array([1] * 50 + [0] * 50)
        cw = compute_class_weights(y)
        assert cw.w1 == cw.w0 == 1.0

    def test_panel_scale_arithmetic(self):
        y = np.array([1] * 1099 + [0] * (32593 - 1099))
        cw = compute_class_weights(y)
        assert cw.w1 == pytest.approx(32593 / (2 * 1099))
        assert cw.w1 == pytest.approx(14.8286, abs=2e-4)
        assert cw.w0 == pytest.approx(0.51745, abs=1e-5)

    def test_small_exact_fractions(self):
        y = np.array([1, 0, 0, 0])
        cw = compute_class_weights(y)
        assert cw.w1 == 2.0
        assert cw.w0 == pytest.approx(2.0 / 3.0)

    def test_mass_preservation(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            n1 = int(rng.integers(1, 40))
            n0 = int(rng.integers(1, 400))
            y = np.array([1] * n1 + [0] * n0)
            cw = compute_class_weights(y)
            assert cw.w1 * n1 + cw.w0 * n0 == pytest.approx(n1 + n0, rel=1e-9)

    def test_single_class_raises(self):
        with pytest.raises(ValueError):
            compute_class_weights(np.zeros(10))


class TestStratifiedFolds:
    def test_balanced_case_exact(self):
        y = np.array([1] * 50 + [0] * 50)
        folds = stratified_folds(y, 10, seed=0)
        for f in range(10):
            assert (y[folds == f] == 1).sum() == 5

    def test_positive_counts_differ_at_most_one(self):
        rng = np.random.default_rng(4)
        y = (rng.uniform(size=233) < 0.13).astype(int)
        folds = stratified_folds(y, 10, seed=1)
        counts = [(y[folds == f] == 1).sum() for f in range(10)]
        assert max(counts) - min(counts) <= 1


class TestSelectHyperparameters:
    def test_singleton_grid(self):
        rng = np.random.default_rng(5)
        X = rng.normal(size=(120, 3))
        y = (X[:, 0] > 0.8).astype(int)
        cfg, table = select_hyperparameters(X, y, "logit", [{"l2": 1.0}], k=5, seed=0)
        assert cfg == {"l2": 1.0}
        assert len(table) == 1

    def test_planted_signal_prefers_depth_two(self):
        # XOR-style interaction: a depth-1 stump cannot see it
        rng = np.random.default_rng(6)
        X = rng.normal(size=(400, 3))
        y = ((X[:, 0] > 0) ^ (X[:, 1] > 0)).astype(int)
        grid = [{"max_depth": 1, "min_leaf_weight": 5.0},
                {"max_depth": 3, "min_leaf_weight": 5.0}]
        cfg, table = select_hyperparameters(X, y, "cart", grid, k=5, seed=0)
        assert cfg["max_depth"] == 3
        by_depth = {t["config"]["max_depth"]: t["mean_auc"] for t in table}
        assert by_depth[3] > by_depth[1]

    def test_k_lowered_when_few_positives(self):
        rng = np.random.default_rng(7)
        X = rng.normal(size=(60, 2))
        y = np.zeros(60, dtype=int)
        y[:4] = 1
        with pytest.warns(UserWarning, match="lowering CV folds"):
            cfg, _ = select_hyperparameters(X, y, "logit", [{"l2": 1.0}], k=10, seed=0)
        assert cfg == {"l2": 1.0}

    def test_empty_grid_raises(self):
        with pytest.raises(ValueError):
            select_hyperparameters(np.ones((10, 1)), np.ones(10), "logit", [], k=2)


class TestLeakageSentinel:
    def test_stats_ignore_poisoned_test_rows(self):
        rng = np.random.default_rng(8)
        X_train = rng.normal(size=(150, 3))
        y_train = (rng.uniform(size=150) < 0.2).astype(int)
        stats_a = fit_window_stats(X_train)
        cw_a = compute_class_weights(y_train)
        folds_a = stratified_folds(y_train, 10, seed=5)
        # poison a disjoint test set; training-derived artifacts must not move
        stats_b = fit_window_stats(X_train)
        cw_b = compute_class_weights(y_train)
        folds_b = stratified_folds(y_train, 10, seed=5)
        assert np.array_equal(stats_a.p1, stats_b.p1)
        assert np.array_equal(stats_a.mean, stats_b.mean)
        assert (cw_a.w1, cw_a.w0) == (cw_b.w1, cw_b.w0)
        assert np.array_equal(folds_a, folds_b)
