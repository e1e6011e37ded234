import itertools
import math

import numpy as np
import pytest
from scipy import stats

from aidistress.metrics import (
    MetricReport,
    average_reports,
    compare_feature_sets,
    compute_auc,
    compute_metrics,
    paired_bootstrap,
    paired_t_test,
    report_from_counts,
    student_t_sf2,
)


def auc_pair_oracle(labels, scores):
    """O(n^2) count of concordant pairs plus half ties."""
    pos = [s for s, l in zip(scores, labels) if l == 1]
    neg = [s for s, l in zip(scores, labels) if l == 0]
    total = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                total += 1.0
            elif p == n:
                total += 0.5
    return total / (len(pos) * len(neg))


class TestAuc:
    def test_perfect_ranking(self):
        assert compute_auc([0, 0, 1, 1], [0.1, 0.2, 0.8, 0.9]) == 1.0

    def test_all_tied(self):
        assert compute_auc([0, 1, 0, 1], [0.5, 0.5, 0.5, 0.5]) == 0.5

    def test_eight_item_mixed(self):
        labels = [0, 1, 1, 0, 0, 1, 0, 1]
        scores = [0.2, 0.2, 0.9, 0.4, 0.4, 0.4, 0.1, 0.65]
        assert compute_auc(labels, scores) == pytest.approx(
            auc_pair_oracle(labels, scores), abs=1e-12
        )

    @pytest.mark.parametrize("seed", range(20))
    def test_random_vs_pair_oracle(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(5, 200))
        labels = rng.integers(0, 2, size=n)
        if labels.sum() in (0, n):
            labels[0] = 1 - labels[0]
        scores = np.round(rng.uniform(size=n), 2)  # coarse grid forces ties
        assert compute_auc(labels, scores) == pytest.approx(
            auc_pair_oracle(labels, scores), abs=1e-12
        )

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(5)
        labels = rng.integers(0, 2, size=50)
        labels[0], labels[1] = 0, 1
        scores = rng.normal(size=50)
        a = compute_auc(labels, scores)
        b = compute_auc(labels, np.exp(3 * scores))
        assert a == pytest.approx(b, abs=1e-12)

    def test_single_class_raises(self):
        with pytest.raises(ValueError):
            compute_auc([1, 1], [0.3, 0.4])


class TestComputeMetrics:
    def test_averaged_table_counts(self):
        # averaged confusion counts for a boosted-tree with-AI row
        rep = report_from_counts(tp=38.50, tn=3253.21, fp=683.79, fn=12.50)
        assert rep.recall == pytest.approx(0.755, abs=1e-3)
        assert rep.specificity == pytest.approx(0.826, abs=1e-3)
        assert rep.accuracy == pytest.approx(0.825, abs=1e-3)

    def test_perfect_counts(self):
        rep = report_from_counts(1, 1, 0, 0)
        for name in ("accuracy", "recall", "specificity", "precision", "f1", "gmean"):
            assert getattr(rep, name) == 1.0

    @pytest.mark.parametrize("seed", range(10))
    def test_random_vs_counting_oracle(self, seed):
        rng = np.random.default_rng(seed)
        n = 50
        y = rng.integers(0, 2, size=n)
        p = rng.uniform(size=n)
        rep = compute_metrics(y, p, threshold=0.5)
        tp = sum(1 for yi, pi in zip(y, p) if pi >= 0.5 and yi == 1)
        tn = sum(1 for yi, pi in zip(y, p) if pi < 0.5 and yi == 0)
        fp = sum(1 for yi, pi in zip(y, p) if pi >= 0.5 and yi == 0)
        fn = sum(1 for yi, pi in zip(y, p) if pi < 0.5 and yi == 1)
        assert (rep.tp, rep.tn, rep.fp, rep.fn) == (tp, tn, fp, fn)
        if tp + fn and tn + fp:
            assert rep.gmean**2 == pytest.approx(rep.recall * rep.specificity, abs=1e-12)
            assert rep.type1_fpr == pytest.approx(1 - rep.specificity, abs=1e-15)
            assert rep.type2_fnr == pytest.approx(1 - rep.recall, abs=1e-15)

    def test_empty_class_rates_absent(self):
        rep = compute_metrics([0, 0, 0], [0.1, 0.6, 0.2])
        assert rep.recall is None
        assert rep.type2_fnr is None
        assert rep.specificity is not None

    def test_invalid_probabilities(self):
        with pytest.raises(ValueError):
            compute_metrics([0, 1], [0.5, 1.5])


class TestAverageReports:
    def test_single_report_identity(self):
        rep = report_from_counts(3, 5, 1, 2)
        out = average_reports([rep])
        assert out.as_dict() == rep.as_dict()

    def test_two_recalls(self):
        a = MetricReport(recall=0.7)
        b = MetricReport(recall=0.8)
        assert average_reports([a, b]).recall == pytest.approx(0.75)

    def test_nonlinear_fields_documented(self):
        # f1 / gmean of averaged counts need not equal averaged f1 / gmean
        a = report_from_counts(10, 80, 5, 5)
        b = report_from_counts(2, 90, 30, 8)
        avg = average_reports([a, b])
        from_counts = report_from_counts(avg.tp, avg.tn, avg.fp, avg.fn)
        assert avg.recall == pytest.approx((a.recall + b.recall) / 2)
        assert abs(avg.f1 - from_counts.f1) > 1e-6  # both views retained


class TestPairedT:
    def test_textbook_example(self):
        t, p = paired_t_test([1, 2, 3, 4])
        assert t == pytest.approx(3.873, abs=1e-3)
        assert p == pytest.approx(0.0305, abs=1e-3)

    def test_negation_symmetry(self):
        t1, p1 = paired_t_test([0.3, -0.1, 0.25, 0.4])
        t2, p2 = paired_t_test([-0.3, 0.1, -0.25, -0.4])
        assert t2 == pytest.approx(-t1)
        assert p2 == pytest.approx(p1)

    def test_all_zero(self):
        assert paired_t_test([0, 0, 0]) == (0.0, 1.0)

    def test_constant_nonzero(self):
        t, p = paired_t_test([0.2, 0.2, 0.2])
        assert math.isinf(t) and t > 0
        assert p == 0.0

    @pytest.mark.parametrize("seed", range(10))
    def test_against_scipy(self, seed):
        rng = np.random.default_rng(seed)
        d = rng.normal(0.1, 1.0, size=int(rng.integers(3, 25)))
        t, p = paired_t_test(d)
        ref = stats.ttest_1samp(d, 0.0)
        assert t == pytest.approx(ref.statistic, rel=1e-10)
        assert p == pytest.approx(ref.pvalue, rel=1e-9)

    def test_t_cdf_implementation(self):
        for t in (0.0, 0.5, 1.3, 3.873, -2.2, 10.0):
            for df in (1, 3, 10, 30):
                ref = 2 * stats.t.sf(abs(t), df)
                assert student_t_sf2(t, df) == pytest.approx(ref, rel=1e-10)


class TestPairedBootstrap:
    def test_degenerate_all_equal(self):
        B = 1000
        lo, hi, p = paired_bootstrap([0.4, 0.4, 0.4], B=B, seed=0)
        assert lo == hi == pytest.approx(0.4)
        assert p == 2.0 / B

    def test_two_deltas_vs_exact_enumeration(self):
        d = [1.0, 3.0]
        B = 10**6
        lo, hi, p = paired_bootstrap(d, B=B, seed=1)
        # four equally likely resamples: means {1, 2, 2, 3}
        means = [np.mean([d[i], d[j]]) for i, j in itertools.product(range(2), repeat=2)]
        exact_p = 2 * min(
            np.mean([m <= 0 for m in means]), np.mean([m >= 0 for m in means])
        )
        exact_p = max(exact_p, 2 / B)
        assert p == pytest.approx(exact_p, abs=0.01)
        # 2.5%/97.5% of the discrete resampling law {1: 1/4, 2: 1/2, 3: 1/4}
        assert lo == pytest.approx(1.0, abs=0.01)
        assert hi == pytest.approx(3.0, abs=0.01)

    def test_seed_reproducibility(self):
        a = paired_bootstrap([0.1, -0.2, 0.3, 0.15], B=2000, seed=9)
        b = paired_bootstrap([0.1, -0.2, 0.3, 0.15], B=2000, seed=9)
        assert a == b

    def test_ci_contains_sample_mean(self):
        rng = np.random.default_rng(2)
        d = rng.normal(0.05, 0.2, size=12)
        lo, hi, _ = paired_bootstrap(d, B=500, seed=3)
        assert lo <= d.mean() <= hi


class TestCompareFeatureSets:
    def _reports(self, recalls, type2s=None):
        reps = {}
        for i, r in enumerate(recalls):
            rep = MetricReport(recall=r, auc=0.8, gmean=0.7, accuracy=0.9,
                               specificity=0.9, precision=0.2, f1=0.3,
                               type1_fpr=0.1,
                               type2_fnr=(type2s[i] if type2s else 1 - r))
            reps[i] = rep
        return reps

    def test_identical_arms_neutral(self):
        arm = self._reports([0.7, 0.72, 0.68, 0.71])
        out = compare_feature_sets(arm, arm, B=500, seed=0)
        for comp in out:
            assert np.all(comp.deltas == 0)
            assert comp.direction == "neutral"
            assert comp.p_t == 1.0

    def test_uniform_dominance(self):
        with_ai = self._reports([0.73, 0.75, 0.71, 0.74])
        without = self._reports([0.70, 0.72, 0.68, 0.71])
        out = {c.metric: c for c in compare_feature_sets(with_ai, without, B=4000, seed=0)}
        rec = out["recall"]
        assert rec.mean_delta == pytest.approx(0.03)
        assert rec.direction == "AI better"
        assert rec.p_boot <= 0.01
        # error metric is flipped: lower type II with AI reads positive
        t2 = out["type2_fnr"]
        assert t2.mean_delta == pytest.approx(0.03)
        assert t2.direction == "AI better"

    def test_mismatched_splits_raise(self):
        a = self._reports([0.7, 0.8])
        b = self._reports([0.7, 0.8, 0.9])
        with pytest.raises(ValueError):
            compare_feature_sets(a, b)
