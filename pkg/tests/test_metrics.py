import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from reframe import gaussian
from reframe.enrichment import enrich_own
from reframe.metrics import evaluate_soft, logistic, mrse, msll, msll_values, msvr, msvr_values
from reframe.regressors import NormalPrediction, fit_knn

from conftest import make_dataset

LN3 = math.log(3.0)


class TestLogistic:
    def test_zero(self):
        assert logistic(0.0) == 0.5

    def test_ln3(self):
        assert logistic(LN3) == pytest.approx(0.75)

    def test_infinities(self):
        assert logistic(float("-inf")) == 0.0
        assert logistic(float("inf")) == 1.0

    def test_no_overflow(self):
        assert logistic(-1e6) == 0.0
        assert logistic(1e6) == 1.0

    @given(st.floats(-30, 30))
    def test_range_and_monotone(self, t):
        v = logistic(t)
        assert 0.0 < v < 1.0
        assert logistic(t + 1.0) > v


class TestMrse:
    def test_trivial_model_scores_half(self):
        ys = np.array([1.0, 2.0, 5.0])
        preds = np.full(3, 2.0)
        assert mrse(preds, ys, train_mean=2.0) == pytest.approx(0.5)

    def test_perfect_predictions_zero(self):
        ys = np.array([1.0, 2.0, 5.0])
        assert mrse(ys, ys, train_mean=0.0) == 0.0

    def test_ratio_two_gives_point_eight(self):
        # SSE 4 vs trivial SSE 2, so 2 Lambda(2 ln 3) - 1 = 2 (9/10) - 1 = 0.8
        ys = np.array([0.0, 2.0])
        preds = np.array([2.0, 2.0])
        assert mrse(preds, ys, train_mean=1.0) == pytest.approx(0.8)

    def test_constant_eval_targets_error(self):
        with pytest.raises(ValueError, match="constant evaluation targets"):
            mrse([1.0, 1.0], [3.0, 3.0], train_mean=3.0)

    def test_monotone_in_sse(self):
        ys = np.array([0.0, 1.0, 2.0])
        a = mrse(ys + 0.1, ys, train_mean=1.0)
        b = mrse(ys + 0.2, ys, train_mean=1.0)
        assert b > a


class TestMsll:
    def test_density_one_everywhere(self):
        # sigma = 1/sqrt(2 pi) makes the density exactly 1 at y = mu
        sigma = 1.0 / gaussian.SQRT_2PI
        assert msll_values([2.0], [sigma], [2.0]) == pytest.approx(0.5)

    def test_single_standard_row(self):
        v = msll_values([1.0], [1.0], [1.0])
        assert v == pytest.approx(1.0 / (1.0 + 1.0 / gaussian.SQRT_2PI), abs=1e-5)
        assert v == pytest.approx(0.71482, abs=1e-5)

    def test_tiny_sigma_small_but_positive(self):
        v = msll_values([0.0], [1e-12], [0.0])
        assert 0.0 < v < 1e-6


class TestMsvr:
    def test_perfect_variance_everywhere(self):
        ys = np.array([1.0, 3.0])
        mus = np.array([0.0, 5.0])
        sigmas = np.abs(mus - ys)
        assert msvr_values(mus, sigmas, ys) == 0.0

    def test_three_to_one_ratio(self):
        v = msvr_values([0.0], [math.sqrt(3.0)], [1.0])
        assert v == pytest.approx(0.5)

    def test_zero_over_zero_counts_perfect(self):
        assert msvr_values([1.0], [0.0], [1.0]) == 0.0

    def test_zero_residual_positive_variance_worst(self):
        assert msvr_values([1.0], [2.0], [1.0]) == 1.0

    def test_huge_variance_limits_to_one(self):
        assert msvr_values([0.0], [1e9], [1.0]) == pytest.approx(1.0, abs=1e-9)

    @given(st.floats(0.01, 100.0))
    def test_joint_rescale_invariance(self, c):
        base = msvr_values([0.0], [2.0], [1.0])
        scaled = msvr_values([0.0], [2.0 * c], [c])
        assert scaled == pytest.approx(base, rel=1e-9)


class TestReportLevel:
    def test_row_order_invariance(self):
        rng = np.random.default_rng(0)
        mus = rng.normal(size=20)
        sigmas = rng.uniform(0.5, 2.0, 20)
        ys = rng.normal(size=20)
        perm = rng.permutation(20)
        assert msll_values(mus, sigmas, ys) == pytest.approx(
            msll_values(mus[perm], sigmas[perm], ys[perm])
        )
        assert msvr_values(mus, sigmas, ys) == pytest.approx(
            msvr_values(mus[perm], sigmas[perm], ys[perm])
        )
        assert mrse(mus, ys, 0.3) == pytest.approx(mrse(mus[perm], ys[perm], 0.3))

    def test_report_ranges(self):
        rng = np.random.default_rng(1)
        ds = make_dataset(rng.normal(size=(30, 2)), rng.normal(size=30))
        train = ds.subset(range(15))
        test = ds.subset(range(15, 30))
        soft = enrich_own(fit_knn(train, 5))
        rep = evaluate_soft(soft, test, float(train.targets.mean()))
        assert 0.0 <= rep.mrse < 1.0
        assert 0.0 < rep.msll < 1.0
        assert 0.0 <= rep.msvr <= 1.0

    def test_softmodel_entry_points(self):
        rng = np.random.default_rng(2)
        ds = make_dataset(rng.normal(size=(20, 1)), rng.normal(size=20))
        soft = enrich_own(fit_knn(ds, 3))
        assert msll(soft, ds) == pytest.approx(
            msll_values(*_pred_arrays(soft, ds), ds.targets)
        )
        assert 0.0 <= msvr(soft, ds) <= 1.0


def _pred_arrays(soft, ds):
    preds = [soft.predict(x) for x in ds.features]
    return np.array([p.mu for p in preds]), np.array([p.sigma for p in preds])
