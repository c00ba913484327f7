import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reframe import gaussian
from reframe.losses import (
    REJECT,
    Absolute,
    AsymAbsolute,
    AsymAbsoluteReject,
    AsymSquared,
    AsymSquaredReject,
    Bid,
    BidNonLosing,
    Predict,
    Reject,
    Squared,
    Tolerance,
    loss_on_actuals,
)
from reframe.regressors import NormalPrediction
from reframe.reframing import (
    GlobalConstantShift,
    GlobalPolynomialShift,
    GlobalRejectRate,
    apply_policy,
    cosh_fit,
    expected_loss_asym_abs_normal,
    expected_loss_asym_sq_normal,
    expected_loss_quadrature,
    global_reject_fit,
    posh_fit,
    reframe,
    reframe_asym_abs,
    reframe_asym_sq,
    reframe_bid,
    reframe_bidneg,
    reframe_numeric,
    reject_decision,
    solve_asym_sq_tprime,
)

STD = NormalPrediction(0.0, 1.0)


class TestQuadratureOracle:
    def test_absolute_at_mean_is_gaussian_mad(self):
        # oracle agreement two ways: the closed constant and Monte Carlo
        for mu, sigma in ((0.0, 1.0), (3.0, 2.5)):
            pred = NormalPrediction(mu, sigma)
            got = expected_loss_quadrature(Absolute(), mu, pred).value
            assert got == pytest.approx(sigma * math.sqrt(2.0 / math.pi), rel=1e-6)
        rng = np.random.default_rng(0)
        mc = np.mean(np.abs(rng.normal(0.0, 1.0, 200_000)))
        assert expected_loss_quadrature(Absolute(), 0.0, STD).value == pytest.approx(
            mc, rel=5e-3
        )

    def test_half_symmetric_identity(self):
        v_abs = expected_loss_quadrature(Absolute(), 0.0, STD).value
        v_half = expected_loss_quadrature(AsymAbsolute(0.5), 0.0, STD).value
        assert v_half == pytest.approx(v_abs / 2.0, rel=1e-9)

    def test_bid_matches_product_formula(self):
        for t in (-1.0, 0.3, 2.0):
            got = expected_loss_quadrature(Bid(0.0), t, STD).value
            want = (0.0 - t) * (1.0 - gaussian.cdf(t))
            assert got == pytest.approx(want, rel=1e-6, abs=1e-9)

    def test_reject_costs_rho(self):
        spec = AsymAbsoluteReject(0.5, 0.37)
        assert expected_loss_quadrature(spec, REJECT, STD).value == 0.37

    def test_method_tag(self):
        assert expected_loss_quadrature(Squared(), 0.0, STD).method == "quadrature"
        assert expected_loss_asym_abs_normal(0.5, 0.0, STD).method == "closed_form"


class TestClosedForms:
    def test_abs_at_mean(self):
        v = expected_loss_asym_abs_normal(0.5, 0.0, STD).value
        assert v == pytest.approx(gaussian.pdf(0.0), rel=1e-12)

    def test_abs_standardised_point(self):
        pred = NormalPrediction(0.0, 2.0)
        v = expected_loss_asym_abs_normal(0.5, 2.0, pred).value  # t' = 1
        want = (gaussian.cdf(1.0) + gaussian.pdf(1.0) - 0.5) * 2.0
        assert v == pytest.approx(want, rel=1e-12)
        assert v == pytest.approx(1.1666, abs=1e-4)

    def test_sq_symmetric_bias_variance(self):
        pred = NormalPrediction(1.0, 3.0)
        for t in (-2.0, 1.0, 4.0):
            v = expected_loss_asym_sq_normal(0.5, t, pred).value
            assert v == pytest.approx(0.5 * ((t - 1.0) ** 2 + 9.0), rel=1e-12)

    def test_sweep_against_quadrature(self):
        rng = np.random.default_rng(42)
        worst_abs = worst_sq = 0.0
        for _ in range(100):
            alpha = rng.uniform(0.05, 0.95)
            mu = rng.uniform(-5, 5)
            sigma = rng.uniform(0.1, 5)
            t = mu + sigma * rng.uniform(-3, 3)
            pred = NormalPrediction(mu, sigma)
            qa = expected_loss_quadrature(AsymAbsolute(alpha), t, pred).value
            ca = expected_loss_asym_abs_normal(alpha, t, pred).value
            qs = expected_loss_quadrature(AsymSquared(alpha), t, pred).value
            cs = expected_loss_asym_sq_normal(alpha, t, pred).value
            worst_abs = max(worst_abs, abs(qa - ca) / max(abs(qa), abs(ca)))
            worst_sq = max(worst_sq, abs(qs - cs) / max(abs(qs), abs(cs)))
        assert worst_abs < 1e-6
        assert worst_sq < 1e-6

    def test_abs_loss_nonnegative(self):
        for alpha in (0.0, 0.2, 0.9, 1.0):
            for t in (-6.0, -1.0, 0.0, 2.0, 6.0):
                assert expected_loss_asym_abs_normal(alpha, t, STD).value >= 0.0


def _bisect_root(f, lo, hi, tol=1e-12):
    flo = f(lo)
    for _ in range(200):
        mid = (lo + hi) / 2.0
        fm = f(mid)
        if abs(hi - lo) < tol:
            return mid
        if (fm < 0) == (flo < 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return (lo + hi) / 2.0


class TestBidReframers:
    def test_standard_case_against_bisection_oracle(self):
        # stationarity of -t(1 - Phi(t)): t phi(t) + Phi(t) - 1 = 0
        root = _bisect_root(
            lambda t: t * gaussian.pdf(t) + gaussian.cdf(t) - 1.0, 0.0, 2.0
        )
        assert root == pytest.approx(0.7518, abs=1e-3)
        assert reframe_bid(0.0, STD) == pytest.approx(root, abs=1e-6)

    def test_degenerate_sigma_bids_near_mean(self):
        pred = NormalPrediction(1.0, 1e-12)
        assert reframe_bid(0.0, pred) == pytest.approx(1.0, abs=1e-3)

    def test_translation_equivariance(self):
        base = reframe_bid(0.5, NormalPrediction(0.2, 1.3))
        for c in (-4.0, 2.5):
            shifted = reframe_bid(0.5 + c, NormalPrediction(0.2 + c, 1.3))
            assert shifted == pytest.approx(base + c, abs=1e-6)

    def test_bidneg_respects_restriction(self):
        assert reframe_bidneg(10.0, STD) >= 10.0

    def test_bidneg_expected_loss_nonpositive(self):
        for beta in (-2.0, 0.0, 1.5, 10.0):
            t = reframe_bidneg(beta, STD)
            loss = expected_loss_quadrature(BidNonLosing(beta), t, STD).value
            assert loss <= 1e-12

    def test_bidneg_coincides_when_optimum_above_beta(self):
        assert reframe_bidneg(0.0, STD) == pytest.approx(reframe_bid(0.0, STD), abs=1e-9)


class TestAsymAbs:
    def test_median_is_mean(self):
        assert reframe_asym_abs(0.5, NormalPrediction(10.0, 2.0)) == pytest.approx(10.0)

    def test_cdf_inversion(self):
        # bisection oracle for the 0.8413 quantile of the standard normal
        z = _bisect_root(lambda t: gaussian.cdf(t) - 0.8413, 0.0, 3.0)
        assert reframe_asym_abs(0.8413, STD) == pytest.approx(z, abs=1e-9)
        assert reframe_asym_abs(0.8413, STD) == pytest.approx(1.0, abs=1e-3)

    def test_quantile_certificate(self):
        for alpha in (0.0, 1e-6, 0.3, 0.9, 1.0):
            t = reframe_asym_abs(alpha, NormalPrediction(2.0, 0.7))
            clamped = min(max(alpha, 1e-9), 1 - 1e-9)
            assert gaussian.cdf((t - 2.0) / 0.7) == pytest.approx(clamped, abs=1e-9)

    @given(st.floats(0, 1), st.floats(0, 1))
    @settings(max_examples=50)
    def test_monotone_in_alpha(self, a1, a2):
        if a1 > a2:
            a1, a2 = a2, a1
        assert reframe_asym_abs(a1, STD) <= reframe_asym_abs(a2, STD)


class TestAsymSq:
    def test_symmetric_short_circuit(self):
        assert solve_asym_sq_tprime(0.5) == 0.0

    def test_root_against_quadrature_oracle(self):
        # independent oracle: dense grid minimisation of the quadrature
        # expected loss, no closed forms involved
        alpha = 0.9
        grid = np.linspace(-3, 3, 1201)
        vals = [
            expected_loss_quadrature(AsymSquared(alpha), float(t), STD).value for t in grid
        ]
        coarse = grid[int(np.argmin(vals))]
        assert solve_asym_sq_tprime(alpha) == pytest.approx(coarse, abs=6e-3)
        assert solve_asym_sq_tprime(alpha) == pytest.approx(0.861, abs=1e-3)

    def test_stationarity_certificate(self):
        for alpha in (0.05, 0.3, 0.49, 0.51, 0.9, 0.999):
            t = solve_asym_sq_tprime(alpha)
            resid = t * gaussian.cdf(t) + gaussian.pdf(t) + t * alpha / (1 - 2 * alpha)
            assert abs(resid) < 1e-8

    def test_antisymmetry(self):
        for alpha in (0.1, 0.25, 0.45):
            assert solve_asym_sq_tprime(alpha) == pytest.approx(
                -solve_asym_sq_tprime(1.0 - alpha), abs=1e-8
            )

    def test_affine_map(self):
        t9 = solve_asym_sq_tprime(0.9)
        assert reframe_asym_sq(0.9, NormalPrediction(3.0, 2.0)) == pytest.approx(
            3.0 + 2.0 * t9
        )
        assert reframe_asym_sq(0.9, NormalPrediction(3.0, 2.0)) == pytest.approx(
            4.722, abs=2e-3
        )

    def test_affine_equivariance(self):
        alpha = 0.73
        base = reframe_asym_sq(alpha, STD)
        for a, b in ((2.0, -1.0), (0.3, 5.0)):
            got = reframe_asym_sq(alpha, NormalPrediction(b, a))
            assert got == pytest.approx(a * base + b, rel=1e-10, abs=1e-10)


class TestRejectRule:
    def test_examples(self):
        assert reject_decision(AsymAbsoluteReject(0.5, 0.3), STD) == REJECT
        assert reject_decision(AsymAbsoluteReject(0.5, 0.5), STD) == Predict(0.0)

    def test_zero_rho_always_rejects(self):
        assert reject_decision(AsymSquaredReject(0.3, 0.0), STD) == REJECT

    def test_infinite_rho_always_predicts(self):
        d = reject_decision(AsymSquaredReject(0.3, math.inf), STD)
        assert isinstance(d, Predict)

    def test_monotone_in_rho(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            alpha = rng.uniform(0, 1)
            pred = NormalPrediction(rng.uniform(-3, 3), rng.uniform(0.1, 3))
            rho1, rho2 = sorted(rng.uniform(0, 2, size=2))
            if reject_decision(AsymAbsoluteReject(alpha, rho1), pred) != REJECT:
                # predicting at a cheap rho implies predicting at any dearer one
                assert reject_decision(AsymAbsoluteReject(alpha, rho2), pred) != REJECT


class TestNumericReframer:
    def test_squared_returns_mean(self):
        pred = NormalPrediction(3.0, 2.0)
        d = reframe_numeric(Squared(), pred)
        assert isinstance(d, Predict)
        assert d.value == pytest.approx(3.0, abs=1e-8 * 2.0)

    def test_absolute_returns_mean(self):
        pred = NormalPrediction(-1.5, 0.5)
        d = reframe_numeric(Absolute(), pred)
        assert d.value == pytest.approx(-1.5, abs=1e-7)

    def test_symmetric_tolerance_returns_mean(self):
        pred = NormalPrediction(3.0, 2.0)
        d = reframe_numeric(Tolerance(0.5, 1.0, 1.0), pred)
        assert d.value == pytest.approx(3.0, abs=1e-6)

    def test_bid_agrees_with_dedicated(self):
        d = reframe_numeric(Bid(0.0), STD)
        assert d.value == pytest.approx(reframe_bid(0.0, STD), abs=1e-4)

    def test_reject_variant_abstains(self):
        assert reframe_numeric(AsymAbsoluteReject(0.5, 0.1), STD) == REJECT
        kept = reframe_numeric(AsymAbsoluteReject(0.5, 5.0), STD)
        assert isinstance(kept, Predict)

    def test_dispatcher_covers_families(self):
        pred = NormalPrediction(1.0, 1.0)
        assert isinstance(reframe(Bid(0.5), pred), Predict)
        assert isinstance(reframe(BidNonLosing(0.5), pred), Predict)
        assert isinstance(reframe(AsymAbsolute(0.9), pred), Predict)
        assert isinstance(reframe(AsymSquared(0.9), pred), Predict)
        assert isinstance(reframe(Squared(), pred), Predict)
        assert reframe(Squared(), pred).value == 1.0
        assert isinstance(reframe(AsymAbsoluteReject(0.5, 0.01), pred), Reject)


class TestOracleDominance:
    @pytest.mark.parametrize("family", ["bid", "bidneg", "asym_abs", "asym_sq"])
    def test_reframer_beats_random_candidates(self, family):
        rng = np.random.default_rng(3)
        for _ in range(10):
            mu = rng.uniform(-5, 5)
            sigma = rng.uniform(0.1, 5)
            pred = NormalPrediction(mu, sigma)
            if family == "bid":
                spec = Bid(rng.uniform(-5, 5))
                t_star = reframe_bid(spec.beta, pred)
            elif family == "bidneg":
                spec = BidNonLosing(rng.uniform(-5, 5))
                t_star = reframe_bidneg(spec.beta, pred)
            elif family == "asym_abs":
                spec = AsymAbsolute(rng.uniform(0, 1))
                t_star = reframe_asym_abs(spec.alpha, pred)
            else:
                spec = AsymSquared(rng.uniform(0, 1))
                t_star = reframe_asym_sq(spec.alpha, pred)
            best = expected_loss_quadrature(spec, t_star, pred).value
            cands = mu + sigma * rng.uniform(-8, 8, size=40)
            for t in cands:
                assert best <= expected_loss_quadrature(spec, float(t), pred).value + 1e-6


class TestGlobalPolicies:
    def test_cosh_symmetric_residuals(self):
        yhat = np.array([-2.0, -1.0, 1.0, 2.0])
        ys = np.zeros(4)
        resid_sym = ys - yhat  # symmetric about 0
        s = cosh_fit(AsymAbsolute(0.5), yhat, ys)
        assert abs(s.shift) < 0.02

    def test_cosh_squared_is_mean_residual(self):
        rng = np.random.default_rng(11)
        yhat = rng.normal(size=60)
        ys = yhat + 1.3 + rng.normal(0, 0.05, 60)
        s = cosh_fit(Squared(), yhat, ys)
        assert s.shift == pytest.approx(float(np.mean(ys - yhat)), abs=1e-6)

    def test_cosh_asym_converges_to_quantile(self):
        # brute-force oracle: the best shift sits at a residual order statistic
        rng = np.random.default_rng(12)
        yhat = rng.normal(size=80)
        ys = yhat + rng.normal(0, 1, 80)
        resid = np.sort(ys - yhat)
        spec = AsymAbsolute(0.8)
        brute_vals = [float(np.mean(loss_on_actuals(spec, yhat + s, ys))) for s in resid]
        brute_best = float(brute_vals[int(np.argmin(brute_vals))])
        fitted = cosh_fit(spec, yhat, ys)
        fitted_val = float(np.mean(loss_on_actuals(spec, yhat + fitted.shift, ys)))
        assert fitted_val <= brute_best + 1e-9

    def test_cosh_discontinuous_loss_refinement(self):
        rng = np.random.default_rng(13)
        yhat = rng.normal(size=50)
        ys = yhat + rng.normal(0, 1, 50)
        spec = Bid(0.2)
        s = cosh_fit(spec, yhat, ys)
        val = float(np.mean(loss_on_actuals(spec, yhat + s.shift, ys)))
        for probe in np.linspace(-2, 2, 401):
            assert val <= float(np.mean(loss_on_actuals(spec, yhat + probe, ys))) + 1e-12

    def test_posh_never_worse_than_cosh(self):
        rng = np.random.default_rng(14)
        yhat = rng.normal(size=60)
        ys = 1.4 * yhat + 0.3 + rng.normal(0, 0.2, 60)
        for spec in (Squared(), AsymAbsolute(0.3), AsymSquared(0.8)):
            s0 = cosh_fit(spec, yhat, ys)
            cosh_val = float(np.mean(loss_on_actuals(spec, yhat + s0.shift, ys)))
            p = posh_fit(spec, yhat, ys)
            posh_val = float(np.mean(loss_on_actuals(spec, p.apply(yhat), ys)))
            assert posh_val <= cosh_val + 1e-9

    def test_posh_recovers_exact_affine(self):
        yhat = np.linspace(-2, 2, 30)
        ys = 2.0 * yhat + 1.0
        p = posh_fit(Squared(), yhat, ys)
        b, a = p.coeffs
        assert a == pytest.approx(2.0, abs=1e-6)
        assert b == pytest.approx(1.0, abs=1e-6)

    def test_posh_identity_data(self):
        yhat = np.linspace(-2, 2, 30)
        p = posh_fit(Squared(), yhat, yhat.copy())
        b, a = p.coeffs
        assert a == pytest.approx(1.0, abs=1e-6)
        assert b == pytest.approx(0.0, abs=1e-6)

    def test_global_reject_endpoints(self):
        yhat = np.zeros(10)
        ys = np.ones(10)
        inner = GlobalConstantShift(0.0)
        spec = AsymAbsoluteReject(0.5, 0.0)
        assert global_reject_fit(spec, yhat, ys, inner).reject_all
        spec = AsymAbsoluteReject(0.5, math.inf)
        assert not global_reject_fit(spec, yhat, ys, inner).reject_all

    def test_global_reject_tie_keeps_predictions(self):
        yhat = np.zeros(4)
        ys = np.ones(4)  # mean abs loss at alpha 0.5 is exactly 0.5
        spec = AsymAbsoluteReject(0.5, 0.5)
        assert not global_reject_fit(spec, yhat, ys, GlobalConstantShift(0.0)).reject_all

    def test_apply_policy(self):
        assert apply_policy(GlobalConstantShift(2.0), 1.0) == Predict(3.0)
        assert apply_policy(GlobalPolynomialShift((1.0, 2.0)), 3.0) == Predict(7.0)
        gr = GlobalRejectRate(True, GlobalConstantShift(0.0))
        assert apply_policy(gr, 5.0) == REJECT
        gr = GlobalRejectRate(False, GlobalConstantShift(1.0))
        assert apply_policy(gr, 5.0) == Predict(6.0)
