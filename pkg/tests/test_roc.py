"""Tests for binormal AUC computation, paired variance, and the analyses."""

import math

import numpy as np
import pytest

from pairedscreen.gaussian import BivNormParams, std_normal_quantile
from pairedscreen.roc import (
    BinormalMoments,
    auc_to_case_mean,
    binormal_auc,
    binormal_roc_point,
    difference_test,
    roc_curve_points,
    run_analysis,
    var_diff_auc,
)
from pairedscreen.simulate import ScenarioConfig, draw_trial

CASE = BivNormParams(1.0448, 0.7826, 1.0, 1.0, 0.3)
NONCASE = BivNormParams(0.0, 0.0, 1.0, 1.0, 0.3)


def make_trial(seed=0, **overrides):
    base = dict(
        n=20_000, prevalence=0.1, signs_rate=0.1,
        case_params=CASE, noncase_params=NONCASE,
        ascertainment_targets=(0.15, 0.5), reps=1, seed=seed,
    )
    base.update(overrides)
    return draw_trial(ScenarioConfig(**base), np.random.default_rng(seed))


class TestBinormalAuc:
    def test_equal_means_is_chance(self):
        assert binormal_auc((1.0, 2.0), (1.0, 0.5)) == pytest.approx(0.5)

    def test_auc_078_separation(self):
        mu = math.sqrt(2.0) * std_normal_quantile(0.78)
        assert binormal_auc((mu, 1.0), (0.0, 1.0)) == pytest.approx(0.78, abs=1e-12)

    def test_monte_carlo_oracle(self):
        rng = np.random.default_rng(3)
        case = (0.9, 1.7)
        noncase = (-0.2, 0.6)
        draws = 10**6
        xc = case[0] + math.sqrt(case[1]) * rng.standard_normal(draws)
        xn = noncase[0] + math.sqrt(noncase[1]) * rng.standard_normal(draws)
        mc = float((xc > xn).mean())
        assert binormal_auc(case, noncase) == pytest.approx(mc, abs=0.002)

    def test_monotone_in_separation(self):
        aucs = [binormal_auc((mu, 1.0), (0.0, 1.0)) for mu in np.linspace(0.0, 3.0, 13)]
        assert np.all(np.diff(aucs) > 0)

    def test_scale_invariance(self):
        for c in (0.1, 3.0, 42.0):
            a = binormal_auc((1.2, 0.8), (0.3, 1.5))
            b = binormal_auc((1.2 * c, 0.8 * c * c), (0.3 * c, 1.5 * c * c))
            assert a == pytest.approx(b, abs=1e-12)

    def test_auc_to_case_mean_roundtrip(self):
        for target in (0.5, 0.74, 0.78, 0.95):
            mu = auc_to_case_mean(target, (0.4, 1.3), 0.7)
            assert binormal_auc((mu, 0.7), (0.4, 1.3)) == pytest.approx(target, abs=1e-12)

    def test_auc_values_from_design(self):
        # 0.78 -> mean ~1.0925, 0.74 -> ~0.9098 against standardized non-cases
        assert auc_to_case_mean(0.78, (0.0, 1.0), 1.0) == pytest.approx(1.0920, abs=5e-4)
        assert auc_to_case_mean(0.74, (0.0, 1.0), 1.0) == pytest.approx(0.9098, abs=5e-4)


class TestRocCurve:
    def test_threshold_limits(self):
        fpr, tpr = binormal_roc_point((1.0, 1.0), (0.0, 1.0), -60.0)
        assert (fpr, tpr) == pytest.approx((1.0, 1.0))
        fpr, tpr = binormal_roc_point((1.0, 1.0), (0.0, 1.0), 60.0)
        assert (fpr, tpr) == pytest.approx((0.0, 0.0))

    def test_trapezoid_matches_auc(self):
        case, noncase = (1.3, 1.4), (0.1, 0.9)
        pts = roc_curve_points(case, noncase, n_points=10_001)
        # thresholds ascend, so fpr descends; integrate tpr d(fpr)
        area = -np.trapezoid(pts[:, 1], pts[:, 0])
        assert area == pytest.approx(binormal_auc(case, noncase), abs=1e-4)

    def test_curve_inside_unit_square(self):
        pts = roc_curve_points((0.7, 2.0), (0.0, 0.5), n_points=512)
        assert pts.shape == (512, 2)
        assert np.all((pts >= 0.0) & (pts <= 1.0))


class TestVarDiffAuc:
    def moments(self, mu, var=1.0):
        return BinormalMoments(mu, var, 0.0, 1.0)

    def test_identical_tests_perfectly_paired(self):
        t = self.moments(1.0)
        # same test twice with full correlation: difference has no variance
        assert var_diff_auc(t, t, 1.0, 1.0, 200, 1000) == pytest.approx(0.0, abs=1e-16)

    def test_independent_tests_add(self):
        t1, t2 = self.moments(1.1), self.moments(0.9)
        v = var_diff_auc(t1, t2, 0.0, 0.0, 300, 3000)
        v1 = var_diff_auc(t1, t1, 1.0, 1.0, 300, 3000)  # 0; sanity
        single1 = var_diff_auc(t1, self.moments(50.0), 0.0, 0.0, 300, 3000)
        assert v > 0 and v1 == 0.0
        # additivity: var(diff) under independence equals the sum of parts,
        # recovered by sending one AUC to 1 where its variance vanishes
        assert v == pytest.approx(
            single1 + var_diff_auc(self.moments(50.0), t2, 0.0, 0.0, 300, 3000),
            rel=1e-6,
        )

    def test_positive_correlation_reduces_variance(self):
        t1, t2 = self.moments(1.1), self.moments(0.9)
        v0 = var_diff_auc(t1, t2, 0.0, 0.0, 300, 3000)
        v5 = var_diff_auc(t1, t2, 0.5, 0.5, 300, 3000)
        v9 = var_diff_auc(t1, t2, 0.9, 0.9, 300, 3000)
        assert v0 > v5 > v9 > 0

    def test_monte_carlo_oracle(self):
        # plug-in delta-AUC variance over simulated paired samples
        rng = np.random.default_rng(11)
        m, n = 150, 900
        mu1, mu2, rho = 1.0920, 0.9098, 0.4
        reps = 2500
        diffs = np.empty(reps)
        c = math.sqrt(1 - rho * rho)
        for r in range(reps):
            zc = rng.standard_normal((m, 2))
            xc1 = mu1 + zc[:, 0]
            xc2 = mu2 + rho * zc[:, 0] + c * zc[:, 1]
            zn = rng.standard_normal((n, 2))
            xn1 = zn[:, 0]
            xn2 = rho * zn[:, 0] + c * zn[:, 1]
            a1 = binormal_auc((xc1.mean(), xc1.var(ddof=1)), (xn1.mean(), xn1.var(ddof=1)))
            a2 = binormal_auc((xc2.mean(), xc2.var(ddof=1)), (xn2.mean(), xn2.var(ddof=1)))
            diffs[r] = a1 - a2
        formula = var_diff_auc(self.moments(mu1), self.moments(mu2), rho, rho, m, n)
        assert formula == pytest.approx(float(diffs.var(ddof=1)), rel=0.15)

    def test_requires_minimum_counts(self):
        t = self.moments(1.0)
        with pytest.raises(ValueError):
            var_diff_auc(t, t, 0.0, 0.0, 1, 100)


class TestDifferenceTest:
    def test_zero_difference(self):
        z, p, reject, favored = difference_test(0.0, 1e-4, 0.05)
        assert (z, p) == (0.0, 1.0)
        assert not reject and favored == "none"

    def test_z_196(self):
        z, p, reject, favored = difference_test(1.96e-2, 1e-4, 0.05)
        assert z == pytest.approx(1.96)
        assert p == pytest.approx(0.04999579029644087, abs=1e-12)
        assert reject and favored == "test1"

    def test_negative_difference_favors_test2(self):
        _, _, reject, favored = difference_test(-0.05, 1e-6, 0.05)
        assert reject and favored == "test2"

    def test_zero_variance_unavailable(self):
        with pytest.raises(ValueError, match="unavailable"):
            difference_test(0.1, 0.0, 0.05)


class TestRunAnalysis:
    def test_no_missed_cases_observed_equals_true(self):
        data = make_trial(5, ascertainment_targets=(0.99999, 0.99999))
        assert data.n_missed_cases == 0
        true_res = run_analysis(data, "true")
        obs_res = run_analysis(data, "observed")
        assert obs_res.auc1 == true_res.auc1
        assert obs_res.auc2 == true_res.auc2
        assert obs_res.diff == true_res.diff

    def test_diff_identity_and_reject_consistency(self):
        data = make_trial(6)
        for kind in ("true", "observed", "corrected"):
            res = run_analysis(data, kind)
            assert res.diff == res.auc1 - res.auc2
            assert res.reject == (res.p_value < 0.05)
            if not res.reject:
                assert res.favored_test == "none"

    def test_observed_uses_observed_counts(self):
        data = make_trial(7)
        res = run_analysis(data, "observed")
        assert res.n_cases_used == data.n_observed_cases
        corr = run_analysis(data, "corrected")
        assert corr.n_cases_used == data.n_observed_cases
        true_res = run_analysis(data, "true")
        assert true_res.n_cases_used == data.n_true_cases

    def test_corrected_uses_weighted_params(self):
        from pairedscreen.correction import correct_case_distribution

        data = make_trial(8)
        corrected = correct_case_distribution(data)
        res = run_analysis(data, "corrected", corrected=corrected)
        m1 = res.test1_moments
        assert m1.case_mean == corrected.weighted.mu1
        assert m1.case_var == corrected.weighted.var1

    def test_corrected_degrades_with_warning(self):
        # thresholds so low that every observed case is screen-detected by
        # test 1 alone into one quadrant with plenty of mass: still fine;
        # instead make observed cases a two-point degenerate set
        data = make_trial(9, n=400, prevalence=0.01, signs_rate=0.0,
                          ascertainment_targets=(0.5, 0.5))
        # force only two observed cases in distinct quadrants
        import pairedscreen.simulate as sim

        a1, a2 = data.thresholds
        rng = np.random.default_rng(0)
        noise = rng.normal(size=(50, 2))
        tiny = sim.TrialDataset(
            x1=np.concatenate([[a1 + 1.0, a1 + 1.0], noise[:, 0]]),
            x2=np.concatenate([[a2 + 1.0, a2 - 1.0], noise[:, 1]]),
            true_status=np.array([1, 1] + [0] * 50, dtype=np.uint8),
            signs=np.zeros(52, dtype=bool),
            observed_status=np.array([1, 1] + [0] * 50, dtype=np.uint8),
            case_class=np.array([1, 1] + [0] * 50, dtype=np.uint8),
            thresholds=(a1, a2),
        )
        res = run_analysis(tiny, "corrected")
        assert any("correction unavailable" in w for w in res.warnings)
        obs = run_analysis(tiny, "observed")
        assert res.auc1 == obs.auc1 and res.auc2 == obs.auc2

    def test_scale_invariance_of_one_test(self):
        data = make_trial(10)
        res = run_analysis(data, "true")
        scaled = make_trial(10)
        scaled.x1 *= 3.0
        res2 = run_analysis(scaled, "true")
        assert res2.auc1 == pytest.approx(res.auc1, abs=1e-12)
        assert res2.auc2 == res.auc2

    def test_invalid_kind_and_alpha(self):
        data = make_trial(11, n=2000)
        with pytest.raises(ValueError):
            run_analysis(data, "bogus")
        with pytest.raises(ValueError):
            run_analysis(data, "true", alpha=1.5)
        with pytest.raises(ValueError):
            run_analysis(data, "true", variance_mode="bogus")

    def test_too_few_observations(self):
        data = make_trial(12, n=1000, prevalence=0.0)
        with pytest.raises(ValueError, match=">= 2"):
            run_analysis(data, "true")

    def test_observed_converges_to_true_when_missing_vanishes(self):
        # near-complete ascertainment: observed moments match true moments
        # within Monte Carlo error of the case sample
        data = make_trial(13, n=50_000, prevalence=0.1,
                          ascertainment_targets=(0.9999, 0.9999))
        t = run_analysis(data, "true")
        o = run_analysis(data, "observed")
        se = 1.0 / math.sqrt(data.n_true_cases)
        assert abs(o.auc1 - t.auc1) < 3 * se
        assert abs(o.auc2 - t.auc2) < 3 * se


class TestNullCalibration:
    def test_true_analysis_rejection_rate_near_nominal(self):
        # paired variance: the true analysis must reject at most ~nominal
        # rate; the spec range [0.03, 0.07] at alpha 0.05
        mu = math.sqrt(2.0) * std_normal_quantile(0.78)
        case = BivNormParams(mu, mu, 1.0, 1.0, 0.5)
        noncase = BivNormParams(0.0, 0.0, 1.0, 1.0, 0.5)
        config = ScenarioConfig(
            n=4000, prevalence=0.1, signs_rate=0.1,
            case_params=case, noncase_params=noncase,
            ascertainment_targets=(0.9, 0.9), reps=1, seed=0,
        )
        reps = 10_000
        rejects = 0
        for r in range(reps):
            rng = np.random.default_rng(np.random.SeedSequence(entropy=5150, spawn_key=(0, r)))
            data = draw_trial(config, rng)
            rejects += run_analysis(data, "true").reject
        rate = rejects / reps
        assert rate <= 0.07
        assert 0.03 <= rate, f"true-analysis rejection rate {rate} below the plausible band"
