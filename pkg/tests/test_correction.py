"""Tests for the case-distribution bias correction pipeline."""

import math

import numpy as np
import pytest

from pairedscreen.correction import (
    CasePartition,
    CorrectionUnavailableError,
    correct_case_distribution,
    lambda_hat,
    nath_mle,
    partition_cases,
    quadrant_rects,
    quadrant_sample_stats,
    select_best_fit,
    weighted_correction,
)
from pairedscreen.gaussian import BivNormParams, Rect, bvn_cdf, full_bvn_loglik
from pairedscreen.simulate import ScenarioConfig, draw_trial

INF = math.inf

CASE = BivNormParams(1.0448, 0.7826, 1.0, 1.0, 0.3)
NONCASE = BivNormParams(0.0, 0.0, 1.0, 1.0, 0.3)


def make_trial(seed=0, **overrides):
    base = dict(
        n=20_000,
        prevalence=0.1,
        signs_rate=0.1,
        case_params=CASE,
        noncase_params=NONCASE,
        ascertainment_targets=(0.15, 0.5),
        reps=1,
        seed=seed,
    )
    base.update(overrides)
    config = ScenarioConfig(**base)
    return draw_trial(config, np.random.default_rng(seed))


def sample_truncated(params, rect, size, rng):
    cov = [
        [params.var1, params.rho * params.sd1 * params.sd2],
        [params.rho * params.sd1 * params.sd2, params.var2],
    ]
    out = []
    need = size
    while need > 0:
        raw = rng.multivariate_normal([params.mu1, params.mu2], cov, size=max(2000, 4 * need))
        keep = raw[rect.contains(raw[:, 0], raw[:, 1])]
        out.append(keep[:need])
        need -= len(keep[:need])
    return np.vstack(out)


class TestPartitionCases:
    def test_counts_identity(self):
        data = make_trial(1)
        part = partition_cases(data)
        assert part.n_observed == data.n_observed_cases
        assert part.set_a.shape[0] + part.set_b.shape[0] == part.n_observed
        assert sum(q.shape[0] for q in part.quadrants) == part.n_observed

    def test_set_a_is_first_three_quadrants(self):
        part = partition_cases(make_trial(2))
        assert part.set_a.shape[0] == sum(q.shape[0] for q in part.quadrants[:3])
        assert part.set_b.shape[0] == part.quadrants[3].shape[0]

    def test_quadrant_membership(self):
        data = make_trial(3)
        part = partition_cases(data)
        a1, a2 = part.thresholds
        q1, q2, q3, q4 = part.quadrants
        assert np.all((q1[:, 0] >= a1) & (q1[:, 1] >= a2))
        assert np.all((q2[:, 0] >= a1) & (q2[:, 1] < a2))
        assert np.all((q3[:, 0] < a1) & (q3[:, 1] >= a2))
        assert np.all((q4[:, 0] < a1) & (q4[:, 1] < a2))

    def test_all_screen_detected_leaves_set_b_empty(self):
        data = make_trial(4, signs_rate=0.0)
        part = partition_cases(data)
        assert part.set_b.shape[0] == 0

    def test_no_observed_cases(self):
        data = make_trial(5, prevalence=0.0)
        with pytest.raises(CorrectionUnavailableError):
            partition_cases(data)


class TestQuadrantSampleStats:
    def test_two_point_example(self):
        stats = quadrant_sample_stats(np.array([[0.0, 0.0], [2.0, 2.0]]))
        assert stats.mean1 == pytest.approx(1.0)
        assert stats.mean2 == pytest.approx(1.0)
        assert stats.sd1 == pytest.approx(math.sqrt(2.0))
        assert stats.sd2 == pytest.approx(math.sqrt(2.0))
        assert stats.corr == pytest.approx(1.0)

    def test_identical_points_degenerate(self):
        stats = quadrant_sample_stats(np.array([[1.0, 1.0], [1.0, 1.0]]))
        assert stats.degenerate
        assert stats.corr == 0.0

    def test_matches_textbook_formulas(self):
        rng = np.random.default_rng(10)
        pts = rng.normal(size=(100, 2))
        stats = quadrant_sample_stats(pts)
        assert stats.mean1 == pytest.approx(pts[:, 0].mean())
        assert stats.sd2 == pytest.approx(pts[:, 1].std(ddof=1))
        assert stats.corr == pytest.approx(np.corrcoef(pts[:, 0], pts[:, 1])[0, 1])

    def test_requires_two_points(self):
        with pytest.raises(ValueError):
            quadrant_sample_stats(np.array([[1.0, 2.0]]))


class TestNathMLE:
    def test_plane_reduces_to_closed_form(self):
        rng = np.random.default_rng(21)
        data = rng.multivariate_normal([2.0, -1.0], [[1.5, -0.5], [-0.5, 0.8]], size=400)
        fit = nath_mle(data, Rect.plane(), BivNormParams(0, 0, 1, 1, 0))
        m = data.mean(axis=0)
        v = data.var(axis=0, ddof=0)
        r = np.mean((data[:, 0] - m[0]) * (data[:, 1] - m[1])) / math.sqrt(v[0] * v[1])
        assert fit.converged
        assert fit.params.mu1 == pytest.approx(m[0], abs=1e-6)
        assert fit.params.mu2 == pytest.approx(m[1], abs=1e-6)
        assert fit.params.var1 == pytest.approx(v[0], abs=1e-6)
        assert fit.params.var2 == pytest.approx(v[1], abs=1e-6)
        assert fit.params.rho == pytest.approx(r, abs=1e-6)

    def test_recovery_from_truncated_samples(self):
        # simulation oracle: average the estimator over independent draws and
        # compare to truth within 3 empirical standard errors of that mean
        true = BivNormParams(1.0, 0.5, 1.2, 0.8, 0.4)
        rect = Rect(1.0, INF, 0.5, INF)
        rng = np.random.default_rng(33)
        reps = 15
        ests = []
        for _ in range(reps):
            pts = sample_truncated(true, rect, 3000, rng)
            stats = quadrant_sample_stats(pts)
            start = BivNormParams(stats.mean1, stats.mean2, stats.sd1**2, stats.sd2**2,
                                  max(-0.999, min(0.999, stats.corr)))
            fit = nath_mle(pts, rect, start)
            assert fit.converged
            ests.append(fit.params.as_tuple())
        ests = np.array(ests)
        truth = np.array(true.as_tuple())
        se_mean = ests.std(axis=0, ddof=1) / math.sqrt(reps)
        assert np.all(np.abs(ests.mean(axis=0) - truth) < 3 * se_mean + 0.02)

    def test_translation_equivariance(self):
        rng = np.random.default_rng(5)
        true = BivNormParams(0.0, 0.0, 1.0, 1.0, 0.2)
        rect = Rect(0.0, INF, 0.0, INF)
        pts = sample_truncated(true, rect, 300, rng)
        stats = quadrant_sample_stats(pts)
        start = BivNormParams(stats.mean1, stats.mean2, stats.sd1**2, stats.sd2**2, stats.corr)
        fit = nath_mle(pts, rect, start)

        shift = np.array([3.0, -2.0])
        rect_s = Rect(3.0, INF, -2.0, INF)
        start_s = BivNormParams(start.mu1 + 3.0, start.mu2 - 2.0, start.var1, start.var2, start.rho)
        fit_s = nath_mle(pts + shift, rect_s, start_s)
        assert fit_s.params.mu1 == pytest.approx(fit.params.mu1 + 3.0, abs=1e-5)
        assert fit_s.params.mu2 == pytest.approx(fit.params.mu2 - 2.0, abs=1e-5)
        assert fit_s.params.var1 == pytest.approx(fit.params.var1, abs=1e-5)
        assert fit_s.params.var2 == pytest.approx(fit.params.var2, abs=1e-5)
        assert fit_s.params.rho == pytest.approx(fit.params.rho, abs=1e-5)

    def test_monotone_likelihood_trace(self):
        rng = np.random.default_rng(8)
        true = BivNormParams(0.5, 0.5, 1.0, 1.0, 0.3)
        rect = Rect(0.5, INF, -INF, 0.5)
        pts = sample_truncated(true, rect, 500, rng)
        stats = quadrant_sample_stats(pts)
        start = BivNormParams(stats.mean1, stats.mean2, stats.sd1**2, stats.sd2**2, stats.corr)
        trace = []
        nath_mle(pts, rect, start, trace=trace)
        assert len(trace) >= 2
        diffs = np.diff(np.array(trace))
        assert np.all(diffs >= -1e-7 * np.maximum(1.0, np.abs(np.array(trace)[:-1])))

    def test_requires_points_inside_rect(self):
        with pytest.raises(ValueError, match="inside"):
            nath_mle(
                np.array([[0.0, 0.0], [1.0, 1.0]]),
                Rect(0.5, INF, -INF, INF),
                BivNormParams(0, 0, 1, 1, 0),
            )


class TestSelectBestFit:
    def test_single_fit_returned(self):
        pts = np.random.default_rng(0).normal(size=(50, 2))
        fit = nath_mle(pts, Rect.plane(), BivNormParams(0, 0, 1, 1, 0), quadrant=2)
        best = select_best_fit([fit], pts)
        assert best is fit

    def test_higher_likelihood_wins(self):
        rng = np.random.default_rng(1)
        pts = rng.normal(size=(200, 2))
        good = nath_mle(pts, Rect.plane(), BivNormParams(0, 0, 1, 1, 0), quadrant=1)
        bad = nath_mle(pts + 5.0, Rect.plane(), BivNormParams(5, 5, 1, 1, 0), quadrant=2)
        best = select_best_fit([bad, good], pts)
        assert best.quadrant == 1

    def test_selected_dominates_all(self):
        data = make_trial(6)
        from pairedscreen.correction import CorrectedParams  # noqa: F401
        part = partition_cases(data)
        rects = quadrant_rects(*part.thresholds)
        fits = []
        for idx, (pts, rect) in enumerate(zip(part.quadrants, rects), start=1):
            if pts.shape[0] < 2:
                continue
            stats = quadrant_sample_stats(pts)
            if stats.degenerate:
                continue
            start = BivNormParams(stats.mean1, stats.mean2, stats.sd1**2, stats.sd2**2,
                                  max(-0.999, min(0.999, stats.corr)))
            fits.append(nath_mle(pts, rect, start, quadrant=idx))
        observed = np.vstack([part.set_a, part.set_b])
        best = select_best_fit(fits, observed)
        for fit in fits:
            assert best.full_loglik >= full_bvn_loglik(fit.params, observed) - 1e-9

    def test_no_fits(self):
        with pytest.raises(CorrectionUnavailableError):
            select_best_fit([], np.zeros((2, 2)))


class TestLambdaHat:
    def test_everyone_screens_positive(self):
        assert lambda_hat(CASE, -INF, -INF) == pytest.approx(1.0)

    def test_thresholds_at_means_independent(self):
        params = BivNormParams(1.0, 2.0, 4.0, 9.0, 0.0)
        assert lambda_hat(params, 1.0, 2.0) == pytest.approx(0.75, abs=1e-12)

    def test_matches_bvn_cdf(self):
        a1, a2 = 4.7638, -1.0982
        z1 = (a1 - CASE.mu1) / CASE.sd1
        z2 = (a2 - CASE.mu2) / CASE.sd2
        expected = 1.0 - bvn_cdf(z1, z2, CASE.rho)
        assert lambda_hat(CASE, a1, a2) == pytest.approx(expected, abs=1e-12)


def partition_from_sets(set_a, set_b, thresholds=(0.0, 0.0)):
    set_a = np.asarray(set_a, dtype=float).reshape(-1, 2)
    set_b = np.asarray(set_b, dtype=float).reshape(-1, 2)
    return CasePartition(set_a=set_a, set_b=set_b, quadrants=[set_a, set_a[:0], set_a[:0], set_b],
                         thresholds=thresholds)


class TestWeightedCorrection:
    def test_lambda_one_gives_set_a_moments(self):
        rng = np.random.default_rng(3)
        set_a = rng.normal(size=(80, 2))
        set_b = rng.normal(size=(10, 2)) + 3.0
        part = partition_from_sets(set_a, set_b)
        out = weighted_correction(part, CASE, 1.0)
        assert out.weighting_applied
        m = set_a.mean(axis=0)
        v = set_a.var(axis=0, ddof=0)
        assert out.weighted.mu1 == pytest.approx(m[0], abs=1e-12)
        assert out.weighted.var2 == pytest.approx(v[1], abs=1e-12)

    def test_identical_moments_are_preserved(self):
        rng = np.random.default_rng(4)
        pts = rng.normal(size=(60, 2))
        part = partition_from_sets(pts, pts.copy())
        for lam in (0.1, 0.5, 0.9):
            out = weighted_correction(part, CASE, lam)
            assert out.weighted.mu1 == pytest.approx(pts[:, 0].mean(), abs=1e-12)
            assert out.weighted.var1 == pytest.approx(pts[:, 0].var(ddof=0), abs=1e-10)

    def test_mixture_moment_oracle_exact(self):
        # brute-force oracle: tile set A and set B so their weights are
        # exactly lambda and 1-lambda, then take pooled population moments
        rng = np.random.default_rng(5)
        set_a = rng.normal(size=(40, 2)) + [1.0, 0.5]
        set_b = rng.normal(size=(30, 2)) * 0.5
        ka, kb = 3, 4
        lam = ka * 40 / (ka * 40 + kb * 30)
        pooled = np.vstack([np.tile(set_a, (ka, 1)), np.tile(set_b, (kb, 1))])
        part = partition_from_sets(set_a, set_b)
        out = weighted_correction(part, CASE, lam)
        m = pooled.mean(axis=0)
        v = pooled.var(axis=0, ddof=0)
        r = np.mean((pooled[:, 0] - m[0]) * (pooled[:, 1] - m[1])) / math.sqrt(v[0] * v[1])
        assert out.weighted.mu1 == pytest.approx(m[0], abs=1e-10)
        assert out.weighted.mu2 == pytest.approx(m[1], abs=1e-10)
        assert out.weighted.var1 == pytest.approx(v[0], abs=1e-10)
        assert out.weighted.var2 == pytest.approx(v[1], abs=1e-10)
        assert out.weighted.rho == pytest.approx(r, abs=1e-10)

    def test_variance_identity(self):
        rng = np.random.default_rng(6)
        part = partition_from_sets(rng.normal(size=(25, 2)), rng.normal(size=(25, 2)) + 1)
        out = weighted_correction(part, CASE, 0.7)
        assert out.moments is not None
        assert out.weighted.var1 + out.weighted.mu1**2 == pytest.approx(
            out.moments.g1 + out.moments.h1, abs=1e-12
        )
        assert out.weighted.var2 + out.weighted.mu2**2 == pytest.approx(
            out.moments.g2 + out.moments.h2, abs=1e-12
        )

    @pytest.mark.parametrize("na,nb,applied", [(0, 5, False), (1, 5, False), (5, 0, False),
                                               (5, 1, False), (2, 2, True), (5, 5, True)])
    def test_fallback_thresholds_exact(self, na, nb, applied):
        rng = np.random.default_rng(7)
        part = partition_from_sets(rng.normal(size=(na, 2)), rng.normal(size=(nb, 2)))
        out = weighted_correction(part, CASE, 0.5)
        assert out.weighting_applied == applied
        if not applied:
            assert out.weighted == CASE
            assert any("Nath" in w for w in out.warnings)

    def test_collinear_sets_clamp_correlation(self):
        set_a = np.array([[0.0, 0.0], [1.0, 1.0]])
        set_b = np.array([[2.0, 2.0], [3.0, 3.0]])
        out = weighted_correction(partition_from_sets(set_a, set_b), CASE, 0.5)
        assert abs(out.weighted.rho) < 1.0
        assert any("clamped" in w for w in out.warnings)


class TestCorrectCaseDistribution:
    def test_empty_set_b_falls_back_to_nath(self):
        data = make_trial(8, signs_rate=0.0)
        out = correct_case_distribution(data)
        assert not out.weighting_applied
        assert out.weighted == out.nath

    def test_large_unbiased_trial_recovers_truth(self):
        # equal high ascertainment on both tests: observed cases nearly
        # complete, so corrected estimates should sit close to the truth
        data = make_trial(9, n=50_000, prevalence=0.2,
                          ascertainment_targets=(0.9, 0.9))
        out = correct_case_distribution(data)
        m = data.n_true_cases
        assert abs(out.weighted.mu1 - CASE.mu1) < 4.0 / math.sqrt(m)
        assert abs(out.weighted.mu2 - CASE.mu2) < 4.0 / math.sqrt(m)
        assert abs(out.weighted.var1 - 1.0) < 4.0 * math.sqrt(2.0 / m)
        assert abs(out.weighted.rho - 0.3) < 4.0 / math.sqrt(m)

    def test_lambda_in_unit_interval(self):
        out = correct_case_distribution(make_trial(10))
        assert 0.0 <= out.lambda_hat <= 1.0

    def test_small_sample_warnings(self):
        data = make_trial(11, n=3000, prevalence=0.02)
        out = correct_case_distribution(data)
        assert any("small sample" in w for w in out.warnings)

    def test_unavailable_when_all_quadrants_sparse(self):
        # two observed cases in different quadrants: no quadrant reaches the
        # two-point minimum, so no fit exists anywhere
        import pairedscreen.simulate as sim
        a1, a2 = 1.0, 1.0
        x = np.array([[2.0, 2.0], [2.0, 0.0]])  # one in Q1, one in Q2
        tiny = sim.TrialDataset(
            x1=x[:, 0], x2=x[:, 1],
            true_status=np.ones(2, dtype=np.uint8),
            signs=np.zeros(2, dtype=bool),
            observed_status=np.ones(2, dtype=np.uint8),
            case_class=np.full(2, sim.SCREEN_DETECTED, dtype=np.uint8),
            thresholds=(a1, a2),
        )
        with pytest.raises(CorrectionUnavailableError):
            correct_case_distribution(tiny)

    def test_end_to_end_bias_reduction(self):
        # in a strongly biased design the corrected means must sit closer to
        # the truth, on average, than the observed-case sample means
        reps = 60
        obs_err = []
        corr_err = []
        config = ScenarioConfig(
            n=20_000, prevalence=0.05, signs_rate=0.1,
            case_params=CASE, noncase_params=NONCASE,
            ascertainment_targets=(0.15, 0.5), reps=1, seed=0,
        )
        for rep in range(reps):
            data = draw_trial(config, np.random.default_rng(1000 + rep))
            out = correct_case_distribution(data)
            observed = data.observed_case_scores()
            obs_err.append(observed[:, 1].mean() - CASE.mu2)
            corr_err.append(out.weighted.mu2 - CASE.mu2)
        assert abs(np.mean(corr_err)) < abs(np.mean(obs_err))
