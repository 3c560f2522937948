"""Bias correction for the case score distribution.

Observed cases are partitioned by threshold quadrant; the bivariate normal
parameters are estimated by maximum likelihood on each quadrant's truncated
sample space; the best fit (by full-data Gaussian likelihood) provides a
sampling fraction that weights screen-positive and interval moments back
into estimates for the complete, partially unobserved case population.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy.optimize import minimize

from .gaussian import (
    BivNormParams,
    DegenerateRegionError,
    Rect,
    _bvn_dplus,
    _bvn_pdf_std,
    bvn_cdf,
    full_bvn_loglik,
    std_normal_pdf,
)
from .simulate import TrialDataset

__all__ = [
    "CorrectionUnavailableError",
    "CasePartition",
    "SampleStats",
    "QuadrantFit",
    "WeightedMoments",
    "CorrectedParams",
    "partition_cases",
    "partition_scores",
    "quadrant_sample_stats",
    "nath_mle",
    "select_best_fit",
    "lambda_hat",
    "weighted_correction",
    "correct_case_distribution",
    "correct_from_partition",
]

_RHO_START_CLAMP = 1.0 - 1e-6
_RHO_RESULT_CLAMP = 1.0 - 1e-9
_PENALTY = 1e12

SMALL_CASE_COUNT = 500
SMALL_INTERVAL_COUNT = 5


class CorrectionUnavailableError(RuntimeError):
    """No corrected estimate can be produced; fall back to the observed analysis."""


@dataclass
class CasePartition:
    """Observed cases split by referral geometry.

    ``set_a`` holds cases with at least one score at or above its threshold,
    ``set_b`` the interval cases; ``quadrants[l]`` is quadrant l+1 of the
    thresholds (1: both above, 2: test 1 only, 3: test 2 only, 4: both below).
    """

    set_a: np.ndarray
    set_b: np.ndarray
    quadrants: List[np.ndarray]
    thresholds: tuple

    @property
    def n_observed(self) -> int:
        return self.set_a.shape[0] + self.set_b.shape[0]


@dataclass(frozen=True)
class SampleStats:
    mean1: float
    mean2: float
    sd1: float
    sd2: float
    corr: float
    degenerate: bool = False


@dataclass
class QuadrantFit:
    quadrant: int
    params: BivNormParams
    converged: bool
    n_points: int
    truncated_loglik: float
    full_loglik: Optional[float] = None


@dataclass(frozen=True)
class WeightedMoments:
    """Mixture second-moment components of the weighted reconstruction."""

    g1: float
    g2: float
    h1: float
    h2: float
    p: float
    q: float


@dataclass
class CorrectedParams:
    lambda_hat: float
    nath: BivNormParams
    weighted: BivNormParams
    weighting_applied: bool
    moments: Optional[WeightedMoments] = None
    warnings: List[str] = field(default_factory=list)


def quadrant_rects(a1: float, a2: float) -> List[Rect]:
    inf = math.inf
    return [
        Rect(a1, inf, a2, inf),
        Rect(a1, inf, -inf, a2),
        Rect(-inf, a1, a2, inf),
        Rect(-inf, a1, -inf, a2),
    ]


def partition_cases(data: TrialDataset) -> CasePartition:
    """Split observed cases into referral sets and threshold quadrants."""
    a1, a2 = data.thresholds
    return partition_scores(data.observed_case_scores(), a1, a2)


def partition_scores(scores: np.ndarray, a1: float, a2: float) -> CasePartition:
    """Partition observed-case score pairs directly."""
    scores = np.asarray(scores, dtype=float).reshape(-1, 2)
    if scores.shape[0] == 0:
        raise CorrectionUnavailableError("no observed cases to partition")
    above1 = scores[:, 0] >= a1
    above2 = scores[:, 1] >= a2
    set_a = scores[above1 | above2]
    set_b = scores[~above1 & ~above2]
    quadrants = [
        scores[above1 & above2],
        scores[above1 & ~above2],
        scores[~above1 & above2],
        scores[~above1 & ~above2],
    ]
    return CasePartition(set_a=set_a, set_b=set_b, quadrants=quadrants,
                         thresholds=(a1, a2))


def quadrant_sample_stats(points: np.ndarray) -> SampleStats:
    """Sample means, SDs (n-1), and Pearson correlation of score pairs."""
    points = np.asarray(points, dtype=float)
    if points.shape[0] < 2:
        raise ValueError("sample statistics require at least 2 points")
    mean1, mean2 = points.mean(axis=0)
    sd1, sd2 = points.std(axis=0, ddof=1)
    if sd1 == 0.0 or sd2 == 0.0:
        return SampleStats(mean1, mean2, sd1, sd2, 0.0, degenerate=True)
    corr = float(np.corrcoef(points[:, 0], points[:, 1])[0, 1])
    if not math.isfinite(corr):
        return SampleStats(mean1, mean2, sd1, sd2, 0.0, degenerate=True)
    corr = max(-1.0, min(1.0, corr))
    return SampleStats(float(mean1), float(mean2), float(sd1), float(sd2), corr)


def _pack(params: BivNormParams) -> np.ndarray:
    return np.array([
        params.mu1,
        params.mu2,
        math.log(params.sd1),
        math.log(params.sd2),
        math.atanh(params.rho),
    ])


def _unpack(theta: np.ndarray) -> tuple:
    mu1, mu2, t1, t2, w = theta
    t1 = min(max(t1, -30.0), 30.0)
    t2 = min(max(t2, -30.0), 30.0)
    w = min(max(w, -18.0), 18.0)
    return mu1, mu2, math.exp(t1), math.exp(t2), math.tanh(w)


def _corner_grid(rect: Rect) -> List[tuple]:
    # (sign, bound1, bound2) for inclusion-exclusion over rectangle corners
    return [
        (1.0, rect.hi1, rect.hi2),
        (-1.0, rect.lo1, rect.hi2),
        (-1.0, rect.hi1, rect.lo2),
        (1.0, rect.lo1, rect.lo2),
    ]


def _neg_loglik_and_grad(theta, stats, corners, n):
    """Negative truncated log-likelihood and gradient from sufficient stats.

    ``stats`` is (sx, sy, sxx, syy, sxy); the data enter only through these
    sums, so each evaluation costs O(1) regardless of sample size.
    """
    sx, sy, sxx, syy, sxy = stats
    mu1, mu2, s1, s2, rho = _unpack(theta)
    omr2 = 1.0 - rho * rho

    s11 = sxx - 2.0 * mu1 * sx + n * mu1 * mu1
    s22 = syy - 2.0 * mu2 * sy + n * mu2 * mu2
    s12 = sxy - mu1 * sy - mu2 * sx + n * mu1 * mu2
    q = s11 / (s1 * s1) - 2.0 * rho * s12 / (s1 * s2) + s22 / (s2 * s2)

    # rectangle mass and its derivatives via the four corners
    p = 0.0
    dp_dmu1 = dp_dmu2 = dp_ds1 = dp_ds2 = dp_drho = 0.0
    for sign, b1, b2 in corners:
        z1 = (b1 - mu1) / s1 if math.isfinite(b1) else math.copysign(math.inf, b1)
        z2 = (b2 - mu2) / s2 if math.isfinite(b2) else math.copysign(math.inf, b2)
        p += sign * bvn_cdf(z1, z2, rho)
        d1 = _bvn_dplus(z1, z2, rho)
        d2 = _bvn_dplus(z2, z1, rho)
        if d1 != 0.0:
            dp_dmu1 += sign * d1 * (-1.0 / s1)
            dp_ds1 += sign * d1 * (-z1 / s1)
        if d2 != 0.0:
            dp_dmu2 += sign * d2 * (-1.0 / s2)
            dp_ds2 += sign * d2 * (-z2 / s2)
        pdf = _bvn_pdf_std(z1, z2, rho)
        if pdf != 0.0:
            dp_drho += sign * pdf

    if not (p > 1e-280) or not math.isfinite(q):
        return _PENALTY, np.zeros(5)

    loglik = (
        -n * (math.log(2.0 * math.pi) + math.log(s1) + math.log(s2) + 0.5 * math.log(omr2))
        - q / (2.0 * omr2)
        - n * math.log(p)
    )

    dx = sx - n * mu1
    dy = sy - n * mu2
    dq_dmu1 = -2.0 * dx / (s1 * s1) + 2.0 * rho * dy / (s1 * s2)
    dq_dmu2 = -2.0 * dy / (s2 * s2) + 2.0 * rho * dx / (s1 * s2)
    dq_ds1 = -2.0 * s11 / (s1 ** 3) + 2.0 * rho * s12 / (s1 * s1 * s2)
    dq_ds2 = -2.0 * s22 / (s2 ** 3) + 2.0 * rho * s12 / (s1 * s2 * s2)
    dq_drho = -2.0 * s12 / (s1 * s2)

    inv2 = 1.0 / (2.0 * omr2)
    dl_dmu1 = -dq_dmu1 * inv2 - n * dp_dmu1 / p
    dl_dmu2 = -dq_dmu2 * inv2 - n * dp_dmu2 / p
    dl_ds1 = -n / s1 - dq_ds1 * inv2 - n * dp_ds1 / p
    dl_ds2 = -n / s2 - dq_ds2 * inv2 - n * dp_ds2 / p
    dl_drho = (
        n * rho / omr2
        - dq_drho * inv2
        - rho * q / (omr2 * omr2)
        - n * dp_drho / p
    )

    grad = np.array([
        dl_dmu1,
        dl_dmu2,
        dl_ds1 * s1,          # d/d log(s1)
        dl_ds2 * s2,
        dl_drho * omr2,       # d/d atanh(rho)
    ])
    return -loglik, -grad


def nath_mle(
    points: np.ndarray,
    rect: Rect,
    start: BivNormParams,
    max_iter: int = 500,
    tol: float = 1e-8,
    quadrant: int = 0,
    trace: Optional[list] = None,
) -> QuadrantFit:
    """Maximize the truncated bivariate normal likelihood over a rectangle.

    Works in (mu, log sd, atanh rho) coordinates so every iterate satisfies
    the parameter constraints. Raises DegenerateRegionError if the optimizer
    cannot keep the rectangle mass away from zero.
    """
    points = np.asarray(points, dtype=float)
    n = points.shape[0]
    if n < 2:
        raise ValueError("nath_mle requires at least 2 points")
    if not bool(np.all(rect.contains(points[:, 0], points[:, 1]))):
        raise ValueError("all points must lie inside the truncation rectangle")

    stats = (
        float(points[:, 0].sum()),
        float(points[:, 1].sum()),
        float((points[:, 0] ** 2).sum()),
        float((points[:, 1] ** 2).sum()),
        float((points[:, 0] * points[:, 1]).sum()),
    )
    corners = _corner_grid(rect)
    x0 = _pack(start)

    callback = None
    if trace is not None:
        trace.append(-_neg_loglik_and_grad(x0, stats, corners, n)[0])
        callback = lambda xk: trace.append(-_neg_loglik_and_grad(xk, stats, corners, n)[0])

    res = minimize(
        _neg_loglik_and_grad,
        x0,
        args=(stats, corners, n),
        method="L-BFGS-B",
        jac=True,
        callback=callback,
        options=dict(maxiter=max_iter, ftol=tol, gtol=1e-9, maxfun=4 * max_iter),
    )
    if res.fun >= _PENALTY:
        raise DegenerateRegionError(
            f"truncated likelihood degenerate on {rect} for quadrant {quadrant}"
        )
    mu1, mu2, s1, s2, rho = _unpack(res.x)
    rho = max(-_RHO_RESULT_CLAMP, min(_RHO_RESULT_CLAMP, rho))
    params = BivNormParams(mu1, mu2, s1 * s1, s2 * s2, rho)
    return QuadrantFit(
        quadrant=quadrant,
        params=params,
        converged=bool(res.success),
        n_points=n,
        truncated_loglik=float(-res.fun),
    )


def select_best_fit(fits: List[QuadrantFit], observed_cases: np.ndarray) -> QuadrantFit:
    """Pick the quadrant fit whose parameters best explain all observed cases.

    Ranks by untruncated Gaussian log-likelihood over the full observed-case
    sample; non-converged fits only compete when nothing converged. Ties go
    to the lowest quadrant id.
    """
    if not fits:
        raise CorrectionUnavailableError("no eligible quadrant fits")
    eligible = [f for f in fits if f.converged]
    if not eligible:
        eligible = fits
    for f in eligible:
        f.full_loglik = full_bvn_loglik(f.params, observed_cases)
    best = min(eligible, key=lambda f: (-f.full_loglik, f.quadrant))
    return best


def lambda_hat(nath: BivNormParams, a1: float, a2: float) -> float:
    """Estimated probability that a case scores above at least one threshold."""
    z1 = (a1 - nath.mu1) / nath.sd1 if math.isfinite(a1) else a1
    z2 = (a2 - nath.mu2) / nath.sd2 if math.isfinite(a2) else a2
    lam = 1.0 - bvn_cdf(z1, z2, nath.rho)
    return min(1.0, max(0.0, lam))


def _moment_components(points: np.ndarray) -> tuple:
    # means plus population-denominator second moments, so that
    # E[X^2] = mean^2 + var holds exactly in the mixture identities
    m1, m2 = points.mean(axis=0)
    v1, v2 = points.var(axis=0, ddof=0)
    cov = float(np.mean((points[:, 0] - m1) * (points[:, 1] - m2)))
    return float(m1), float(m2), float(v1), float(v2), cov


def weighted_correction(
    partition: CasePartition, nath: BivNormParams, lam: float
) -> CorrectedParams:
    """Blend screen-positive and interval moments by the sampling fraction.

    The corrected mean is the lambda-weighted mixture of the set means; the
    corrected variances and covariance come from the mixture second moments;
    the corrected correlation is the mixture covariance over the product of
    corrected standard deviations. With fewer than two points in either set
    the Nath estimates stand in unchanged.
    """
    warnings: List[str] = []
    n_a = partition.set_a.shape[0]
    n_b = partition.set_b.shape[0]
    if n_a < 2 or n_b < 2:
        warnings.append(
            f"weighting skipped: set sizes A={n_a}, B={n_b} below 2; using Nath estimates"
        )
        return CorrectedParams(
            lambda_hat=lam,
            nath=nath,
            weighted=nath,
            weighting_applied=False,
            warnings=warnings,
        )

    a1, a2, va1, va2, cov_a = _moment_components(partition.set_a)
    b1, b2, vb1, vb2, cov_b = _moment_components(partition.set_b)

    mu1 = lam * a1 + (1.0 - lam) * b1
    mu2 = lam * a2 + (1.0 - lam) * b2
    g1 = lam * (a1 * a1 + va1)
    g2 = lam * (a2 * a2 + va2)
    h1 = (1.0 - lam) * (b1 * b1 + vb1)
    h2 = (1.0 - lam) * (b2 * b2 + vb2)
    p = lam * a1 * a2 + lam * cov_a
    q = (1.0 - lam) * b1 * b2 + (1.0 - lam) * cov_b
    moments = WeightedMoments(g1=g1, g2=g2, h1=h1, h2=h2, p=p, q=q)

    var1 = g1 + h1 - mu1 * mu1
    var2 = g2 + h2 - mu2 * mu2
    if var1 <= 0.0 or var2 <= 0.0:
        warnings.append(
            f"non-positive weighted variance ({var1:.3g}, {var2:.3g}); using Nath estimates"
        )
        return CorrectedParams(
            lambda_hat=lam,
            nath=nath,
            weighted=nath,
            weighting_applied=False,
            moments=moments,
            warnings=warnings,
        )

    cov = p + q - mu1 * mu2
    rho = cov / math.sqrt(var1 * var2)
    if abs(rho) >= 1.0:
        warnings.append(f"weighted correlation {rho:.6f} clamped to unit interval")
        rho = max(-_RHO_RESULT_CLAMP, min(_RHO_RESULT_CLAMP, rho))

    weighted = BivNormParams(mu1, mu2, var1, var2, rho)
    return CorrectedParams(
        lambda_hat=lam,
        nath=nath,
        weighted=weighted,
        weighting_applied=True,
        moments=moments,
        warnings=warnings,
    )


def correct_case_distribution(
    data: TrialDataset, max_iter: int = 500, tol: float = 1e-8
) -> CorrectedParams:
    """Full correction pipeline for one trial dataset.

    Partition observed cases, fit each populated quadrant, select the fit
    maximizing the full-data Gaussian likelihood, estimate the sampling
    fraction, and weight the set moments. Raises CorrectionUnavailableError
    when no quadrant supports a fit; callers degrade to the observed
    analysis.
    """
    return correct_from_partition(partition_cases(data), max_iter=max_iter, tol=tol)


def correct_from_partition(
    partition: CasePartition, max_iter: int = 500, tol: float = 1e-8
) -> CorrectedParams:
    """Correction pipeline starting from an existing case partition."""
    if partition.n_observed < 2:
        raise CorrectionUnavailableError("fewer than 2 observed cases")

    a1, a2 = partition.thresholds
    rects = quadrant_rects(a1, a2)
    warnings: List[str] = []
    fits: List[QuadrantFit] = []
    for idx, (points, rect) in enumerate(zip(partition.quadrants, rects), start=1):
        if points.shape[0] < 2:
            continue
        stats = quadrant_sample_stats(points)
        if stats.degenerate or stats.sd1 == 0.0 or stats.sd2 == 0.0:
            warnings.append(f"quadrant {idx} skipped: degenerate sample statistics")
            continue
        start_rho = max(-_RHO_START_CLAMP, min(_RHO_START_CLAMP, stats.corr))
        start = BivNormParams(
            stats.mean1, stats.mean2, stats.sd1 ** 2, stats.sd2 ** 2, start_rho
        )
        try:
            fit = nath_mle(points, rect, start, max_iter=max_iter, tol=tol, quadrant=idx)
        except DegenerateRegionError:
            warnings.append(f"quadrant {idx} skipped: degenerate truncation region")
            continue
        if not fit.converged:
            warnings.append(f"quadrant {idx} fit did not converge")
        fits.append(fit)

    if not fits:
        raise CorrectionUnavailableError("no quadrant produced a usable fit")
    if all(not f.converged for f in fits):
        warnings.append("no quadrant fit converged; using best-effort estimates")

    observed = np.vstack([partition.set_a, partition.set_b])
    best = select_best_fit(fits, observed)
    lam = lambda_hat(best.params, a1, a2)
    corrected = weighted_correction(partition, best.params, lam)
    corrected.warnings = warnings + corrected.warnings

    if partition.n_observed < SMALL_CASE_COUNT:
        corrected.warnings.append(
            f"small sample: {partition.n_observed} observed cases (< {SMALL_CASE_COUNT})"
        )
    n_interval = partition.set_b.shape[0]
    if n_interval < SMALL_INTERVAL_COUNT:
        corrected.warnings.append(
            f"small sample: {n_interval} interval cases (< {SMALL_INTERVAL_COUNT})"
        )
    return corrected
