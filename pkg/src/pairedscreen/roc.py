"""Binormal ROC comparison of two paired screening tests.

All three analyses (true, observed, corrected) plug class-conditional
moments into the binormal AUC formula and test the AUC difference with a
two-sided z-test. The variance of the paired difference is the delta-method
variance in the binormal (a, b) parameterization with cross-test covariance
terms from the paired design.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .correction import CorrectedParams, CorrectionUnavailableError, correct_case_distribution
from .gaussian import std_normal_cdf, std_normal_pdf, std_normal_quantile
from .simulate import TrialDataset

__all__ = [
    "BinormalMoments",
    "AnalysisResult",
    "binormal_auc",
    "binormal_roc_point",
    "roc_curve_points",
    "var_diff_auc",
    "difference_test",
    "run_analysis",
    "auc_to_case_mean",
]

ANALYSIS_KINDS = ("true", "observed", "corrected")


@dataclass(frozen=True)
class BinormalMoments:
    """Class-conditional mean/variance pair for one test."""

    case_mean: float
    case_var: float
    noncase_mean: float
    noncase_var: float

    def __post_init__(self):
        if not (self.case_var > 0 and self.noncase_var > 0):
            raise ValueError("variances must be positive")


@dataclass
class AnalysisResult:
    analysis_kind: str
    auc1: float
    auc2: float
    diff: float
    var_diff: float
    z: float
    p_value: float
    reject: bool
    favored_test: str
    n_cases_used: int
    n_noncases_used: int
    test1_moments: Optional[BinormalMoments] = None
    test2_moments: Optional[BinormalMoments] = None
    warnings: List[str] = field(default_factory=list)


def binormal_auc(case: tuple, noncase: tuple) -> float:
    """Area under the binormal ROC curve from (mean, var) pairs."""
    mu1, v1 = case
    mu0, v0 = noncase
    if not (v1 > 0 and v0 > 0):
        raise ValueError("variances must be positive")
    return std_normal_cdf((mu1 - mu0) / math.sqrt(v1 + v0))


def auc_to_case_mean(target_auc: float, noncase: tuple, case_var: float) -> float:
    """Case mean that produces the target binormal AUC against a fixed non-case model."""
    if not 0.0 < target_auc < 1.0:
        raise ValueError("target AUC must lie in (0, 1)")
    mu0, v0 = noncase
    return mu0 + std_normal_quantile(target_auc) * math.sqrt(case_var + v0)


def binormal_roc_point(case: tuple, noncase: tuple, threshold: float) -> tuple:
    """(false positive rate, true positive rate) at one decision threshold."""
    mu1, v1 = case
    mu0, v0 = noncase
    if not (v1 > 0 and v0 > 0):
        raise ValueError("variances must be positive")
    fpr = 1.0 - std_normal_cdf((threshold - mu0) / math.sqrt(v0))
    tpr = 1.0 - std_normal_cdf((threshold - mu1) / math.sqrt(v1))
    return (fpr, tpr)


def roc_curve_points(case: tuple, noncase: tuple, n_points: int = 512) -> np.ndarray:
    """(fpr, tpr) samples at thresholds spanning ±6 pooled SDs of both classes."""
    mu1, v1 = case
    mu0, v0 = noncase
    pooled_sd = math.sqrt((v1 + v0) / 2.0)
    lo = min(mu0, mu1) - 6.0 * pooled_sd
    hi = max(mu0, mu1) + 6.0 * pooled_sd
    thresholds = np.linspace(lo, hi, n_points)
    pts = np.array([binormal_roc_point(case, noncase, t) for t in thresholds])
    return pts


def _auc_partials(a: float, b: float) -> tuple:
    # AUC = Phi(a / sqrt(1 + b^2)); partial derivatives w.r.t. a and b
    s = math.sqrt(1.0 + b * b)
    delta = a / s
    f = std_normal_pdf(delta) / s
    g = -std_normal_pdf(delta) * a * b / (s ** 3)
    return f, g


def var_diff_auc(
    test1: BinormalMoments,
    test2: BinormalMoments,
    rho0: float,
    rho1: float,
    n_cases: int,
    n_noncases: int,
) -> float:
    """Delta-method variance of the paired binormal AUC difference.

    Uses a_j = (case mean - non-case mean)/case SD and b_j = non-case SD /
    case SD per test. Sampling variances of (a_j, b_j) and their cross-test
    covariances follow from Gaussian moment asymptotics with ``rho1`` the
    case-score correlation between tests and ``rho0`` the non-case one:

        var(a_j)      = (a_j^2 + 2)/(2 m) + b_j^2 / n
        var(b_j)      = b_j^2 (m + n) / (2 m n)
        cov(a_j, b_j) = a_j b_j / (2 m)
        cov(a_1, a_2) = rho1/m + rho0 b_1 b_2 / n + rho1^2 a_1 a_2 / (2 m)
        cov(b_1, b_2) = b_1 b_2 (rho0^2 / n + rho1^2 / m) / 2
        cov(a_j, b_k) = a_j b_k rho1^2 / (2 m)   (j != k)

    with m cases and n non-cases. Tiny negative results from rounding are
    clamped to zero.
    """
    if n_cases < 2 or n_noncases < 2:
        raise ValueError("need at least 2 cases and 2 non-cases")
    if not (abs(rho0) <= 1 and abs(rho1) <= 1):
        raise ValueError("correlations must lie in [-1, 1]")
    m = float(n_cases)
    n = float(n_noncases)

    a = []
    b = []
    f = []
    g = []
    for t in (test1, test2):
        sd1 = math.sqrt(t.case_var)
        aj = (t.case_mean - t.noncase_mean) / sd1
        bj = math.sqrt(t.noncase_var) / sd1
        fj, gj = _auc_partials(aj, bj)
        a.append(aj)
        b.append(bj)
        f.append(fj)
        g.append(gj)

    def var_auc(j):
        va = (a[j] ** 2 + 2.0) / (2.0 * m) + b[j] ** 2 / n
        vb = b[j] ** 2 * (m + n) / (2.0 * m * n)
        cab = a[j] * b[j] / (2.0 * m)
        return f[j] ** 2 * va + g[j] ** 2 * vb + 2.0 * f[j] * g[j] * cab

    cov_a = rho1 / m + rho0 * b[0] * b[1] / n + rho1 ** 2 * a[0] * a[1] / (2.0 * m)
    cov_b = b[0] * b[1] * (rho0 ** 2 / n + rho1 ** 2 / m) / 2.0
    cov_a1b2 = a[0] * b[1] * rho1 ** 2 / (2.0 * m)
    cov_a2b1 = a[1] * b[0] * rho1 ** 2 / (2.0 * m)
    cov_auc = (
        f[0] * f[1] * cov_a
        + g[0] * g[1] * cov_b
        + f[0] * g[1] * cov_a1b2
        + f[1] * g[0] * cov_a2b1
    )

    var = var_auc(0) + var_auc(1) - 2.0 * cov_auc
    return max(0.0, var)


def difference_test(diff: float, var_diff: float, alpha: float) -> tuple:
    """Two-sided z-test of a zero AUC difference.

    Returns (z, p, reject, favored_test); the favored test is only named
    when the null is rejected.
    """
    if not var_diff > 0:
        raise ValueError("test unavailable: variance of the difference is zero")
    z = diff / math.sqrt(var_diff)
    p = 2.0 * (1.0 - std_normal_cdf(abs(z)))
    reject = p < alpha
    favored = "none"
    if reject:
        favored = "test1" if diff > 0 else "test2"
    return (z, p, reject, favored)


def _class_moments(data: TrialDataset, mask: np.ndarray) -> tuple:
    x1 = data.x1[mask]
    x2 = data.x2[mask]
    n = x1.shape[0]
    m1 = float(x1.mean())
    m2 = float(x2.mean())
    d1 = x1 - m1
    d2 = x2 - m2
    s11 = float(d1 @ d1)
    s22 = float(d2 @ d2)
    s12 = float(d1 @ d2)
    v1 = s11 / (n - 1)
    v2 = s22 / (n - 1)
    if s11 > 0 and s22 > 0:
        rho = s12 / math.sqrt(s11 * s22)
        if not math.isfinite(rho):
            rho = 0.0
    else:
        rho = 0.0
    return m1, v1, m2, v2, rho, n


VARIANCE_MODES = ("paired", "unpaired")


def run_analysis(
    data: TrialDataset,
    kind: str,
    alpha: float = 0.05,
    corrected: Optional[CorrectedParams] = None,
    variance_mode: str = "paired",
) -> AnalysisResult:
    """One of the three parallel analyses of a trial dataset.

    ``true`` uses true disease labels, ``observed`` the labels the study
    investigator would assign (missed cases count as non-cases), and
    ``corrected`` replaces the observed case moments by the weighted
    estimates. A precomputed correction can be passed to avoid refitting.

    ``variance_mode="unpaired"`` drops the cross-test covariance from the
    variance of the AUC difference (the per-test variances are unchanged).
    That overstates the variance of a paired comparison and is offered only
    to reproduce published results computed that way.
    """
    if kind not in ANALYSIS_KINDS:
        raise ValueError(f"unknown analysis kind {kind!r}")
    if variance_mode not in VARIANCE_MODES:
        raise ValueError(f"unknown variance mode {variance_mode!r}")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    warnings: List[str] = []

    if kind == "true":
        case_mask = data.true_status == 1
    else:
        case_mask = data.observed_status == 1
    noncase_mask = ~case_mask

    n_cases = int(case_mask.sum())
    n_noncases = int(noncase_mask.sum())
    if n_cases < 2 or n_noncases < 2:
        raise ValueError(
            f"{kind} analysis needs >= 2 observations per class, "
            f"got {n_cases} cases / {n_noncases} non-cases"
        )

    cm1, cv1, cm2, cv2, rho1, _ = _class_moments(data, case_mask)
    nm1, nv1, nm2, nv2, rho0, _ = _class_moments(data, noncase_mask)

    if kind == "corrected":
        if corrected is None:
            try:
                corrected = correct_case_distribution(data)
            except CorrectionUnavailableError as exc:
                corrected = None
                warnings.append(f"correction unavailable ({exc}); observed values used")
        if corrected is not None:
            cm1, cv1 = corrected.weighted.mu1, corrected.weighted.var1
            cm2, cv2 = corrected.weighted.mu2, corrected.weighted.var2
            rho1 = corrected.weighted.rho
            warnings.extend(corrected.warnings)

    test1 = BinormalMoments(cm1, cv1, nm1, nv1)
    test2 = BinormalMoments(cm2, cv2, nm2, nv2)
    auc1 = binormal_auc((cm1, cv1), (nm1, nv1))
    auc2 = binormal_auc((cm2, cv2), (nm2, nv2))
    diff = auc1 - auc2
    if variance_mode == "unpaired":
        # zero correlations remove only the covariance term; the per-test
        # variances carry no correlation dependence
        var = var_diff_auc(test1, test2, 0.0, 0.0, n_cases, n_noncases)
    else:
        var = var_diff_auc(test1, test2, rho0, rho1, n_cases, n_noncases)

    try:
        z, p, reject, favored = difference_test(diff, var, alpha)
    except ValueError as exc:
        warnings.append(str(exc))
        z, p, reject, favored = math.nan, math.nan, False, "none"

    return AnalysisResult(
        analysis_kind=kind,
        auc1=auc1,
        auc2=auc2,
        diff=diff,
        var_diff=var,
        z=z,
        p_value=p,
        reject=reject,
        favored_test=favored,
        n_cases_used=n_cases,
        n_noncases_used=n_noncases,
        test1_moments=test1,
        test2_moments=test2,
        warnings=warnings,
    )
