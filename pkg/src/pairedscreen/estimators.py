"""Scikit-learn style estimators wrapping the correction and comparison.

These compose with sklearn tooling (``get_params``/``set_params``,
``clone``) and validate their inputs; the functional modules stay the
source of truth for the statistics.
"""

from __future__ import annotations

from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from ._validation import check_binary_labels, check_probability, check_score_pairs
from .correction import (
    CorrectionUnavailableError,
    correct_from_partition,
    partition_scores,
)
from .roc import run_analysis
from .simulate import INTERVAL, MISSED, SCREEN_DETECTED, TrialDataset

__all__ = ["CaseDistributionCorrector", "PairedScreeningAnalyzer"]


class CaseDistributionCorrector(BaseEstimator):
    """Estimate the full case score distribution from observed cases only.

    Parameters
    ----------
    threshold1, threshold2 : float
        Thresholds of suspicion that triggered the gold standard test.
    max_iter, tol : optimizer budget for the quadrant likelihood fits.

    Attributes (after ``fit``)
    --------------------------
    nath_params_ : BivNormParams from the best quadrant fit.
    corrected_params_ : BivNormParams after sampling-fraction weighting.
    lambda_ : estimated probability of scoring above at least one threshold.
    weighting_applied_ : whether the weighted blend was used (False means
        the Nath estimates stand in).
    warnings_ : list of str.
    """

    def __init__(self, threshold1: float, threshold2: float,
                 max_iter: int = 500, tol: float = 1e-8):
        self.threshold1 = threshold1
        self.threshold2 = threshold2
        self.max_iter = max_iter
        self.tol = tol

    def fit(self, X, y=None):
        """Fit from an (n, 2) array of observed-case score pairs."""
        X = check_score_pairs(X)
        partition = partition_scores(X, self.threshold1, self.threshold2)
        result = correct_from_partition(partition, max_iter=self.max_iter, tol=self.tol)
        self.n_features_in_ = 2
        self.partition_ = partition
        self.result_ = result
        self.nath_params_ = result.nath
        self.corrected_params_ = result.weighted
        self.lambda_ = result.lambda_hat
        self.weighting_applied_ = result.weighting_applied
        self.warnings_ = list(result.warnings)
        return self

    def _check_fitted(self):
        if not hasattr(self, "result_"):
            raise NotFittedError("CaseDistributionCorrector is not fitted yet")


class PairedScreeningAnalyzer(BaseEstimator):
    """Observed / corrected (and optionally true) AUC comparison of two tests.

    ``fit`` takes all participants' paired scores plus observed disease
    labels; observed cases below both thresholds are treated as interval
    cases, the rest as screen-detected. Passing true labels enables the
    true analysis.
    """

    def __init__(self, threshold1: float, threshold2: float, alpha: float = 0.05,
                 variance_mode: str = "paired"):
        self.threshold1 = threshold1
        self.threshold2 = threshold2
        self.alpha = alpha
        self.variance_mode = variance_mode

    def fit(self, X, y, true_status=None):
        X = check_score_pairs(X)
        n = X.shape[0]
        observed = check_binary_labels(y, n, "y")
        check_probability(self.alpha, "alpha", open_interval=True)
        has_true = true_status is not None
        if has_true:
            true_arr = check_binary_labels(true_status, n, "true_status")
            if np.any((observed == 1) & (true_arr == 0)):
                raise ValueError("observed cases must be true cases (the gold standard is perfect)")
        else:
            true_arr = observed.copy()

        positive = (X[:, 0] >= self.threshold1) | (X[:, 1] >= self.threshold2)
        case_class = np.zeros(n, dtype=np.uint8)
        case_class[(observed == 1) & positive] = SCREEN_DETECTED
        case_class[(observed == 1) & ~positive] = INTERVAL
        if has_true:
            case_class[(true_arr == 1) & (observed == 0)] = MISSED

        data = TrialDataset(
            x1=X[:, 0].copy(),
            x2=X[:, 1].copy(),
            true_status=true_arr,
            signs=case_class == INTERVAL,
            observed_status=observed,
            case_class=case_class,
            thresholds=(float(self.threshold1), float(self.threshold2)),
        )
        self.n_features_in_ = 2
        self.dataset_ = data
        self.has_true_ = has_true

        self.correction_ = None
        self.correction_error_ = None
        try:
            corrector = CaseDistributionCorrector(self.threshold1, self.threshold2)
            corrector.fit(data.observed_case_scores())
            self.correction_ = corrector.result_
        except (CorrectionUnavailableError, ValueError) as exc:
            self.correction_error_ = str(exc)

        results = {}
        results["observed"] = run_analysis(
            data, "observed", alpha=self.alpha, variance_mode=self.variance_mode
        )
        results["corrected"] = run_analysis(
            data, "corrected", alpha=self.alpha, corrected=self.correction_,
            variance_mode=self.variance_mode,
        )
        if has_true:
            results["true"] = run_analysis(
                data, "true", alpha=self.alpha, variance_mode=self.variance_mode
            )
        self.results_ = results
        self.observed_result_ = results["observed"]
        self.corrected_result_ = results["corrected"]
        self.true_result_ = results.get("true")
        return self

    def _check_fitted(self):
        if not hasattr(self, "results_"):
            raise NotFittedError("PairedScreeningAnalyzer is not fitted yet")
