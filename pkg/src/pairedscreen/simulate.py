"""Paired screening trial generation.

Simulates paired continuous test scores with a binary disease state, then
derives what the study investigator would actually observe: screen-detected
cases (a score at or above its test's threshold of suspicion), interval cases
(signs and symptoms during follow-up), and missed cases that the investigator
counts as non-cases. Optional score transforms (zero-weighting, binning)
distort the Gaussian model before any status is assigned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterator, Optional, Union

import numpy as np

from .gaussian import BivNormParams, bvn_cdf, std_normal_quantile

__all__ = [
    "NON_CASE",
    "SCREEN_DETECTED",
    "INTERVAL",
    "MISSED",
    "CASE_CLASS_NAMES",
    "THRESHOLD_POLICIES",
    "ZeroWeighting",
    "Binning",
    "ScenarioConfig",
    "ParticipantRecord",
    "TrialDataset",
    "assign_observed_status",
    "calibrate_thresholds",
    "calibrate_thresholds_observed_fraction",
    "draw_trial",
    "percent_ascertainment",
    "apply_zero_weighting",
    "apply_binning",
    "frechet_bounds",
    "median_joint_zero_rate",
]

THRESHOLD_POLICIES = ("case_marginal", "observed_fraction")

NON_CASE = 0
SCREEN_DETECTED = 1
INTERVAL = 2
MISSED = 3
CASE_CLASS_NAMES = ("non_case", "screen_detected", "interval", "missed")
_CLASS_CODES = {name: code for code, name in enumerate(CASE_CLASS_NAMES)}


def frechet_bounds(p1: float, p2: float) -> tuple:
    """Feasible range for the joint probability of two Bernoulli events."""
    return (max(0.0, p1 + p2 - 1.0), min(p1, p2))


def median_joint_zero_rate(p1: float, p2: float) -> float:
    """Midpoint of the Fréchet interval, the default joint zero rate."""
    lo, hi = frechet_bounds(p1, p2)
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class ZeroWeighting:
    """Replace scores by zero via a correlated Bernoulli pair, per class.

    ``p1``/``p2`` are the marginal zero probabilities for each test and
    ``q`` the joint probability of both scores being zeroed. A ``q`` of
    None selects the midpoint of the Fréchet interval.
    """

    p1_noncase: float = 0.0
    p2_noncase: float = 0.0
    q_noncase: Optional[float] = None
    p1_case: float = 0.0
    p2_case: float = 0.0
    q_case: Optional[float] = None

    def __post_init__(self):
        for label, p1, p2, q in (
            ("noncase", self.p1_noncase, self.p2_noncase, self.q_noncase),
            ("case", self.p1_case, self.p2_case, self.q_case),
        ):
            if not (0.0 <= p1 <= 1.0 and 0.0 <= p2 <= 1.0):
                raise ValueError(f"{label} marginal zero rates must lie in [0, 1]")
            if q is not None:
                lo, hi = frechet_bounds(p1, p2)
                if not (lo - 1e-12 <= q <= hi + 1e-12):
                    raise ValueError(
                        f"{label} joint zero rate {q} outside Fréchet bounds [{lo}, {hi}]"
                    )

    def resolved(self, case: bool) -> tuple:
        """(p1, p2, q) with the median rule applied where q is unset."""
        if case:
            p1, p2, q = self.p1_case, self.p2_case, self.q_case
        else:
            p1, p2, q = self.p1_noncase, self.p2_noncase, self.q_noncase
        if q is None:
            q = median_joint_zero_rate(p1, p2)
        return p1, p2, q


@dataclass(frozen=True)
class Binning:
    """Replace each score by the midpoint of its bin.

    Bin width is ``width_multiplier`` times the variance of the case score
    distribution of the corresponding test; edges are anchored at zero.
    """

    width_multiplier: float

    def __post_init__(self):
        if not self.width_multiplier > 0:
            raise ValueError("width_multiplier must be > 0")


Transform = Union[ZeroWeighting, Binning, None]


@dataclass(frozen=True)
class ScenarioConfig:
    """Complete description of one simulated trial scenario."""

    n: int
    prevalence: float
    signs_rate: float
    case_params: BivNormParams
    noncase_params: BivNormParams
    thresholds: Optional[tuple] = None
    ascertainment_targets: Optional[tuple] = None
    threshold_policy: str = "case_marginal"
    transform: Transform = None
    reps: int = 1
    seed: int = 0
    alpha: float = 0.05
    variance_mode: str = "paired"

    def __post_init__(self):
        if not (isinstance(self.n, int) and self.n > 0):
            raise ValueError("n must be a positive integer")
        if not 0.0 <= self.prevalence <= 1.0:
            raise ValueError("prevalence must lie in [0, 1]")
        if not 0.0 <= self.signs_rate <= 1.0:
            raise ValueError("signs_rate must lie in [0, 1]")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if not (isinstance(self.reps, int) and self.reps > 0):
            raise ValueError("reps must be a positive integer")
        if (self.thresholds is None) == (self.ascertainment_targets is None):
            raise ValueError("exactly one of thresholds / ascertainment_targets required")
        if self.ascertainment_targets is not None:
            t1, t2 = self.ascertainment_targets
            if not (0.0 < t1 < 1.0 and 0.0 < t2 < 1.0):
                raise ValueError("ascertainment targets must lie in (0, 1)")
        if self.thresholds is not None:
            a1, a2 = self.thresholds
            if not (math.isfinite(a1) and math.isfinite(a2)):
                raise ValueError("thresholds must be finite")
        if self.threshold_policy not in THRESHOLD_POLICIES:
            raise ValueError(f"unknown threshold policy {self.threshold_policy!r}")
        if self.variance_mode not in ("paired", "unpaired"):
            raise ValueError(f"unknown variance mode {self.variance_mode!r}")

    def resolved_thresholds(self) -> tuple:
        if self.thresholds is not None:
            return (float(self.thresholds[0]), float(self.thresholds[1]))
        if self.threshold_policy == "case_marginal":
            return calibrate_thresholds(self.case_params, self.ascertainment_targets)
        return calibrate_thresholds_observed_fraction(
            self.case_params, self.ascertainment_targets, self.signs_rate
        )


@dataclass(frozen=True)
class ParticipantRecord:
    """One participant's scores and disease classification."""

    id: int
    x1: float
    x2: float
    true_status: int
    observed_status: int
    case_class: str


@dataclass
class TrialDataset:
    """Column-oriented trial data for one realization.

    ``signs`` records the symptom draw for every true case so that score
    transforms can re-derive observed status without fresh randomness.
    """

    x1: np.ndarray
    x2: np.ndarray
    true_status: np.ndarray
    signs: np.ndarray
    observed_status: np.ndarray
    case_class: np.ndarray
    thresholds: tuple

    @property
    def n(self) -> int:
        return self.x1.shape[0]

    @property
    def n_true_cases(self) -> int:
        return int(self.true_status.sum())

    @property
    def n_observed_cases(self) -> int:
        return int(self.observed_status.sum())

    @property
    def n_interval_cases(self) -> int:
        return int((self.case_class == INTERVAL).sum())

    @property
    def n_missed_cases(self) -> int:
        return int((self.case_class == MISSED).sum())

    def iter_records(self) -> Iterator[ParticipantRecord]:
        for i in range(self.n):
            yield ParticipantRecord(
                id=i,
                x1=float(self.x1[i]),
                x2=float(self.x2[i]),
                true_status=int(self.true_status[i]),
                observed_status=int(self.observed_status[i]),
                case_class=CASE_CLASS_NAMES[self.case_class[i]],
            )

    def observed_case_scores(self) -> np.ndarray:
        mask = self.observed_status == 1
        return np.column_stack((self.x1[mask], self.x2[mask]))


def calibrate_thresholds(case_params: BivNormParams, targets: tuple) -> tuple:
    """Thresholds hitting the target exceedance fractions on the case marginals.

    ``a_j`` is placed so that a fraction ``t_j`` of case scores on test j
    falls at or above it. The realized percent ascertainment of a simulated
    trial differs because its denominator is observed cases.
    """
    t1, t2 = targets
    if not (0.0 < t1 < 1.0 and 0.0 < t2 < 1.0):
        raise ValueError("targets must lie in (0, 1)")
    a1 = case_params.mu1 + case_params.sd1 * std_normal_quantile(1.0 - t1)
    a2 = case_params.mu2 + case_params.sd2 * std_normal_quantile(1.0 - t2)
    return (a1, a2)


def calibrate_thresholds_observed_fraction(
    case_params: BivNormParams, targets: tuple, signs_rate: float
) -> tuple:
    """Thresholds whose expected percent ascertainment equals the targets.

    Percent ascertainment divides cases above threshold j by *observed*
    cases, and the observed fraction itself depends on both thresholds, so
    the calibration is a joint fixed point: with w the observed-case
    fraction, test j's marginal exceedance is t_j * w, and
    w = psi + (1 - psi) * P(either score above its threshold).
    """
    t1, t2 = targets
    if not (0.0 < t1 < 1.0 and 0.0 < t2 < 1.0):
        raise ValueError("targets must lie in (0, 1)")
    psi = signs_rate
    rho = case_params.rho
    w = 1.0
    for _ in range(500):
        p1 = min(t1 * w, 1.0 - 1e-12)
        p2 = min(t2 * w, 1.0 - 1e-12)
        z1 = std_normal_quantile(1.0 - p1)
        z2 = std_normal_quantile(1.0 - p2)
        # P(Z1 >= z1, Z2 >= z2) via the joint CDF
        both_above = 1.0 - bvn_cdf(z1, math.inf, rho) - bvn_cdf(math.inf, z2, rho) + bvn_cdf(
            z1, z2, rho
        )
        union = p1 + p2 - both_above
        w_new = psi + (1.0 - psi) * union
        if abs(w_new - w) < 1e-13:
            w = w_new
            break
        w = w_new
    p1 = min(t1 * w, 1.0 - 1e-12)
    p2 = min(t2 * w, 1.0 - 1e-12)
    a1 = case_params.mu1 + case_params.sd1 * std_normal_quantile(1.0 - p1)
    a2 = case_params.mu2 + case_params.sd2 * std_normal_quantile(1.0 - p2)
    return (a1, a2)


def assign_observed_status(
    x1: float, x2: float, true_k: int, a1: float, a2: float, signs_draw: bool
) -> tuple:
    """Observed status and case class for one participant.

    True cases with a score at or above either threshold are screen-detected;
    below both thresholds they are interval cases if signs appear during
    follow-up and missed otherwise. Non-cases stay non-cases regardless of
    their scores: a positive screen triggers the gold standard, which is
    perfect and rules disease out.
    """
    if true_k == 0:
        return 0, "non_case"
    if x1 >= a1 or x2 >= a2:
        return 1, "screen_detected"
    if signs_draw:
        return 1, "interval"
    return 0, "missed"


def _classify(x1, x2, true_status, signs, a1, a2):
    """Vectorized observed-status assignment; mirrors assign_observed_status."""
    positive = (x1 >= a1) | (x2 >= a2)
    is_case = true_status == 1
    case_class = np.zeros(x1.shape[0], dtype=np.uint8)
    case_class[is_case & positive] = SCREEN_DETECTED
    case_class[is_case & ~positive & signs] = INTERVAL
    case_class[is_case & ~positive & ~signs] = MISSED
    observed = ((case_class == SCREEN_DETECTED) | (case_class == INTERVAL)).astype(np.uint8)
    return observed, case_class


def _draw_bivariate(params: BivNormParams, size: int, rng: np.random.Generator):
    z = rng.standard_normal((size, 2))
    x1 = params.mu1 + params.sd1 * z[:, 0]
    x2 = params.mu2 + params.sd2 * (
        params.rho * z[:, 0] + math.sqrt(1.0 - params.rho**2) * z[:, 1]
    )
    return x1, x2


def _zero_weight_scores(x1, x2, p1, p2, q, rng):
    """Zero out scores via the four-cell joint Bernoulli distribution."""
    cells = np.array([q, p1 - q, p2 - q, 1.0 - p1 - p2 + q])
    if np.any(cells < -1e-12):
        raise ValueError(f"invalid joint zero-probability cells {cells.tolist()}")
    n = x1.shape[0]
    u = rng.random(n)
    both = u < q
    first_only = (~both) & (u < p1)
    second_only = (~both) & (~first_only) & (u < p1 + p2 - q)
    zero1 = both | first_only
    zero2 = both | second_only
    x1 = np.where(zero1, 0.0, x1)
    x2 = np.where(zero2, 0.0, x2)
    return x1, x2


def _bin_scores(x, width):
    return (np.floor(x / width) + 0.5) * width


def draw_trial(config: ScenarioConfig, rng: np.random.Generator) -> TrialDataset:
    """Simulate one trial realization.

    The random stream is consumed in a fixed order (case count, case scores,
    non-case scores, symptom draws, zero-weighting draws) so that a given
    generator state always yields the identical dataset.
    """
    a1, a2 = config.resolved_thresholds()
    n = config.n
    m = int(rng.binomial(n, config.prevalence))

    cx1, cx2 = _draw_bivariate(config.case_params, m, rng)
    nx1, nx2 = _draw_bivariate(config.noncase_params, n - m, rng)
    x1 = np.concatenate((cx1, nx1))
    x2 = np.concatenate((cx2, nx2))
    true_status = np.zeros(n, dtype=np.uint8)
    true_status[:m] = 1

    signs = np.zeros(n, dtype=bool)
    signs[:m] = rng.random(m) < config.signs_rate

    transform = config.transform
    if isinstance(transform, ZeroWeighting):
        p1, p2, q = transform.resolved(case=True)
        x1[:m], x2[:m] = _zero_weight_scores(x1[:m], x2[:m], p1, p2, q, rng)
        p1, p2, q = transform.resolved(case=False)
        x1[m:], x2[m:] = _zero_weight_scores(x1[m:], x2[m:], p1, p2, q, rng)
    elif isinstance(transform, Binning):
        x1 = _bin_scores(x1, transform.width_multiplier * config.case_params.var1)
        x2 = _bin_scores(x2, transform.width_multiplier * config.case_params.var2)

    observed, case_class = _classify(x1, x2, true_status, signs, a1, a2)
    return TrialDataset(
        x1=x1,
        x2=x2,
        true_status=true_status,
        signs=signs,
        observed_status=observed,
        case_class=case_class,
        thresholds=(a1, a2),
    )


def percent_ascertainment(data: TrialDataset, j: int) -> float:
    """Share of observed cases attributable to test j's threshold, times 100.

    Numerator: true cases scoring at or above threshold j (all of whom are
    observed). Denominator: all observed cases.
    """
    if j not in (1, 2):
        raise ValueError("test index must be 1 or 2")
    observed = data.n_observed_cases
    if observed == 0:
        raise ValueError("percent ascertainment undefined with zero observed cases")
    scores = data.x1 if j == 1 else data.x2
    threshold = data.thresholds[j - 1]
    above = int(((data.true_status == 1) & (scores >= threshold)).sum())
    return 100.0 * above / observed


def _retransformed(data: TrialDataset, x1, x2) -> TrialDataset:
    a1, a2 = data.thresholds
    observed, case_class = _classify(x1, x2, data.true_status, data.signs, a1, a2)
    return TrialDataset(
        x1=x1,
        x2=x2,
        true_status=data.true_status,
        signs=data.signs,
        observed_status=observed,
        case_class=case_class,
        thresholds=data.thresholds,
    )


def apply_zero_weighting(
    data: TrialDataset, transform: ZeroWeighting, rng: np.random.Generator
) -> TrialDataset:
    """Zero-weight scores of an existing dataset and re-derive statuses.

    Status assignment happens after the transform, as if the investigator
    had only ever seen the transformed scores; the original symptom draws
    are reused.
    """
    is_case = data.true_status == 1
    x1 = data.x1.copy()
    x2 = data.x2.copy()
    p1, p2, q = transform.resolved(case=True)
    x1[is_case], x2[is_case] = _zero_weight_scores(x1[is_case], x2[is_case], p1, p2, q, rng)
    p1, p2, q = transform.resolved(case=False)
    x1[~is_case], x2[~is_case] = _zero_weight_scores(x1[~is_case], x2[~is_case], p1, p2, q, rng)
    return _retransformed(data, x1, x2)


def apply_binning(
    data: TrialDataset, width_multiplier: float, case_params: BivNormParams
) -> TrialDataset:
    """Bin scores of an existing dataset and re-derive statuses."""
    if not width_multiplier > 0:
        raise ValueError("width_multiplier must be > 0")
    x1 = _bin_scores(data.x1, width_multiplier * case_params.var1)
    x2 = _bin_scores(data.x2, width_multiplier * case_params.var2)
    return _retransformed(data, x1, x2)
