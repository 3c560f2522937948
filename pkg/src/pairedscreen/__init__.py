"""Paired screening trial simulation and bias-corrected ROC comparison.

Simulates paired trials of two continuous screening tests (true and
investigator-observed disease status), corrects the case score
distribution for the cases the design misses, and compares the tests'
binormal AUCs under the true, observed, and corrected analyses — singly
or over large Monte Carlo scenario grids.
"""

from .correction import (
    CasePartition,
    CorrectedParams,
    CorrectionUnavailableError,
    QuadrantFit,
    WeightedMoments,
    correct_case_distribution,
    lambda_hat,
    nath_mle,
    partition_cases,
    quadrant_sample_stats,
    select_best_fit,
    weighted_correction,
)
from .estimators import CaseDistributionCorrector, PairedScreeningAnalyzer
from .gaussian import (
    BivNormParams,
    DegenerateRegionError,
    Rect,
    bvn_cdf,
    full_bvn_loglik,
    rect_log_prob,
    std_normal_cdf,
    std_normal_quantile,
    truncated_bvn_loglik,
)
from .harness import (
    AnalysisMetrics,
    FactorGrid,
    ScenarioMetrics,
    metrics_csv_rows,
    run_grid,
    run_scenario,
)
from .io import (
    ParticipantCsvError,
    read_participants_csv,
    write_metrics_csv,
    write_participants_csv,
)
from .roc import (
    AnalysisResult,
    BinormalMoments,
    auc_to_case_mean,
    binormal_auc,
    binormal_roc_point,
    difference_test,
    roc_curve_points,
    run_analysis,
    var_diff_auc,
)
from .simulate import (
    Binning,
    ParticipantRecord,
    ScenarioConfig,
    TrialDataset,
    ZeroWeighting,
    apply_binning,
    apply_zero_weighting,
    assign_observed_status,
    calibrate_thresholds,
    calibrate_thresholds_observed_fraction,
    draw_trial,
    percent_ascertainment,
)

__version__ = "0.1.0"
