"""Static SVG charts: ROC overlays and factor-sweep rejection panels."""

from __future__ import annotations

from typing import Dict, List, Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .roc import AnalysisResult, roc_curve_points  # noqa: E402

__all__ = ["save_roc_chart", "save_sweep_chart"]

_ANALYSIS_COLORS = {"true": "#2c7a2c", "observed": "#c23b3b", "corrected": "#2b5fb0"}


def _save(fig, path) -> None:
    # strip the creation date so identical runs emit identical files
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def save_roc_chart(results: Dict[str, AnalysisResult], path, title: str = "ROC curves") -> None:
    """Overlay binormal ROC curves of both tests for each available analysis."""
    fig, ax = plt.subplots(figsize=(6.0, 6.0))
    for kind, res in results.items():
        if res.test1_moments is None:
            continue
        color = _ANALYSIS_COLORS.get(kind, "#555555")
        for test_idx, moments, style in (
            (1, res.test1_moments, "-"),
            (2, res.test2_moments, "--"),
        ):
            pts = roc_curve_points(
                (moments.case_mean, moments.case_var),
                (moments.noncase_mean, moments.noncase_var),
            )
            auc = res.auc1 if test_idx == 1 else res.auc2
            ax.plot(
                pts[:, 0], pts[:, 1], style, color=color, linewidth=1.4,
                label=f"{kind} test {test_idx} (AUC {auc:.3f})",
            )
    ax.plot([0, 1], [0, 1], color="#bbbbbb", linewidth=0.8, zorder=0)
    ax.set_xlabel("false positive rate")
    ax.set_ylabel("true positive rate")
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1)
    ax.set_title(title)
    ax.legend(loc="lower right", fontsize=8)
    _save(fig, path)


def save_sweep_chart(
    factor_values: Sequence[float],
    series: Dict[str, Dict[str, List[Optional[float]]]],
    factor_label: str,
    path,
) -> None:
    """Three-panel lines (rejection rate, CRF, WRF) against a swept factor.

    ``series`` maps analysis kind to metric name ('rejection_rate', 'crf',
    'wrf') to per-cell values; None entries (undefined fractions under the
    null) are skipped.
    """
    panels = [("rejection_rate", "rejection rate"), ("crf", "correct rejection fraction"),
              ("wrf", "wrong rejection fraction")]
    fig, axes = plt.subplots(1, 3, figsize=(12.0, 4.0), sharex=True)
    for ax, (metric, label) in zip(axes, panels):
        for kind, metrics in series.items():
            values = metrics.get(metric)
            if values is None:
                continue
            xs = [x for x, v in zip(factor_values, values) if v is not None]
            ys = [v for v in values if v is not None]
            if not ys:
                continue
            ax.plot(xs, ys, "o-", color=_ANALYSIS_COLORS.get(kind, "#555555"),
                    markersize=3, linewidth=1.2, label=kind)
        ax.set_xlabel(factor_label)
        ax.set_ylabel(label)
        ax.set_ylim(-0.02, 1.02)
    axes[0].legend(fontsize=8)
    fig.tight_layout()
    _save(fig, path)
