"""CSV interfaces: participant-level data and scenario metrics tables."""

from __future__ import annotations

import csv
import math
from typing import List, Optional, Tuple

import numpy as np

from .simulate import (
    CASE_CLASS_NAMES,
    INTERVAL,
    MISSED,
    NON_CASE,
    SCREEN_DETECTED,
    TrialDataset,
)

__all__ = [
    "ParticipantCsvError",
    "write_participants_csv",
    "read_participants_csv",
    "write_metrics_csv",
    "METRICS_HEADER",
]

PARTICIPANT_HEADER = ["id", "x1", "x2", "true_status", "observed_status", "case_class"]
_REQUIRED_COLUMNS = ("id", "x1", "x2", "observed_status")
_OPTIONAL_COLUMNS = ("true_status", "case_class")

METRICS_HEADER = [
    "scenario_id", "prevalence", "signs_rate", "ascert1", "ascert2",
    "rho0", "rho1", "transform", "analysis", "reps", "rejection_rate",
    "crf", "wrf", "mean_auc1", "mean_auc2", "mean_diff", "mc_se", "degradations",
]


class ParticipantCsvError(ValueError):
    """Malformed participant CSV; the message names the offending row."""


def write_participants_csv(data: TrialDataset, path) -> None:
    """Export one participant per row with the derived classifications."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(PARTICIPANT_HEADER)
        for i in range(data.n):
            writer.writerow([
                i,
                repr(float(data.x1[i])),
                repr(float(data.x2[i])),
                int(data.true_status[i]),
                int(data.observed_status[i]),
                CASE_CLASS_NAMES[data.case_class[i]],
            ])


def _classify_ingested(x1, x2, observed, true_status, a1, a2):
    positive = (x1 >= a1) | (x2 >= a2)
    case_class = np.zeros(x1.shape[0], dtype=np.uint8)
    obs_case = observed == 1
    case_class[obs_case & positive] = SCREEN_DETECTED
    case_class[obs_case & ~positive] = INTERVAL
    if true_status is not None:
        case_class[(true_status == 1) & ~obs_case] = MISSED
    return case_class


def read_participants_csv(path, a1: float, a2: float) -> Tuple[TrialDataset, bool]:
    """Load a participant CSV and classify rows against the thresholds.

    Observed cases below both thresholds are interval cases, the rest are
    screen-detected. Returns the dataset plus whether true disease status
    was present (enabling the true analysis). Unknown columns are rejected;
    an exported file (with true_status/case_class) round-trips.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParticipantCsvError("empty file: missing header")
        header = [h.strip() for h in header]
        unknown = [h for h in header if h not in _REQUIRED_COLUMNS + _OPTIONAL_COLUMNS]
        if unknown:
            raise ParticipantCsvError(f"unknown columns {unknown}")
        missing = [c for c in _REQUIRED_COLUMNS if c not in header]
        if missing:
            raise ParticipantCsvError(f"missing required columns {missing}")
        col = {name: header.index(name) for name in header}
        has_true = "true_status" in col

        x1, x2, observed, true_vals = [], [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParticipantCsvError(
                    f"row {lineno}: expected {len(header)} fields, got {len(row)}"
                )
            try:
                v1 = float(row[col["x1"]])
                v2 = float(row[col["x2"]])
            except ValueError:
                raise ParticipantCsvError(f"row {lineno}: non-numeric score")
            if not (math.isfinite(v1) and math.isfinite(v2)):
                raise ParticipantCsvError(f"row {lineno}: scores must be finite")
            obs = row[col["observed_status"]].strip()
            if obs not in ("0", "1"):
                raise ParticipantCsvError(
                    f"row {lineno}: observed_status must be 0 or 1, got {obs!r}"
                )
            if has_true:
                tru = row[col["true_status"]].strip()
                if tru not in ("0", "1"):
                    raise ParticipantCsvError(
                        f"row {lineno}: true_status must be 0 or 1, got {tru!r}"
                    )
                true_vals.append(int(tru))
            x1.append(v1)
            x2.append(v2)
            observed.append(int(obs))

    if not x1:
        raise ParticipantCsvError("no data rows")
    x1 = np.array(x1)
    x2 = np.array(x2)
    observed = np.array(observed, dtype=np.uint8)
    true_status = np.array(true_vals, dtype=np.uint8) if has_true else observed.copy()
    case_class = _classify_ingested(
        x1, x2, observed, true_status if has_true else None, a1, a2
    )
    signs = case_class == INTERVAL
    data = TrialDataset(
        x1=x1,
        x2=x2,
        true_status=true_status,
        signs=signs,
        observed_status=observed,
        case_class=case_class,
        thresholds=(float(a1), float(a2)),
    )
    return data, has_true


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        if math.isnan(value):
            return ""
        return repr(value)
    return str(value)


def write_metrics_csv(metrics_rows: List[dict], path) -> None:
    """Write scenario metrics, one row per (scenario, analysis kind)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_HEADER)
        for row in metrics_rows:
            writer.writerow([_fmt(row.get(col)) for col in METRICS_HEADER])
