"""Command-line interface: simulate scenario grids, analyze participant
data, and run the built-in demonstration study.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 correction
unavailable (analyze mode; partial output is still written).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys
from pathlib import Path

from .correction import CorrectionUnavailableError
from .gaussian import BivNormParams
from .harness import FactorGrid, metrics_csv_rows, run_grid, run_scenario
from .io import (
    METRICS_HEADER,
    ParticipantCsvError,
    read_participants_csv,
    write_metrics_csv,
    write_participants_csv,
)
from .roc import auc_to_case_mean, run_analysis
from .simulate import (
    THRESHOLD_POLICIES,
    Binning,
    ScenarioConfig,
    ZeroWeighting,
    draw_trial,
)

__all__ = ["main", "demo_alternative_config", "demo_null_config", "bundled_config_path"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_CORRECTION_UNAVAILABLE = 4

WORKERS_ENV = "PAIREDSCREEN_WORKERS"

ANALYSIS_CSV_HEADER = [
    "analysis", "auc1", "auc2", "diff", "var_diff", "z", "p_value",
    "reject", "favored_test", "n_cases", "n_noncases", "warnings",
]


class ConfigError(ValueError):
    """Invalid run configuration; message carries the JSON path."""


# ------------------------------------------------------------------
# run-config parsing

_BASE_KEYS = {
    "n", "prevalence", "signs_rate", "auc1", "auc2", "rho0", "rho1",
    "case_params", "noncase_params", "ascertainment", "thresholds",
    "transform", "threshold_policy", "variance_mode",
}
_SWEEP_KEYS = {"prevalence", "signs_rate", "ascertainment", "correlations", "transforms"}
_TOP_KEYS = {"base", "sweep", "reps", "seed", "alpha", "workers", "charts", "output_dir"}
_PARAM_KEYS = {"mu1", "mu2", "var1", "var2", "rho"}
_TRANSFORM_KEYS = {
    "gaussian": {"kind"},
    "binned": {"kind", "width_multiplier"},
    "zero_weighted": {
        "kind", "p1_noncase", "p2_noncase", "q_noncase",
        "p1_case", "p2_case", "q_case",
    },
}


def _reject_unknown(obj: dict, allowed: set, path: str) -> None:
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise ConfigError(f"{path}: unknown keys {unknown}")


def _need(obj: dict, key: str, path: str):
    if key not in obj:
        raise ConfigError(f"{path}: missing required key '{key}'")
    return obj[key]


def _number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}: expected a number, got {value!r}")
    return float(value)


def _probability(value, path: str, open_interval: bool = False) -> float:
    v = _number(value, path)
    if open_interval and not (0.0 < v < 1.0):
        raise ConfigError(f"{path}: must lie in (0, 1), got {v}")
    if not open_interval and not (0.0 <= v <= 1.0):
        raise ConfigError(f"{path}: must lie in [0, 1], got {v}")
    return v


def _pair(value, path: str) -> tuple:
    if not (isinstance(value, (list, tuple)) and len(value) == 2):
        raise ConfigError(f"{path}: expected a pair [a, b]")
    return (_number(value[0], f"{path}[0]"), _number(value[1], f"{path}[1]"))


def _parse_params(obj, path: str) -> BivNormParams:
    if not isinstance(obj, dict):
        raise ConfigError(f"{path}: expected an object")
    _reject_unknown(obj, _PARAM_KEYS, path)
    try:
        return BivNormParams(
            mu1=_number(_need(obj, "mu1", path), f"{path}.mu1"),
            mu2=_number(_need(obj, "mu2", path), f"{path}.mu2"),
            var1=_number(_need(obj, "var1", path), f"{path}.var1"),
            var2=_number(_need(obj, "var2", path), f"{path}.var2"),
            rho=_number(_need(obj, "rho", path), f"{path}.rho"),
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}")


def _parse_transform(obj, path: str):
    if obj is None:
        return None
    if not isinstance(obj, dict):
        raise ConfigError(f"{path}: expected an object with a 'kind'")
    kind = _need(obj, "kind", path)
    if kind not in _TRANSFORM_KEYS:
        raise ConfigError(f"{path}.kind: unknown transform kind {kind!r}")
    _reject_unknown(obj, _TRANSFORM_KEYS[kind], path)
    if kind == "gaussian":
        return None
    try:
        if kind == "binned":
            return Binning(_number(_need(obj, "width_multiplier", path),
                                   f"{path}.width_multiplier"))
        q = {}
        for side in ("noncase", "case"):
            for field in (f"p1_{side}", f"p2_{side}"):
                q[field] = _probability(obj.get(field, 0.0), f"{path}.{field}")
            qk = obj.get(f"q_{side}", "median")
            q[f"q_{side}"] = None if qk == "median" else _probability(qk, f"{path}.q_{side}")
        return ZeroWeighting(**q)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}")


def _parse_base(obj, path: str, reps: int, seed: int, alpha: float) -> ScenarioConfig:
    if not isinstance(obj, dict):
        raise ConfigError(f"{path}: expected an object")
    _reject_unknown(obj, _BASE_KEYS, path)

    n = _need(obj, "n", path)
    if isinstance(n, bool) or not isinstance(n, int) or n <= 0:
        raise ConfigError(f"{path}.n: expected a positive integer")
    prevalence = _probability(_need(obj, "prevalence", path), f"{path}.prevalence")
    signs_rate = _probability(_need(obj, "signs_rate", path), f"{path}.signs_rate")

    explicit = "case_params" in obj or "noncase_params" in obj
    by_auc = "auc1" in obj or "auc2" in obj
    if explicit and by_auc:
        raise ConfigError(f"{path}: give either case/noncase params or auc1/auc2, not both")
    if explicit:
        for key in ("rho0", "rho1"):
            if key in obj:
                raise ConfigError(f"{path}.{key}: only valid with the auc1/auc2 form")
        case = _parse_params(_need(obj, "case_params", path), f"{path}.case_params")
        noncase = _parse_params(_need(obj, "noncase_params", path), f"{path}.noncase_params")
    elif by_auc:
        auc1 = _probability(_need(obj, "auc1", path), f"{path}.auc1", open_interval=True)
        auc2 = _probability(_need(obj, "auc2", path), f"{path}.auc2", open_interval=True)
        rho0 = _number(obj.get("rho0", 0.5), f"{path}.rho0")
        rho1 = _number(obj.get("rho1", 0.5), f"{path}.rho1")
        try:
            noncase = BivNormParams(0.0, 0.0, 1.0, 1.0, rho0)
            case = BivNormParams(
                auc_to_case_mean(auc1, (0.0, 1.0), 1.0),
                auc_to_case_mean(auc2, (0.0, 1.0), 1.0),
                1.0, 1.0, rho1,
            )
        except ValueError as exc:
            raise ConfigError(f"{path}: {exc}")
    else:
        raise ConfigError(f"{path}: needs auc1/auc2 or explicit case_params/noncase_params")

    thresholds = obj.get("thresholds")
    targets = obj.get("ascertainment")
    if (thresholds is None) == (targets is None):
        raise ConfigError(f"{path}: exactly one of 'thresholds' / 'ascertainment' required")
    kwargs = dict(
        n=n,
        prevalence=prevalence,
        signs_rate=signs_rate,
        case_params=case,
        noncase_params=noncase,
        transform=_parse_transform(obj.get("transform"), f"{path}.transform"),
        reps=reps,
        seed=seed,
        alpha=alpha,
    )
    if thresholds is not None:
        kwargs["thresholds"] = _pair(thresholds, f"{path}.thresholds")
    else:
        kwargs["ascertainment_targets"] = _pair(targets, f"{path}.ascertainment")
    policy = obj.get("threshold_policy", "case_marginal")
    if policy not in THRESHOLD_POLICIES:
        raise ConfigError(f"{path}.threshold_policy: unknown policy {policy!r}")
    kwargs["threshold_policy"] = policy
    mode = obj.get("variance_mode", "paired")
    if mode not in ("paired", "unpaired"):
        raise ConfigError(f"{path}.variance_mode: must be 'paired' or 'unpaired'")
    kwargs["variance_mode"] = mode
    try:
        return ScenarioConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}")


def _parse_sweep(obj, path: str, grid_kwargs: dict) -> None:
    if not isinstance(obj, dict):
        raise ConfigError(f"{path}: expected an object")
    _reject_unknown(obj, _SWEEP_KEYS, path)
    if "prevalence" in obj:
        grid_kwargs["prevalence"] = [
            _probability(v, f"{path}.prevalence[{i}]")
            for i, v in enumerate(obj["prevalence"])
        ]
    if "signs_rate" in obj:
        grid_kwargs["signs_rate"] = [
            _probability(v, f"{path}.signs_rate[{i}]")
            for i, v in enumerate(obj["signs_rate"])
        ]
    if "ascertainment" in obj:
        grid_kwargs["ascertainment"] = [
            _pair(v, f"{path}.ascertainment[{i}]") for i, v in enumerate(obj["ascertainment"])
        ]
    if "correlations" in obj:
        grid_kwargs["correlations"] = [
            _pair(v, f"{path}.correlations[{i}]") for i, v in enumerate(obj["correlations"])
        ]
    if "transforms" in obj:
        grid_kwargs["transforms"] = [
            _parse_transform(v, f"{path}.transforms[{i}]")
            for i, v in enumerate(obj["transforms"])
        ]


def load_run_config(path) -> dict:
    """Parse and validate a run configuration file into grid + options."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}")
    if not isinstance(doc, dict):
        raise ConfigError("top level: expected an object")
    _reject_unknown(doc, _TOP_KEYS, "top level")

    reps = doc.get("reps", 1000)
    if isinstance(reps, bool) or not isinstance(reps, int) or reps <= 0:
        raise ConfigError("reps: expected a positive integer")
    seed = doc.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise ConfigError("seed: expected an integer")
    alpha = _probability(doc.get("alpha", 0.05), "alpha", open_interval=True)
    workers = doc.get("workers")
    if workers is not None and (isinstance(workers, bool)
                                or not isinstance(workers, int) or workers <= 0):
        raise ConfigError("workers: expected a positive integer")
    charts = doc.get("charts", False)
    if not isinstance(charts, bool):
        raise ConfigError("charts: expected true/false")

    base = _parse_base(_need(doc, "base", "top level"), "base", reps, seed, alpha)
    grid_kwargs: dict = {}
    if "sweep" in doc:
        _parse_sweep(doc["sweep"], "sweep", grid_kwargs)
    grid = FactorGrid(base=base, **grid_kwargs)
    return {
        "grid": grid,
        "workers": workers,
        "charts": charts,
        "output_dir": doc.get("output_dir"),
    }


# ------------------------------------------------------------------
# demo scenario

DEMO_SEED = 20130415
_DEMO_RHO = 0.5


def _demo_config(auc1: float, auc2: float, reps: int, seed: int) -> ScenarioConfig:
    noncase = BivNormParams(0.0, 0.0, 1.0, 1.0, _DEMO_RHO)
    case = BivNormParams(
        auc_to_case_mean(auc1, (0.0, 1.0), 1.0),
        auc_to_case_mean(auc2, (0.0, 1.0), 1.0),
        1.0, 1.0, _DEMO_RHO,
    )
    return ScenarioConfig(
        n=50_000,
        prevalence=0.01,
        signs_rate=0.1,
        case_params=case,
        noncase_params=noncase,
        ascertainment_targets=(0.0001, 0.97),
        reps=reps,
        seed=seed,
        variance_mode="unpaired",
    )


def demo_alternative_config(reps: int = 10_000, seed: int = DEMO_SEED) -> ScenarioConfig:
    """Hypothetical oral cancer screening study, true AUCs 0.77 / 0.71."""
    return _demo_config(0.77, 0.71, reps, seed)


def demo_null_config(reps: int = 10_000, seed: int = DEMO_SEED) -> ScenarioConfig:
    """Null twin of the demo study: both tests at AUC 0.77."""
    return _demo_config(0.77, 0.77, reps, seed)


def bundled_config_path(name: str) -> Path:
    return Path(__file__).parent / "configs" / name


# ------------------------------------------------------------------
# commands

def _default_workers(args_workers) -> int:
    if args_workers is not None:
        return args_workers
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"{WORKERS_ENV} must be an integer, got {env!r}")
    return 1


def _write_analysis_csv(results: dict, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(ANALYSIS_CSV_HEADER)
        for kind in ("true", "observed", "corrected"):
            res = results.get(kind)
            if res is None:
                continue
            writer.writerow([
                kind, repr(res.auc1), repr(res.auc2), repr(res.diff),
                repr(res.var_diff), repr(res.z), repr(res.p_value),
                int(res.reject), res.favored_test,
                res.n_cases_used, res.n_noncases_used,
                "; ".join(res.warnings),
            ])


def _emit_sweep_charts(grid: FactorGrid, metrics, outdir: Path) -> list:
    from .charts import save_sweep_chart

    written = []
    swept = []
    if len(grid.prevalence) > 1:
        swept.append(("prevalence", list(grid.prevalence)))
    if len(grid.signs_rate) > 1:
        swept.append(("signs_rate", list(grid.signs_rate)))
    multi = sum(
        1 for seq in (grid.prevalence, grid.signs_rate, grid.ascertainment,
                      grid.correlations, grid.transforms)
        if len(seq) > 1
    )
    if multi != 1 or not swept:
        return written
    factor, values = swept[0]
    series = {}
    for kind in ("true", "observed", "corrected"):
        series[kind] = {
            "rejection_rate": [m.per_analysis[kind].rejection_rate for m in metrics],
            "crf": [m.per_analysis[kind].crf for m in metrics],
            "wrf": [m.per_analysis[kind].wrf for m in metrics],
        }
    path = outdir / f"sweep_{factor}.svg"
    save_sweep_chart(values, series, factor, path)
    written.append(path)
    return written


def _grid_with_base(grid: FactorGrid, base: ScenarioConfig) -> FactorGrid:
    return FactorGrid(
        base=base,
        prevalence=grid.prevalence, signs_rate=grid.signs_rate,
        ascertainment=grid.ascertainment, correlations=grid.correlations,
        transforms=grid.transforms,
    )


def cmd_simulate(args) -> int:
    loaded = load_run_config(args.config)
    grid: FactorGrid = loaded["grid"]
    if args.reps is not None:
        grid = _grid_with_base(grid, dataclasses.replace(grid.base, reps=args.reps))
    if args.seed is not None:
        grid = _grid_with_base(grid, dataclasses.replace(grid.base, seed=args.seed))
    workers = _default_workers(args.workers if args.workers else loaded["workers"])
    outdir = Path(args.out or loaded["output_dir"] or ".")
    outdir.mkdir(parents=True, exist_ok=True)

    metrics = run_grid(grid, workers=workers)
    csv_path = outdir / "metrics.csv"
    write_metrics_csv(metrics_csv_rows(metrics), csv_path)
    written = [csv_path]
    if loaded["charts"] or args.charts:
        written += _emit_sweep_charts(grid, metrics, outdir)
    for path in written:
        print(path)
    return EXIT_OK


def cmd_analyze(args) -> int:
    data, has_true = read_participants_csv(args.data, args.a1, args.a2)
    if data.n_observed_cases == 0:
        raise ParticipantCsvError("no observed cases")
    outdir = Path(args.out or ".")
    outdir.mkdir(parents=True, exist_ok=True)

    results = {}
    degraded = False
    try:
        results["observed"] = run_analysis(
            data, "observed", alpha=args.alpha, variance_mode=args.variance_mode
        )
    except ValueError as exc:
        raise ParticipantCsvError(str(exc))
    if has_true:
        results["true"] = run_analysis(
            data, "true", alpha=args.alpha, variance_mode=args.variance_mode
        )
    results["corrected"] = run_analysis(
        data, "corrected", alpha=args.alpha, variance_mode=args.variance_mode
    )
    degraded = any("correction unavailable" in w for w in results["corrected"].warnings)

    csv_path = outdir / "analysis.csv"
    _write_analysis_csv(results, csv_path)
    written = [csv_path]
    from .charts import save_roc_chart

    chart_path = outdir / "roc.svg"
    save_roc_chart(results, chart_path, title="Observed vs corrected ROC curves")
    written.append(chart_path)
    for path in written:
        print(path)
    for kind, res in results.items():
        for warning in res.warnings:
            print(f"warning ({kind}): {warning}", file=sys.stderr)
    return EXIT_CORRECTION_UNAVAILABLE if degraded else EXIT_OK


def cmd_demo(args) -> int:
    import numpy as np

    outdir = Path(args.out or "demo_output")
    outdir.mkdir(parents=True, exist_ok=True)
    workers = _default_workers(args.workers)
    seed = args.seed if args.seed is not None else DEMO_SEED

    # one realization of the hypothetical study, analyzed three ways
    alt = demo_alternative_config(reps=args.reps, seed=seed)
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(999, 0)))
    data = draw_trial(alt, rng)
    results = {
        kind: run_analysis(data, kind, alpha=alt.alpha, variance_mode=alt.variance_mode)
        for kind in ("true", "observed", "corrected")
    }
    from .charts import save_roc_chart

    save_roc_chart(
        results, outdir / "demo_roc.svg",
        title="Hypothetical oral cancer screening study",
    )
    _write_analysis_csv(results, outdir / "demo_analysis.csv")
    write_participants_csv(data, outdir / "demo_participants.csv")

    # validation simulation: Type I error under the null twin, decision
    # fractions under the study's planning alternative
    null_metrics = run_scenario(
        demo_null_config(reps=args.reps, seed=seed),
        scenario_id="demo-null", cell_index=0, workers=workers,
    )
    alt_metrics = run_scenario(
        alt, scenario_id="demo-alt", cell_index=1, workers=workers,
    )
    write_metrics_csv(
        metrics_csv_rows([null_metrics, alt_metrics]), outdir / "demo_metrics.csv"
    )

    print(f"single realization: true diff {results['true'].diff:+.4f} "
          f"(p={results['true'].p_value:.4g}), observed {results['observed'].diff:+.4f} "
          f"(p={results['observed'].p_value:.4g}), corrected {results['corrected'].diff:+.4f} "
          f"(p={results['corrected'].p_value:.4g})")
    print(f"validation ({args.reps} reps): observed Type I "
          f"{null_metrics.per_analysis['observed'].rejection_rate:.3f}, corrected Type I "
          f"{null_metrics.per_analysis['corrected'].rejection_rate:.3f}")
    print(f"under the alternative: observed CRF "
          f"{alt_metrics.per_analysis['observed'].crf:.3f}, observed WRF "
          f"{alt_metrics.per_analysis['observed'].wrf:.3f}, corrected CRF "
          f"{alt_metrics.per_analysis['corrected'].crf:.3f}")
    for name in ("demo_roc.svg", "demo_analysis.csv", "demo_participants.csv", "demo_metrics.csv"):
        print(outdir / name)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pairedscreen",
        description="Simulation and bias-corrected AUC comparison for paired screening trials",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="run a scenario grid from a JSON config")
    p_sim.add_argument("config", help="path to the run configuration JSON")
    p_sim.add_argument("--reps", type=int, default=None, help="override replication count")
    p_sim.add_argument("--seed", type=int, default=None, help="override master seed")
    p_sim.add_argument("--workers", type=int, default=None,
                       help=f"worker processes (default ${WORKERS_ENV} or 1)")
    p_sim.add_argument("--out", default=None, help="output directory")
    p_sim.add_argument("--charts", action="store_true", help="emit SVG sweep charts")
    p_sim.set_defaults(func=cmd_simulate)

    p_an = sub.add_parser("analyze", help="analyze a participant CSV")
    p_an.add_argument("data", help="participant CSV (id,x1,x2,observed_status[,true_status])")
    p_an.add_argument("--a1", type=float, required=True, help="threshold of suspicion, test 1")
    p_an.add_argument("--a2", type=float, required=True, help="threshold of suspicion, test 2")
    p_an.add_argument("--alpha", type=float, default=0.05)
    p_an.add_argument("--variance-mode", choices=("paired", "unpaired"), default="paired")
    p_an.add_argument("--out", default=None, help="output directory")
    p_an.set_defaults(func=cmd_analyze)

    p_demo = sub.add_parser("demo", help="run the built-in oral cancer screening demonstration")
    p_demo.add_argument("--reps", type=int, default=10_000,
                        help="validation simulation replications")
    p_demo.add_argument("--seed", type=int, default=None)
    p_demo.add_argument("--workers", type=int, default=None)
    p_demo.add_argument("--out", default=None, help="output directory (default demo_output)")
    p_demo.set_defaults(func=cmd_demo)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ParticipantCsvError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except CorrectionUnavailableError as exc:
        print(f"correction unavailable: {exc}", file=sys.stderr)
        return EXIT_CORRECTION_UNAVAILABLE


if __name__ == "__main__":
    sys.exit(main())
