"""Benchmark runner: pruned training windows x model families x feature sets.

Each task trains on one window (preprocessing, class weights, and CV folds are
functions of the training slice only), evaluates on the fixed test year, and
the runner aggregates window-averaged reports, paired with-AI vs without-AI
comparisons, and optional explanation stability tables. Tasks run on a worker
pool; every output file is deterministic for a given config and seed (the
manifest additionally records wall-clock timing).
"""

from __future__ import annotations

import hashlib
import json
import time
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .explain import (
    explain_row,
    explanations_to_frame,
    global_importance,
    stability_across_splits,
)
from .impute import impute_missing
from .metrics import ERROR_METRICS, QUALITY_METRICS, compare_feature_sets, compute_metrics
from .models import fit_family
from .panel import FEATURES_WITH_AI, FEATURES_WITHOUT_AI, instances_to_frame, label_instances
from .protocol import (
    apply_preprocessing,
    compute_class_weights,
    fit_window_stats,
    make_split_plan,
    select_hyperparameters,
)

RESULTS_SCHEMA_VERSION = 1

FEATURE_SETS = {
    "with_ai": FEATURES_WITH_AI,
    "without_ai": FEATURES_WITHOUT_AI,
}

DEFAULT_GRIDS = {
    "logit": [{"l2": 1.0}],
    "cart": [{"max_depth": 5, "min_leaf_weight": 5.0}],
    "rf": [{"n_trees": 10, "max_depth": 4, "feature_fraction": 0.7}],
    "gbt": [{"n_rounds": 15, "max_depth": 2, "learning_rate": 0.3}],
    "nn": [{"hidden_units": 4, "epochs": 200, "learning_rate": 0.001}],
}

METRIC_FIELDS = list(QUALITY_METRICS) + list(ERROR_METRICS) + ["tp", "tn", "fp", "fn"]


class BenchError(RuntimeError):
    pass


@dataclass
class BenchConfig:
    test_year: int = 2023
    earliest_start: int = 2009
    end_year: int | None = None  # defaults to test_year - 1
    families: list[str] = field(default_factory=lambda: ["logit", "cart", "rf", "gbt", "nn"])
    grids: dict = field(default_factory=lambda: {k: list(v) for k, v in DEFAULT_GRIDS.items()})
    cv_folds: int = 10
    threshold: float = 0.5
    bootstrap_samples: int = 10000
    impute: bool = True
    explanations: bool = False
    explain_families: list[str] = field(default_factory=lambda: ["logit", "gbt"])
    explain_rows: int = 100
    seed: int = 0

    @property
    def window_end(self) -> int:
        return self.test_year - 1 if self.end_year is None else self.end_year

    @classmethod
    def from_dict(cls, d: dict) -> "BenchConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise BenchError(f"unknown benchmark config keys: {sorted(unknown)}")
        return cls(**d)

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class WindowResult:
    window_index: int
    start_year: int
    end_year: int
    family: str
    feature_set: str
    report: object = None
    chosen_config: dict = field(default_factory=dict)
    cv_table: list = field(default_factory=list)
    n_train: int = 0
    n_test: int = 0
    model: object = None
    stats: object = None
    background_mean: np.ndarray | None = None
    importance: object = None
    explanations: list = field(default_factory=list)
    error: str | None = None


@dataclass
class BenchResult:
    results: list[WindowResult]
    comparisons: dict
    failures: list[str]
    out_dir: Path


def seed_for(master: int, *parts) -> int:
    """Stable task seed derived from the master seed and task identity."""
    text = f"{master}|" + "|".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "big")


def write_versioned_csv(df: pd.DataFrame, path, name: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# aidistress-{name} v{RESULTS_SCHEMA_VERSION}\n")
        df.to_csv(fh, index=False, float_format="%.12g")


def read_versioned_csv(path) -> pd.DataFrame:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline()
        if not header.startswith("# aidistress-"):
            raise BenchError(f"{path}: missing schema header")
        return pd.read_csv(fh)


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _run_task(
    task: WindowResult,
    frame: pd.DataFrame,
    features: list[str],
    config: BenchConfig,
) -> WindowResult:
    try:
        tr = frame[
            (frame["label_year"] >= task.start_year)
            & (frame["label_year"] <= task.end_year)
        ]
        te = frame[frame["label_year"] == config.test_year]
        if len(te) == 0:
            raise BenchError(f"no test instances for year {config.test_year}")
        stats = fit_window_stats(tr[features].to_numpy(), feature_names=features)
        Xtr = apply_preprocessing(tr[features].to_numpy(), stats)
        Xte = apply_preprocessing(te[features].to_numpy(), stats)
        ytr = tr["label"].to_numpy()
        yte = te["label"].to_numpy()
        cw = compute_class_weights(ytr)
        grid = config.grids.get(task.family, DEFAULT_GRIDS[task.family])
        task_seed = seed_for(config.seed, task.window_index, task.family, task.feature_set)
        if len(grid) == 1:
            chosen, cv_table = dict(grid[0]), []
        else:
            chosen, cv_table = select_hyperparameters(
                Xtr, ytr, task.family, grid, k=config.cv_folds,
                seed=task_seed, feature_names=features,
            )
        model = fit_family(
            task.family, Xtr, ytr, cw, chosen,
            seed=task_seed, feature_names=features,
        )
        task.report = compute_metrics(yte, model.predict_proba(Xte), config.threshold)
        task.chosen_config = chosen
        task.cv_table = cv_table
        task.n_train = len(tr)
        task.n_test = len(te)
        task.model = model
        task.stats = stats
        task.background_mean = Xtr.mean(axis=0)
        if config.explanations and task.family in config.explain_families:
            rows = Xte[: config.explain_rows]
            explanations = [explain_row(model, r, task.background_mean) for r in rows]
            task.importance = global_importance(explanations)
            task.explanations = explanations  # kept for the first-split export
    except Exception:
        task.error = traceback.format_exc(limit=4)
    return task


def run_benchmark(
    panel: pd.DataFrame,
    config: BenchConfig,
    out_dir,
    jobs: int = 1,
    input_digests: dict | None = None,
) -> BenchResult:
    t_start = time.perf_counter()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    work_panel = panel
    impute_report = None
    if config.impute and panel[FEATURES_WITHOUT_AI].isna().any().any():
        work_panel, impute_report = impute_missing(
            panel, seed=seed_for(config.seed, "impute")
        )

    plan = make_split_plan(config.test_year, config.earliest_start, config.window_end)
    frames = {}
    for arm, features in FEATURE_SETS.items():
        instances, skipped = label_instances(work_panel, features)
        frames[arm] = instances_to_frame(instances, features)

    tasks = []
    for w, (start, end) in enumerate(plan.windows):
        for family in config.families:
            for arm in FEATURE_SETS:
                tasks.append(WindowResult(
                    window_index=w, start_year=start, end_year=end,
                    family=family, feature_set=arm,
                ))

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(
                lambda t: _run_task(t, frames[t.feature_set],
                                    FEATURE_SETS[t.feature_set], config),
                tasks,
            ))
    else:
        results = [
            _run_task(t, frames[t.feature_set], FEATURE_SETS[t.feature_set], config)
            for t in tasks
        ]
    results.sort(key=lambda t: (t.window_index, t.family, t.feature_set))

    failures = [
        f"window {t.window_index} [{t.start_year}, {t.end_year}] "
        f"{t.family}/{t.feature_set}: {t.error.strip().splitlines()[-1]}"
        for t in results if t.error
    ]
    completed = [t for t in results if t.error is None]
    if not completed:
        raise BenchError("every window task failed:\n" + "\n".join(failures))

    _write_split_results(completed, out_dir)
    _write_summary(completed, config, out_dir)
    comparisons = _write_comparisons(completed, config, out_dir)
    if config.explanations:
        _write_explanations(completed, out_dir)
    _write_models(completed, config, out_dir)

    manifest = {
        "schema_version": RESULTS_SCHEMA_VERSION,
        "package_version": __version__,
        "config": config.as_dict(),
        "jobs": jobs,
        "n_windows": len(plan),
        "windows": plan.windows,
        "input_digests": input_digests or {},
        "imputation": impute_report.as_dict() if impute_report else None,
        "completed_splits": sorted({t.window_index for t in completed}),
        "failures": failures,
        "duration_seconds": round(time.perf_counter() - t_start, 3),
    }
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, default=str)
        fh.write("\n")
    return BenchResult(results=results, comparisons=comparisons,
                       failures=failures, out_dir=out_dir)


def _report_row(t: WindowResult) -> dict:
    row = {
        "window_index": t.window_index,
        "start_year": t.start_year,
        "end_year": t.end_year,
        "family": t.family,
        "feature_set": t.feature_set,
        "n_train": t.n_train,
        "n_test": t.n_test,
    }
    for m in METRIC_FIELDS:
        row[m] = getattr(t.report, m)
    row["chosen_config"] = json.dumps(t.chosen_config, sort_keys=True)
    return row


def _write_split_results(completed, out_dir) -> None:
    df = pd.DataFrame([_report_row(t) for t in completed])
    write_versioned_csv(df, out_dir / "results.csv", "split-results")


def _write_summary(completed, config, out_dir) -> None:
    from .metrics import average_reports

    rows = []
    for family in config.families:
        for arm in FEATURE_SETS:
            reports = [t.report for t in completed
                       if t.family == family and t.feature_set == arm]
            if not reports:
                continue
            avg = average_reports(reports)
            row = {"family": family, "feature_set": arm, "n_splits": len(reports)}
            for m in METRIC_FIELDS:
                row[m] = getattr(avg, m)
            rows.append(row)
    write_versioned_csv(pd.DataFrame(rows), out_dir / "summary.csv", "summary")


def _write_comparisons(completed, config, out_dir) -> dict:
    comparisons = {}
    rows = []
    for family in config.families:
        with_ai = {t.window_index: t.report for t in completed
                   if t.family == family and t.feature_set == "with_ai"}
        without = {t.window_index: t.report for t in completed
                   if t.family == family and t.feature_set == "without_ai"}
        shared = sorted(set(with_ai) & set(without))
        if len(shared) < 2:
            continue
        comps = compare_feature_sets(
            {w: with_ai[w] for w in shared},
            {w: without[w] for w in shared},
            B=config.bootstrap_samples,
            seed=seed_for(config.seed, "bootstrap", family),
        )
        comparisons[family] = comps
        for c in comps:
            rows.append({
                "family": family,
                "metric": c.metric,
                "n_splits": len(c.deltas),
                "mean_delta": c.mean_delta,
                "ci_low": c.ci_low,
                "ci_high": c.ci_high,
                "t_stat": c.t_stat,
                "p_t": c.p_t,
                "p_boot": c.p_boot,
                "direction": c.direction,
            })
    columns = ["family", "metric", "n_splits", "mean_delta", "ci_low", "ci_high",
               "t_stat", "p_t", "p_boot", "direction"]
    write_versioned_csv(pd.DataFrame(rows, columns=columns),
                        out_dir / "comparisons.csv", "comparisons")
    return comparisons


def _write_explanations(completed, out_dir) -> None:
    tables = {}
    local_frames = []
    for t in completed:
        if t.importance is None:
            continue
        tables.setdefault((t.family, t.feature_set), []).append(t.importance)
        if t.window_index == 0:
            local_frames.append(explanations_to_frame(
                t.explanations, split=t.window_index, model_family=t.family,
            ).assign(feature_set=t.feature_set))
    rows = []
    for (family, arm), tabs in sorted(tables.items()):
        rep = stability_across_splits(tabs)
        frame = rep.frame.assign(family=family, feature_set=arm, n_splits=rep.n_splits)
        rows.append(frame)
    if rows:
        write_versioned_csv(pd.concat(rows, ignore_index=True),
                            out_dir / "stability.csv", "stability")
    if local_frames:
        write_versioned_csv(pd.concat(local_frames, ignore_index=True),
                            out_dir / "explanations.csv", "explanations")


def _write_models(completed, config, out_dir) -> None:
    """Serialize the first-split model of each family and feature set, with the
    preprocessing stats and background needed to explain new rows."""
    models_dir = out_dir / "models"
    models_dir.mkdir(exist_ok=True)
    first = min(t.window_index for t in completed)
    for t in completed:
        if t.window_index != first:
            continue
        payload = {
            "model": t.model.to_dict(),
            "window": {
                "start_year": t.start_year,
                "end_year": t.end_year,
                "test_year": config.test_year,
                "p1": t.stats.p1.tolist(),
                "p99": t.stats.p99.tolist(),
                "mean": t.stats.mean.tolist(),
                "sd": t.stats.sd.tolist(),
                "feature_names": t.stats.feature_names,
            },
            "background_mean": t.background_mean.tolist(),
        }
        path = models_dir / f"{t.family}_{t.feature_set}.json"
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=1)
            fh.write("\n")


def load_saved_model(path):
    """Load a serialized first-split model plus its preprocessing stats."""
    from .models import model_from_dict
    from .protocol import WindowStats

    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    model = model_from_dict(payload["model"])
    w = payload["window"]
    stats = WindowStats(
        p1=np.asarray(w["p1"]), p99=np.asarray(w["p99"]),
        mean=np.asarray(w["mean"]), sd=np.asarray(w["sd"]),
        feature_names=list(w["feature_names"]),
    )
    background = np.asarray(payload["background_mean"])
    return model, stats, background, w
