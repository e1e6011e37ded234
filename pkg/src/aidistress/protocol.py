"""Pruned-training-window evaluation protocol.

One fixed test year; training windows share the same end year and
progressively drop the oldest year. All preprocessing statistics, class
weights, and cross-validation folds are functions of training rows only.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import models
from .metrics import compute_auc


@dataclass(frozen=True)
class SplitPlan:
    test_year: int
    start_years: tuple[int, ...]
    end_year: int

    @property
    def windows(self) -> list[tuple[int, int]]:
        return [(s, self.end_year) for s in self.start_years]

    def __len__(self) -> int:
        return len(self.start_years)


@dataclass
class WindowStats:
    p1: np.ndarray
    p99: np.ndarray
    mean: np.ndarray
    sd: np.ndarray
    feature_names: list[str] = field(default_factory=list)

    @property
    def degenerate(self) -> np.ndarray:
        return self.sd == 0.0


@dataclass(frozen=True)
class ClassWeights:
    w1: float  # distressed
    w0: float  # healthy


def make_split_plan(test_year: int, earliest_start: int, end_year: int) -> SplitPlan:
    """One window per start year in [earliest_start, end_year]; the shortest
    window is the single year [end_year, end_year]."""
    if not (earliest_start <= end_year < test_year):
        raise ValueError(
            f"need earliest_start <= end_year < test_year, "
            f"got ({earliest_start}, {end_year}, {test_year})"
        )
    starts = tuple(range(earliest_start, end_year + 1))
    return SplitPlan(test_year=test_year, start_years=starts, end_year=end_year)


def fit_window_stats(X, feature_names=None) -> WindowStats:
    """Winsorization bounds and post-winsorization mean/sd, training rows only."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("window stats need at least 2 training rows")
    p1 = np.quantile(X, 0.01, axis=0)  # linear interpolation between order stats
    p99 = np.quantile(X, 0.99, axis=0)
    clamped = np.clip(X, p1, p99)
    mean = clamped.mean(axis=0)
    sd = clamped.std(axis=0, ddof=1)
    return WindowStats(
        p1=p1, p99=p99, mean=mean, sd=sd,
        feature_names=list(feature_names) if feature_names is not None else [],
    )


def apply_preprocessing(X, stats: WindowStats) -> np.ndarray:
    """Clamp to [p1, p99], then z-score with training mean/sd; degenerate
    (sd == 0) features map to 0."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != len(stats.mean):
        raise ValueError(
            f"schema mismatch: {X.shape[1] if X.ndim == 2 else X.ndim} columns "
            f"vs {len(stats.mean)} fitted features"
        )
    clamped = np.clip(X, stats.p1, stats.p99)
    sd = np.where(stats.degenerate, 1.0, stats.sd)
    z = (clamped - stats.mean) / sd
    z[:, stats.degenerate] = 0.0
    return z


def compute_class_weights(labels) -> ClassWeights:
    """Inverse-frequency weights: w1 = n / (2 n1), w0 = n / (2 n0)."""
    y = np.asarray(labels)
    n = len(y)
    n1 = int((y == 1).sum())
    n0 = n - n1
    if n1 == 0 or n0 == 0:
        raise ValueError("class weights need both classes in the window")
    return ClassWeights(w1=n / (2.0 * n1), w0=n / (2.0 * n0))


def stratified_folds(labels, k: int, seed: int = 0) -> np.ndarray:
    """Fold assignment preserving the event rate; per-fold positive counts
    differ by at most one."""
    y = np.asarray(labels)
    rng = np.random.default_rng(seed)
    folds = np.empty(len(y), dtype=np.int64)
    for cls in (0, 1):
        idx = np.nonzero(y == cls)[0]
        idx = idx[rng.permutation(len(idx))]
        folds[idx] = np.arange(len(idx)) % k
    return folds


def _capacity_key(config: dict) -> tuple:
    """Tie-break ordering: fewer trees/rounds, shallower, stronger regularization."""
    trees = config.get("n_trees", config.get("n_rounds", 0))
    depth = config.get("max_depth", config.get("hidden_units", 0))
    reg = config.get("l2", config.get("l2_leaf", 0.0))
    return (trees, depth, -reg)


def select_hyperparameters(
    X,
    y,
    family: str,
    grid: list[dict],
    k: int = 10,
    seed: int = 0,
    feature_names=None,
) -> tuple[dict, list[dict]]:
    """10-fold stratified CV inside the training window; argmax mean validation
    AUC wins, ties broken toward the lower-capacity config."""
    if not grid:
        raise ValueError("hyperparameter grid is empty")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n1 = int(y.sum())
    if n1 < k:
        k_eff = max(2, n1)
        warnings.warn(
            f"only {n1} positives in window; lowering CV folds from {k} to {k_eff}"
        )
        k = k_eff
    folds = stratified_folds(y, k, seed=seed)
    ordered = sorted(grid, key=_capacity_key)
    table = []
    best = None
    for config in ordered:
        fold_aucs = []
        for f in range(k):
            tr = folds != f
            va = ~tr
            cw = compute_class_weights(y[tr])
            model = models.fit_family(
                family, X[tr], y[tr], cw, config,
                seed=seed * 1000 + f, feature_names=feature_names,
            )
            fold_aucs.append(compute_auc(y[va], model.predict_proba(X[va])))
        mean_auc = float(np.mean(fold_aucs))
        table.append({"config": config, "mean_auc": mean_auc, "fold_aucs": fold_aucs})
        if best is None or mean_auc > best[0]:
            best = (mean_auc, config)
    return best[1], table
