"""Evaluation metrics and split-wise paired inference.

Threshold metrics come from confusion counts at a fixed cutoff; AUC is the
Mann-Whitney rank statistic with average ranks for ties. Paired inference on
with-AI vs without-AI deltas uses a paired t test plus a percentile bootstrap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np

QUALITY_METRICS = ("auc", "accuracy", "recall", "specificity", "precision", "f1", "gmean")
ERROR_METRICS = ("type1_fpr", "type2_fnr")


@dataclass
class MetricReport:
    auc: float | None = None
    accuracy: float | None = None
    recall: float | None = None
    specificity: float | None = None
    precision: float | None = None
    f1: float | None = None
    gmean: float | None = None
    tp: float = 0.0
    tn: float = 0.0
    fp: float = 0.0
    fn: float = 0.0
    type1_fpr: float | None = None
    type2_fnr: float | None = None

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class PairedComparison:
    metric: str
    deltas: np.ndarray
    mean_delta: float
    ci_low: float
    ci_high: float
    t_stat: float
    p_t: float
    p_boot: float
    direction: str


def compute_auc(labels, scores) -> float:
    """Mann-Whitney AUC with average ranks on ties."""
    y = np.asarray(labels, dtype=np.float64)
    s = np.asarray(scores, dtype=np.float64)
    n1 = int(y.sum())
    n0 = len(y) - n1
    if n1 == 0 or n0 == 0:
        raise ValueError("AUC needs both classes present")
    order = np.argsort(s, kind="stable")
    ranks = np.empty(len(s), dtype=np.float64)
    sorted_s = s[order]
    i = 0
    while i < len(s):
        j = i
        while j + 1 < len(s) and sorted_s[j + 1] == sorted_s[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0  # average rank, 1-based
        i = j + 1
    r1 = ranks[y == 1].sum()
    return float((r1 - n1 * (n1 + 1) / 2.0) / (n1 * n0))


def report_from_counts(tp, tn, fp, fn, auc=None) -> MetricReport:
    """Derive all threshold metrics from (possibly averaged, fractional) counts."""
    rep = MetricReport(tp=float(tp), tn=float(tn), fp=float(fp), fn=float(fn), auc=auc)
    total = tp + tn + fp + fn
    if total > 0:
        rep.accuracy = (tp + tn) / total
    if tp + fn > 0:
        rep.recall = tp / (tp + fn)
        rep.type2_fnr = fn / (tp + fn)
    if tn + fp > 0:
        rep.specificity = tn / (tn + fp)
        rep.type1_fpr = fp / (tn + fp)
    if tp + fp > 0:
        rep.precision = tp / (tp + fp)
    if 2 * tp + fp + fn > 0:
        rep.f1 = 2 * tp / (2 * tp + fp + fn)
    if rep.recall is not None and rep.specificity is not None:
        rep.gmean = math.sqrt(rep.recall * rep.specificity)
    return rep


def compute_metrics(labels, probabilities, threshold=0.5) -> MetricReport:
    y = np.asarray(labels, dtype=np.int64)
    p = np.asarray(probabilities, dtype=np.float64)
    if np.any(p < 0) or np.any(p > 1):
        raise ValueError("probabilities must lie in [0, 1]")
    pred = (p >= threshold).astype(np.int64)
    tp = float(np.sum((pred == 1) & (y == 1)))
    tn = float(np.sum((pred == 0) & (y == 0)))
    fp = float(np.sum((pred == 1) & (y == 0)))
    fn = float(np.sum((pred == 0) & (y == 1)))
    auc = None
    if 0 < y.sum() < len(y):
        auc = compute_auc(y, p)
    return report_from_counts(tp, tn, fp, fn, auc=auc)


def average_reports(reports: list[MetricReport]) -> MetricReport:
    """Field-wise arithmetic mean; rates average as rates, counts as counts.

    Note the averaged f1/gmean are means of per-split values, not the values
    recomputed from averaged counts (use report_from_counts for the latter).
    """
    if not reports:
        raise ValueError("need at least one report")
    out = MetricReport()
    for f in fields(MetricReport):
        vals = [getattr(r, f.name) for r in reports if getattr(r, f.name) is not None]
        if vals:
            setattr(out, f.name, float(np.mean(vals)))
        elif f.name in ("tp", "tn", "fp", "fn"):
            setattr(out, f.name, 0.0)
        else:
            setattr(out, f.name, None)
    return out


# ---------------------------------------------------------------------------
# Student-t tail via the regularized incomplete beta function


def _betacf(a, b, x, max_iter=300, eps=3e-16):
    """Continued fraction for the incomplete beta (modified Lentz)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            break
    return h


def _betainc(a, b, x):
    """Regularized incomplete beta I_x(a, b)."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_sf2(t, df) -> float:
    """Two-sided tail probability P(|T_df| >= |t|)."""
    return _betainc(df / 2.0, 0.5, df / (df + t * t))


def paired_t_test(deltas) -> tuple[float, float]:
    d = np.asarray(deltas, dtype=np.float64)
    n = len(d)
    if n < 2:
        raise ValueError("paired t test needs at least 2 deltas")
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    if sd <= 1e-12 * abs(mean):  # identical deltas up to float rounding
        # degenerate rule: identical deltas carry no sampling variability
        if mean == 0.0:
            return 0.0, 1.0
        return math.copysign(math.inf, mean), 0.0
    t = mean / (sd / math.sqrt(n))
    return t, student_t_sf2(t, n - 1)


def paired_bootstrap(deltas, B=10000, seed=0) -> tuple[float, float, float]:
    """Percentile bootstrap over split indices: 95% CI plus a two-sided p."""
    d = np.asarray(deltas, dtype=np.float64)
    n = len(d)
    if n < 2:
        raise ValueError("paired bootstrap needs at least 2 deltas")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, n, size=(B, n))
    means = d[idx].mean(axis=1)
    ci_low, ci_high = np.quantile(means, [0.025, 0.975])
    p = 2.0 * min(float(np.mean(means <= 0.0)), float(np.mean(means >= 0.0)))
    p = min(max(p, 2.0 / B), 1.0)
    return float(ci_low), float(ci_high), p


def compare_feature_sets(
    with_ai: dict[int, MetricReport],
    without_ai: dict[int, MetricReport],
    B=10000,
    seed=0,
) -> list[PairedComparison]:
    """Per-metric paired deltas across splits.

    Quality metrics use with - without; error metrics use without - with, so a
    positive delta always reads "AI better".
    """
    if set(with_ai) != set(without_ai):
        raise ValueError(
            f"split sets differ: {sorted(with_ai)} vs {sorted(without_ai)}"
        )
    splits = sorted(with_ai)
    out = []
    for metric in QUALITY_METRICS + ERROR_METRICS:
        pairs = [
            (getattr(with_ai[s], metric), getattr(without_ai[s], metric))
            for s in splits
        ]
        pairs = [(a, b) for a, b in pairs if a is not None and b is not None]
        if len(pairs) < 2:
            continue
        if metric in ERROR_METRICS:
            deltas = np.array([b - a for a, b in pairs])
        else:
            deltas = np.array([a - b for a, b in pairs])
        t, p_t = paired_t_test(deltas)
        ci_low, ci_high, p_boot = paired_bootstrap(deltas, B=B, seed=seed)
        mean = float(deltas.mean())
        if mean > 0:
            direction = "AI better"
        elif mean < 0:
            direction = "AI worse"
        else:
            direction = "neutral"
        out.append(
            PairedComparison(
                metric=metric,
                deltas=deltas,
                mean_delta=mean,
                ci_low=ci_low,
                ci_high=ci_high,
                t_stat=t,
                p_t=p_t,
                p_boot=p_boot,
                direction=direction,
            )
        )
    return out
