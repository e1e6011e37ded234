"""Additive feature attributions and cross-split importance stability.

Logistic models get the exact independent-feature attribution; tree models
get the path-dependent tree attribution algorithm (exact for the
path-expectation value function, summed across an ensemble); the neural net
gets exhaustive Shapley with mean substitution, which is feasible at this
schema size. Global importance is mean |phi| rescaled to 1..100 per split.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from math import factorial

import numpy as np
import pandas as pd

from .models import (
    CartModel,
    GradientBoostingModel,
    LogisticModel,
    NeuralNetModel,
    RandomForestModel,
)
from .tree import LEAF, Tree

MAX_EXHAUSTIVE_FEATURES = 14
TOP_K = 6


class ExplainError(ValueError):
    """Raised when a model cannot be explained as requested."""


@dataclass
class ShapExplanation:
    base_value: float
    phi: np.ndarray
    output_space: str  # "log_odds" or "probability"
    feature_names: list[str] | None = None

    @property
    def prediction(self) -> float:
        return self.base_value + float(self.phi.sum())


@dataclass
class ImportanceTable:
    """Per-split global importances: raw mean |phi| plus the 1..100 rescale."""

    feature_names: list[str]
    mean_abs_phi: np.ndarray
    normalized: np.ndarray
    constant: bool = False


@dataclass
class StabilityReport:
    frame: pd.DataFrame = field(repr=False)
    n_splits: int = 0


# ---------------------------------------------------------------------------
# linear


def shap_linear(model: LogisticModel, row, background_mean) -> ShapExplanation:
    if not isinstance(model, LogisticModel):
        raise ExplainError(f"shap_linear expects a logit model, got {model.family}")
    x = np.asarray(row, dtype=np.float64)
    mu = np.asarray(background_mean, dtype=np.float64)
    if x.shape != mu.shape or len(x) != len(model.coef):
        raise ExplainError("row/background length does not match the model schema")
    phi = model.coef * (x - mu)
    base = float(model.intercept + model.coef @ mu)
    return ShapExplanation(base, phi, "log_odds", list(model.feature_names))


# ---------------------------------------------------------------------------
# trees: path-dependent attribution with EXTEND/UNWIND bookkeeping
# (path elements are [feature, zero_fraction, one_fraction, pweight])


def _extend(path, pz, po, pi):
    out = [list(e) for e in path]
    out.append([pi, pz, po, 1.0 if not path else 0.0])
    depth = len(out) - 1
    for i in range(depth - 1, -1, -1):
        out[i + 1][3] += po * out[i][3] * (i + 1) / (depth + 1)
        out[i][3] = pz * out[i][3] * (depth - i) / (depth + 1)
    return out


def _unwound_sum(path, i):
    depth = len(path) - 1
    _, z, o, _ = path[i]
    carry = path[depth][3]
    total = 0.0
    if o != 0.0:
        for j in range(depth - 1, -1, -1):
            tmp = carry / ((j + 1) * o)
            total += tmp
            carry = path[j][3] - tmp * z * (depth - j)
    else:
        for j in range(depth - 1, -1, -1):
            total += path[j][3] / (z * (depth - j))
    return total * (depth + 1)


def _unwind(path, i):
    depth = len(path) - 1
    _, z, o, _ = path[i]
    out = [list(e) for e in path]
    carry = out[depth][3]
    for j in range(depth - 1, -1, -1):
        if o != 0.0:
            tmp = out[j][3]
            out[j][3] = carry * (depth + 1) / ((j + 1) * o)
            carry = tmp - out[j][3] * z * (depth - j) / (depth + 1)
        else:
            out[j][3] = out[j][3] * (depth + 1) / (z * (depth - j))
    for j in range(i, depth):
        out[j][0], out[j][1], out[j][2] = out[j + 1][0], out[j + 1][1], out[j + 1][2]
    return out[:depth]


def _tree_phi(tree: Tree, x: np.ndarray, n_features: int) -> np.ndarray:
    if tree.cover[0] <= 0 or not np.all(np.isfinite(tree.cover)):
        raise ExplainError("tree lacks usable cover metadata")
    phi = np.zeros(n_features, dtype=np.float64)

    def recurse(node, path, pz, po, pi):
        path = _extend(path, pz, po, pi)
        if tree.feature[node] == LEAF:
            for i in range(1, len(path)):
                w = _unwound_sum(path, i)
                d, z, o, _ = path[i]
                phi[d] += w * (o - z) * tree.value[node]
            return
        f = int(tree.feature[node])
        left, right = int(tree.left[node]), int(tree.right[node])
        hot, cold = (left, right) if x[f] <= tree.threshold[node] else (right, left)
        hz = tree.cover[hot] / tree.cover[node]
        cz = tree.cover[cold] / tree.cover[node]
        iz = io = 1.0
        k = next((j for j in range(len(path)) if path[j][0] == f), -1)
        if k >= 0:
            iz, io = path[k][1], path[k][2]
            path = _unwind(path, k)
        recurse(hot, path, hz * iz, io, f)
        recurse(cold, path, cz * iz, 0.0, f)

    recurse(0, [], 1.0, 1.0, -1)
    return phi


def shap_tree(model, row) -> ShapExplanation:
    """Per-tree attributions summed across the ensemble.

    Boosted trees are explained in log-odds space; a single tree or a forest
    in probability space (the forest averages per-tree attributions).
    """
    x = np.asarray(row, dtype=np.float64)
    d = len(model.feature_names)
    if len(x) != d:
        raise ExplainError("row length does not match the model schema")
    if isinstance(model, CartModel):
        phi = _tree_phi(model.tree, x, d)
        return ShapExplanation(
            model.tree.expected_value(), phi, "probability", list(model.feature_names)
        )
    if isinstance(model, RandomForestModel):
        phi = np.zeros(d)
        base = 0.0
        for t in model.trees:
            phi += _tree_phi(t, x, d)
            base += t.expected_value()
        k = len(model.trees)
        return ShapExplanation(base / k, phi / k, "probability", list(model.feature_names))
    if isinstance(model, GradientBoostingModel):
        phi = np.zeros(d)
        base = model.prior
        for t in model.trees:
            phi += model.learning_rate * _tree_phi(t, x, d)
            base += model.learning_rate * t.expected_value()
        return ShapExplanation(base, phi, "log_odds", list(model.feature_names))
    raise ExplainError(f"shap_tree expects a tree-family model, got {model.family}")


# ---------------------------------------------------------------------------
# exhaustive Shapley with mean substitution (neural net)


def shap_exhaustive(margin_fn, row, background_mean, feature_names) -> ShapExplanation:
    x = np.asarray(row, dtype=np.float64)
    mu = np.asarray(background_mean, dtype=np.float64)
    d = len(x)
    if d > MAX_EXHAUSTIVE_FEATURES:
        raise ExplainError(
            f"exhaustive Shapley capped at {MAX_EXHAUSTIVE_FEATURES} features, got {d}"
        )
    # value of every coalition in one batched forward pass
    masks = np.arange(2**d, dtype=np.int64)
    member = ((masks[:, None] >> np.arange(d)) & 1).astype(bool)
    X_all = np.where(member, x, mu)
    v = np.asarray(margin_fn(X_all), dtype=np.float64)
    sizes = member.sum(axis=1)
    w_by_size = np.array(
        [factorial(s) * factorial(d - s - 1) / factorial(d) for s in range(d)]
    )
    phi = np.zeros(d)
    for j in range(d):
        without = ~member[:, j]
        s_wo = masks[without]
        v_wo = v[without]
        v_with = v[s_wo | (1 << j)]
        phi[j] = float(np.sum(w_by_size[sizes[without]] * (v_with - v_wo)))
    return ShapExplanation(float(v[0]), phi, "log_odds", list(feature_names))


def shap_neural_net(model: NeuralNetModel, row, background_mean) -> ShapExplanation:
    if not isinstance(model, NeuralNetModel):
        raise ExplainError(f"expected an nn model, got {model.family}")
    return shap_exhaustive(
        model.predict_margin, row, background_mean, model.feature_names
    )


def explain_row(model, row, background_mean=None) -> ShapExplanation:
    """Family dispatch for a single row."""
    if isinstance(model, LogisticModel):
        return shap_linear(model, row, background_mean)
    if isinstance(model, (CartModel, RandomForestModel, GradientBoostingModel)):
        return shap_tree(model, row)
    if isinstance(model, NeuralNetModel):
        return shap_neural_net(model, row, background_mean)
    raise ExplainError(f"no explanation method for family {model.family}")


# ---------------------------------------------------------------------------
# global importance and cross-split stability


def global_importance(explanations: list[ShapExplanation]) -> ImportanceTable:
    if not explanations:
        raise ExplainError("need at least one explanation")
    names = explanations[0].feature_names
    mat = np.vstack([e.phi for e in explanations])
    mean_abs = np.abs(mat).mean(axis=0)
    lo, hi = float(mean_abs.min()), float(mean_abs.max())
    if hi == lo:
        return ImportanceTable(names, mean_abs, np.full(len(mean_abs), 100.0), True)
    norm = 1.0 + 99.0 * (mean_abs - lo) / (hi - lo)
    return ImportanceTable(names, mean_abs, norm, False)


def _ranks(values: np.ndarray) -> np.ndarray:
    """Descending rank, 1-based; ties broken by position in the schema."""
    order = np.lexsort((np.arange(len(values)), -values))
    ranks = np.empty(len(values), dtype=np.float64)
    ranks[order] = np.arange(1, len(values) + 1)
    return ranks


def stability_across_splits(tables: list[ImportanceTable]) -> StabilityReport:
    if not tables:
        raise ExplainError("need at least one importance table")
    names = tables[0].feature_names
    for t in tables:
        if t.feature_names != names:
            raise ExplainError("importance tables disagree on the feature schema")
    d = len(names)
    top6 = np.zeros(d)
    rank_sum = np.zeros(d)
    norm_sum = np.zeros(d)
    for t in tables:
        ranks = _ranks(t.mean_abs_phi)
        if d <= TOP_K:
            cutoff = -np.inf
        else:
            cutoff = np.sort(t.mean_abs_phi)[::-1][TOP_K - 1]
        top6 += t.mean_abs_phi >= cutoff  # boundary ties all count
        rank_sum += ranks
        norm_sum += t.normalized
    n = len(tables)
    frame = pd.DataFrame(
        {
            "feature": names,
            "top6_frequency": top6 / n,
            "mean_rank": rank_sum / n,
            "mean_normalized_importance": norm_sum / n,
        }
    )
    return StabilityReport(frame=frame, n_splits=n)


def explanations_to_frame(
    explanations: list[ShapExplanation],
    split: int,
    model_family: str,
    row_ids: list | None = None,
) -> pd.DataFrame:
    """Long-format export: one record per (row, feature)."""
    rows = []
    for i, e in enumerate(explanations):
        rid = row_ids[i] if row_ids is not None else i
        for name, p in zip(e.feature_names, e.phi):
            rows.append(
                {
                    "split": split,
                    "model": model_family,
                    "row_id": rid,
                    "feature": name,
                    "phi": float(p),
                    "base_value": e.base_value,
                    "output_space": e.output_space,
                }
            )
    return pd.DataFrame(rows)
