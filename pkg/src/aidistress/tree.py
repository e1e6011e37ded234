"""Binary decision trees shared by the CART/forest/boosting classifiers,
the chained-equations imputer, and the tree explanation code.

All trees use the same array-of-nodes layout: internal nodes route
``x[feature] <= threshold`` to the left child; every node records the sum of
training instance weights that reached it (its cover).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

PROB_EPS = 1e-6  # probability clipping used by every classifier

LEAF = -1


@dataclass
class Tree:
    feature: np.ndarray  # int, LEAF for leaves
    threshold: np.ndarray  # float, nan for leaves
    left: np.ndarray  # int child index, LEAF for leaves
    right: np.ndarray
    value: np.ndarray  # leaf payload (probability or additive score)
    cover: np.ndarray  # training weight that reached each node

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Vectorized root-to-leaf traversal."""
        n = X.shape[0]
        node = np.zeros(n, dtype=np.int64)
        out = np.empty(n, dtype=np.float64)
        active = np.arange(n)
        while active.size:
            cur = node[active]
            is_leaf = self.feature[cur] == LEAF
            done = active[is_leaf]
            out[done] = self.value[node[done]]
            active = active[~is_leaf]
            if not active.size:
                break
            cur = node[active]
            go_left = X[active, self.feature[cur]] <= self.threshold[cur]
            node[active] = np.where(go_left, self.left[cur], self.right[cur])
        return out

    def leaf_index(self, X: np.ndarray) -> np.ndarray:
        n = X.shape[0]
        node = np.zeros(n, dtype=np.int64)
        active = np.arange(n)
        while active.size:
            cur = node[active]
            internal = self.feature[cur] != LEAF
            active = active[internal]
            if not active.size:
                break
            cur = node[active]
            go_left = X[active, self.feature[cur]] <= self.threshold[cur]
            node[active] = np.where(go_left, self.left[cur], self.right[cur])
        return node

    def expected_value(self) -> float:
        """Cover-weighted mean leaf value (the tree's training-background output)."""
        leaves = self.feature == LEAF
        total = self.cover[0]
        return float(np.dot(self.value[leaves], self.cover[leaves]) / total)

    def used_features(self) -> set[int]:
        return set(int(f) for f in self.feature if f != LEAF)

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "cover": self.cover.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(
            feature=np.asarray(d["feature"], dtype=np.int64),
            threshold=np.asarray(d["threshold"], dtype=np.float64),
            left=np.asarray(d["left"], dtype=np.int64),
            right=np.asarray(d["right"], dtype=np.int64),
            value=np.asarray(d["value"], dtype=np.float64),
            cover=np.asarray(d["cover"], dtype=np.float64),
        )


class _Builder:
    """Accumulates nodes during recursive growth."""

    def __init__(self):
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[float] = []
        self.cover: list[float] = []

    def add(self) -> int:
        idx = len(self.feature)
        self.feature.append(LEAF)
        self.threshold.append(np.nan)
        self.left.append(LEAF)
        self.right.append(LEAF)
        self.value.append(0.0)
        self.cover.append(0.0)
        return idx

    def finish(self) -> Tree:
        return Tree(
            feature=np.asarray(self.feature, dtype=np.int64),
            threshold=np.asarray(self.threshold, dtype=np.float64),
            left=np.asarray(self.left, dtype=np.int64),
            right=np.asarray(self.right, dtype=np.int64),
            value=np.asarray(self.value, dtype=np.float64),
            cover=np.asarray(self.cover, dtype=np.float64),
        )


def _split_candidates(x_sorted: np.ndarray) -> np.ndarray:
    """Boundary positions i such that x_sorted[i] < x_sorted[i+1]."""
    return np.nonzero(x_sorted[:-1] < x_sorted[1:])[0]


def best_gini_split(X, y, w, min_leaf_weight, feature_indices):
    """Exhaustive midpoint search minimizing weighted Gini impurity.

    Returns (impurity, feature, threshold) or None when no valid split exists.
    """
    best = None
    wy = w * y
    for j in feature_indices:
        order = np.argsort(X[:, j], kind="stable")
        xs = X[order, j]
        cw = np.cumsum(w[order])
        cwy = np.cumsum(wy[order])
        total_w, total_wy = cw[-1], cwy[-1]
        cand = _split_candidates(xs)
        if cand.size == 0:
            continue
        wl, wyl = cw[cand], cwy[cand]
        wr, wyr = total_w - wl, total_wy - wyl
        ok = (wl >= min_leaf_weight) & (wr >= min_leaf_weight)
        if not ok.any():
            continue
        wl, wyl, wr, wyr, cand_ok = wl[ok], wyl[ok], wr[ok], wyr[ok], cand[ok]
        # weighted binary Gini: 2 * w * p * (1 - p), summed over the children
        imp = 2.0 * (wyl * (wl - wyl) / wl + wyr * (wr - wyr) / wr)
        k = int(np.argmin(imp))
        if best is None or imp[k] < best[0] - 1e-15:
            i = cand_ok[k]
            thr = 0.5 * (xs[i] + xs[i + 1])
            best = (float(imp[k]), int(j), float(thr))
    return best


def best_newton_split(X, g, h, l2_leaf, min_child_weight, feature_indices):
    """Midpoint search maximizing the Newton-boosting split gain.

    ``min_child_weight`` bounds the Hessian mass per child. Returns
    (gain, feature, threshold) or None.
    """
    best = None
    G, H = g.sum(), h.sum()
    parent_score = G * G / (H + l2_leaf)
    for j in feature_indices:
        order = np.argsort(X[:, j], kind="stable")
        xs = X[order, j]
        cg = np.cumsum(g[order])
        ch = np.cumsum(h[order])
        cand = _split_candidates(xs)
        if cand.size == 0:
            continue
        gl, hl = cg[cand], ch[cand]
        gr, hr = G - gl, H - hl
        ok = (hl >= min_child_weight) & (hr >= min_child_weight)
        if not ok.any():
            continue
        gl, hl, gr, hr, cand_ok = gl[ok], hl[ok], gr[ok], hr[ok], cand[ok]
        gain = gl * gl / (hl + l2_leaf) + gr * gr / (hr + l2_leaf) - parent_score
        k = int(np.argmax(gain))
        if gain[k] <= 1e-12:
            continue
        if best is None or gain[k] > best[0] + 1e-15:
            i = cand_ok[k]
            thr = 0.5 * (xs[i] + xs[i + 1])
            best = (float(gain[k]), int(j), float(thr))
    return best


def best_variance_split(X, y, min_leaf, feature_indices):
    """Midpoint search maximizing squared-error reduction (counts, not weights)."""
    best = None
    for j in feature_indices:
        order = np.argsort(X[:, j], kind="stable")
        xs = X[order, j]
        cy = np.cumsum(y[order])
        n = len(xs)
        total = cy[-1]
        cand = _split_candidates(xs)
        if cand.size == 0:
            continue
        nl = cand + 1
        nr = n - nl
        ok = (nl >= min_leaf) & (nr >= min_leaf)
        if not ok.any():
            continue
        sl = cy[cand][ok]
        nl, nr, cand_ok = nl[ok], nr[ok], cand[ok]
        sr = total - sl
        score = sl * sl / nl + sr * sr / nr
        k = int(np.argmax(score))
        if best is None or score[k] > best[0] + 1e-15:
            i = cand_ok[k]
            thr = 0.5 * (xs[i] + xs[i + 1])
            best = (float(score[k]), int(j), float(thr))
    return best


def _pick_features(n_features, feature_fraction, rng):
    if feature_fraction >= 1.0 or rng is None:
        return np.arange(n_features)
    k = max(1, int(np.ceil(feature_fraction * n_features)))
    return np.sort(rng.choice(n_features, size=k, replace=False))


def grow_classification_tree(
    X: np.ndarray,
    y: np.ndarray,
    w: np.ndarray,
    max_depth: int,
    min_leaf_weight: float = 1.0,
    feature_fraction: float = 1.0,
    rng: np.random.Generator | None = None,
) -> Tree:
    """Greedy CART minimizing weighted Gini; leaves hold clipped probabilities."""
    b = _Builder()

    def grow(idx, depth):
        node = b.add()
        wsum = float(w[idx].sum())
        wpos = float((w[idx] * y[idx]).sum())
        b.cover[node] = wsum
        p = wpos / wsum
        b.value[node] = float(np.clip(p, PROB_EPS, 1.0 - PROB_EPS))
        if depth >= max_depth or p <= 0.0 or p >= 1.0 or wsum < 2 * min_leaf_weight:
            return node
        feats = _pick_features(X.shape[1], feature_fraction, rng)
        found = best_gini_split(X[idx], y[idx], w[idx], min_leaf_weight, feats)
        if found is None:
            return node
        _, j, thr = found
        go_left = X[idx, j] <= thr
        b.feature[node] = j
        b.threshold[node] = thr
        b.left[node] = grow(idx[go_left], depth + 1)
        b.right[node] = grow(idx[~go_left], depth + 1)
        return node

    grow(np.arange(X.shape[0]), 0)
    return b.finish()


def grow_newton_tree(
    X: np.ndarray,
    g: np.ndarray,
    h: np.ndarray,
    w: np.ndarray,
    max_depth: int,
    l2_leaf: float = 1.0,
    min_child_weight: float = 1e-3,
    feature_fraction: float = 1.0,
    rng: np.random.Generator | None = None,
) -> Tree:
    """One boosting tree: leaf value = -sum(g) / (sum(h) + l2_leaf)."""
    b = _Builder()

    def grow(idx, depth):
        node = b.add()
        G, H = float(g[idx].sum()), float(h[idx].sum())
        if not np.isfinite(H):
            raise FloatingPointError("non-finite Hessian sum while growing boosting tree")
        b.cover[node] = float(w[idx].sum())
        b.value[node] = -G / (H + l2_leaf)
        if depth >= max_depth:
            return node
        feats = _pick_features(X.shape[1], feature_fraction, rng)
        found = best_newton_split(X[idx], g[idx], h[idx], l2_leaf, min_child_weight, feats)
        if found is None:
            return node
        _, j, thr = found
        go_left = X[idx, j] <= thr
        b.feature[node] = j
        b.threshold[node] = thr
        b.left[node] = grow(idx[go_left], depth + 1)
        b.right[node] = grow(idx[~go_left], depth + 1)
        return node

    grow(np.arange(X.shape[0]), 0)
    return b.finish()


@dataclass
class DonorTree:
    """Regression tree whose leaves remember the observed training values,
    so an imputation can be drawn from a donor leaf instead of the leaf mean."""

    tree: Tree
    donors: dict[int, np.ndarray] = field(default_factory=dict)

    def draw(self, X: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        leaves = self.tree.leaf_index(X)
        out = np.empty(len(leaves), dtype=np.float64)
        for i, leaf in enumerate(leaves):
            pool = self.donors[int(leaf)]
            out[i] = pool[rng.integers(0, len(pool))]
        return out


def grow_donor_tree(
    X: np.ndarray,
    y: np.ndarray,
    max_depth: int = 8,
    min_leaf: int = 5,
) -> DonorTree:
    """Variance-reduction CART keeping per-leaf donor pools of observed values."""
    b = _Builder()
    donors: dict[int, np.ndarray] = {}

    def grow(idx, depth):
        node = b.add()
        b.cover[node] = float(len(idx))
        b.value[node] = float(y[idx].mean())
        if depth >= max_depth or len(idx) < 2 * min_leaf or np.ptp(y[idx]) == 0.0:
            donors[node] = y[idx].copy()
            return node
        found = best_variance_split(X[idx], y[idx], min_leaf, np.arange(X.shape[1]))
        if found is None:
            donors[node] = y[idx].copy()
            return node
        _, j, thr = found
        go_left = X[idx, j] <= thr
        b.feature[node] = j
        b.threshold[node] = thr
        b.left[node] = grow(idx[go_left], depth + 1)
        b.right[node] = grow(idx[~go_left], depth + 1)
        return node

    grow(np.arange(X.shape[0]), 0)
    return DonorTree(tree=b.finish(), donors=donors)
