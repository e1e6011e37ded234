"""Class-weighted classifiers: logistic regression, CART, random forest,
Newton-boosted trees, and a single-hidden-layer neural network.

Every family exposes the same fit/predict contract (probabilities in
(eps, 1-eps), seeded determinism, JSON round-trip), so the benchmark loop
stays family-agnostic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .tree import (
    PROB_EPS,
    Tree,
    grow_classification_tree,
    grow_newton_tree,
)

MODEL_FORMAT_VERSION = 1

FAMILIES = ("logit", "cart", "rf", "gbt", "nn")


class SchemaError(ValueError):
    """Feature schema mismatch between fit and predict."""


class FitError(RuntimeError):
    """Optimization failed (divergence / non-finite loss)."""


def _sigmoid(z):
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _clip_proba(p):
    return np.clip(p, PROB_EPS, 1.0 - PROB_EPS)


def _row_weights(y, class_weights):
    if hasattr(class_weights, "w1"):
        w1, w0 = class_weights.w1, class_weights.w0
    else:
        w1, w0 = class_weights
    return np.where(y == 1, w1, w0).astype(np.float64)


@dataclass
class BaseModel:
    feature_names: list[str]
    config: dict = field(default_factory=dict)

    family = "base"

    def _check_schema(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != len(self.feature_names):
            raise SchemaError(
                f"expected {len(self.feature_names)} features, got shape {X.shape}"
            )
        return X

    def predict_proba(self, X) -> np.ndarray:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass
class LogisticModel(BaseModel):
    coef: np.ndarray = None
    intercept: float = 0.0

    family = "logit"

    def predict_margin(self, X):
        X = self._check_schema(X)
        return X @ self.coef + self.intercept

    def predict_proba(self, X):
        return _clip_proba(_sigmoid(self.predict_margin(X)))

    def to_dict(self):
        return {
            "format_version": MODEL_FORMAT_VERSION,
            "family": self.family,
            "feature_names": self.feature_names,
            "config": self.config,
            "coef": self.coef.tolist(),
            "intercept": self.intercept,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            feature_names=d["feature_names"],
            config=d.get("config", {}),
            coef=np.asarray(d["coef"], dtype=np.float64),
            intercept=float(d["intercept"]),
        )


@dataclass
class CartModel(BaseModel):
    tree: Tree = None

    family = "cart"

    @property
    def trees(self):
        return [self.tree]

    def predict_proba(self, X):
        X = self._check_schema(X)
        return _clip_proba(self.tree.predict(X))

    def to_dict(self):
        return {
            "format_version": MODEL_FORMAT_VERSION,
            "family": self.family,
            "feature_names": self.feature_names,
            "config": self.config,
            "tree": self.tree.to_dict(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            feature_names=d["feature_names"],
            config=d.get("config", {}),
            tree=Tree.from_dict(d["tree"]),
        )


@dataclass
class RandomForestModel(BaseModel):
    trees: list[Tree] = field(default_factory=list)

    family = "rf"

    def predict_proba(self, X):
        X = self._check_schema(X)
        acc = np.zeros(X.shape[0], dtype=np.float64)
        for t in self.trees:
            acc += t.predict(X)
        return _clip_proba(acc / len(self.trees))

    def to_dict(self):
        return {
            "format_version": MODEL_FORMAT_VERSION,
            "family": self.family,
            "feature_names": self.feature_names,
            "config": self.config,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            feature_names=d["feature_names"],
            config=d.get("config", {}),
            trees=[Tree.from_dict(t) for t in d["trees"]],
        )


@dataclass
class GradientBoostingModel(BaseModel):
    trees: list[Tree] = field(default_factory=list)
    prior: float = 0.0
    learning_rate: float = 0.1
    train_loss: list[float] = field(default_factory=list)

    family = "gbt"

    def predict_margin(self, X):
        X = self._check_schema(X)
        acc = np.full(X.shape[0], self.prior, dtype=np.float64)
        for t in self.trees:
            acc += self.learning_rate * t.predict(X)
        return acc

    def predict_proba(self, X):
        return _clip_proba(_sigmoid(self.predict_margin(X)))

    def to_dict(self):
        return {
            "format_version": MODEL_FORMAT_VERSION,
            "family": self.family,
            "feature_names": self.feature_names,
            "config": self.config,
            "prior": self.prior,
            "learning_rate": self.learning_rate,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            feature_names=d["feature_names"],
            config=d.get("config", {}),
            prior=float(d["prior"]),
            learning_rate=float(d["learning_rate"]),
            trees=[Tree.from_dict(t) for t in d["trees"]],
        )


@dataclass
class NeuralNetModel(BaseModel):
    w1: np.ndarray = None  # (d, h); empty when hidden_units == 0
    b1: np.ndarray = None
    w2: np.ndarray = None  # (h,) or (d,) in the linear fallback
    b2: float = 0.0
    activation: str = "tanh"

    family = "nn"

    @property
    def hidden_units(self) -> int:
        return 0 if self.w1 is None or self.w1.size == 0 else self.w1.shape[1]

    def predict_margin(self, X):
        X = self._check_schema(X)
        if self.hidden_units == 0:
            return X @ self.w2 + self.b2
        a = _activate(X @ self.w1 + self.b1, self.activation)
        return a @ self.w2 + self.b2

    def predict_proba(self, X):
        return _clip_proba(_sigmoid(self.predict_margin(X)))

    def to_dict(self):
        return {
            "format_version": MODEL_FORMAT_VERSION,
            "family": self.family,
            "feature_names": self.feature_names,
            "config": self.config,
            "w1": self.w1.tolist() if self.w1 is not None else None,
            "b1": self.b1.tolist() if self.b1 is not None else None,
            "w2": self.w2.tolist(),
            "b2": self.b2,
            "activation": self.activation,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            feature_names=d["feature_names"],
            config=d.get("config", {}),
            w1=None if d["w1"] is None else np.asarray(d["w1"], dtype=np.float64),
            b1=None if d["b1"] is None else np.asarray(d["b1"], dtype=np.float64),
            w2=np.asarray(d["w2"], dtype=np.float64),
            b2=float(d["b2"]),
            activation=d.get("activation", "tanh"),
        )


def _activate(z, kind):
    if kind == "tanh":
        return np.tanh(z)
    if kind == "relu":
        return np.maximum(z, 0.0)
    raise ValueError(f"unknown activation {kind!r}")


def _activate_grad(z, kind):
    if kind == "tanh":
        a = np.tanh(z)
        return 1.0 - a * a
    if kind == "relu":
        return (z > 0.0).astype(np.float64)
    raise ValueError(f"unknown activation {kind!r}")


def weighted_log_loss(y, p, w):
    p = _clip_proba(p)
    return float(-(w * (y * np.log(p) + (1 - y) * np.log(1 - p))).sum())


# ---------------------------------------------------------------------------
# fitting


def logistic_objective(X, y, w, l2, beta):
    """Class-weighted logistic loss + ridge (intercept unpenalized) and its
    analytic gradient, with beta = [intercept, coef...]."""
    n = X.shape[0]
    Xb = np.hstack([np.ones((n, 1)), X])
    ridge = np.full(len(beta), l2)
    ridge[0] = 0.0
    p = _sigmoid(Xb @ beta)
    loss = weighted_log_loss(y, p, w) + 0.5 * float(ridge @ (beta * beta))
    grad = Xb.T @ (w * (p - y)) + ridge * beta
    return loss, grad


def fit_logistic(X, y, class_weights, l2=1.0, tol=1e-8, max_iter=500,
                 feature_names=None) -> LogisticModel:
    """Damped Newton on the class-weighted logistic loss + l2 ridge
    (intercept unpenalized); stops at gradient norm <= tol."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, d = X.shape
    w = _row_weights(y, class_weights)
    beta = np.zeros(d + 1)  # [intercept, coef]
    Xb = np.hstack([np.ones((n, 1)), X])
    ridge = np.full(d + 1, l2)
    ridge[0] = 0.0

    cur, grad = logistic_objective(X, y, w, l2, beta)
    for _ in range(max_iter):
        if not np.isfinite(cur) or not np.isfinite(grad).all():
            raise FitError(f"non-finite logistic loss; iterate={beta.tolist()}")
        if np.linalg.norm(grad) <= tol:
            break
        p = _sigmoid(Xb @ beta)
        s = w * p * (1.0 - p)
        hess = (Xb * s[:, None]).T @ Xb + np.diag(ridge)
        step = np.linalg.solve(hess, grad)
        # damped update: halve the step until the loss stops increasing
        t = 1.0
        for _ in range(50):
            nxt, nxt_grad = logistic_objective(X, y, w, l2, beta - t * step)
            if nxt <= cur + 1e-12:
                break
            t *= 0.5
        beta = beta - t * step
        cur, grad = nxt, nxt_grad
    names = list(feature_names) if feature_names is not None else [f"x{j}" for j in range(d)]
    return LogisticModel(
        feature_names=names,
        config={"l2": l2},
        coef=beta[1:].copy(),
        intercept=float(beta[0]),
    )


def fit_cart(X, y, class_weights, max_depth=5, min_leaf_weight=1.0,
             feature_names=None) -> CartModel:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    w = _row_weights(y, class_weights)
    tree = grow_classification_tree(X, y, w, max_depth, min_leaf_weight)
    names = list(feature_names) if feature_names is not None else [f"x{j}" for j in range(X.shape[1])]
    return CartModel(
        feature_names=names,
        config={"max_depth": max_depth, "min_leaf_weight": min_leaf_weight},
        tree=tree,
    )


def fit_random_forest(X, y, class_weights, n_trees=100, max_depth=6,
                      feature_fraction=0.5, seed=0, bootstrap=True,
                      min_leaf_weight=1.0, feature_names=None) -> RandomForestModel:
    """Bootstrap rows (rows keep their class weights, so expected class mass is
    preserved) with per-split feature subsampling."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = X.shape[0]
    w = _row_weights(y, class_weights)
    trees = []
    seeds = np.random.SeedSequence(seed).spawn(n_trees)
    for k in range(n_trees):
        rng = np.random.default_rng(seeds[k])
        if bootstrap:
            idx = rng.integers(0, n, size=n)
        else:
            idx = np.arange(n)
        trees.append(
            grow_classification_tree(
                X[idx], y[idx], w[idx], max_depth, min_leaf_weight,
                feature_fraction=feature_fraction, rng=rng,
            )
        )
    names = list(feature_names) if feature_names is not None else [f"x{j}" for j in range(X.shape[1])]
    return RandomForestModel(
        feature_names=names,
        config={
            "n_trees": n_trees, "max_depth": max_depth,
            "feature_fraction": feature_fraction, "seed": seed,
            "bootstrap": bootstrap,
        },
        trees=trees,
    )


def fit_gradient_boosting(X, y, class_weights, n_rounds=100, learning_rate=0.1,
                          max_depth=3, l2_leaf=1.0, seed=0,
                          feature_names=None) -> GradientBoostingModel:
    """Newton boosting on the class-weighted log-loss; the initial score is the
    weighted log-odds prior."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    w = _row_weights(y, class_weights)
    base_rate = float((w * y).sum() / w.sum())
    base_rate = min(max(base_rate, PROB_EPS), 1.0 - PROB_EPS)
    prior = float(np.log(base_rate / (1.0 - base_rate)))
    margin = np.full(X.shape[0], prior)
    trees: list[Tree] = []
    losses = [weighted_log_loss(y, _sigmoid(margin), w)]
    for _ in range(n_rounds):
        p = _sigmoid(margin)
        g = w * (p - y)
        h = w * p * (1.0 - p)
        tree = grow_newton_tree(X, g, h, w, max_depth, l2_leaf)
        margin = margin + learning_rate * tree.predict(X)
        trees.append(tree)
        losses.append(weighted_log_loss(y, _sigmoid(margin), w))
    names = list(feature_names) if feature_names is not None else [f"x{j}" for j in range(X.shape[1])]
    return GradientBoostingModel(
        feature_names=names,
        config={
            "n_rounds": n_rounds, "learning_rate": learning_rate,
            "max_depth": max_depth, "l2_leaf": l2_leaf, "seed": seed,
        },
        trees=trees,
        prior=prior,
        learning_rate=learning_rate,
        train_loss=losses,
    )


def nn_objective(X, y, w, l2, params, activation="tanh"):
    """Weighted cross-entropy + ridge on weights (biases unpenalized) and its
    analytic gradients. ``params`` is (w1, b1, w2, b2); w1/b1 may be None for
    the linear (hidden_units == 0) fallback."""
    w1, b1, w2, b2 = params
    if w1 is None:
        p = _sigmoid(X @ w2 + b2)
        loss = weighted_log_loss(y, p, w) + 0.5 * l2 * float(w2 @ w2)
        r = w * (p - y)
        return loss, (None, None, X.T @ r + l2 * w2, float(r.sum()))
    z = X @ w1 + b1
    a = _activate(z, activation)
    p = _sigmoid(a @ w2 + b2)
    loss = weighted_log_loss(y, p, w) + 0.5 * l2 * (
        float((w1 * w1).sum()) + float(w2 @ w2)
    )
    r = w * (p - y)
    g_w2 = a.T @ r + l2 * w2
    g_b2 = float(r.sum())
    dz = (r[:, None] * w2[None, :]) * _activate_grad(z, activation)
    g_w1 = X.T @ dz + l2 * w1
    g_b1 = dz.sum(axis=0)
    return loss, (g_w1, g_b1, g_w2, g_b2)


def fit_neural_net(X, y, class_weights, hidden_units=8, l2=1e-3, epochs=300,
                   learning_rate=0.05, seed=0, activation="tanh",
                   feature_names=None) -> NeuralNetModel:
    """One hidden layer, sigmoid output, class-weighted cross-entropy,
    full-batch gradient descent with seeded initialization."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, d = X.shape
    w = _row_weights(y, class_weights)
    rng = np.random.default_rng(seed)
    names = list(feature_names) if feature_names is not None else [f"x{j}" for j in range(d)]
    cfg = {
        "hidden_units": hidden_units, "l2": l2, "epochs": epochs,
        "learning_rate": learning_rate, "seed": seed, "activation": activation,
    }

    if hidden_units == 0:
        w1, b1 = None, None
        w2 = rng.normal(0.0, 1.0 / np.sqrt(d), size=d)
        b2 = 0.0
    else:
        w1 = rng.normal(0.0, 1.0 / np.sqrt(d), size=(d, hidden_units))
        b1 = np.zeros(hidden_units)
        w2 = rng.normal(0.0, 1.0 / np.sqrt(hidden_units), size=hidden_units)
        b2 = 0.0

    init_loss = None
    for _ in range(epochs):
        loss, (g_w1, g_b1, g_w2, g_b2) = nn_objective(
            X, y, w, l2, (w1, b1, w2, b2), activation
        )
        if init_loss is None:
            init_loss = loss
        if not np.isfinite(loss) or loss > 10.0 * init_loss:
            raise FitError("neural net training diverged; reduce learning_rate")
        if w1 is not None:
            w1 = w1 - learning_rate * g_w1
            b1 = b1 - learning_rate * g_b1
        w2 = w2 - learning_rate * g_w2
        b2 = b2 - learning_rate * g_b2
    return NeuralNetModel(feature_names=names, config=cfg, w1=w1, b1=b1,
                          w2=w2, b2=float(b2), activation=activation)


def predict_proba(model: BaseModel, X) -> np.ndarray:
    return model.predict_proba(X)


def fit_family(family: str, X, y, class_weights, config: dict, seed: int = 0,
               feature_names=None) -> BaseModel:
    """Uniform fitting entry point used by CV selection and the benchmark loop."""
    kwargs = dict(config)
    if family == "logit":
        return fit_logistic(X, y, class_weights, feature_names=feature_names, **kwargs)
    if family == "cart":
        return fit_cart(X, y, class_weights, feature_names=feature_names, **kwargs)
    if family == "rf":
        return fit_random_forest(X, y, class_weights, seed=seed,
                                 feature_names=feature_names, **kwargs)
    if family == "gbt":
        return fit_gradient_boosting(X, y, class_weights, seed=seed,
                                     feature_names=feature_names, **kwargs)
    if family == "nn":
        return fit_neural_net(X, y, class_weights, seed=seed,
                              feature_names=feature_names, **kwargs)
    raise ValueError(f"unknown model family {family!r}")


# ---------------------------------------------------------------------------
# serialization

_CLASSES = {
    "logit": LogisticModel,
    "cart": CartModel,
    "rf": RandomForestModel,
    "gbt": GradientBoostingModel,
    "nn": NeuralNetModel,
}


def save_model(model: BaseModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model.to_dict()), encoding="utf-8")


def model_from_dict(d: dict) -> BaseModel:
    if d.get("format_version") != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {d.get('format_version')!r}")
    return _CLASSES[d["family"]].from_dict(d)


def load_model(path: str | Path) -> BaseModel:
    return model_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
