"""Weight-aware regression trees, random forests and gradient-boosted trees.

All three learners share one exact greedy tree grower. Sample weights enter
the squared-error split criterion and the leaf means directly; the forest
instead draws a bootstrap with probabilities proportional to the weights and
grows unweighted trees on it.

Split ties are broken by lowest feature index, then lowest threshold, so a
fit is reproducible bit for bit across runs.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core_types import WeightVector, as_matrix
from .errors import AllWeightsZero, ConfigError, DimensionMismatch, EmptyInput, NonFiniteValue

# relative floor on split gains; anything smaller is rounding noise
_GAIN_RTOL = 1e-10


@dataclass(frozen=True)
class TreeParams:
    max_depth: int = 6
    min_samples_leaf: int = 5
    min_weight_leaf: float = 1e-3

    def __post_init__(self):
        if self.max_depth < 1:
            raise ConfigError("max_depth", "must be >= 1")
        if self.min_samples_leaf < 1:
            raise ConfigError("min_samples_leaf", "must be >= 1")
        if self.min_weight_leaf < 0:
            raise ConfigError("min_weight_leaf", "must be >= 0")


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 100
    tree: TreeParams = field(default_factory=TreeParams)
    # fraction of features tried per split, rounded up
    feature_subsample: float = 1.0 / 3.0
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ConfigError("n_trees", "must be >= 1")
        if not 0 < self.feature_subsample <= 1:
            raise ConfigError("feature_subsample", "must lie in (0, 1]")


@dataclass(frozen=True)
class BoostParams:
    n_rounds: int = 200
    learning_rate: float = 0.1
    tree: TreeParams = field(default_factory=TreeParams)
    seed: int = 0

    def __post_init__(self):
        if self.n_rounds < 1:
            raise ConfigError("n_rounds", "must be >= 1")
        if not 0 < self.learning_rate <= 1:
            raise ConfigError("learning_rate", "must lie in (0, 1]")


@dataclass(frozen=True)
class Tree:
    """Flat node arrays in preorder; ``feature == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by every row of ``X``."""
        node = np.zeros(X.shape[0], dtype=np.intp)
        rows = np.arange(X.shape[0])
        while True:
            feat = self.feature[node]
            inner = feat >= 0
            if not inner.any():
                return node
            r, nd, ft = rows[inner], node[inner], feat[inner]
            go_left = X[r, ft] <= self.threshold[nd]
            node[inner] = np.where(go_left, self.left[nd], self.right[nd])

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_dict(self) -> dict:
        nodes = []
        for i in range(self.n_nodes):
            if self.feature[i] < 0:
                nodes.append({"leaf": True, "value": float(self.value[i])})
            else:
                nodes.append(
                    {
                        "leaf": False,
                        "feature": int(self.feature[i]),
                        "threshold": float(self.threshold[i]),
                        "left": int(self.left[i]),
                        "right": int(self.right[i]),
                        "value": float(self.value[i]),
                    }
                )
        return {"nodes": nodes}

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        nodes = d["nodes"]
        return cls(
            feature=np.array([-1 if nd["leaf"] else nd["feature"] for nd in nodes], dtype=np.intp),
            threshold=np.array([0.0 if nd["leaf"] else nd["threshold"] for nd in nodes]),
            left=np.array([-1 if nd["leaf"] else nd["left"] for nd in nodes], dtype=np.intp),
            right=np.array([-1 if nd["leaf"] else nd["right"] for nd in nodes], dtype=np.intp),
            value=np.array([nd["value"] for nd in nodes]),
        )


@dataclass(frozen=True)
class TrainedModel:
    kind: str  # "tree", "forest" or "boosted"
    trees: tuple
    n_features: int
    base_score: float = 0.0
    learning_rate: float = 1.0
    params: dict = field(default_factory=dict)
    # weighted training SSE after base score and after each round (boosted only)
    train_loss: tuple = field(default=(), compare=False, repr=False)

    def to_json(self) -> str:
        payload = {
            "kind": self.kind,
            "params": self.params,
            "n_features": self.n_features,
            "base_score": self.base_score,
            "learning_rate": self.learning_rate,
            "trees": [t.to_dict() for t in self.trees],
        }
        return json.dumps(payload, indent=None, separators=(",", ":")) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "TrainedModel":
        d = json.loads(text)
        return cls(
            kind=d["kind"],
            trees=tuple(Tree.from_dict(t) for t in d["trees"]),
            n_features=int(d["n_features"]),
            base_score=float(d["base_score"]),
            learning_rate=float(d["learning_rate"]),
            params=d["params"],
        )


# --------------------------------------------------------------------------
# grower


def _best_split(X, y, w, feats, p: TreeParams):
    """Return (feature, threshold) of the best admissible split, or None."""
    m = y.shape[0]
    Xf = X[:, feats]
    order = np.argsort(Xf, axis=0, kind="stable")
    xs = np.take_along_axis(Xf, order, axis=0)
    ws = w[order]
    wy = ws * y[order]
    cw = np.cumsum(ws, axis=0)
    cwy = np.cumsum(wy, axis=0)
    W, S = cw[-1], cwy[-1]
    cw, cwy = cw[:-1], cwy[:-1]
    rw = W - cw
    cnt = np.arange(1, m)[:, None]
    valid = (
        (xs[1:] > xs[:-1])
        & (cnt >= p.min_samples_leaf)
        & (m - cnt >= p.min_samples_leaf)
        & (cw >= p.min_weight_leaf)
        & (rw >= p.min_weight_leaf)
        & (cw > 0)
        & (rw > 0)
    )
    if not valid.any():
        return None
    with np.errstate(divide="ignore", invalid="ignore"):
        score = cwy**2 / cw + (S - cwy) ** 2 / rw - S**2 / W
    score = np.where(valid, score, -np.inf)
    # feature-major flattening: argmax picks lowest feature, then lowest threshold
    flat = score.T.ravel()
    k = int(np.argmax(flat))
    gain = flat[k]
    scale = float(np.dot(w, y * y))
    if not gain > _GAIN_RTOL * max(scale, 1e-300):
        return None
    j, pos = divmod(k, m - 1)
    lo, hi = xs[pos, j], xs[pos + 1, j]
    thr = 0.5 * (lo + hi)
    if not lo <= thr < hi:
        thr = lo
    return int(feats[j]), float(thr)


def _grow(X, y, w, p: TreeParams, max_features: Optional[int] = None, rng=None) -> Tree:
    d = X.shape[1]
    k = d if max_features is None else max_features
    feature, threshold, left, right, value = [], [], [], [], []

    def build(idx, depth):
        node = len(feature)
        wn, yn = w[idx], y[idx]
        W = wn.sum()
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(float(np.dot(wn, yn) / W))
        m = idx.size
        if depth >= p.max_depth or m < 2 * p.min_samples_leaf or W < 2 * p.min_weight_leaf:
            return node
        feats = np.arange(d) if k >= d else np.sort(rng.choice(d, size=k, replace=False))
        split = _best_split(X[idx], yn, wn, feats, p)
        if split is None:
            return node
        f, thr = split
        mask = X[idx, f] <= thr
        feature[node], threshold[node] = f, thr
        left[node] = build(idx[mask], depth + 1)
        right[node] = build(idx[~mask], depth + 1)
        return node

    build(np.arange(y.shape[0]), 0)
    return Tree(
        feature=np.array(feature, dtype=np.intp),
        threshold=np.array(threshold),
        left=np.array(left, dtype=np.intp),
        right=np.array(right, dtype=np.intp),
        value=np.array(value),
    )


def _prepare(X, y, w):
    X = as_matrix(X)
    y = np.asarray(y, dtype=float)
    if X.shape[0] == 0:
        raise EmptyInput("no training rows")
    if y.ndim != 1 or y.shape[0] != X.shape[0]:
        raise DimensionMismatch(f"{X.shape[0]} rows but {y.shape} labels")
    if w is None:
        w = np.ones(y.shape[0])
    elif isinstance(w, WeightVector):
        w = np.asarray(w.weights, dtype=float)
    else:
        w = np.asarray(w, dtype=float)
    if w.shape != y.shape:
        raise DimensionMismatch(f"{y.shape[0]} labels but {w.shape} weights")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y)) and np.all(np.isfinite(w))):
        raise NonFiniteValue("training inputs must be finite")
    if np.any(w < 0):
        raise ValueError("weights must be non-negative")
    if not w.sum() > 0:
        raise AllWeightsZero("all sample weights are zero")
    return X, y, w


def fit_tree(X, y, w=None, p: TreeParams = TreeParams()) -> TrainedModel:
    """Weighted CART regression tree.

    Rows with zero weight are dropped before growing, so they neither count
    towards ``min_samples_leaf`` nor contribute candidate thresholds.
    """
    X, y, w = _prepare(X, y, w)
    keep = w > 0
    tree = _grow(X[keep], y[keep], w[keep], p)
    return TrainedModel("tree", (tree,), X.shape[1], params={"tree": asdict(p)})


def tree_seed(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, index])


def bootstrap_indices(w: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """``n`` draws with replacement, row ``i`` drawn with probability ``w_i / sum(w)``."""
    n = w.shape[0]
    return rng.choice(n, size=n, replace=True, p=w / w.sum())


def fit_forest(X, y, w=None, p: ForestParams = ForestParams()) -> TrainedModel:
    X, y, w = _prepare(X, y, w)
    d = X.shape[1]
    k = max(1, math.ceil(p.feature_subsample * d))
    trees = []
    for t in range(p.n_trees):
        rng = tree_seed(p.seed, t)
        idx = bootstrap_indices(w, rng)
        trees.append(_grow(X[idx], y[idx], np.ones(idx.size), p.tree, max_features=k, rng=rng))
    return TrainedModel("forest", tuple(trees), d, params={**asdict(p)})


def fit_boosted(X, y, w=None, p: BoostParams = BoostParams()) -> TrainedModel:
    """Gradient boosting for weighted squared loss.

    Each round fits a weighted tree to the current residuals; the update is
    ``F <- F + learning_rate * tree``.
    """
    X, y, w = _prepare(X, y, w)
    keep = w > 0
    Xk, yk, wk = X[keep], y[keep], w[keep]
    base = float(np.dot(wk, yk) / wk.sum())
    F = np.full(yk.shape[0], base)
    losses = [float(np.dot(wk, (yk - F) ** 2))]
    trees = []
    for _ in range(p.n_rounds):
        tree = _grow(Xk, yk - F, wk, p.tree)
        F = F + p.learning_rate * tree.predict(Xk)
        trees.append(tree)
        losses.append(float(np.dot(wk, (yk - F) ** 2)))
    return TrainedModel(
        "boosted",
        tuple(trees),
        X.shape[1],
        base_score=base,
        learning_rate=p.learning_rate,
        params={**asdict(p)},
        train_loss=tuple(losses),
    )


def predict(m: TrainedModel, X) -> np.ndarray:
    X = as_matrix(X)
    if X.shape[1] != m.n_features:
        raise DimensionMismatch(f"model expects {m.n_features} features, got {X.shape[1]}")
    if m.kind == "tree":
        out = m.trees[0].predict(X)
    elif m.kind == "forest":
        out = np.mean([t.predict(X) for t in m.trees], axis=0)
    elif m.kind == "boosted":
        contrib = np.zeros(X.shape[0])
        for t in m.trees:
            contrib += t.predict(X)
        out = m.base_score + m.learning_rate * contrib
    else:
        raise ValueError(f"unknown model kind {m.kind!r}")
    return out


LEARNERS = ("forest", "boosted")


def fit_learner(kind: str, X, y, w=None, seed: int = 0, params=None) -> TrainedModel:
    """Dispatch on a learner name; ``params`` overrides the default parameter object."""
    if kind == "forest":
        p = params if params is not None else ForestParams(seed=seed)
        return fit_forest(X, y, w, p)
    if kind == "boosted":
        p = params if params is not None else BoostParams(seed=seed)
        return fit_boosted(X, y, w, p)
    if kind == "tree":
        return fit_tree(X, y, w, params if params is not None else TreeParams())
    raise ValueError(f"unknown learner {kind!r}")
