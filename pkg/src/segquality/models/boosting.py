"""Stochastic gradient boosting over shallow regression trees, from scratch.

Each stage fits a depth-limited tree to the negative gradient of the loss
(squared error for regression, logistic loss for classification) on a
row subsample, then steps with a shrinkage factor. Splits greedily maximize
variance reduction of the fitted residuals with a minimum leaf size of 5;
classification leaves take a Newton step (sum of residuals over sum of
p(1-p)) so the raw scores stay calibrated logits.

Trees are stored as flat node arrays, so the whole ensemble serializes into
a handful of numpy buffers and prediction is a vectorized fixed-depth walk.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..dataset import Standardization
from ..errors import TooFewRows
from .base import MetaModel, _sigmoid

_LEAF = -1
_MIN_GAIN = 1e-12


@dataclass(frozen=True)
class GBParams:
    n_stages: int = 100
    max_depth: int = 3
    shrinkage: float = 0.1
    subsample: float = 0.5
    min_leaf: int = 5


class _TreeBuilder:
    """Greedy variance-reduction splitter on (X, residual, hessian) rows."""

    def __init__(self, X, grad, hess, max_depth, min_leaf):
        self.X = X
        self.g = grad
        self.h = hess  # None for squared loss (unit curvature)
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[float] = []

    def _leaf_value(self, idx: np.ndarray) -> float:
        if self.h is None:
            return float(self.g[idx].mean())
        denom = max(float(self.h[idx].sum()), 1e-12)
        return float(self.g[idx].sum() / denom)

    def _new_node(self) -> int:
        self.feature.append(_LEAF)
        self.threshold.append(0.0)
        self.left.append(0)
        self.right.append(0)
        self.value.append(0.0)
        return len(self.feature) - 1

    def build(self, idx: np.ndarray) -> int:
        return self._grow(idx, 0)

    def _grow(self, idx: np.ndarray, depth: int) -> int:
        node = self._new_node()
        g = self.g[idx]
        if depth >= self.max_depth or len(idx) < 2 * self.min_leaf or np.ptp(g) == 0.0:
            self.value[node] = self._leaf_value(idx)
            # leaves point at themselves so prediction can walk a fixed depth
            self.left[node] = node
            self.right[node] = node
            return node

        best_gain, best_feat, best_thr, best_pos, best_order = 0.0, -1, 0.0, -1, None
        total = g.sum()
        n = len(idx)
        base = total * total / n
        for f in range(self.X.shape[1]):
            x = self.X[idx, f]
            order = np.argsort(x, kind="stable")
            xs = x[order]
            gs = g[order]
            csum = np.cumsum(gs)
            # split after position i (1-based left count), only between distinct values
            counts = np.arange(1, n)
            valid = (
                (counts >= self.min_leaf)
                & (counts <= n - self.min_leaf)
                & (xs[:-1] < xs[1:])
            )
            if not valid.any():
                continue
            left_sum = csum[:-1]
            gain = (
                left_sum**2 / counts + (total - left_sum) ** 2 / (n - counts) - base
            )
            gain[~valid] = -np.inf
            pos = int(np.argmax(gain))
            if gain[pos] > best_gain + _MIN_GAIN:
                best_gain = float(gain[pos])
                best_feat = f
                best_thr = float(0.5 * (xs[pos] + xs[pos + 1]))
                best_pos = pos
                best_order = order

        if best_feat < 0:
            self.value[node] = self._leaf_value(idx)
            self.left[node] = node
            self.right[node] = node
            return node

        left_idx = idx[best_order[: best_pos + 1]]
        right_idx = idx[best_order[best_pos + 1 :]]
        self.feature[node] = best_feat
        self.threshold[node] = best_thr
        self.left[node] = self._grow(left_idx, depth + 1)
        self.right[node] = self._grow(right_idx, depth + 1)
        return node


def _walk_tree(feature, threshold, left, right, value, X, max_depth) -> np.ndarray:
    pos = np.zeros(len(X), dtype=np.int64)
    for _ in range(max_depth + 1):
        feat = feature[pos]
        split = feat != _LEAF
        if not split.any():
            break
        go_left = np.zeros(len(X), dtype=bool)
        rows = np.flatnonzero(split)
        go_left[rows] = X[rows, feat[rows]] <= threshold[pos[rows]]
        pos = np.where(split & go_left, left[pos], np.where(split, right[pos], pos))
    return value[pos]


def gb_raw_scores(model: MetaModel, X: np.ndarray, n_stages: int | None = None) -> np.ndarray:
    """Raw ensemble output F(x) (logit scale for classification)."""
    p = model.params
    used = int(p["n_stages_used"][0]) if n_stages is None else n_stages
    nu = model.hyperparams["shrinkage"]
    depth = model.hyperparams["max_depth"]
    off = p["tree_offsets"]
    out = np.full(len(X), float(p["f0"][0]))
    for m in range(used):
        lo, hi = off[m], off[m + 1]
        out += nu * _walk_tree(
            p["feature"][lo:hi],
            p["threshold"][lo:hi],
            p["left"][lo:hi] - lo,
            p["right"][lo:hi] - lo,
            p["value"][lo:hi],
            X,
            depth,
        )
    return out


def fit_gradient_boosting(
    X: np.ndarray,
    y: np.ndarray,
    task: str,
    hp: GBParams = GBParams(),
    val: tuple[np.ndarray, np.ndarray] | None = None,
    stats: Standardization | None = None,
    seed: int = 0,
) -> MetaModel:
    """Boosted trees; if a validation set is given, the stage count that
    minimizes validation loss is selected (and stored) for prediction."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = len(y)
    if n < 20:
        raise TooFewRows(f"gradient boosting needs at least 20 rows, got {n}")
    rng = np.random.default_rng(seed)

    if task == "classify":
        p_bar = float(np.clip(y.mean(), 1e-6, 1.0 - 1e-6))
        f0 = float(np.log(p_bar / (1.0 - p_bar)))
    else:
        f0 = float(y.mean())
    F = np.full(n, f0)
    F_val = None if val is None else np.full(len(val[1]), f0)

    features, thresholds, lefts, rights, values = [], [], [], [], []
    offsets = [0]
    val_losses = []
    n_sub = max(1, int(round(hp.subsample * n)))
    for _ in range(hp.n_stages):
        sub = rng.choice(n, size=n_sub, replace=False) if n_sub < n else np.arange(n)
        if task == "classify":
            prob = _sigmoid(F[sub])
            grad = y[sub] - prob
            hess = np.maximum(prob * (1.0 - prob), 1e-12)
        else:
            grad = y[sub] - F[sub]
            hess = None
        tb = _TreeBuilder(X[sub], grad, hess, hp.max_depth, hp.min_leaf)
        tb.build(np.arange(len(sub)))
        tf = np.array(tb.feature, dtype=np.int64)
        tt = np.array(tb.threshold)
        tl = np.array(tb.left, dtype=np.int64)
        tr = np.array(tb.right, dtype=np.int64)
        tv = np.array(tb.value)
        F += hp.shrinkage * _walk_tree(tf, tt, tl, tr, tv, X, hp.max_depth)
        off = offsets[-1]
        features.append(tf)
        thresholds.append(tt)
        lefts.append(tl + off)
        rights.append(tr + off)
        values.append(tv)
        offsets.append(off + len(tf))
        if val is not None:
            F_val += hp.shrinkage * _walk_tree(tf, tt, tl, tr, tv, val[0], hp.max_depth)
            val_losses.append(_loss(F_val, val[1], task))

    if val is not None:
        stage_losses = [_loss(np.full(len(val[1]), f0), val[1], task)] + val_losses
        n_used = int(np.argmin(stage_losses))
    else:
        n_used = hp.n_stages

    return MetaModel(
        family="gb",
        task=task,
        feature_dim=X.shape[1],
        params={
            "f0": np.array([f0]),
            "tree_offsets": np.array(offsets, dtype=np.int64),
            "feature": np.concatenate(features),
            "threshold": np.concatenate(thresholds),
            "left": np.concatenate(lefts),
            "right": np.concatenate(rights),
            "value": np.concatenate(values),
            "n_stages_used": np.array([n_used], dtype=np.int64),
        },
        hyperparams={**asdict(hp), "task": task},
        stats=stats,
        seed=seed,
    )


def _loss(F: np.ndarray, y: np.ndarray, task: str) -> float:
    if task == "classify":
        return float(np.mean(np.logaddexp(0.0, F) - y * F))
    return float(np.mean((F - y) ** 2))


def gb_train_losses(model: MetaModel, X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Training loss after every stage prefix (0 = intercept only)."""
    p = model.params
    task = model.task
    nu = model.hyperparams["shrinkage"]
    depth = model.hyperparams["max_depth"]
    off = p["tree_offsets"]
    F = np.full(len(X), float(p["f0"][0]))
    losses = [_loss(F, y, task)]
    for m in range(len(off) - 1):
        lo, hi = off[m], off[m + 1]
        F = F + nu * _walk_tree(
            p["feature"][lo:hi],
            p["threshold"][lo:hi],
            p["left"][lo:hi] - lo,
            p["right"][lo:hi] - lo,
            p["value"][lo:hi],
            X,
            depth,
        )
        losses.append(_loss(F, y, task))
    return np.array(losses)
