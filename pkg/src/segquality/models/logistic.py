"""L1-penalized logistic regression via proximal gradient with backtracking.

Minimizes mean log-loss + lambda * ||w||_1 with an unpenalized bias. The
stopping rule is the Euclidean norm of the gradient map
G_t = (theta - prox(theta - t * grad)) / t falling to 1e-6, capped at
10^4 iterations.
"""

from __future__ import annotations

import numpy as np

from ..dataset import Standardization
from ..errors import SingleClass
from .base import MetaModel
from .linear import _soft


def logistic_loss_grad(
    X: np.ndarray, y: np.ndarray, w: np.ndarray, b: float
) -> tuple[float, np.ndarray, float]:
    """Mean log-loss of the smooth part and its gradient in (w, b)."""
    n = len(y)
    z = X @ w + b
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z))
    p = np.empty_like(z)
    pos = z >= 0
    p[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    p[~pos] = ez / (1.0 + ez)
    gw = X.T @ (p - y) / n
    gb = float(np.mean(p - y))
    return loss, gw, gb


def fit_logistic_l1(
    X: np.ndarray,
    y: np.ndarray,
    lam: float,
    tol: float = 1e-6,
    max_iter: int = 10_000,
    stats: Standardization | None = None,
    seed: int = 0,
) -> MetaModel:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    classes = np.unique(y)
    if len(classes) < 2:
        raise SingleClass("labels contain a single class")
    if not set(classes).issubset({0.0, 1.0}):
        raise ValueError("labels must be binary 0/1")

    n, p = X.shape
    w = np.zeros(p)
    b = 0.0
    t = 1.0
    loss, gw, gb = logistic_loss_grad(X, y, w, b)
    for _ in range(max_iter):
        while True:
            w_new = _soft(w - t * gw, t * lam)
            b_new = b - t * gb
            dw = w_new - w
            db = b_new - b
            loss_new, gw_new, gb_new = logistic_loss_grad(X, y, w_new, b_new)
            quad = loss + gw @ dw + gb * db + (dw @ dw + db * db) / (2 * t)
            if loss_new <= quad + 1e-15:
                break
            t *= 0.5
        gmap = float(np.sqrt(((w - w_new) ** 2).sum() + (b - b_new) ** 2)) / t
        w, b, loss, gw, gb = w_new, b_new, loss_new, gw_new, gb_new
        if gmap <= tol:
            break
        t *= 1.25  # probe a larger step again; backtracking will rein it in
    return MetaModel(
        family="logistic_l1",
        task="classify",
        feature_dim=p,
        params={"w": w, "b": np.array([b])},
        hyperparams={"lambda": lam},
        stats=stats,
        seed=seed,
    )
