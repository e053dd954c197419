"""Linear regression: plain least squares, ridge, and lasso.

All three fit an unpenalized intercept by centering. The lasso solves

    min_w  (1/2n) ||y - Xw - b||^2 + lambda * ||w||_1

by cyclic coordinate descent with soft-thresholding, stopping at duality
gap <= 1e-6 or 10^4 sweeps; with this scaling the null threshold is
lambda_max = max_j |x_j . (y - mean(y))| / n.
"""

from __future__ import annotations

import numpy as np

from ..dataset import Standardization
from ..errors import RankDeficient
from .base import MetaModel


def _soft(x: np.ndarray | float, t: float):
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def lasso_null_lambda(X: np.ndarray, y: np.ndarray) -> float:
    """Smallest lambda at which coordinate descent returns all zeros."""
    Xc = X - X.mean(axis=0)
    yc = y - y.mean()
    return float(np.abs(Xc.T @ yc).max() / len(y))


def _lasso_cd(
    Xc: np.ndarray, yc: np.ndarray, lam: float, tol: float, max_sweeps: int
) -> np.ndarray:
    n, p = Xc.shape
    w = np.zeros(p)
    col_sq = (Xc * Xc).sum(axis=0) / n
    r = yc.copy()
    for _ in range(max_sweeps):
        for j in range(p):
            if col_sq[j] == 0.0:
                continue
            wj = w[j]
            rho = Xc[:, j] @ r / n + col_sq[j] * wj
            w_new = _soft(rho, lam) / col_sq[j]
            if w_new != wj:
                r += Xc[:, j] * (wj - w_new)
                w[j] = w_new
        if _duality_gap(Xc, yc, w, r, lam) <= tol:
            break
    return w


def _duality_gap(Xc, yc, w, r, lam) -> float:
    n = len(yc)
    primal = (r @ r) / (2 * n) + lam * np.abs(w).sum()
    dual_inf = np.abs(Xc.T @ r).max() / n
    s = 1.0 if dual_inf <= lam else lam / dual_inf
    theta = s * r / n
    dual = theta @ yc - (n / 2) * (theta @ theta)
    return float(primal - dual)


def fit_linear(
    X: np.ndarray,
    y: np.ndarray,
    penalty: str = "none",
    lam: float = 0.0,
    tol: float = 1e-6,
    max_sweeps: int = 10_000,
    stats: Standardization | None = None,
    seed: int = 0,
) -> MetaModel:
    """Fit a linear regression model with no, l1 or l2 penalty."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, p = X.shape
    xm = X.mean(axis=0)
    ym = float(y.mean())
    Xc = X - xm
    yc = y - ym

    if penalty == "none":
        if n < p:
            raise RankDeficient(f"{n} rows cannot determine {p} coefficients")
        w, _, rank, _ = np.linalg.lstsq(Xc, yc, rcond=None)
        if rank < p:
            raise RankDeficient(f"design matrix has rank {rank} < {p}")
        family = "lr"
    elif penalty == "l2":
        w = np.linalg.solve(Xc.T @ Xc + lam * np.eye(p), Xc.T @ yc)
        family = "lr_l2"
    elif penalty == "l1":
        w = _lasso_cd(Xc, yc, lam, tol, max_sweeps)
        family = "lr_l1"
    else:
        raise ValueError(f"unknown penalty {penalty!r}")

    b = ym - xm @ w
    return MetaModel(
        family=family,
        task="regress",
        feature_dim=p,
        params={"w": w, "b": np.array([b])},
        hyperparams={"penalty": penalty, "lambda": lam},
        stats=stats,
        seed=seed,
    )
