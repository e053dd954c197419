"""Shallow network (one ReLU hidden layer, sigmoid output) trained from scratch.

Loss is cross-entropy for classification or squared error on the sigmoid
output for regression, plus an l1 or l2 penalty on the weight matrices
(biases unpenalized). Updates are adaptive-moment SGD on shuffled
minibatches; training early-stops on validation data loss and restores the
best parameters. Everything is deterministic for a fixed seed.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..dataset import Standardization
from ..errors import NoValidationSet
from .base import MetaModel, _sigmoid


@dataclass(frozen=True)
class NNParams:
    hidden: int = 50
    learning_rate: float = 1e-3
    batch_size: int = 128
    max_epochs: int = 500
    patience: int = 20


def nn_init(feature_dim: int, hidden: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
    return {
        "W1": rng.normal(0.0, np.sqrt(2.0 / feature_dim), size=(feature_dim, hidden)),
        "b1": np.zeros(hidden),
        "W2": rng.normal(0.0, np.sqrt(2.0 / hidden), size=hidden),
        "b2": np.zeros(1),
    }


def nn_loss_and_grads(
    params: dict[str, np.ndarray],
    X: np.ndarray,
    y: np.ndarray,
    task: str,
    penalty: str,
    lam: float,
) -> tuple[float, dict[str, np.ndarray]]:
    """Full objective (data + penalty) and its analytic gradient."""
    W1, b1, W2, b2 = params["W1"], params["b1"], params["W2"], params["b2"]
    n = len(y)
    Z1 = X @ W1 + b1
    H = np.maximum(Z1, 0.0)
    z = H @ W2 + b2[0]
    p = _sigmoid(z)
    if task == "classify":
        data = float(np.mean(np.logaddexp(0.0, z) - y * z))
        dz = (p - y) / n
    else:
        data = float(np.mean((p - y) ** 2))
        dz = 2.0 * (p - y) * p * (1.0 - p) / n

    if penalty == "l2":
        pen = 0.5 * lam * (float((W1 * W1).sum()) + float((W2 * W2).sum()))
        pgrad1, pgrad2 = lam * W1, lam * W2
    elif penalty == "l1":
        pen = lam * (float(np.abs(W1).sum()) + float(np.abs(W2).sum()))
        pgrad1, pgrad2 = lam * np.sign(W1), lam * np.sign(W2)
    else:
        raise ValueError(f"unknown penalty {penalty!r}")

    dW2 = H.T @ dz + pgrad2
    db2 = np.array([dz.sum()])
    dH = np.outer(dz, W2)
    dZ1 = dH * (Z1 > 0.0)
    dW1 = X.T @ dZ1 + pgrad1
    db1 = dZ1.sum(axis=0)
    grads = {"W1": dW1, "b1": db1, "W2": dW2, "b2": db2}
    return data + pen, grads


def _data_loss(params, X, y, task) -> float:
    W1, b1, W2, b2 = params["W1"], params["b1"], params["W2"], params["b2"]
    z = np.maximum(X @ W1 + b1, 0.0) @ W2 + b2[0]
    if task == "classify":
        return float(np.mean(np.logaddexp(0.0, z) - y * z))
    return float(np.mean((_sigmoid(z) - y) ** 2))


def fit_shallow_nn(
    X: np.ndarray,
    y: np.ndarray,
    task: str,
    penalty: str,
    lam: float,
    hp: NNParams = NNParams(),
    val: tuple[np.ndarray, np.ndarray] | None = None,
    stats: Standardization | None = None,
    seed: int = 0,
) -> MetaModel:
    if val is None:
        raise NoValidationSet("early stopping requires a validation set")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    X_val, y_val = np.asarray(val[0], dtype=np.float64), np.asarray(val[1], dtype=np.float64)
    rng = np.random.default_rng(seed)
    params = nn_init(X.shape[1], hp.hidden, rng)

    beta1, beta2, eps = 0.9, 0.999, 1e-8
    m = {k: np.zeros_like(v) for k, v in params.items()}
    v = {k: np.zeros_like(v_) for k, v_ in params.items()}
    step = 0

    best_loss = _data_loss(params, X_val, y_val, task)
    best_params = {k: p.copy() for k, p in params.items()}
    bad_epochs = 0
    n = len(y)
    for _ in range(hp.max_epochs):
        perm = rng.permutation(n)
        for lo in range(0, n, hp.batch_size):
            idx = perm[lo : lo + hp.batch_size]
            _, grads = nn_loss_and_grads(params, X[idx], y[idx], task, penalty, lam)
            step += 1
            for k in params:
                m[k] = beta1 * m[k] + (1 - beta1) * grads[k]
                v[k] = beta2 * v[k] + (1 - beta2) * grads[k] ** 2
                m_hat = m[k] / (1 - beta1**step)
                v_hat = v[k] / (1 - beta2**step)
                params[k] = params[k] - hp.learning_rate * m_hat / (np.sqrt(v_hat) + eps)
        val_loss = _data_loss(params, X_val, y_val, task)
        if val_loss < best_loss - 1e-12:
            best_loss = val_loss
            best_params = {k: p.copy() for k, p in params.items()}
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= hp.patience:
                break

    return MetaModel(
        family="nn_l1" if penalty == "l1" else "nn_l2",
        task=task,
        feature_dim=X.shape[1],
        params=best_params,
        hyperparams={**asdict(hp), "penalty": penalty, "lambda": lam},
        stats=stats,
        seed=seed,
    )
