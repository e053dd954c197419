"""Uniform fit/predict contract and binary persistence for meta-models.

All seven families produce a ``MetaModel``: a family tag, the task, learned
parameter arrays, hyperparameters, the feature standardization used during
training, and the training seed. ``predict`` returns scores in [0, 1]:
the false-positive probability for classification, the predicted adjusted
IoU for regression.

Model file layout ("SQMM", all little-endian):

    magic b"SQMM" | version u8 = 1 | manifest length u32 | manifest JSON
    | raw parameter arrays, C-order, in manifest order

The manifest records family, task, feature_dim, seed, hyperparameters and
each array's name/dtype/shape. Standardization statistics travel as two
reserved arrays ``__offset`` and ``__scale``.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..dataset import Standardization
from ..errors import DimMismatch, IoFailure

MODEL_MAGIC = b"SQMM"
MODEL_VERSION = 1

FAMILIES = ("lr", "lr_l1", "lr_l2", "logistic_l1", "gb", "nn_l1", "nn_l2")
CLASSIFY_FAMILIES = ("logistic_l1", "gb", "nn_l1", "nn_l2")
REGRESS_FAMILIES = ("lr", "lr_l1", "lr_l2", "gb", "nn_l1", "nn_l2")


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass(eq=False)
class MetaModel:
    family: str
    task: str  # "classify" | "regress"
    feature_dim: int
    params: dict[str, np.ndarray]
    hyperparams: dict = field(default_factory=dict)
    stats: Standardization | None = None
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown model family {self.family!r}")
        if self.task not in ("classify", "regress"):
            raise ValueError(f"unknown task {self.task!r}")

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Scores in [0, 1] for features in the space the model was fit on."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.feature_dim:
            raise DimMismatch(
                f"expected (n, {self.feature_dim}) features, got {X.shape}"
            )
        if self.family in ("lr", "lr_l1", "lr_l2"):
            z = X @ self.params["w"] + self.params["b"][0]
            return np.clip(z, 0.0, 1.0)
        if self.family == "logistic_l1":
            return _sigmoid(X @ self.params["w"] + self.params["b"][0])
        if self.family == "gb":
            from .boosting import gb_raw_scores

            f = gb_raw_scores(self, X)
            return _sigmoid(f) if self.task == "classify" else np.clip(f, 0.0, 1.0)
        # shallow networks: sigmoid output for both tasks
        h = np.maximum(X @ self.params["W1"] + self.params["b1"], 0.0)
        return _sigmoid(h @ self.params["W2"] + self.params["b2"][0])

    def predict_raw(self, X_raw: np.ndarray) -> np.ndarray:
        """Standardize with the bundled statistics, then predict."""
        if self.stats is None:
            return self.predict(X_raw)
        return self.predict(self.stats.apply(np.asarray(X_raw, dtype=np.float64)))


def save_model(model: MetaModel, path: str | Path) -> None:
    arrays = dict(model.params)
    if model.stats is not None:
        arrays["__offset"] = model.stats.offset
        arrays["__scale"] = model.stats.scale
    manifest = {
        "family": model.family,
        "task": model.task,
        "feature_dim": model.feature_dim,
        "seed": model.seed,
        "hyperparams": model.hyperparams,
        "arrays": [
            {"name": k, "dtype": str(v.dtype), "shape": list(v.shape)}
            for k, v in arrays.items()
        ],
    }
    blob = json.dumps(manifest, sort_keys=True).encode("utf-8")
    try:
        with open(path, "wb") as f:
            f.write(MODEL_MAGIC)
            f.write(struct.pack("<BI", MODEL_VERSION, len(blob)))
            f.write(blob)
            for spec in manifest["arrays"]:
                f.write(np.ascontiguousarray(arrays[spec["name"]]).tobytes())
    except OSError as e:
        raise IoFailure(f"cannot write {path}: {e}") from e


def load_model(path: str | Path) -> MetaModel:
    try:
        with open(path, "rb") as f:
            raw = f.read()
    except OSError as e:
        raise IoFailure(f"cannot read {path}: {e}") from e
    if raw[:4] != MODEL_MAGIC:
        raise IoFailure(f"{path}: not a model file")
    version, blob_len = struct.unpack("<BI", raw[4:9])
    if version != MODEL_VERSION:
        raise IoFailure(f"{path}: unsupported model version {version}")
    manifest = json.loads(raw[9 : 9 + blob_len].decode("utf-8"))
    offset = 9 + blob_len
    arrays = {}
    for spec in manifest["arrays"]:
        dt = np.dtype(spec["dtype"])
        count = int(np.prod(spec["shape"])) if spec["shape"] else 1
        nbytes = dt.itemsize * count
        arrays[spec["name"]] = np.frombuffer(
            raw[offset : offset + nbytes], dtype=dt
        ).reshape(spec["shape"]).copy()
        offset += nbytes
    stats = None
    if "__offset" in arrays:
        stats = Standardization(offset=arrays.pop("__offset"), scale=arrays.pop("__scale"))
    return MetaModel(
        family=manifest["family"],
        task=manifest["task"],
        feature_dim=manifest["feature_dim"],
        params=arrays,
        hyperparams=manifest["hyperparams"],
        stats=stats,
        seed=manifest["seed"],
    )
