"""Evaluation metrics, baselines and the multi-run experiment sweep.

Every experiment cell (task, model, composition, history length) is trained
and tested over several independent runs that resample the 70/10/20 split
and the model seed; reports carry per-run values plus mean and standard
deviation. Two reference points accompany the models: the naive baseline
(majority guessing, AUROC 0.5 by construction) and the entropy baseline
(single-frame gradient boosting on the mean segment entropy alone).
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .dataset import (
    PROV_AUGMENTED,
    PROV_PSEUDO,
    PROV_REAL,
    FeatureMatrix,
    SplitSpec,
    Standardization,
    smoter_augment,
    split,
    standardize,
)
from .errors import IoFailure, SingleClass, ZeroVariance
from .models import (
    GBParams,
    NNParams,
    fit_gradient_boosting,
    fit_linear,
    fit_logistic_l1,
    fit_shallow_nn,
)
from .models.base import MetaModel

COMPOSITIONS = ("R", "RA", "RAP", "RP", "P")


# ---------------------------------------------------------------------------
# scalar metrics
# ---------------------------------------------------------------------------

def accuracy(scores: np.ndarray, labels: np.ndarray, threshold: float = 0.5) -> float:
    """Fraction of labels matched by thresholding scores at ``threshold``."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if len(scores) == 0:
        raise ValueError("empty inputs")
    pred = (scores >= threshold).astype(labels.dtype)
    return float((pred == labels).mean())


def _check_binary(labels: np.ndarray) -> np.ndarray:
    labels = np.asarray(labels)
    if not set(np.unique(labels)).issubset({0, 1}):
        raise ValueError("labels must be binary 0/1")
    if len(np.unique(labels)) < 2:
        raise SingleClass("need both classes for AUROC")
    return labels


def auroc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Mann-Whitney form: P(score+ > score-) + 0.5 P(tie), via midranks."""
    labels = _check_binary(labels)
    scores = np.asarray(scores, dtype=np.float64)
    order = np.argsort(scores, kind="stable")
    s = scores[order]
    ranks = np.empty(len(s), dtype=np.float64)
    i = 0
    while i < len(s):
        j = i
        while j + 1 < len(s) and s[j + 1] == s[i]:
            j += 1
        ranks[i : j + 1] = 0.5 * (i + j) + 1.0  # midrank, 1-based
        i = j + 1
    rank_of = np.empty(len(s))
    rank_of[order] = ranks
    n_pos = int((labels == 1).sum())
    n_neg = len(labels) - n_pos
    rank_sum = float(rank_of[labels == 1].sum())
    u = rank_sum - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def auroc_trapezoid(scores: np.ndarray, labels: np.ndarray) -> float:
    """ROC sweep over distinct thresholds with trapezoidal integration.

    Kept deliberately independent of :func:`auroc`; the two must agree to
    1e-12 on any input.
    """
    labels = _check_binary(labels)
    scores = np.asarray(scores, dtype=np.float64)
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    y = labels[order]
    # cut only between distinct scores so ties share one ROC vertex
    distinct = np.concatenate([s[1:] != s[:-1], [True]])
    tp = np.cumsum(y == 1)[distinct].astype(np.float64)
    fp = np.cumsum(y == 0)[distinct].astype(np.float64)
    n_pos, n_neg = tp[-1], fp[-1]
    tpr = np.concatenate([[0.0], tp / n_pos])
    fpr = np.concatenate([[0.0], fp / n_neg])
    return float(np.trapezoid(tpr, fpr))


def r2_sigma(pred: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Coefficient of determination and RMSE of a regression prediction."""
    pred = np.asarray(pred, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(y) == 0:
        raise ValueError("empty inputs")
    sse = float(((pred - y) ** 2).sum())
    sst = float(((y - y.mean()) ** 2).sum())
    if sst == 0.0:
        raise ZeroVariance("targets are constant, R^2 undefined")
    return 1.0 - sse / sst, float(np.sqrt(sse / len(y)))


def naive_baseline(labels: np.ndarray) -> tuple[float, float]:
    """(majority-class accuracy, 0.5): what random guessing achieves."""
    labels = np.asarray(labels)
    frac_pos = float((labels == 1).mean())
    return max(frac_pos, 1.0 - frac_pos), 0.5


def tune_threshold(scores: np.ndarray, labels: np.ndarray) -> float:
    """Accuracy-maximizing threshold on validation scores (smallest on ties)."""
    cand = np.unique(np.concatenate([[0.5], scores]))
    best_t, best_acc = 0.5, -1.0
    for t in cand:
        a = accuracy(scores, labels, threshold=float(t))
        if a > best_acc + 1e-12:
            best_t, best_acc = float(t), a
    return best_t


# ---------------------------------------------------------------------------
# experiment sweep
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    classify_models: tuple[str, ...] = ("logistic_l1", "gb", "nn_l2")
    regress_models: tuple[str, ...] = ("lr", "lr_l1", "lr_l2", "gb", "nn_l1", "nn_l2")
    n_c_values: tuple[int, ...] = tuple(range(11))
    compositions: tuple[str, ...] = ("R",)
    runs: int = 10
    base_seed: int = 20240
    seeds: tuple[int, ...] | None = None  # explicit per-run seeds, overrides base_seed
    lambda_grid: tuple[float, ...] = (1e-4, 1e-3, 1e-2, 1e-1, 1.0)
    smote_bins: int = 10
    smote_k: int = 5
    smote_ratio: float = 1.0
    gb: GBParams = field(default_factory=GBParams)
    nn: NNParams = field(default_factory=NNParams)
    include_baselines: bool = True

    def run_seeds(self) -> list[int]:
        if self.seeds is not None:
            return list(self.seeds)
        return [self.base_seed + r for r in range(1, self.runs + 1)]


_FAMILY_INDEX = {f: i for i, f in enumerate(["lr", "lr_l1", "lr_l2", "logistic_l1", "gb", "nn_l1", "nn_l2", "entropy"])}


def _fit_model(
    family: str,
    task: str,
    Xtr: np.ndarray,
    ytr: np.ndarray,
    Xval: np.ndarray,
    yval: np.ndarray,
    cfg: ExperimentConfig,
    seed: int,
    stats: Standardization,
) -> MetaModel:
    """Fit one family; penalized families pick lambda by validation loss."""
    model_seed = seed * 100 + _FAMILY_INDEX[family]

    def val_loss(m: MetaModel) -> float:
        p = m.predict(Xval)
        if task == "classify":
            p = np.clip(p, 1e-12, 1.0 - 1e-12)
            return float(-np.mean(yval * np.log(p) + (1 - yval) * np.log(1 - p)))
        return float(np.mean((p - yval) ** 2))

    if family == "lr":
        return fit_linear(Xtr, ytr, penalty="none", stats=stats, seed=model_seed)
    if family in ("lr_l1", "lr_l2"):
        pen = family.split("_")[1]
        fits = [
            fit_linear(Xtr, ytr, penalty=pen, lam=lam, stats=stats, seed=model_seed)
            for lam in cfg.lambda_grid
        ]
        return min(zip(fits, cfg.lambda_grid), key=lambda fl: (val_loss(fl[0]), fl[1]))[0]
    if family == "logistic_l1":
        fits = [
            fit_logistic_l1(Xtr, ytr, lam=lam, stats=stats, seed=model_seed)
            for lam in cfg.lambda_grid
        ]
        return min(zip(fits, cfg.lambda_grid), key=lambda fl: (val_loss(fl[0]), fl[1]))[0]
    if family == "gb":
        return fit_gradient_boosting(
            Xtr, ytr, task, hp=cfg.gb, val=(Xval, yval), stats=stats, seed=model_seed
        )
    if family in ("nn_l1", "nn_l2"):
        pen = family.split("_")[1]
        fits = [
            fit_shallow_nn(
                Xtr, ytr, task, penalty=pen, lam=lam, hp=cfg.nn,
                val=(Xval, yval), stats=stats, seed=model_seed,
            )
            for lam in cfg.lambda_grid
        ]
        return min(zip(fits, cfg.lambda_grid), key=lambda fl: (val_loss(fl[0]), fl[1]))[0]
    raise ValueError(f"unknown family {family!r}")


def _compose_train(
    fm: FeatureMatrix,
    train_idx: np.ndarray,
    composition: str,
    cfg: ExperimentConfig,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(X, y, provenance) of the training set for one data composition.

    Augmentation interpolates the real training rows only; pseudo rows are
    plentiful by construction, scarcity is a real-annotation problem.
    """
    if composition not in COMPOSITIONS:
        raise ValueError(f"unknown composition {composition!r}")
    prov = fm.provenance[train_idx]
    real = train_idx[prov == PROV_REAL]
    pseudo = train_idx[prov == PROV_PSEUDO]
    parts_X, parts_y, parts_p = [], [], []
    if "R" in composition:
        parts_X.append(fm.X[real])
        parts_y.append(fm.y[real])
        parts_p.append(np.full(len(real), PROV_REAL, dtype=object))
    if "P" in composition:
        parts_X.append(fm.X[pseudo])
        parts_y.append(fm.y[pseudo])
        parts_p.append(np.full(len(pseudo), PROV_PSEUDO, dtype=object))
    if "A" in composition:
        X_syn, y_syn = smoter_augment(
            fm.X[real], fm.y[real],
            target_bins=cfg.smote_bins, k_neighbors=cfg.smote_k,
            ratio=cfg.smote_ratio, rng=rng,
        )
        parts_X.append(X_syn)
        parts_y.append(y_syn)
        parts_p.append(np.full(len(y_syn), PROV_AUGMENTED, dtype=object))
    return np.concatenate(parts_X), np.concatenate(parts_y), np.concatenate(parts_p)


def entropy_baseline(
    fm: FeatureMatrix,
    train_idx: np.ndarray,
    val_idx: np.ndarray,
    test_idx: np.ndarray,
    task: str,
    cfg: ExperimentConfig,
    seed: int,
) -> dict:
    """Single-frame gradient boosting on the mean segment entropy alone."""
    if len(fm) == 0:
        raise ValueError("dataset has no rows for the entropy baseline")
    names = fm.feature_names()
    if "E" not in names:
        raise ValueError("dataset has no mean-entropy column")
    col = names.index("E")
    X = fm.X[:, [col]]
    y = fm.fp.astype(np.float64) if task == "classify" else fm.y
    Xtr, Xval, Xte, stats = standardize(X[train_idx], X[val_idx], X[test_idx])
    model = fit_gradient_boosting(
        Xtr, y[train_idx], task, hp=cfg.gb, val=(Xval, y[val_idx]),
        stats=stats, seed=seed * 100 + _FAMILY_INDEX["entropy"],
    )
    scores = model.predict(Xte)
    out = {"seed": seed}
    if task == "classify":
        out["acc"] = accuracy(scores, y[test_idx])
        thr = tune_threshold(model.predict(Xval), y[val_idx])
        out["acc_tuned"] = accuracy(scores, y[test_idx], threshold=thr)
        out["threshold"] = thr
        out["auroc"] = auroc(scores, y[test_idx])
    else:
        r2, sigma = r2_sigma(scores, y[test_idx])
        out["r2"] = r2
        out["sigma"] = sigma
    return out


_METRIC_KEYS = ("acc", "acc_tuned", "threshold", "auroc", "r2", "sigma")


def _aggregate(runs: list[dict]) -> tuple[dict, dict]:
    mean, std = {}, {}
    for key in _METRIC_KEYS:
        vals = [r[key] for r in runs if key in r]
        if vals:
            mean[key] = float(np.mean(vals))
            std[key] = float(np.std(vals))
    return mean, std


def run_experiment(
    fms: dict[int, FeatureMatrix],
    cfg: ExperimentConfig,
    collect_predictions: bool = False,
) -> tuple[dict, dict]:
    """Cartesian sweep over tasks, models, compositions, history lengths, runs.

    ``fms`` maps each history length n_c to its feature matrix; all matrices
    must hold the same rows in the same order so splits are shared. Returns
    (report, extras); extras carries first-run test predictions per cell when
    ``collect_predictions`` is set.
    """
    n_c_values = [n for n in cfg.n_c_values if n in fms]
    if not n_c_values:
        raise ValueError("no feature matrix matches the configured n_c values")
    fm0 = fms[n_c_values[0]]
    seeds = cfg.run_seeds()

    cells: dict[tuple, list[dict]] = {}
    extras: dict = {"predictions": {}}

    for run_pos, seed in enumerate(seeds, start=1):
        train_idx, val_idx, test_idx = split(fm0, SplitSpec(seed=seed, run=run_pos))
        for comp in cfg.compositions:
            rng_aug = np.random.default_rng(seed + 77_003)
            for n_c in n_c_values:
                fm = fms[n_c]
                Xtr_raw, ytr_iou, _ = _compose_train(fm, train_idx, comp, cfg, rng_aug)
                Xtr, Xval, Xte, stats = standardize(
                    Xtr_raw, fm.X[val_idx], fm.X[test_idx]
                )
                for task, families in (
                    ("classify", cfg.classify_models),
                    ("regress", cfg.regress_models),
                ):
                    if task == "classify":
                        ytr = (ytr_iou == 0.0).astype(np.float64)
                        yval = fm.fp[val_idx].astype(np.float64)
                        yte = fm.fp[test_idx].astype(np.float64)
                    else:
                        ytr, yval, yte = ytr_iou, fm.y[val_idx], fm.y[test_idx]
                    for family in families:
                        model = _fit_model(
                            family, task, Xtr, ytr, Xval, yval, cfg, seed, stats
                        )
                        scores = model.predict(Xte)
                        entry = {"seed": seed}
                        if task == "classify":
                            entry["acc"] = accuracy(scores, yte)
                            thr = tune_threshold(model.predict(Xval), yval)
                            entry["acc_tuned"] = accuracy(scores, yte, threshold=thr)
                            entry["threshold"] = thr
                            entry["auroc"] = auroc(scores, yte)
                        else:
                            r2, sigma = r2_sigma(scores, yte)
                            entry["r2"] = r2
                            entry["sigma"] = sigma
                        cells.setdefault((task, family, comp, n_c), []).append(entry)
                        if collect_predictions and run_pos == 1:
                            extras["predictions"][(task, family, comp, n_c)] = {
                                "y_true": yte.copy(),
                                "scores": scores,
                                "sizes": fm.X[test_idx, 0].copy(),
                                "model": model,
                            }
            if cfg.include_baselines:
                fp_te = fm0.fp[test_idx]
                acc_n, auroc_n = naive_baseline(fp_te)
                cells.setdefault(("classify", "naive", comp, 0), []).append(
                    {"seed": seed, "acc": acc_n, "auroc": auroc_n}
                )
                for task in ("classify", "regress"):
                    cells.setdefault((task, "entropy", comp, 0), []).append(
                        entropy_baseline(fm0, train_idx, val_idx, test_idx, task, cfg, seed)
                    )

    # best history length per (task, model, composition), judged on test mean
    primary = {"classify": "auroc", "regress": "r2"}
    best_n_c: dict[tuple, int] = {}
    for (task, family, comp, n_c), runs in cells.items():
        mean, _ = _aggregate(runs)
        key = (task, family, comp)
        metric = mean.get(primary[task])
        if metric is None:
            continue
        if key not in best_n_c or metric > best_n_c[key][0]:
            best_n_c[key] = (metric, n_c)

    report_cells = []
    for (task, family, comp, n_c), runs in sorted(
        cells.items(), key=lambda kv: (kv[0][0], kv[0][1], kv[0][2], kv[0][3])
    ):
        mean, std = _aggregate(runs)
        best = best_n_c.get((task, family, comp))
        report_cells.append(
            {
                "task": task,
                "model": family,
                "composition": comp,
                "n_c": n_c,
                "runs": runs,
                "mean": mean,
                "std": std,
                "best_n_c": best[1] if best else n_c,
            }
        )
    report = {
        "config": {
            "classify_models": list(cfg.classify_models),
            "regress_models": list(cfg.regress_models),
            "n_c_values": list(n_c_values),
            "compositions": list(cfg.compositions),
            "runs": cfg.runs,
            "seeds": seeds,
            "lambda_grid": list(cfg.lambda_grid),
            "gb": asdict(cfg.gb),
            "nn": asdict(cfg.nn),
            "smote": {"bins": cfg.smote_bins, "k": cfg.smote_k, "ratio": cfg.smote_ratio},
        },
        "cells": report_cells,
    }
    return report, extras


REPORT_SCHEMA = {
    "type": "object",
    "required": ["config", "cells"],
    "properties": {
        "config": {"type": "object"},
        "cells": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["task", "model", "composition", "n_c", "runs", "mean", "std", "best_n_c"],
                "properties": {
                    "task": {"enum": ["classify", "regress"]},
                    "model": {"type": "string"},
                    "composition": {"enum": list(COMPOSITIONS)},
                    "n_c": {"type": "integer", "minimum": 0},
                    "runs": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "required": ["seed"],
                            "properties": {
                                "seed": {"type": "integer"},
                                "acc": {"type": "number", "minimum": 0, "maximum": 1},
                                "acc_tuned": {"type": "number", "minimum": 0, "maximum": 1},
                                "threshold": {"type": "number"},
                                "auroc": {"type": "number", "minimum": 0, "maximum": 1},
                                "r2": {"type": "number", "maximum": 1},
                                "sigma": {"type": "number", "minimum": 0},
                            },
                        },
                    },
                    "mean": {"type": "object"},
                    "std": {"type": "object"},
                    "best_n_c": {"type": "integer"},
                },
            },
        },
    },
}


def write_report_json(report: dict, path: str | Path) -> None:
    try:
        with open(path, "w") as f:
            json.dump(report, f, indent=2, sort_keys=True)
            f.write("\n")
    except OSError as e:
        raise IoFailure(f"cannot write {path}: {e}") from e


def write_report_csv(report: dict, path: str | Path) -> None:
    """Flat mirror of the JSON report: one row per run plus mean/std rows."""
    cols = ["task", "model", "composition", "n_c", "run", "seed"] + list(_METRIC_KEYS)
    try:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(cols)
            for cell in report["cells"]:
                head = [cell["task"], cell["model"], cell["composition"], cell["n_c"]]
                for i, run in enumerate(cell["runs"], start=1):
                    w.writerow(
                        head + [i, run["seed"]] + [_num(run.get(k)) for k in _METRIC_KEYS]
                    )
                w.writerow(head + ["mean", ""] + [_num(cell["mean"].get(k)) for k in _METRIC_KEYS])
                w.writerow(head + ["std", ""] + [_num(cell["std"].get(k)) for k in _METRIC_KEYS])
    except OSError as e:
        raise IoFailure(f"cannot write {path}: {e}") from e


def _num(v) -> str:
    return "" if v is None else repr(float(v))
