"""Per-track time-series feature matrices, splits, standardization, SMOTER.

A row is one (track, frame) pair. Its feature vector concatenates the
track's metric blocks at lags 0..n_c (lag 0 = the current frame). When the
track was not observed at some lag, the nearest older observation fills the
block, falling back to the oldest one available; a freshly born track
therefore repeats its first block across all lags. This keeps the feature
dimension fixed at (n_c + 1) * (22 + c) without injecting zeros that a
linear model would misread as confidence.

Time series are keyed by track id; when step-1 aggregation groups several
components under one id, the largest component with a metric record
represents the track in that frame.
"""

from __future__ import annotations

import csv
from bisect import bisect_right
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import BinTooSmall, IoFailure, TooFewRows
from .metrics import MetricRecord, feature_names
from .tracking import TrackedSequence

PROV_REAL = "real"
PROV_PSEUDO = "pseudo"
PROV_AUGMENTED = "augmented"


@dataclass(eq=False)
class FeatureMatrix:
    """Row-wise features and targets; ``y`` is NaN where the target is unknown."""

    X: np.ndarray  # (n, (n_c + 1) * (22 + c)) float64
    y: np.ndarray  # (n,) iou_adj, NaN = unknown
    provenance: np.ndarray  # (n,) str
    frames: np.ndarray  # (n,) int
    track_ids: np.ndarray  # (n,) int
    seg_ids: np.ndarray  # (n,) int
    classes: np.ndarray  # (n,) int
    n_c: int
    num_classes: int

    def __len__(self) -> int:
        return len(self.y)

    @property
    def fp(self) -> np.ndarray:
        """Binary false-positive labels (1 where iou_adj == 0)."""
        return (self.y == 0.0).astype(np.int64)

    @property
    def labeled(self) -> np.ndarray:
        return ~np.isnan(self.y)

    def feature_names(self) -> list[str]:
        base = feature_names(self.num_classes)
        names = list(base)
        for lag in range(1, self.n_c + 1):
            names += [f"{n}_lag{lag}" for n in base]
        return names

    def rows(self, idx: np.ndarray) -> "FeatureMatrix":
        return FeatureMatrix(
            X=self.X[idx],
            y=self.y[idx],
            provenance=self.provenance[idx],
            frames=self.frames[idx],
            track_ids=self.track_ids[idx],
            seg_ids=self.seg_ids[idx],
            classes=self.classes[idx],
            n_c=self.n_c,
            num_classes=self.num_classes,
        )


@dataclass(frozen=True)
class SplitSpec:
    """70/10/20 split parameters for one run."""

    seed: int
    run: int = 1
    train_frac: float = 0.70
    val_frac: float = 0.10
    test_frac: float = 0.20

    def __post_init__(self):
        total = self.train_frac + self.val_frac + self.test_frac
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"split fractions sum to {total}, expected 1")


def build_timeseries(
    tracked: TrackedSequence,
    records: list[MetricRecord],
    n_c: int,
    require_target: bool = True,
) -> FeatureMatrix:
    """Assemble (track, frame) rows with lag blocks 0..n_c from one sequence."""
    if not 0 <= n_c <= 10:
        raise ValueError(f"n_c must be in [0, 10], got {n_c}")
    num_classes = len(records[0].class_probs) if records else 0
    by_key = {(r.frame, r.seg_id): r for r in records}

    # representative record per (track, frame): largest component with a record
    track_obs: dict[int, list[tuple[int, MetricRecord]]] = {}
    for ents in tracked.entities:
        for ent in ents:
            recs = [by_key[(ent.frame, sid)] for sid in ent.seg_ids if (ent.frame, sid) in by_key]
            if not recs:
                continue
            rep = max(recs, key=lambda r: (r.S, -r.seg_id))
            track_obs.setdefault(ent.track_id, []).append((ent.frame, rep))
    for obs in track_obs.values():
        obs.sort(key=lambda fr: fr[0])

    rows_X, rows_y, prov, frames, tids, sids, classes = [], [], [], [], [], [], []
    for tau in sorted(track_obs):
        obs = track_obs[tau]
        obs_frames = [f for f, _ in obs]
        feats = [r.features() for _, r in obs]
        for pos, (t, rec) in enumerate(obs):
            if require_target and rec.iou_adj is None:
                continue
            blocks = []
            for lag in range(n_c + 1):
                # newest observation at or before frame t - lag, else the oldest
                j = bisect_right(obs_frames, t - lag) - 1
                blocks.append(feats[max(j, 0)])
            rows_X.append(np.concatenate(blocks))
            rows_y.append(np.nan if rec.iou_adj is None else rec.iou_adj)
            prov.append(rec.provenance or "")
            frames.append(t)
            tids.append(tau)
            sids.append(rec.seg_id)
            classes.append(rec.class_label)

    d = (n_c + 1) * (22 + num_classes)
    return FeatureMatrix(
        X=np.array(rows_X, dtype=np.float64).reshape(len(rows_X), d),
        y=np.array(rows_y, dtype=np.float64),
        provenance=np.array(prov, dtype=object),
        frames=np.array(frames, dtype=np.int64),
        track_ids=np.array(tids, dtype=np.int64),
        seg_ids=np.array(sids, dtype=np.int64),
        classes=np.array(classes, dtype=np.int64),
        n_c=n_c,
        num_classes=num_classes,
    )


def concat_feature_matrices(parts: list[FeatureMatrix]) -> FeatureMatrix:
    first = parts[0]
    return FeatureMatrix(
        X=np.concatenate([p.X for p in parts]),
        y=np.concatenate([p.y for p in parts]),
        provenance=np.concatenate([p.provenance for p in parts]),
        frames=np.concatenate([p.frames for p in parts]),
        track_ids=np.concatenate([p.track_ids for p in parts]),
        seg_ids=np.concatenate([p.seg_ids for p in parts]),
        classes=np.concatenate([p.classes for p in parts]),
        n_c=first.n_c,
        num_classes=first.num_classes,
    )


def split(fm: FeatureMatrix, spec: SplitSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Row-level 70/10/20 split; augmented and pseudo rows only ever train.

    Returns (train_idx, val_idx, test_idx) into ``fm``. Validation and test
    are drawn from real rows exclusively.
    """
    if np.isnan(fm.y).any():
        raise ValueError("split requires fully labeled rows")
    real = np.flatnonzero(fm.provenance == PROV_REAL)
    rest = np.flatnonzero(fm.provenance != PROV_REAL)
    if len(real) < 10:
        raise TooFewRows(f"need at least 10 real labeled rows, have {len(real)}")
    rng = np.random.default_rng(spec.seed)
    perm = real[rng.permutation(len(real))]
    n_train = int(len(real) * spec.train_frac)
    n_val = int(len(real) * spec.val_frac)
    train = np.sort(np.concatenate([perm[:n_train], rest]))
    val = np.sort(perm[n_train : n_train + n_val])
    test = np.sort(perm[n_train + n_val :])
    return train, val, test


@dataclass(frozen=True)
class Standardization:
    offset: np.ndarray
    scale: np.ndarray

    def apply(self, X: np.ndarray) -> np.ndarray:
        return (X - self.offset) / self.scale


def standardize(
    train: np.ndarray, val: np.ndarray | None = None, test: np.ndarray | None = None
) -> tuple[np.ndarray, np.ndarray | None, np.ndarray | None, Standardization]:
    """Per-feature z-scores from train statistics; constant features pass through."""
    if len(train) == 0:
        raise ValueError("train set must be nonempty")
    mean = train.mean(axis=0)
    std = train.std(axis=0)
    constant = std == 0.0
    offset = np.where(constant, 0.0, mean)
    scale = np.where(constant, 1.0, std)
    stats = Standardization(offset=offset, scale=scale)
    return (
        stats.apply(train),
        None if val is None else stats.apply(val),
        None if test is None else stats.apply(test),
        stats,
    )


def smoter_augment(
    X: np.ndarray,
    y: np.ndarray,
    target_bins: int = 10,
    k_neighbors: int = 5,
    ratio: float = 1.0,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """SMOTE for continuous targets: oversample sparse target bins.

    Targets are cut into ``target_bins`` equal-width bins over [0, 1]; every
    non-empty bin below the median (non-empty) bin count is filled up to
    ``ratio`` times the largest bin count. Each synthetic row interpolates a
    seed row toward one of its k nearest same-bin neighbors (Euclidean in
    standardized feature space); its target is the distance-weighted mean of
    the parents' targets. Returns only the synthetic rows.
    """
    rng = rng or np.random.default_rng(0)
    bins = np.clip((y * target_bins).astype(np.int64), 0, target_bins - 1)
    counts = np.bincount(bins, minlength=target_bins)
    nonempty = counts[counts > 0]
    median = float(np.median(nonempty))
    target_count = int(round(ratio * counts.max()))

    # distances in standardized space; synthesis stays in the caller's space
    Xs, _, _, _ = standardize(X)

    out_X, out_y = [], []
    for b in range(target_bins):
        n = counts[b]
        if n == 0 or n >= median:
            continue
        if n < 2:
            raise BinTooSmall(f"target bin {b} has {n} member(s), need at least 2")
        n_new = target_count - n
        if n_new <= 0:
            continue
        members = np.flatnonzero(bins == b)
        Zb = Xs[members]
        d2 = ((Zb[:, None, :] - Zb[None, :, :]) ** 2).sum(axis=2)
        np.fill_diagonal(d2, np.inf)
        k_eff = min(k_neighbors, n - 1)
        nn_idx = np.argsort(d2, axis=1, kind="stable")[:, :k_eff]
        for _ in range(n_new):
            i = int(rng.integers(n))
            j = int(nn_idx[i, int(rng.integers(k_eff))])
            u = float(rng.random())
            xi, xj = X[members[i]], X[members[j]]
            synth = xi + u * (xj - xi)
            zi, zj = Zb[i], Zb[j]
            zs = zi + u * (zj - zi)
            d1 = float(np.linalg.norm(zs - zi))
            d2_ = float(np.linalg.norm(zs - zj))
            if d1 + d2_ == 0.0:
                t = 0.5 * (y[members[i]] + y[members[j]])
            else:
                t = (d2_ * y[members[i]] + d1 * y[members[j]]) / (d1 + d2_)
            out_X.append(synth)
            out_y.append(t)
    if not out_X:
        return np.empty((0, X.shape[1])), np.empty(0)
    return np.array(out_X), np.array(out_y)


def write_dataset_csv(fm: FeatureMatrix, path: str | Path) -> None:
    """Metrics-CSV layout extended with provenance and _lag<i> feature blocks."""
    base = feature_names(fm.num_classes)
    header = ["frame", "seg_id", "track_id", "class"] + base + ["iou_adj", "provenance"]
    for lag in range(1, fm.n_c + 1):
        header += [f"{n}_lag{lag}" for n in base]
    width = len(base)
    try:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(header)
            for i in range(len(fm)):
                row = [fm.frames[i], fm.seg_ids[i], fm.track_ids[i], fm.classes[i]]
                row += [repr(float(v)) for v in fm.X[i, :width]]
                row.append("" if np.isnan(fm.y[i]) else repr(float(fm.y[i])))
                row.append(fm.provenance[i])
                row += [repr(float(v)) for v in fm.X[i, width:]]
                w.writerow(row)
    except OSError as e:
        raise IoFailure(f"cannot write {path}: {e}") from e


def read_dataset_csv(path: str | Path) -> FeatureMatrix:
    try:
        with open(path, newline="") as f:
            rows = list(csv.reader(f))
    except OSError as e:
        raise IoFailure(f"cannot read {path}: {e}") from e
    header = rows[0]
    num_classes = sum(1 for h in header if h.startswith("P_") and "_lag" not in h)
    base = feature_names(num_classes)
    width = len(base)
    n_c = sum(1 for h in header if h.startswith("S_lag"))
    body = rows[1:]
    n = len(body)
    X = np.empty((n, (n_c + 1) * width))
    y = np.full(n, np.nan)
    prov = np.empty(n, dtype=object)
    frames = np.empty(n, dtype=np.int64)
    tids = np.empty(n, dtype=np.int64)
    sids = np.empty(n, dtype=np.int64)
    classes = np.empty(n, dtype=np.int64)
    lag0_end = 4 + width
    for i, row in enumerate(body):
        frames[i], sids[i], tids[i], classes[i] = (int(v) for v in row[:4])
        X[i, :width] = [float(v) for v in row[4:lag0_end]]
        y[i] = np.nan if row[lag0_end] == "" else float(row[lag0_end])
        prov[i] = row[lag0_end + 1]
        X[i, width:] = [float(v) for v in row[lag0_end + 2 :]]
    return FeatureMatrix(
        X=X, y=y, provenance=prov, frames=frames, track_ids=tids, seg_ids=sids,
        classes=classes, n_c=n_c, num_classes=num_classes,
    )
