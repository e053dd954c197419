"""Segment tracking across frames by overlap and center geometry.

Per frame, five stages run in order; a segment matched by an earlier stage
is ignored by later ones, and larger segments are always offered matches
first:

1. aggregation: same-class segments closer than ``c_near`` are fused
   (transitively) into one entity sharing a single track id;
2. shift: the previous frame's entities, displaced by their last motion
   vector, are matched to current entities by overlap, with a center
   distance fallback bounded by ``c_dist``;
3. overlap: unshifted overlap matching for whatever steps 1-2 left over;
4. regression: tracks missing from the current frame get their center
   extrapolated by a least-squares line over their recent history, matched
   either by center distance (``c_lin``) or by shifting their largest
   historical mask;
5. new ids: everything still unmatched opens a fresh, never-reused id.

Matching is restricted to equal class labels throughout, every current
entity is consumed at most once per frame, and the whole procedure is
deterministic for a fixed input and configuration.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .errors import DimMismatch, IoFailure
from .segmentation import Segment, SegmentFrame, geometric_center, split_interior_boundary


@dataclass(frozen=True)
class TrackerConfig:
    """Matching constants; defaults follow the evaluated street-scene setup."""

    c_near: float = 10.0
    c_over: float = 0.35
    c_dist: float = 100.0
    c_lin: float = 50.0
    n_lr: int = 10  # history window (frames) for the regression stage
    enable_regression_step: bool = True  # stage 4 ablation switch

    def __post_init__(self):
        if min(self.c_near, self.c_over, self.c_dist, self.c_lin, self.n_lr) <= 0:
            raise ValueError("tracker constants must be positive")


@dataclass(eq=False)
class TrackEntity:
    """A step-1 aggregate of one or more same-class segments in one frame."""

    frame: int
    seg_ids: tuple[int, ...]
    class_label: int
    pixels_flat: np.ndarray  # sorted flat indices into the frame grid
    boundary: np.ndarray  # (B, 2) boundary coordinates of all members
    center: np.ndarray  # (2,) float64, mean over the union pixel set
    size: int
    track_id: int | None = None


@dataclass(eq=False)
class TrackEntry:
    """One observation of a track: where and how large it was in a frame."""

    frame: int
    seg_ids: tuple[int, ...]
    center: np.ndarray
    size: int


@dataclass(eq=False)
class TrackedSequence:
    """Frames with resolved track ids plus the per-track observation history."""

    frames: list[SegmentFrame]
    entities: list[list[TrackEntity]]
    track_histories: dict[int, list[TrackEntry]]

    def track_ids(self, frame_index: int) -> dict[int, int]:
        """seg_id -> track_id for one frame."""
        out = {}
        for ent in self.entities[frame_index]:
            for sid in ent.seg_ids:
                out[sid] = ent.track_id
        return out


def overlap(j_pixels_flat: np.ndarray, k_pixels_flat: np.ndarray) -> float:
    """|j intersect k| / |j| on sorted flat pixel index arrays."""
    if len(j_pixels_flat) == 0:
        return 0.0
    inter = np.intersect1d(j_pixels_flat, k_pixels_flat, assume_unique=True)
    return len(inter) / len(j_pixels_flat)


def min_segment_distance(i: Segment, j: Segment) -> float:
    """Minimum Euclidean pixel distance between two disjoint segments.

    Computed over boundary pixels, which equals the full-set minimum for
    disjoint sets; a KD-tree keeps this near-linear in boundary size.
    """
    bi = i.boundary if i.boundary is not None else i.pixels
    bj = j.boundary if j.boundary is not None else j.pixels
    tree = cKDTree(bi.astype(np.float64))
    d, _ = tree.query(bj.astype(np.float64), k=1)
    return float(np.min(d))


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, x: int) -> int:
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def _entity_from_segments(sf: SegmentFrame, segs: list[Segment]) -> TrackEntity:
    w = sf.shape[1]
    pts = np.concatenate([s.pixels for s in segs])
    flat = np.sort(pts[:, 0].astype(np.int64) * w + pts[:, 1])
    boundary = np.concatenate([s.boundary if s.boundary is not None else s.pixels for s in segs])
    return TrackEntity(
        frame=sf.frame_index,
        seg_ids=tuple(sorted(s.id for s in segs)),
        class_label=segs[0].class_label,
        pixels_flat=flat,
        boundary=boundary,
        center=pts.mean(axis=0, dtype=np.float64),
        size=len(pts),
    )


def step1_aggregate(sf: SegmentFrame, cfg: TrackerConfig) -> list[TrackEntity]:
    """Fuse same-class segments at boundary distance < c_near, transitively."""
    if sf.segments and sf.segments[0].boundary is None:
        split_interior_boundary(sf)
    uf = _UnionFind(len(sf.segments) + 1)
    by_class: dict[int, list[Segment]] = {}
    for seg in sf.segments:
        by_class.setdefault(seg.class_label, []).append(seg)
    for segs in by_class.values():
        if len(segs) < 2:
            continue
        pts = np.concatenate([s.boundary for s in segs]).astype(np.float64)
        owner = np.concatenate([np.full(len(s.boundary), s.id) for s in segs])
        tree = cKDTree(pts)
        pairs = tree.query_pairs(r=cfg.c_near, output_type="ndarray")
        if len(pairs) == 0:
            continue
        sa, sb = owner[pairs[:, 0]], owner[pairs[:, 1]]
        cross = sa != sb
        cand = {(min(a, b), max(a, b)) for a, b in zip(sa[cross], sb[cross])}
        seg_by_id = {s.id: s for s in segs}
        for a, b in sorted(cand):
            # query_pairs is <= r; the aggregation rule is strictly <
            if min_segment_distance(seg_by_id[a], seg_by_id[b]) < cfg.c_near:
                uf.union(a, b)
    groups: dict[int, list[Segment]] = {}
    for seg in sf.segments:
        groups.setdefault(uf.find(seg.id), []).append(seg)
    entities = [_entity_from_segments(sf, segs) for segs in groups.values()]
    entities.sort(key=lambda e: (-e.size, e.seg_ids[0]))
    return entities


def _shift_flat(pixels_flat: np.ndarray, shift: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Translate a flat pixel set by an integer-rounded vector, clipped to the image."""
    h, w = shape
    rows = pixels_flat // w + int(np.rint(shift[0]))
    cols = pixels_flat % w + int(np.rint(shift[1]))
    keep = (rows >= 0) & (rows < h) & (cols >= 0) & (cols < w)
    return np.sort(rows[keep] * w + cols[keep])


class SegmentTracker:
    """Sequential state machine: feed frames in order via ``advance``."""

    def __init__(self, cfg: TrackerConfig | None = None):
        self.cfg = cfg or TrackerConfig()
        self.frames: list[SegmentFrame] = []
        self.entities: list[list[TrackEntity]] = []
        self.histories: dict[int, list[TrackEntry]] = {}
        self._shape: tuple[int, int] | None = None
        self._next_id = 1

    # -- bookkeeping -------------------------------------------------------

    def _observation(self, track_id: int, frame: int) -> TrackEntry | None:
        for entry in reversed(self.histories.get(track_id, [])):
            if entry.frame == frame:
                return entry
            if entry.frame < frame:
                return None
        return None

    def _assign(self, ent: TrackEntity, track_id: int, available: list[TrackEntity]) -> None:
        ent.track_id = track_id
        available.remove(ent)
        self.histories.setdefault(track_id, []).append(
            TrackEntry(frame=ent.frame, seg_ids=ent.seg_ids, center=ent.center, size=ent.size)
        )

    @staticmethod
    def _best_by_overlap(
        cands: list[TrackEntity], target_flat: np.ndarray
    ) -> tuple[TrackEntity | None, float]:
        """Argmax-overlap candidate; positive overlap required for a match."""
        best, best_key = None, None
        for j in cands:
            o = overlap(j.pixels_flat, target_flat)
            if o <= 0.0:
                continue
            key = (-o, -j.size, j.seg_ids[0])
            if best_key is None or key < best_key:
                best, best_key = j, key
        return best, (-best_key[0] if best_key else 0.0)

    # -- matching stages ----------------------------------------------------

    def step2_shift_match(self, t: int, available: list[TrackEntity]) -> None:
        """Motion-compensated overlap matching with a center-distance fallback."""
        if t < 2:
            return
        for k in self.entities[t - 1]:
            tau = k.track_id
            cands = [j for j in available if j.class_label == k.class_label]
            if not cands:
                continue
            prev2 = self._observation(tau, t - 2)
            if prev2 is not None:
                motion = k.center - prev2.center
                shifted = _shift_flat(k.pixels_flat, motion, self._shape)
                j, _ = self._best_by_overlap(cands, shifted)
                if j is not None:
                    self._assign(j, tau, available)
                    continue
                # overlap failed: allow segments closer than the motion model expects
                def dist(j: TrackEntity) -> float:
                    step = j.center - k.center
                    return float(
                        np.linalg.norm(step) + np.linalg.norm(motion - step)
                    )
                j = min(cands, key=lambda e: (dist(e), -e.size, e.seg_ids[0]))
                if dist(j) <= self.cfg.c_dist:
                    self._assign(j, tau, available)
            else:
                # track born in the previous frame: nearest-center rule only
                j = min(
                    cands,
                    key=lambda e: (float(np.linalg.norm(e.center - k.center)), -e.size, e.seg_ids[0]),
                )
                if float(np.linalg.norm(j.center - k.center)) < self.cfg.c_dist:
                    self._assign(j, tau, available)

    def step3_overlap_match(self, t: int, available: list[TrackEntity]) -> None:
        """Unshifted overlap matching for previous-frame entities still unmatched."""
        if t < 1:
            return
        assigned = {e.track_id for e in self.entities[t] if e.track_id is not None}
        for k in self.entities[t - 1]:
            if k.track_id in assigned:
                continue
            cands = [j for j in available if j.class_label == k.class_label]
            j, _ = self._best_by_overlap(cands, k.pixels_flat)
            if j is not None:
                self._assign(j, k.track_id, available)
                assigned.add(k.track_id)

    def step4_regression_match(self, t: int, available: list[TrackEntity]) -> None:
        """Recover flashing tracks by extrapolating their center trajectory."""
        if t < 3 or not self.cfg.enable_regression_step:
            return
        lo = max(0, t - self.cfg.n_lr)
        assigned = {e.track_id for e in self.entities[t] if e.track_id is not None}
        windows: list[tuple[int, list[TrackEntry]]] = []
        for tau, entries in self.histories.items():
            if tau in assigned:
                continue
            win = [e for e in entries if lo <= e.frame <= t - 1]
            if len(win) >= 2:
                windows.append((tau, win))
        # larger tracks first, judged by their most recent observation
        windows.sort(key=lambda it: (-it[1][-1].size, it[0]))
        for tau, win in windows:
            cls = self._track_class(tau)
            cands = [j for j in available if j.class_label == cls]
            if not cands:
                continue
            frames = np.array([e.frame for e in win], dtype=np.float64)
            centers = np.stack([e.center for e in win])
            coef = np.polyfit(frames, centers, 1)  # per-coordinate line fit
            pred = np.array([np.polyval(coef[:, 0], t), np.polyval(coef[:, 1], t)])
            j = min(
                cands,
                key=lambda e: (float(np.linalg.norm(e.center - pred)), -e.size, e.seg_ids[0]),
            )
            if float(np.linalg.norm(j.center - pred)) < self.cfg.c_lin:
                self._assign(j, tau, available)
                continue
            # shift the largest historical mask to the predicted position
            t_max = max(win, key=lambda e: (e.size, e.frame))
            mask = self._entry_pixels(t_max)
            shifted = _shift_flat(mask, pred - t_max.center, self._shape)
            j, _ = self._best_by_overlap(cands, shifted)
            if j is not None:
                self._assign(j, tau, available)

    def step5_new_ids(self, available: list[TrackEntity]) -> None:
        """Fresh monotonically increasing ids for everything still unmatched."""
        for ent in list(available):
            self._assign(ent, self._next_id, available)
            self._next_id += 1

    # -- helpers ------------------------------------------------------------

    def _track_class(self, tau: int) -> int:
        first = self.histories[tau][0]
        sf = self.frames[first.frame]
        return sf.segment_by_id(first.seg_ids[0]).class_label

    def _entry_pixels(self, entry: TrackEntry) -> np.ndarray:
        sf = self.frames[entry.frame]
        w = sf.shape[1]
        pts = np.concatenate([sf.segment_by_id(sid).pixels for sid in entry.seg_ids])
        return np.sort(pts[:, 0].astype(np.int64) * w + pts[:, 1])

    # -- driver --------------------------------------------------------------

    def advance(self, sf: SegmentFrame) -> list[TrackEntity]:
        if self._shape is None:
            self._shape = sf.shape
        elif sf.shape != self._shape:
            raise DimMismatch(f"frame {sf.frame_index} has shape {sf.shape}, expected {self._shape}")
        t = len(self.frames)
        sf.frame_index = t
        self.frames.append(sf)
        ents = step1_aggregate(sf, self.cfg)
        self.entities.append(ents)
        available = list(ents)
        self.step2_shift_match(t, available)
        self.step3_overlap_match(t, available)
        self.step4_regression_match(t, available)
        self.step5_new_ids(available)
        for ent in ents:
            for sid in ent.seg_ids:
                sf.segment_by_id(sid).track_id = ent.track_id
        return ents

    def result(self) -> TrackedSequence:
        return TrackedSequence(
            frames=self.frames, entities=self.entities, track_histories=self.histories
        )


def track_sequence(frames: list[SegmentFrame], cfg: TrackerConfig | None = None) -> TrackedSequence:
    """Run the five matching stages over a frame sequence."""
    tracker = SegmentTracker(cfg)
    for sf in frames:
        tracker.advance(sf)
    return tracker.result()


def write_track_csv(tracked: TrackedSequence, path: str | Path) -> None:
    """Per-segment track assignment: frame,seg_id,track_id,class,cy,cx,S."""
    try:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["frame", "seg_id", "track_id", "class", "cy", "cx", "S"])
            for sf in tracked.frames:
                for seg in sf.segments:
                    cy, cx = seg.center if seg.center is not None else geometric_center(seg)
                    w.writerow(
                        [sf.frame_index, seg.id, seg.track_id, seg.class_label,
                         repr(float(cy)), repr(float(cx)), seg.size]
                    )
    except OSError as e:
        raise IoFailure(f"cannot write {path}: {e}") from e
