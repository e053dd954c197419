"""Deterministic synthetic scenes: softmax fields, ground truth, true identities.

Every frame is assembled from moving blobs on a background. Each pixel gets
a logit margin for its nominal class,

    margin(z) = base * (1 - rho(z)) * falloff(z) + noise(z),

where ``rho`` is the blob's corruption level (wobbling over time through an
AR(1) process when ``temporal_amp`` > 0), ``falloff`` shrinks the margin
near region boundaries, and ``noise`` is a spatially smoothed field whose
amplitude grows with ``rho``. Temperature-scaled softmax over (nominal
class, one alternative class, the rest) turns margins into probabilities.
Negative margins flip the prediction to the alternative class, so corrupted
blobs lose area coherently and high corruption raises every dispersion
metric; that correlation is what makes segment quality learnable from the
metrics, mirroring real segmentation networks.

Ghost blobs appear in the prediction field but not in the ground truth;
they are the controlled source of false-positive segments.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import BlobOutOfBounds
from .segmentation import SegmentFrame
from .tensor_io import LabelMap, ProbTensor
from .tracking import TrackedSequence


@dataclass(frozen=True)
class BlobSpec:
    shape: str  # "disk" or "rectangle"
    size: float  # radius / half-extent in pixels
    class_label: int
    start: tuple[float, float]  # (row, col) center at frame 0
    velocity: tuple[float, float] = (0.0, 0.0)
    waypoints: tuple[tuple[int, float, float], ...] | None = None  # (frame, row, col)
    visible: tuple[tuple[int, int], ...] | None = None  # inclusive windows; None = always
    corruption: float = 0.0  # rho in [0, 1]
    ghost: bool = False  # drawn in the prediction field only, never in gt


@dataclass(frozen=True)
class NoiseSpec:
    temperature: float = 1.0
    blur_width: float = 0.0  # boundary falloff width; 0 = hard edges
    base_margin: float = 6.0  # clean-pixel logit margin
    spatial_amp: float = 0.0  # smoothed per-pixel margin noise, fraction of base
    spatial_sigma: float = 2.0
    temporal_amp: float = 0.0  # per-blob AR(1) corruption wobble
    temporal_alpha: float = 0.8


@dataclass(frozen=True)
class SceneSpec:
    height: int
    width: int
    num_classes: int
    frames: int
    blobs: tuple[BlobSpec, ...]
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    seed: int = 0


def scene_to_json(spec: SceneSpec, path: str | Path) -> None:
    with open(path, "w") as f:
        json.dump(asdict(spec), f, indent=2, sort_keys=True)


def scene_from_json(path: str | Path) -> SceneSpec:
    with open(path) as f:
        d = json.load(f)
    blobs = tuple(
        BlobSpec(
            shape=b["shape"],
            size=b["size"],
            class_label=b["class_label"],
            start=tuple(b["start"]),
            velocity=tuple(b.get("velocity", (0.0, 0.0))),
            waypoints=tuple(tuple(wp) for wp in b["waypoints"]) if b.get("waypoints") else None,
            visible=tuple(tuple(wi) for wi in b["visible"]) if b.get("visible") else None,
            corruption=b.get("corruption", 0.0),
            ghost=b.get("ghost", False),
        )
        for b in d["blobs"]
    )
    noise = NoiseSpec(**d.get("noise", {}))
    return SceneSpec(
        height=d["height"],
        width=d["width"],
        num_classes=d["num_classes"],
        frames=d["frames"],
        blobs=blobs,
        noise=noise,
        seed=d.get("seed", 0),
    )


def _blob_center(blob: BlobSpec, t: int) -> np.ndarray:
    if blob.waypoints:
        frames = np.array([wp[0] for wp in blob.waypoints], dtype=np.float64)
        rows = np.array([wp[1] for wp in blob.waypoints], dtype=np.float64)
        cols = np.array([wp[2] for wp in blob.waypoints], dtype=np.float64)
        return np.array([np.interp(t, frames, rows), np.interp(t, frames, cols)])
    return np.array(
        [blob.start[0] + t * blob.velocity[0], blob.start[1] + t * blob.velocity[1]]
    )


def _blob_visible(blob: BlobSpec, t: int) -> bool:
    if blob.visible is None:
        return True
    return any(lo <= t <= hi for lo, hi in blob.visible)


def _blob_mask(blob: BlobSpec, center: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    h, w = shape
    rr, cc = np.ogrid[:h, :w]
    if blob.shape == "disk":
        return (rr - center[0]) ** 2 + (cc - center[1]) ** 2 <= blob.size**2
    if blob.shape == "rectangle":
        return (np.abs(rr - center[0]) <= blob.size) & (np.abs(cc - center[1]) <= blob.size)
    raise ValueError(f"unknown blob shape {blob.shape!r}")


def _check_bounds(spec: SceneSpec) -> None:
    for i, blob in enumerate(spec.blobs):
        if not 1 <= blob.class_label < spec.num_classes:
            raise BlobOutOfBounds(
                f"blob {i}: class {blob.class_label} outside [1, {spec.num_classes - 1}]"
            )
        for t in range(spec.frames):
            if not _blob_visible(blob, t):
                continue
            cy, cx = _blob_center(blob, t)
            if (
                cy - blob.size < 0
                or cy + blob.size > spec.height - 1
                or cx - blob.size < 0
                or cx + blob.size > spec.width - 1
            ):
                raise BlobOutOfBounds(f"blob {i} leaves the image in frame {t}")


def generate(spec: SceneSpec) -> tuple[list[ProbTensor], list[LabelMap], list[np.ndarray]]:
    """Render a scene: per-frame softmax tensors, ground truth, true id maps.

    True id maps assign blob index + 1 to every non-ghost blob pixel and 0
    elsewhere; ghosts have no true identity.
    """
    _check_bounds(spec)
    rng = np.random.default_rng(spec.seed)
    h, w, c = spec.height, spec.width, spec.num_classes
    ns = spec.noise

    # static alternative-class offsets, constant over 8x8 blocks
    salt = rng.integers(1, c, size=(h // 8 + 1, w // 8 + 1))
    block_r, block_c = np.ogrid[:h, :w]
    salt_map = salt[block_r // 8, block_c // 8]

    # per-blob AR(1) corruption wobble, pre-drawn for determinism
    n_blobs = len(spec.blobs)
    wobble = np.zeros((n_blobs, spec.frames))
    if ns.temporal_amp > 0 and spec.frames > 0:
        eps = rng.standard_normal((n_blobs, spec.frames))
        wobble[:, 0] = eps[:, 0]
        a = ns.temporal_alpha
        for t in range(1, spec.frames):
            wobble[:, t] = a * wobble[:, t - 1] + np.sqrt(1.0 - a * a) * eps[:, t]

    probs: list[ProbTensor] = []
    gts: list[LabelMap] = []
    truths: list[np.ndarray] = []
    for t in range(spec.frames):
        basis = np.zeros((h, w), dtype=np.int32)  # what the network "wants" to predict
        gt = np.zeros((h, w), dtype=np.int32)
        truth = np.zeros((h, w), dtype=np.int32)
        rho = np.zeros((h, w), dtype=np.float64)
        for i, blob in enumerate(spec.blobs):
            if not _blob_visible(blob, t):
                continue
            mask = _blob_mask(blob, _blob_center(blob, t), (h, w))
            basis[mask] = blob.class_label
            rho_t = float(np.clip(blob.corruption + ns.temporal_amp * wobble[i, t], 0.0, 1.0))
            rho[mask] = rho_t
            if not blob.ghost:
                gt[mask] = blob.class_label
                truth[mask] = i + 1

        if ns.blur_width > 0:
            edge = np.zeros((h, w), dtype=bool)
            edge[:, :-1] |= basis[:, :-1] != basis[:, 1:]
            edge[:, 1:] |= basis[:, :-1] != basis[:, 1:]
            edge[:-1, :] |= basis[:-1, :] != basis[1:, :]
            edge[1:, :] |= basis[:-1, :] != basis[1:, :]
            dist = ndimage.distance_transform_edt(~edge)
            falloff = np.minimum(1.0, (dist + 1.0) / (ns.blur_width + 1.0))
        else:
            falloff = np.ones((h, w))

        margin = ns.base_margin * (1.0 - rho) * falloff
        if ns.spatial_amp > 0:
            noise = ndimage.gaussian_filter(rng.standard_normal((h, w)), ns.spatial_sigma)
            noise /= max(noise.std(), 1e-12)
            # noise grows with corruption so clean blobs stay cleanly ranked
            margin = margin + ns.base_margin * ns.spatial_amp * (0.05 + 0.95 * rho) * noise

        alt = ((basis + salt_map) % c).astype(np.int32)
        logits = np.full((h, w, c), -0.5 * ns.base_margin, dtype=np.float64)
        np.put_along_axis(logits, alt[:, :, None], 0.0, axis=2)
        np.put_along_axis(logits, basis[:, :, None].astype(np.int64), margin[:, :, None], axis=2)
        logits /= ns.temperature
        logits -= logits.max(axis=2, keepdims=True)
        p = np.exp(logits)
        p /= p.sum(axis=2, keepdims=True)

        probs.append(ProbTensor(p.astype(np.float32)))
        gts.append(LabelMap(gt, provenance="real", num_classes=c))
        truths.append(truth)
    return probs, gts, truths


def id_consistency(tracked: TrackedSequence, truths: list[np.ndarray]) -> float:
    """Mean over true objects of the fraction of visible frames carrying
    the object's modal assigned track id."""
    if len(tracked.frames) != len(truths):
        raise ValueError("tracked sequence and truth maps disagree on frame count")
    object_ids = sorted(set(int(v) for tm in truths for v in np.unique(tm) if v != 0))
    if not object_ids:
        return 1.0
    scores = []
    for oid in object_ids:
        assigned: list[int | None] = []
        for sf, tm in zip(tracked.frames, truths):
            mask = tm == oid
            if not mask.any():
                continue
            comp_ids, counts = np.unique(sf.component_map[mask], return_counts=True)
            best = comp_ids[np.lexsort((comp_ids, -counts))][0]
            assigned.append(sf.segment_by_id(int(best)).track_id)
        values, counts = np.unique(
            np.array([a for a in assigned if a is not None], dtype=np.int64), return_counts=True
        )
        if len(values) == 0:
            scores.append(0.0)
            continue
        modal = values[np.lexsort((values, -counts))][0]
        scores.append(sum(1 for a in assigned if a == modal) / len(assigned))
    return float(np.mean(scores))


# ---------------------------------------------------------------------------
# canned scenes used by the test harness and the CLI demo
# ---------------------------------------------------------------------------

def linear_motion_scene(
    frames: int = 20,
    occlusion: tuple[int, int] | None = None,
    seed: int = 7,
) -> SceneSpec:
    """Three linearly moving blobs of distinct classes on a 72x96 grid.

    ``occlusion`` hides the second blob for the given inclusive frame window.
    """
    visible = None
    if occlusion is not None:
        lo, hi = occlusion
        visible = ((0, lo - 1), (hi + 1, frames - 1))
    blobs = (
        BlobSpec("disk", 6.0, 1, start=(14.0, 12.0), velocity=(0.0, 3.5)),
        BlobSpec("rectangle", 5.0, 2, start=(36.0, 80.0), velocity=(0.0, -3.0), visible=visible),
        BlobSpec("disk", 7.0, 3, start=(58.0, 16.0), velocity=(-0.5, 3.2)),
    )
    return SceneSpec(height=72, width=96, num_classes=4, frames=frames, blobs=blobs, seed=seed)


def quality_corpus_specs(
    n_sequences: int = 30,
    frames: int = 12,
    seed: int = 123,
) -> list[SceneSpec]:
    """Randomized corpus with corruption-graded blobs and ghost false positives.

    Designed so segment quality spans [0, 1] and correlates with the
    dispersion metrics while staying partially predictable from geometry,
    which is what the meta-task experiments need.
    """
    master = np.random.default_rng(seed)
    h, w, c = 96, 128, 5
    specs = []
    for s in range(n_sequences):
        rng = np.random.default_rng(master.integers(2**63))
        blobs = []
        for b in range(4):  # real blobs
            size = float(rng.uniform(5.0, 11.0))
            vy, vx = rng.uniform(-1.8, 1.8, size=2)
            cy = _safe_start(rng, h, size, vy, frames)
            cx = _safe_start(rng, w, size, vx, frames)
            blobs.append(
                BlobSpec(
                    shape="disk" if rng.random() < 0.6 else "rectangle",
                    size=size,
                    class_label=int(rng.integers(1, c)),
                    start=(cy, cx),
                    velocity=(float(vy), float(vx)),
                    corruption=float(rng.uniform(0.0, 0.75)),
                )
            )
        for g in range(2):  # ghost blobs: confident but absent from gt
            size = float(rng.uniform(2.5, 4.5))
            vy, vx = rng.uniform(-1.2, 1.2, size=2)
            cy = _safe_start(rng, h, size, vy, frames)
            cx = _safe_start(rng, w, size, vx, frames)
            blobs.append(
                BlobSpec(
                    shape="disk",
                    size=size,
                    class_label=int(rng.integers(1, c)),
                    start=(cy, cx),
                    velocity=(float(vy), float(vx)),
                    corruption=float(rng.uniform(0.25, 0.55)),
                    ghost=True,
                )
            )
        noise = NoiseSpec(
            temperature=1.0,
            blur_width=1.5,
            base_margin=6.0,
            spatial_amp=0.45,
            spatial_sigma=2.5,
            temporal_amp=0.25,
            temporal_alpha=0.85,
        )
        specs.append(
            SceneSpec(
                height=h,
                width=w,
                num_classes=c,
                frames=frames,
                blobs=tuple(blobs),
                noise=noise,
                seed=int(rng.integers(2**31)),
            )
        )
    return specs


def _safe_start(rng: np.random.Generator, extent: int, size: float, v: float, frames: int) -> float:
    lo = size + 1.0 + max(0.0, -v * (frames - 1))
    hi = extent - 2.0 - size - max(0.0, v * (frames - 1))
    if hi <= lo:  # too fast for the box: park it in the middle
        return extent / 2.0
    return float(rng.uniform(lo, hi))
