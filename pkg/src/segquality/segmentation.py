"""Connected components, interior/boundary decomposition, dispersion heatmaps.

Segments are maximal 8-connected regions of equal predicted class. The same
8-neighborhood defines interior pixels, so the two notions stay consistent:
a pixel is interior iff all eight neighbors exist in-image and belong to the
same segment, which makes every image-border pixel a boundary pixel.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import ContainsIgnoreLabel
from .tensor_io import IGNORE_LABEL, LabelMap, ProbTensor

# 3x3 all-ones structuring element = 8-connectivity.
_EIGHT = np.ones((3, 3), dtype=bool)


@dataclass(eq=False)
class Segment:
    """One predicted segment: id, class, pixel sets and geometry.

    ``pixels`` / ``interior`` / ``boundary`` are (n, 2) int arrays of
    (row, col) coordinates in raster order. ``interior`` and ``boundary``
    partition ``pixels``; they are filled by ``split_interior_boundary``.
    """

    id: int
    class_label: int
    pixels: np.ndarray
    interior: np.ndarray | None = None
    boundary: np.ndarray | None = None
    center: tuple[float, float] | None = None
    track_id: int | None = None

    @property
    def size(self) -> int:
        return len(self.pixels)

    @property
    def interior_size(self) -> int:
        return 0 if self.interior is None else len(self.interior)

    @property
    def boundary_size(self) -> int:
        return 0 if self.boundary is None else len(self.boundary)


@dataclass(eq=False)
class SegmentFrame:
    """All segments of one frame plus the per-pixel segment-id map."""

    frame_index: int
    component_map: np.ndarray  # int32 (H, W), ids start at 1
    segments: list[Segment] = field(default_factory=list)

    @property
    def shape(self) -> tuple[int, int]:
        return self.component_map.shape

    def segment_by_id(self, seg_id: int) -> Segment:
        # ids are assigned densely in raster discovery order starting at 1
        return self.segments[seg_id - 1]


@dataclass(frozen=True, eq=False)
class DispersionMaps:
    """Pixel-wise softmax spread: entropy, variation ratio, probability margin."""

    entropy: np.ndarray
    variation_ratio: np.ndarray
    margin: np.ndarray

    def by_name(self, name: str) -> np.ndarray:
        return {"E": self.entropy, "V": self.variation_ratio, "M": self.margin}[name]


def connected_components(labels: LabelMap | np.ndarray, frame_index: int = 0) -> SegmentFrame:
    """Partition a prediction map into maximal 8-connected same-class segments.

    Ids are assigned in raster-scan discovery order starting at 1. Raises
    ``ContainsIgnoreLabel`` for maps holding the ignore value, which only
    ever appears in ground truth.
    """
    lab = labels.data if isinstance(labels, LabelMap) else np.asarray(labels)
    if (lab == IGNORE_LABEL).any():
        raise ContainsIgnoreLabel("prediction map contains ignore labels")

    # Label per class, then merge into one map with globally unique keys.
    combined = np.zeros(lab.shape, dtype=np.int64)
    offset = 0
    for cls in np.unique(lab):
        cls_labels, n = ndimage.label(lab == cls, structure=_EIGHT)
        mask = cls_labels > 0
        combined[mask] = cls_labels[mask] + offset
        offset += n

    # Renumber so that ids follow first appearance in raster order.
    flat = combined.ravel()
    keys, first_pos, inverse = np.unique(flat, return_index=True, return_inverse=True)
    order = np.argsort(first_pos, kind="stable")
    new_id = np.empty(len(keys), dtype=np.int32)
    new_id[order] = np.arange(1, len(keys) + 1, dtype=np.int32)
    component_map = new_id[inverse].reshape(lab.shape)

    # Gather pixel lists per id in raster order.
    raster = np.argsort(component_map.ravel(), kind="stable")
    counts = np.bincount(component_map.ravel())[1:]
    rows, cols = np.unravel_index(raster, lab.shape)
    coords = np.stack([rows, cols], axis=1).astype(np.int32)
    segments = []
    start = 0
    for seg_id, cnt in enumerate(counts, start=1):
        px = coords[start : start + cnt]
        start += cnt
        segments.append(Segment(id=seg_id, class_label=int(lab[px[0, 0], px[0, 1]]), pixels=px))
    return SegmentFrame(frame_index=frame_index, component_map=component_map, segments=segments)


def interior_mask(component_map: np.ndarray) -> np.ndarray:
    """Boolean mask of pixels whose full 8-neighborhood shares their segment id."""
    h, w = component_map.shape
    padded = np.full((h + 2, w + 2), -1, dtype=component_map.dtype)
    padded[1:-1, 1:-1] = component_map
    inner = np.ones((h, w), dtype=bool)
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            if dr == 0 and dc == 0:
                continue
            inner &= padded[1 + dr : 1 + dr + h, 1 + dc : 1 + dc + w] == component_map
    return inner


def split_interior_boundary(sf: SegmentFrame) -> SegmentFrame:
    """Populate each segment's interior/boundary pixel sets in place."""
    inner = interior_mask(sf.component_map)
    for seg in sf.segments:
        is_in = inner[seg.pixels[:, 0], seg.pixels[:, 1]]
        seg.interior = seg.pixels[is_in]
        seg.boundary = seg.pixels[~is_in]
    return sf


def geometric_center(seg: Segment) -> tuple[float, float]:
    """Arithmetic mean of the segment's pixel coordinates, (row, col)."""
    m = seg.pixels.mean(axis=0, dtype=np.float64)
    return (float(m[0]), float(m[1]))


def dispersion_maps(t: ProbTensor) -> DispersionMaps:
    """Entropy, variation ratio and probability margin per pixel, each in [0, 1].

    Entropy is normalized by log(c) with the 0*log(0) := 0 convention;
    the margin adds the second-largest softmax output to the variation ratio.
    """
    p = t.data.astype(np.float64)
    c = t.num_classes

    plogp = np.where(p > 0.0, p * np.log(np.where(p > 0.0, p, 1.0)), 0.0)
    entropy = -plogp.sum(axis=2) / np.log(c)
    # single-precision inputs can push the sum a hair past 1
    np.clip(entropy, 0.0, 1.0, out=entropy)

    part = np.partition(p, c - 2, axis=2)
    largest = part[:, :, -1]
    second = part[:, :, -2]
    variation = 1.0 - largest
    margin = variation + second
    return DispersionMaps(entropy=entropy, variation_ratio=variation, margin=margin)


def segment_frame(labels: LabelMap | np.ndarray, frame_index: int = 0) -> SegmentFrame:
    """Components + interior/boundary split + centers in one call."""
    sf = connected_components(labels, frame_index=frame_index)
    split_interior_boundary(sf)
    for seg in sf.segments:
        seg.center = geometric_center(seg)
    return sf
