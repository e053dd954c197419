"""Segment-wise quality targets against real or pseudo ground truth.

The adjusted IoU removes from the union those ground-truth pixels that other
same-class predicted segments already claim, so an object fragmented across
several predictions no longer penalizes each fragment for its siblings'
area. Pixels without ground truth (label -1) are transparent: they never
enter intersections or unions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DimMismatch
from .metrics import MetricRecord
from .segmentation import Segment, SegmentFrame
from .tensor_io import IGNORE_LABEL, LabelMap

_EIGHT = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class TargetRecord:
    frame: int
    seg_id: int
    iou: float
    iou_adj: float

    @property
    def fp_label(self) -> int:
        return 1 if self.iou_adj == 0.0 else 0


class _GtComponents:
    """Per-class 8-connected components of one ground-truth map."""

    def __init__(self, gt: LabelMap):
        self.shape = gt.data.shape
        self.gt_flat = gt.data.ravel()
        comp = np.zeros(self.shape, dtype=np.int64)
        offset = 0
        for cls in np.unique(gt.data):
            if cls == IGNORE_LABEL:
                continue
            lab, n = ndimage.label(gt.data == cls, structure=_EIGHT)
            mask = lab > 0
            comp[mask] = lab[mask] + offset
            offset += n
        self.comp_flat = comp.ravel()
        order = np.argsort(self.comp_flat, kind="stable")
        counts = np.bincount(self.comp_flat)
        self.sizes = counts
        bounds = np.concatenate([[0], np.cumsum(counts)])
        self._order = order
        self._bounds = bounds

    def comp_pixels(self, comp_id: int) -> np.ndarray:
        """Sorted flat pixel indices of one component."""
        lo, hi = self._bounds[comp_id], self._bounds[comp_id + 1]
        return np.sort(self._order[lo:hi])


def _seg_flat(seg: Segment, shape: tuple[int, int]) -> np.ndarray:
    if seg.pixels[:, 0].max() >= shape[0] or seg.pixels[:, 1].max() >= shape[1]:
        raise DimMismatch("segment pixels fall outside the ground-truth grid")
    return np.sort(seg.pixels[:, 0].astype(np.int64) * shape[1] + seg.pixels[:, 1])


def _counts(
    seg: Segment, comps: _GtComponents, others_flat: np.ndarray | None
) -> tuple[int, int, int]:
    """(intersection, plain union, adjusted union) pixel counts for one segment."""
    k_flat = _seg_flat(seg, comps.shape)
    y = seg.class_label
    gt_at_k = comps.gt_flat[k_flat]
    inter = int((gt_at_k == y).sum())
    hit = np.unique(comps.comp_flat[k_flat[gt_at_k == y]])
    q_size = int(comps.sizes[hit].sum()) if len(hit) else 0
    k_valid = int((gt_at_k != IGNORE_LABEL).sum())
    union_plain = k_valid + q_size - inter
    if inter == 0 or others_flat is None or len(others_flat) == 0:
        return inter, union_plain, union_plain
    q_pixels = np.concatenate([comps.comp_pixels(c) for c in hit])
    outside_k = q_pixels[~np.isin(q_pixels, k_flat, assume_unique=False)]
    claimed = int(np.isin(outside_k, others_flat).sum())
    return inter, union_plain, union_plain - claimed


def iou(seg: Segment, gt: LabelMap) -> float:
    """Plain intersection over union against same-class gt components hit by ``seg``."""
    comps = _GtComponents(gt)
    inter, union, _ = _counts(seg, comps, None)
    return inter / union if union > 0 else 0.0


def iou_adj(seg: Segment, gt: LabelMap, others: list[Segment]) -> float:
    """Adjusted IoU: gt pixels claimed by sibling predictions leave the union."""
    comps = _GtComponents(gt)
    same = [o for o in others if o.class_label == seg.class_label and o is not seg]
    others_flat = (
        np.unique(np.concatenate([_seg_flat(o, comps.shape) for o in same]))
        if same
        else np.empty(0, dtype=np.int64)
    )
    inter, _, union_adj = _counts(seg, comps, others_flat)
    return inter / union_adj if union_adj > 0 else 0.0


def frame_targets(sf: SegmentFrame, gt: LabelMap) -> dict[int, TargetRecord]:
    """Both IoU variants for every segment of a frame, sharing one gt pass.

    Sibling claims come straight off the component map: a ground-truth pixel
    outside ``seg`` counts as claimed iff the prediction there has the same
    class but a different component id.
    """
    if gt.data.shape != sf.shape:
        raise DimMismatch(f"gt shape {gt.data.shape} does not match frame {sf.shape}")
    comps = _GtComponents(gt)
    comp_map_flat = sf.component_map.ravel()
    class_of_comp = np.zeros(len(sf.segments) + 1, dtype=np.int64)
    for seg in sf.segments:
        class_of_comp[seg.id] = seg.class_label
    pred_flat = class_of_comp[comp_map_flat]
    out = {}
    for seg in sf.segments:
        k_flat = _seg_flat(seg, comps.shape)
        y = seg.class_label
        gt_at_k = comps.gt_flat[k_flat]
        inter = int((gt_at_k == y).sum())
        k_valid = int((gt_at_k != IGNORE_LABEL).sum())
        hit = np.unique(comps.comp_flat[k_flat[gt_at_k == y]])
        q_size = int(comps.sizes[hit].sum()) if len(hit) else 0
        union = k_valid + q_size - inter
        if inter > 0:
            q_pixels = np.concatenate([comps.comp_pixels(c) for c in hit])
            claimed = int(
                ((pred_flat[q_pixels] == y) & (comp_map_flat[q_pixels] != seg.id)).sum()
            )
        else:
            claimed = 0
        union_adj = union - claimed
        out[seg.id] = TargetRecord(
            frame=sf.frame_index,
            seg_id=seg.id,
            iou=inter / union if union > 0 else 0.0,
            iou_adj=inter / union_adj if union_adj > 0 else 0.0,
        )
    return out


def attach_targets(
    records: list[MetricRecord],
    frames: list[SegmentFrame],
    gts: dict[int, LabelMap],
) -> list[TargetRecord]:
    """Fill ``iou_adj`` (and provenance) on records whose frame has ground truth.

    Frames absent from ``gts`` leave their records unlabeled; such rows are
    excluded from every supervised split downstream.
    """
    frame_by_index = {sf.frame_index: sf for sf in frames}
    cache: dict[int, dict[int, TargetRecord]] = {}
    out: list[TargetRecord] = []
    for rec in records:
        gt = gts.get(rec.frame)
        if gt is None:
            continue
        if rec.frame not in cache:
            cache[rec.frame] = frame_targets(frame_by_index[rec.frame], gt)
            out.extend(cache[rec.frame].values())
        tr = cache[rec.frame][rec.seg_id]
        rec.iou = tr.iou
        rec.iou_adj = tr.iou_adj
        rec.provenance = gt.provenance
    return out
