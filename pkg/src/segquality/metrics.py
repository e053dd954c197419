"""Per-segment metric vectors: dispersion means, size ratios, class probabilities.

A record carries 22 scalar features (15 dispersion, 5 size, 2 center) plus
the c mean class probabilities, and optionally the quality target. Segments
with empty interior never yield records; the boundary-relative ratios would
be undefined and such segments are excluded from every dataset.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyInterior, EmptyRegion, IoFailure
from .segmentation import DispersionMaps, Segment, SegmentFrame
from .tensor_io import ProbTensor

DISPERSION_NAMES = ("E", "V", "M")

# Fixed, versioned column order of the metrics CSV (features exclude the
# first four bookkeeping columns and the trailing target).
_BOOKKEEPING = ("frame", "seg_id", "track_id", "class")
_SIZE_CENTER = ("S", "S_in", "S_bd", "S_rel", "S_rel_in", "cy", "cx")


def feature_names(num_classes: int) -> list[str]:
    """The 22 + c feature column names, in CSV order."""
    names = list(_SIZE_CENTER)
    for d in DISPERSION_NAMES:
        names += [d, f"{d}_in", f"{d}_bd", f"{d}_rel", f"{d}_rel_in"]
    names += [f"P_{y}" for y in range(num_classes)]
    return names


def csv_header(num_classes: int) -> list[str]:
    return list(_BOOKKEEPING) + feature_names(num_classes) + ["iou_adj"]


@dataclass(eq=False)
class MetricRecord:
    """Metrics of one (frame, segment); track id and target filled later."""

    frame: int
    seg_id: int
    class_label: int
    S: int
    S_in: int
    S_bd: int
    S_rel: float
    S_rel_in: float
    cy: float
    cx: float
    dispersion: dict[str, dict[str, float]]  # name -> {mean, mean_in, mean_bd, rel, rel_in}
    class_probs: np.ndarray
    track_id: int | None = None
    iou_adj: float | None = None
    iou: float | None = None
    provenance: str | None = None  # set with the target: real or pseudo gt

    @property
    def fp_label(self) -> int | None:
        if self.iou_adj is None:
            return None
        return 1 if self.iou_adj == 0.0 else 0

    def features(self) -> np.ndarray:
        """Feature vector in CSV column order, length 22 + c."""
        vals = [
            float(self.S),
            float(self.S_in),
            float(self.S_bd),
            self.S_rel,
            self.S_rel_in,
            self.cy,
            self.cx,
        ]
        for d in DISPERSION_NAMES:
            m = self.dispersion[d]
            vals += [m["mean"], m["mean_in"], m["mean_bd"], m["rel"], m["rel_in"]]
        return np.concatenate([np.asarray(vals, dtype=np.float64), self.class_probs])


def mean_dispersion(seg: Segment, heatmap: np.ndarray, region: str = "all") -> float:
    """Mean of a pixel-wise map over the segment's pixels, interior or boundary."""
    px = {"all": seg.pixels, "interior": seg.interior, "boundary": seg.boundary}[region]
    if px is None or len(px) == 0:
        raise EmptyRegion(f"segment {seg.id} has no {region} pixels")
    return float(heatmap[px[:, 0], px[:, 1]].mean(dtype=np.float64))


def mean_class_probs(seg: Segment, t: ProbTensor) -> np.ndarray:
    """Mean softmax vector over the segment's pixels, length c, sums to ~1."""
    return t.data[seg.pixels[:, 0], seg.pixels[:, 1]].mean(axis=0, dtype=np.float64)


def build_metric_record(
    seg: Segment, maps: DispersionMaps, t: ProbTensor, frame: int
) -> MetricRecord:
    """Assemble the full metric vector for one segment.

    The segment must have its interior/boundary split and center populated.
    Raises ``EmptyInterior`` for segments with no interior pixel.
    """
    if seg.interior is None or seg.boundary is None or seg.center is None:
        raise ValueError("segment must be split and centered before metrics")
    s, s_in, s_bd = seg.size, seg.interior_size, seg.boundary_size
    if s_in == 0:
        raise EmptyInterior(f"segment {seg.id} in frame {frame} has empty interior")
    s_rel = s / s_bd
    s_rel_in = s_in / s_bd
    disp = {}
    for name in DISPERSION_NAMES:
        hm = maps.by_name(name)
        m = mean_dispersion(seg, hm, "all")
        m_in = mean_dispersion(seg, hm, "interior")
        m_bd = mean_dispersion(seg, hm, "boundary")
        disp[name] = {
            "mean": m,
            "mean_in": m_in,
            "mean_bd": m_bd,
            "rel": m * s_rel,
            "rel_in": m_in * s_rel_in,
        }
    return MetricRecord(
        frame=frame,
        seg_id=seg.id,
        class_label=seg.class_label,
        S=s,
        S_in=s_in,
        S_bd=s_bd,
        S_rel=s_rel,
        S_rel_in=s_rel_in,
        cy=seg.center[0],
        cx=seg.center[1],
        dispersion=disp,
        class_probs=mean_class_probs(seg, t),
        track_id=seg.track_id,
    )


def frame_metric_records(
    sf: SegmentFrame, maps: DispersionMaps, t: ProbTensor
) -> list[MetricRecord]:
    """Records for every segment of the frame that has a non-empty interior."""
    out = []
    for seg in sf.segments:
        if seg.interior_size == 0:
            continue
        out.append(build_metric_record(seg, maps, t, frame=sf.frame_index))
    return out


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_metrics_csv(records: list[MetricRecord], path: str | Path, num_classes: int) -> None:
    """Write the fixed-order metrics CSV; unknown targets become empty fields."""
    try:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(csv_header(num_classes))
            for r in records:
                row = [r.frame, r.seg_id, "" if r.track_id is None else r.track_id, r.class_label]
                row += [_fmt(v) for v in r.features()]
                row.append(_fmt(r.iou_adj))
                w.writerow(row)
    except OSError as e:
        raise IoFailure(f"cannot write {path}: {e}") from e


def read_metrics_csv(path: str | Path) -> tuple[list[MetricRecord], int]:
    """Inverse of ``write_metrics_csv``; returns (records, num_classes)."""
    try:
        with open(path, newline="") as f:
            rows = list(csv.reader(f))
    except OSError as e:
        raise IoFailure(f"cannot read {path}: {e}") from e
    header = rows[0]
    num_classes = sum(1 for h in header if h.startswith("P_"))
    if header != csv_header(num_classes):
        raise ValueError(f"{path}: unexpected metrics CSV header")
    records = []
    for row in rows[1:]:
        vals = dict(zip(header, row))
        disp = {}
        for d in DISPERSION_NAMES:
            disp[d] = {
                "mean": float(vals[d]),
                "mean_in": float(vals[f"{d}_in"]),
                "mean_bd": float(vals[f"{d}_bd"]),
                "rel": float(vals[f"{d}_rel"]),
                "rel_in": float(vals[f"{d}_rel_in"]),
            }
        records.append(
            MetricRecord(
                frame=int(vals["frame"]),
                seg_id=int(vals["seg_id"]),
                class_label=int(vals["class"]),
                S=int(float(vals["S"])),
                S_in=int(float(vals["S_in"])),
                S_bd=int(float(vals["S_bd"])),
                S_rel=float(vals["S_rel"]),
                S_rel_in=float(vals["S_rel_in"]),
                cy=float(vals["cy"]),
                cx=float(vals["cx"]),
                dispersion=disp,
                class_probs=np.array(
                    [float(vals[f"P_{y}"]) for y in range(num_classes)], dtype=np.float64
                ),
                track_id=None if vals["track_id"] == "" else int(vals["track_id"]),
                iou_adj=None if vals["iou_adj"] == "" else float(vals["iou_adj"]),
            )
        )
    return records, num_classes
