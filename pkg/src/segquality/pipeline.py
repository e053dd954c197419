"""End-to-end glue: tensors -> segments -> tracking -> metrics -> targets.

Frame-level work (argmax, components, dispersion, metric records) is pure
and can fan out over a thread pool; tracking itself is a sequential state
machine over frames. Results are collected in frame order, so outputs do
not depend on the worker count.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .errors import DimMismatch
from .metrics import MetricRecord, frame_metric_records
from .segmentation import DispersionMaps, SegmentFrame, dispersion_maps, segment_frame
from .targets import attach_targets
from .tensor_io import LabelMap, ProbTensor, argmax_labels, load_tensor
from .tracking import TrackedSequence, TrackerConfig, track_sequence

THREADS_ENV = "SEGQUALITY_THREADS"


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def parallel_map(fn: Callable, items: Sequence, threads: int) -> list:
    """Order-preserving map, threaded when ``threads`` > 1."""
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def process_sequence(
    tensors: Sequence[ProbTensor],
    tracker_cfg: TrackerConfig | None = None,
    threads: int = 1,
) -> tuple[TrackedSequence, list[MetricRecord], list[DispersionMaps]]:
    """Segment, track and measure one tensor sequence.

    Returns the tracked sequence, all metric records (non-empty-interior
    segments only, with track ids resolved) and the per-frame dispersion maps.
    """
    shapes = {(t.height, t.width, t.num_classes) for t in tensors}
    if len(shapes) > 1:
        raise DimMismatch(f"tensors disagree on shape: {sorted(shapes)}")

    def prep(item: tuple[int, ProbTensor]) -> tuple[SegmentFrame, DispersionMaps]:
        idx, tensor = item
        sf = segment_frame(argmax_labels(tensor), frame_index=idx)
        return sf, dispersion_maps(tensor)

    prepared = parallel_map(prep, list(enumerate(tensors)), threads)
    frames = [sf for sf, _ in prepared]
    maps = [m for _, m in prepared]
    tracked = track_sequence(frames, tracker_cfg)

    def measure(item: tuple[SegmentFrame, DispersionMaps, ProbTensor]) -> list[MetricRecord]:
        sf, m, tensor = item
        return frame_metric_records(sf, m, tensor)

    per_frame = parallel_map(
        measure, [(sf, m, t) for sf, m, t in zip(frames, maps, tensors)], threads
    )
    records = [r for frame_records in per_frame for r in frame_records]
    return tracked, records, maps


def label_sequence(
    tracked: TrackedSequence,
    records: list[MetricRecord],
    gts: dict[int, LabelMap],
) -> None:
    """Attach iou_adj targets in place for frames that have ground truth."""
    attach_targets(records, tracked.frames, gts)


def load_tensor_dir(path: str | Path) -> list[ProbTensor]:
    """All .sqtf probability tensors of a directory, sorted by file name."""
    files = sorted(Path(path).glob("*.sqtf"))
    if not files:
        raise FileNotFoundError(f"no .sqtf files in {path}")
    return [load_tensor(p, "prob") for p in files]


def load_gt_dir(path: str | Path, tensor_dir: str | Path, num_classes: int) -> dict[int, LabelMap]:
    """Ground-truth maps keyed by frame index, matched to tensors by file name.

    Missing files are allowed (sparse labeling); their frames stay unlabeled.
    """
    tensor_files = sorted(Path(tensor_dir).glob("*.sqtf"))
    gts = {}
    for idx, tf in enumerate(tensor_files):
        gp = Path(path) / tf.name
        if gp.exists():
            gts[idx] = load_tensor(gp, "label", num_classes=num_classes)
    return gts
