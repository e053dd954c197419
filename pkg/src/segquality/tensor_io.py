"""Binary I/O for softmax probability tensors and label maps (SQTF files).

SQTF layout, all little-endian:

    offset  size       field
    0       4          magic ``b"SQTF"``
    4       1          version, u8, currently 1
    5       1          dtype, u8: 0 = float32 probability, 1 = int32 label
    6       1          ndim, u8: 3 for probability tensors, 2 for label maps
    7       1          provenance, u8: 0 real, 1 pseudo (meaningful for labels)
    8       4*ndim     dims, u32 each (rows, cols[, classes])
    ...     payload    row-major float32 / int32 values

The format is self-describing and has no third-party dependency; loading
validates every numeric invariant so that downstream code never re-checks.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    BadHeader,
    BadMagic,
    BadVersion,
    DimMismatch,
    InvalidLabel,
    InvalidProbability,
    IoFailure,
    KindMismatch,
)

MAGIC = b"SQTF"
VERSION = 1
DTYPE_PROB = 0
DTYPE_LABEL = 1
IGNORE_LABEL = -1

PROVENANCE_REAL = "real"
PROVENANCE_PSEUDO = "pseudo"
_PROVENANCE_CODES = {PROVENANCE_REAL: 0, PROVENANCE_PSEUDO: 1}
_PROVENANCE_NAMES = {0: PROVENANCE_REAL, 1: PROVENANCE_PSEUDO}

# Upstream networks emit single-precision softmax; exact unit sums are
# unattainable, so row sums are accepted within this tolerance.
PROB_SUM_TOL = 1e-4


@dataclass(frozen=True, eq=False)
class ProbTensor:
    """Per-frame H x W x C softmax field. Immutable after construction."""

    data: np.ndarray  # float32, shape (H, W, C)

    def __post_init__(self):
        a = np.asarray(self.data)
        if a.ndim != 3:
            raise DimMismatch(f"probability tensor must be 3-d, got {a.ndim}-d")
        if a.dtype != np.float32:
            a = a.astype(np.float32)
        h, w, c = a.shape
        if h < 1 or w < 1:
            raise BadHeader(f"degenerate image dims {h}x{w}")
        if c < 2:
            raise BadHeader(f"need at least 2 classes, got {c}")
        if not np.isfinite(a).all() or (a < 0.0).any() or (a > 1.0).any():
            raise InvalidProbability("entries outside [0, 1]")
        sums = a.sum(axis=2, dtype=np.float64)
        off = np.abs(sums - 1.0)
        if off.max() > PROB_SUM_TOL:
            idx = np.unravel_index(int(off.argmax()), off.shape)
            raise InvalidProbability(
                f"pixel {idx} sums to {sums[idx]:.6f} (tolerance {PROB_SUM_TOL})"
            )
        a = a.copy()
        a.setflags(write=False)
        object.__setattr__(self, "data", a)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def num_classes(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True, eq=False)
class LabelMap:
    """Per-pixel int32 class labels; -1 marks pixels without ground truth."""

    data: np.ndarray  # int32, shape (H, W)
    provenance: str = PROVENANCE_REAL
    num_classes: int | None = field(default=None, compare=False)

    def __post_init__(self):
        a = np.asarray(self.data)
        if a.ndim != 2:
            raise DimMismatch(f"label map must be 2-d, got {a.ndim}-d")
        if a.dtype != np.int32:
            a = a.astype(np.int32)
        if a.shape[0] < 1 or a.shape[1] < 1:
            raise BadHeader(f"degenerate image dims {a.shape}")
        if self.provenance not in _PROVENANCE_CODES:
            raise BadHeader(f"unknown provenance {self.provenance!r}")
        if (a < IGNORE_LABEL).any():
            bad = int(a.min())
            raise InvalidLabel(f"label {bad} below ignore value {IGNORE_LABEL}")
        if self.num_classes is not None and (a >= self.num_classes).any():
            bad = int(a.max())
            raise InvalidLabel(f"label {bad} outside [0, {self.num_classes - 1}]")
        a = a.copy()
        a.setflags(write=False)
        object.__setattr__(self, "data", a)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


def load_tensor(
    path: str | Path,
    expected_kind: str,
    num_classes: int | None = None,
) -> ProbTensor | LabelMap:
    """Load and validate an SQTF file.

    ``expected_kind`` is ``"prob"`` or ``"label"``. For label files,
    ``num_classes`` (when given) bounds the admissible label values.
    """
    if expected_kind not in ("prob", "label"):
        raise ValueError(f"expected_kind must be 'prob' or 'label', got {expected_kind!r}")
    try:
        f = open(path, "rb")
    except OSError as e:
        raise IoFailure(f"cannot open {path}: {e}") from e
    with f:
        try:
            raw = f.read()
        except OSError as e:
            raise IoFailure(f"cannot read {path}: {e}") from e

    if len(raw) < 8:
        raise DimMismatch(f"{path}: file shorter than fixed header")
    if raw[:4] != MAGIC:
        raise BadMagic(f"{path}: bad magic {raw[:4]!r}")
    version, dtype, ndim, prov_code = raw[4], raw[5], raw[6], raw[7]
    if version != VERSION:
        raise BadVersion(f"{path}: unsupported version {version}")
    if dtype not in (DTYPE_PROB, DTYPE_LABEL):
        raise BadHeader(f"{path}: unknown dtype code {dtype}")
    if dtype == DTYPE_PROB and ndim != 3:
        raise BadHeader(f"{path}: probability tensors must be 3-d, header says {ndim}")
    if dtype == DTYPE_LABEL and ndim != 2:
        raise BadHeader(f"{path}: label maps must be 2-d, header says {ndim}")
    if prov_code not in _PROVENANCE_NAMES:
        raise BadHeader(f"{path}: unknown provenance code {prov_code}")
    kind = "prob" if dtype == DTYPE_PROB else "label"
    if kind != expected_kind:
        raise KindMismatch(f"{path}: expected {expected_kind} file, found {kind}")

    dim_end = 8 + 4 * ndim
    if len(raw) < dim_end:
        raise DimMismatch(f"{path}: truncated dimension block")
    dims = struct.unpack(f"<{ndim}I", raw[8:dim_end])
    if any(d < 1 for d in dims):
        raise BadHeader(f"{path}: zero-sized dimension in {dims}")

    payload = raw[dim_end:]
    count = int(np.prod([int(d) for d in dims], dtype=object))
    if len(payload) != 4 * count:
        raise DimMismatch(
            f"{path}: header dims {dims} require {4 * count} payload bytes, found {len(payload)}"
        )

    if dtype == DTYPE_PROB:
        data = np.frombuffer(payload, dtype="<f4").reshape(dims).astype(np.float32)
        return ProbTensor(data)
    data = np.frombuffer(payload, dtype="<i4").reshape(dims).astype(np.int32)
    return LabelMap(data, provenance=_PROVENANCE_NAMES[prov_code], num_classes=num_classes)


def store_tensor(obj: ProbTensor | LabelMap, path: str | Path) -> None:
    """Write an SQTF file; a subsequent load reproduces ``obj`` bit-exactly."""
    if isinstance(obj, ProbTensor):
        dtype, prov_code = DTYPE_PROB, 0
        payload = np.ascontiguousarray(obj.data, dtype="<f4")
    elif isinstance(obj, LabelMap):
        dtype, prov_code = DTYPE_LABEL, _PROVENANCE_CODES[obj.provenance]
        payload = np.ascontiguousarray(obj.data, dtype="<i4")
    else:
        raise TypeError(f"cannot store object of type {type(obj).__name__}")
    dims = payload.shape
    header = MAGIC + struct.pack("<BBBB", VERSION, dtype, len(dims), prov_code)
    header += struct.pack(f"<{len(dims)}I", *dims)
    try:
        with open(path, "wb") as f:
            f.write(header)
            f.write(payload.tobytes())
    except OSError as e:
        raise IoFailure(f"cannot write {path}: {e}") from e


def argmax_labels(t: ProbTensor) -> LabelMap:
    """Predicted class per pixel; ties resolve to the smallest class index."""
    # np.argmax returns the first maximal index, which is the tie-break rule.
    pred = np.argmax(t.data, axis=2).astype(np.int32)
    return LabelMap(pred, provenance=PROVENANCE_REAL, num_classes=t.num_classes)
