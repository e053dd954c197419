"""Quality overlays: red-to-green segment fills written as binary PPM images.

Each segment is filled with a linear red(0)-to-green(1) ramp of its quality
value; segments without a value (no ground truth) are white, and segment
boundary pixels are drawn black to separate neighbors. Rendering is a pure
function of its inputs, so identical inputs give identical bytes.
"""

from __future__ import annotations

import colorsys
from pathlib import Path

import numpy as np

from .errors import IoFailure, MissingValue
from .segmentation import SegmentFrame

WHITE = (255, 255, 255)


def quality_color(value: float) -> tuple[int, int, int]:
    """Linear red -> green ramp; 0.5 maps to (128, 128, 0)."""
    v = min(max(float(value), 0.0), 1.0)
    return (int(np.rint(255.0 * (1.0 - v))), int(np.rint(255.0 * v)), 0)


def render_quality(
    sf: SegmentFrame, values: dict[int, float | None]
) -> np.ndarray:
    """RGB overlay of per-segment quality; ``None`` marks unknown (white)."""
    h, w = sf.shape
    img = np.zeros((h, w, 3), dtype=np.uint8)
    for seg in sf.segments:
        if seg.id not in values:
            raise MissingValue(f"segment {seg.id} has neither a value nor an unknown flag")
        val = values[seg.id]
        color = WHITE if val is None else quality_color(val)
        img[seg.pixels[:, 0], seg.pixels[:, 1]] = color
    for seg in sf.segments:
        bd = seg.boundary if seg.boundary is not None else seg.pixels
        img[bd[:, 0], bd[:, 1]] = (0, 0, 0)
    return img


def class_color(label: int) -> tuple[int, int, int]:
    """Stable, well-separated class colors (golden-angle hue walk)."""
    if label == 0:
        return (40, 40, 40)
    h = (label * 0.61803398875) % 1.0
    r, g, b = colorsys.hsv_to_rgb(h, 0.65, 0.95)
    return (int(r * 255), int(g * 255), int(b * 255))


def render_classes(sf: SegmentFrame) -> np.ndarray:
    """Class-colored view of the prediction with black segment boundaries."""
    h, w = sf.shape
    img = np.zeros((h, w, 3), dtype=np.uint8)
    for seg in sf.segments:
        img[seg.pixels[:, 0], seg.pixels[:, 1]] = class_color(seg.class_label)
    for seg in sf.segments:
        bd = seg.boundary if seg.boundary is not None else seg.pixels
        img[bd[:, 0], bd[:, 1]] = (0, 0, 0)
    return img


def hstack_panels(panels: list[np.ndarray], gap: int = 2) -> np.ndarray:
    """Side-by-side panels separated by thin white gaps."""
    h = panels[0].shape[0]
    sep = np.full((h, gap, 3), 255, dtype=np.uint8)
    parts = []
    for i, p in enumerate(panels):
        if i:
            parts.append(sep)
        parts.append(p)
    return np.concatenate(parts, axis=1)


def write_ppm(img: np.ndarray, path: str | Path) -> None:
    """Binary PPM (P6, maxval 255), bit-exact for given pixel data."""
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3 or img.shape[0] < 1 or img.shape[1] < 1:
        raise ValueError(f"need a (H, W, 3) image with H, W >= 1, got {img.shape}")
    if img.dtype != np.uint8:
        raise ValueError("image must be uint8")
    h, w = img.shape[:2]
    try:
        with open(path, "wb") as f:
            f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
            f.write(np.ascontiguousarray(img).tobytes())
    except OSError as e:
        raise IoFailure(f"cannot write {path}: {e}") from e
