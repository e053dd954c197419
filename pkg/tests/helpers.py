"""Shared fixtures-in-spirit: small deterministic inputs for tests."""

import numpy as np

from segquality.tensor_io import ProbTensor


def tensor_for_labels(lab: np.ndarray, num_classes: int, peak=0.97) -> ProbTensor:
    """A confident softmax field whose argmax equals the given label map."""
    h, w = lab.shape
    p = np.full((h, w, num_classes), (1.0 - peak) / (num_classes - 1), dtype=np.float64)
    rr, cc = np.indices(lab.shape)
    p[rr, cc, lab] = peak
    return ProbTensor(p.astype(np.float32))


def blocky_labels(rng, h, w, num_classes, block=6) -> np.ndarray:
    """Random label maps with chunky segments (so interiors are non-empty)."""
    coarse = rng.integers(0, num_classes, size=(h // block + 1, w // block + 1))
    rr, cc = np.indices((h, w))
    return coarse[rr // block, cc // block].astype(np.int32)
