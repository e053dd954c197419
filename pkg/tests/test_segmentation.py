import math
from collections import deque

import numpy as np
import pytest

from segquality.errors import ContainsIgnoreLabel
from segquality.segmentation import (
    Segment,
    connected_components,
    dispersion_maps,
    geometric_center,
    segment_frame,
    split_interior_boundary,
)
from segquality.tensor_io import ProbTensor


def flood_fill_partition(lab: np.ndarray) -> np.ndarray:
    """Independent BFS oracle: 8-connected same-class components,
    ids in raster discovery order starting at 1."""
    h, w = lab.shape
    out = np.zeros((h, w), dtype=np.int64)
    next_id = 1
    for r0 in range(h):
        for c0 in range(w):
            if out[r0, c0]:
                continue
            cls = lab[r0, c0]
            out[r0, c0] = next_id
            q = deque([(r0, c0)])
            while q:
                r, c = q.popleft()
                for dr in (-1, 0, 1):
                    for dc in (-1, 0, 1):
                        rr, cc = r + dr, c + dc
                        if 0 <= rr < h and 0 <= cc < w and not out[rr, cc] and lab[rr, cc] == cls:
                            out[rr, cc] = next_id
                            q.append((rr, cc))
            next_id += 1
    return out


def test_single_class_single_segment():
    sf = connected_components(np.zeros((4, 4), dtype=np.int32))
    assert len(sf.segments) == 1
    assert sf.segments[0].size == 16
    assert sf.segments[0].id == 1


def test_diagonal_touch_is_connected():
    lab = np.zeros((3, 3), dtype=np.int32)
    lab[0, 0] = 1
    lab[1, 1] = 1
    sf = connected_components(lab)
    ids = {sf.component_map[0, 0], sf.component_map[1, 1]}
    assert len(ids) == 1


def test_rejects_ignore_label():
    lab = np.zeros((2, 2), dtype=np.int32)
    lab[0, 0] = -1
    with pytest.raises(ContainsIgnoreLabel):
        connected_components(lab)


def test_components_match_flood_fill_oracle():
    rng = np.random.default_rng(11)
    for _ in range(60):
        h, w = rng.integers(1, 33, size=2)
        lab = rng.integers(0, 3, size=(h, w)).astype(np.int32)
        got = connected_components(lab).component_map
        assert np.array_equal(got, flood_fill_partition(lab))


def test_partition_property():
    rng = np.random.default_rng(5)
    lab = rng.integers(0, 4, size=(24, 31)).astype(np.int32)
    sf = connected_components(lab)
    assert sum(s.size for s in sf.segments) == 24 * 31
    covered = np.zeros((24, 31), dtype=bool)
    for s in sf.segments:
        covered[s.pixels[:, 0], s.pixels[:, 1]] = True
    assert covered.all()


def test_interior_boundary_3x3_square():
    lab = np.ones((5, 5), dtype=np.int32)
    lab[1:4, 1:4] = 2
    sf = split_interior_boundary(connected_components(lab))
    square = next(s for s in sf.segments if s.class_label == 2)
    assert square.interior_size == 1
    assert square.boundary_size == 8
    assert tuple(square.interior[0]) == (2, 2)


def test_strip_has_empty_interior():
    lab = np.zeros((6, 8), dtype=np.int32)
    lab[2:4, :] = 1  # 2 x N strip
    sf = split_interior_boundary(connected_components(lab))
    strip = next(s for s in sf.segments if s.class_label == 1)
    assert strip.interior_size == 0
    assert strip.boundary_size == 16


def test_interior_plus_boundary_recount():
    rng = np.random.default_rng(9)
    lab = rng.integers(0, 3, size=(20, 20)).astype(np.int32)
    sf = split_interior_boundary(connected_components(lab))
    comp = sf.component_map
    for seg in sf.segments:
        assert seg.interior_size + seg.boundary_size == seg.size
        for r, c in seg.pixels:
            neighbors_in = all(
                0 <= r + dr < 20 and 0 <= c + dc < 20 and comp[r + dr, c + dc] == seg.id
                for dr in (-1, 0, 1)
                for dc in (-1, 0, 1)
                if (dr, dc) != (0, 0)
            )
            in_interior = bool(
                ((seg.interior[:, 0] == r) & (seg.interior[:, 1] == c)).any()
            )
            assert in_interior == neighbors_in


def test_border_pixels_are_boundary():
    rng = np.random.default_rng(2)
    lab = rng.integers(0, 2, size=(9, 13)).astype(np.int32)
    sf = split_interior_boundary(connected_components(lab))
    for seg in sf.segments:
        if seg.interior_size == 0:
            continue
        border = (
            (seg.interior[:, 0] == 0)
            | (seg.interior[:, 0] == 8)
            | (seg.interior[:, 1] == 0)
            | (seg.interior[:, 1] == 12)
        )
        assert not border.any()


def test_geometric_center_examples():
    sq = Segment(id=1, class_label=0, pixels=np.array([[0, 0], [0, 1], [1, 0], [1, 1]]))
    assert geometric_center(sq) == (0.5, 0.5)
    single = Segment(id=2, class_label=0, pixels=np.array([[7, 3]]))
    assert geometric_center(single) == (7.0, 3.0)
    ell = Segment(id=3, class_label=0, pixels=np.array([[0, 0], [1, 0], [1, 1]]))
    cy, cx = geometric_center(ell)
    assert abs(cy - 2 / 3) < 1e-12 and abs(cx - 1 / 3) < 1e-12


def test_dispersion_uniform_pixel():
    for c in (2, 4, 8, 16):
        t = ProbTensor(np.full((1, 1, c), 1.0 / c, dtype=np.float32))
        m = dispersion_maps(t)
        assert abs(m.entropy[0, 0] - 1.0) < 1e-12
        assert abs(m.margin[0, 0] - 1.0) < 1e-12
        assert abs(m.variation_ratio[0, 0] - (1.0 - 1.0 / c)) < 1e-7


def test_dispersion_one_hot_pixel():
    v = np.zeros((1, 1, 5), dtype=np.float32)
    v[0, 0, 3] = 1.0
    m = dispersion_maps(ProbTensor(v))
    assert m.entropy[0, 0] == 0.0
    assert m.variation_ratio[0, 0] == 0.0
    assert m.margin[0, 0] == 0.0


def test_dispersion_scalar_example():
    t = ProbTensor(np.array([[[0.6, 0.3, 0.1]]], dtype=np.float32))
    m = dispersion_maps(t)
    # independent scalar evaluation
    e = -(0.6 * math.log(0.6) + 0.3 * math.log(0.3) + 0.1 * math.log(0.1)) / math.log(3)
    assert abs(m.variation_ratio[0, 0] - 0.4) < 1e-7
    assert abs(m.margin[0, 0] - 0.7) < 1e-7
    assert abs(m.entropy[0, 0] - e) < 1e-6


def test_dispersion_invariants_random():
    rng = np.random.default_rng(21)
    raw = rng.random((50, 40, 6)).astype(np.float32)
    raw /= raw.sum(axis=2, keepdims=True)
    m = dispersion_maps(ProbTensor(raw))
    for arr in (m.entropy, m.variation_ratio, m.margin):
        assert (arr >= 0.0).all() and (arr <= 1.0).all()
    assert (m.variation_ratio <= m.margin + 1e-15).all()


def test_segment_frame_convenience():
    lab = np.zeros((5, 5), dtype=np.int32)
    lab[1:4, 1:4] = 1
    sf = segment_frame(lab, frame_index=3)
    assert sf.frame_index == 3
    for seg in sf.segments:
        assert seg.center is not None and seg.interior is not None
