import struct

import numpy as np
import pytest

from segquality.errors import (
    BadMagic,
    BadVersion,
    DimMismatch,
    InvalidLabel,
    InvalidProbability,
    IoFailure,
    KindMismatch,
)
from segquality.tensor_io import (
    LabelMap,
    ProbTensor,
    argmax_labels,
    load_tensor,
    store_tensor,
)


def prob_file_bytes(dims, payload, version=1, dtype=0, provenance=0):
    ndim = len(dims)
    head = b"SQTF" + struct.pack("<BBBB", version, dtype, ndim, provenance)
    head += struct.pack(f"<{ndim}I", *dims)
    return head + np.asarray(payload, dtype="<f4").tobytes()


def test_load_uniform_prob(tmp_path):
    p = tmp_path / "t.sqtf"
    p.write_bytes(prob_file_bytes((2, 2, 2), [0.5] * 8))
    t = load_tensor(p, "prob")
    assert isinstance(t, ProbTensor)
    assert (t.height, t.width, t.num_classes) == (2, 2, 2)
    assert np.all(t.data == 0.5)


def test_header_payload_length_mismatch(tmp_path):
    p = tmp_path / "t.sqtf"
    p.write_bytes(prob_file_bytes((3, 3, 2), [0.5] * 16))
    with pytest.raises(DimMismatch):
        load_tensor(p, "prob")


def test_label_out_of_range(tmp_path):
    p = tmp_path / "l.sqtf"
    head = b"SQTF" + struct.pack("<BBBB", 1, 1, 2, 0) + struct.pack("<2I", 2, 2)
    p.write_bytes(head + np.array([0, 1, 7, 2], dtype="<i4").tobytes())
    with pytest.raises(InvalidLabel):
        load_tensor(p, "label", num_classes=5)
    # without a declared class count only the ignore bound applies
    assert load_tensor(p, "label").data[1, 0] == 7


def test_bad_magic_and_version(tmp_path):
    p = tmp_path / "t.sqtf"
    raw = prob_file_bytes((1, 1, 2), [0.4, 0.6])
    p.write_bytes(b"XQTF" + raw[4:])
    with pytest.raises(BadMagic):
        load_tensor(p, "prob")
    p.write_bytes(raw[:4] + b"\x02" + raw[5:])
    with pytest.raises(BadVersion):
        load_tensor(p, "prob")


def test_kind_mismatch(tmp_path):
    p = tmp_path / "t.sqtf"
    p.write_bytes(prob_file_bytes((1, 1, 2), [0.4, 0.6]))
    with pytest.raises(KindMismatch):
        load_tensor(p, "label")


def test_invalid_probability_rowsum(tmp_path):
    p = tmp_path / "t.sqtf"
    p.write_bytes(prob_file_bytes((1, 1, 2), [0.5, 0.6]))
    with pytest.raises(InvalidProbability):
        load_tensor(p, "prob")


def test_roundtrip_small_bit_exact(tmp_path):
    t = ProbTensor(np.array([[[0.3, 0.7]]], dtype=np.float32))
    p1, p2 = tmp_path / "a.sqtf", tmp_path / "b.sqtf"
    store_tensor(t, p1)
    store_tensor(load_tensor(p1, "prob"), p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_roundtrip_random_tensor(tmp_path):
    rng = np.random.default_rng(42)
    raw = rng.random((64, 64, 8)).astype(np.float32)
    raw /= raw.sum(axis=2, keepdims=True)
    t = ProbTensor(raw)
    p = tmp_path / "r.sqtf"
    store_tensor(t, p)
    back = load_tensor(p, "prob")
    assert np.array_equal(back.data, t.data)


def test_roundtrip_label_with_provenance(tmp_path):
    lm = LabelMap(np.array([[0, 1], [-1, 2]], dtype=np.int32), provenance="pseudo")
    p = tmp_path / "l.sqtf"
    store_tensor(lm, p)
    back = load_tensor(p, "label", num_classes=3)
    assert back.provenance == "pseudo"
    assert np.array_equal(back.data, lm.data)
    # byte identity on re-store
    p2 = tmp_path / "l2.sqtf"
    store_tensor(back, p2)
    assert p.read_bytes() == p2.read_bytes()


def test_store_unwritable_path(tmp_path):
    t = ProbTensor(np.array([[[0.5, 0.5]]], dtype=np.float32))
    with pytest.raises(IoFailure):
        store_tensor(t, tmp_path / "missing_dir" / "t.sqtf")


def test_argmax_labels_basic():
    t = ProbTensor(np.array([[[0.1, 0.7, 0.2]]], dtype=np.float32))
    assert argmax_labels(t).data[0, 0] == 1


def test_argmax_tie_breaks_to_smaller_index():
    t = ProbTensor(np.array([[[0.5, 0.5]]], dtype=np.float32))
    assert argmax_labels(t).data[0, 0] == 0


def test_argmax_matches_per_pixel_scan():
    rng = np.random.default_rng(7)
    raw = rng.random((16, 16, 4)).astype(np.float32)
    raw /= raw.sum(axis=2, keepdims=True)
    t = ProbTensor(raw)
    got = argmax_labels(t).data
    for r in range(16):
        for c in range(16):
            vec = t.data[r, c]
            best, best_v = 0, vec[0]
            for y in range(1, 4):
                if vec[y] > best_v:
                    best, best_v = y, vec[y]
            assert got[r, c] == best
    assert (got >= 0).all()


def test_header_byte_flip_fuzz(tmp_path):
    """Inverting any header byte of a valid file must make loading fail."""
    rng = np.random.default_rng(3)
    raw_payload = rng.random((3, 4, 3)).astype(np.float32)
    raw_payload /= raw_payload.sum(axis=2, keepdims=True)
    files = {}
    p = tmp_path / "p.sqtf"
    store_tensor(ProbTensor(raw_payload), p)
    files[("prob", 20)] = p
    l = tmp_path / "l.sqtf"
    store_tensor(LabelMap(np.zeros((3, 4), dtype=np.int32)), l)
    files[("label", 16)] = l
    for (kind, header_len), path in files.items():
        raw = bytearray(path.read_bytes())
        for i in range(header_len):
            broken = bytearray(raw)
            broken[i] ^= 0xFF
            bad = path.with_name(f"bad_{kind}_{i}.sqtf")
            bad.write_bytes(bytes(broken))
            with pytest.raises(Exception) as exc:
                load_tensor(bad, kind)
            assert exc.type.__module__.startswith("segquality")
