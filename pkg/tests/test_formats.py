import os
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rdcnn import formats
from rdcnn.errors import (CorruptHeaderError, ShapeError, SizeMismatchError,
                          UnsupportedVersionError)
from rdcnn.network import FeatureMatrix
from rdcnn.svm import SvmModel


def roundtrip(tmp_path, matrix):
    p = tmp_path / "f.rdcf"
    formats.write_features(matrix, p)
    return formats.read_features(p), p


def test_empty_matrix_is_header_only(tmp_path):
    back, p = roundtrip(tmp_path, FeatureMatrix(np.zeros((0, 0), np.float32)))
    assert os.path.getsize(p) == 32
    assert back.values.shape == (0, 0) and back.labels is None


def test_2x3_sizes(tmp_path):
    vals = np.arange(6, dtype=np.float32).reshape(2, 3)
    _, p = roundtrip(tmp_path, FeatureMatrix(vals))
    assert os.path.getsize(p) == 56
    back, p = roundtrip(tmp_path, FeatureMatrix(vals, np.array([0, 1])))
    assert os.path.getsize(p) == 64
    np.testing.assert_array_equal(back.values, vals)
    np.testing.assert_array_equal(back.labels, [0, 1])


def test_header_layout(tmp_path):
    _, p = roundtrip(tmp_path, FeatureMatrix(np.ones((2, 3), np.float32), np.array([4, 5])))
    raw = p.read_bytes()
    assert raw[:4] == b"RDCF"
    assert struct.unpack_from("<IQQBB", raw, 4) == (1, 2, 3, 1, 1)
    assert raw[26:32] == bytes(6)
    assert struct.unpack_from("<2i", raw, 32 + 24) == (4, 5)


@pytest.mark.parametrize("n,m", [(0, 5), (1, 1), (1, 7), (9, 1)])
def test_small_shapes(tmp_path, n, m):
    vals = np.random.default_rng(n * 10 + m).uniform(-1, 1, (n, m)).astype(np.float32)
    back, _ = roundtrip(tmp_path, FeatureMatrix(vals, np.arange(n)))
    assert back.values.shape == (n, m)
    np.testing.assert_array_equal(back.values, vals)


def test_random_1000x64_bit_exact(tmp_path):
    rs = np.random.default_rng(0)
    vals = rs.uniform(-1, 1, (1000, 64)).astype(np.float32)
    back, _ = roundtrip(tmp_path, FeatureMatrix(vals, rs.integers(0, 10, 1000)))
    assert back.values.tobytes() == vals.tobytes()


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 12), st.integers(1, 12), st.booleans(), st.integers(0, 2**32 - 1))
def test_roundtrip_property(tmp_path_factory, n, m, labelled, seed):
    rs = np.random.default_rng(seed)
    vals = rs.normal(size=(n, m)).astype(np.float32)
    labels = rs.integers(-5, 5, n) if labelled else None
    p = tmp_path_factory.mktemp("rt") / "x.rdcf"
    formats.write_features(FeatureMatrix(vals, labels), p)
    back = formats.read_features(p)
    assert back.values.tobytes() == vals.tobytes()
    assert (back.labels is None) == (labels is None)
    if labels is not None:
        np.testing.assert_array_equal(back.labels, labels)


def test_truncated_file(tmp_path):
    _, p = roundtrip(tmp_path, FeatureMatrix(np.ones((2, 3), np.float32)))
    p.write_bytes(p.read_bytes()[:-1])
    with pytest.raises(SizeMismatchError) as err:
        formats.read_features(p)
    assert err.value.path == p


def test_trailing_bytes(tmp_path):
    _, p = roundtrip(tmp_path, FeatureMatrix(np.ones((2, 3), np.float32)))
    p.write_bytes(p.read_bytes() + b"\0")
    with pytest.raises(SizeMismatchError):
        formats.read_features(p)


def test_bad_magic_and_version(tmp_path):
    _, p = roundtrip(tmp_path, FeatureMatrix(np.ones((1, 1), np.float32)))
    raw = bytearray(p.read_bytes())
    bad = tmp_path / "bad.rdcf"
    bad.write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(CorruptHeaderError) as err:
        formats.read_features(bad)
    assert err.value.offset == 0
    raw[4:8] = struct.pack("<I", 2)
    bad.write_bytes(bytes(raw))
    with pytest.raises(UnsupportedVersionError):
        formats.read_features(bad)
    bad.write_bytes(b"RDCF")
    with pytest.raises(CorruptHeaderError):
        formats.read_features(bad)


def test_streaming_writer_matches_direct(tmp_path):
    rs = np.random.default_rng(3)
    vals = rs.uniform(-1, 1, (10, 4)).astype(np.float32)
    labels = np.arange(10)
    w = formats.FeatureFileWriter(tmp_path / "s.rdcf", 10, 4, labels)
    w.values[:5] = vals[:5]
    w.values[5:] = vals[5:]
    w.close()
    formats.write_features(FeatureMatrix(vals, labels), tmp_path / "d.rdcf")
    assert (tmp_path / "s.rdcf").read_bytes() == (tmp_path / "d.rdcf").read_bytes()


def model(n_classes=3, n_features=4, seed=0):
    rs = np.random.default_rng(seed)
    return SvmModel(np.arange(n_classes) * 2, rs.normal(size=(n_classes, n_features + 1)), 1.0)


def test_model_roundtrip(tmp_path):
    m = model()
    p = tmp_path / "m.rdsm"
    formats.write_model(m, p)
    back = formats.read_model(p)
    assert back.weights.tobytes() == m.weights.tobytes()
    np.testing.assert_array_equal(back.classes, m.classes)
    assert back.bias == 1.0
    assert os.path.getsize(p) == 32 + 8 + 3 * 4 + 3 * 5 * 8


def test_model_zero_classes_rejected(tmp_path):
    with pytest.raises(ShapeError):
        formats.write_model(SvmModel(np.zeros(0, np.int64), np.zeros((0, 5)), 1.0), tmp_path / "z")
    p = tmp_path / "z.rdsm"
    p.write_bytes(formats.MODEL_HEADER.pack(b"RDSM", 1, 0, 4, 2) + struct.pack("<d", 1.0))
    with pytest.raises(CorruptHeaderError):
        formats.read_model(p)


def test_model_width_mismatch_detected(tmp_path):
    from rdcnn.svm import svm_discriminants
    m = model(n_features=4)
    p = tmp_path / "m.rdsm"
    formats.write_model(m, p)
    with pytest.raises(ShapeError):
        svm_discriminants(formats.read_model(p), np.zeros((2, 5), np.float32))


def test_model_truncated(tmp_path):
    p = tmp_path / "m.rdsm"
    formats.write_model(model(), p)
    p.write_bytes(p.read_bytes()[:-8])
    with pytest.raises(SizeMismatchError):
        formats.read_model(p)


def test_images_roundtrip(tmp_path):
    rs = np.random.default_rng(1)
    imgs = rs.integers(0, 256, (5, 3, 7, 6), dtype=np.uint8)
    p = tmp_path / "i.rdim"
    formats.write_images(imgs, p, labels=[0, 1, 2, 3, 4])
    back, labels = formats.read_images(p)
    np.testing.assert_array_equal(back, imgs)
    np.testing.assert_array_equal(labels, np.arange(5))
    assert os.path.getsize(p) == 29 + imgs.size + 20
    formats.write_images(imgs, p)
    assert formats.read_images(p)[1] is None


def test_images_reject_out_of_range(tmp_path):
    from rdcnn.errors import FormatError
    with pytest.raises(FormatError):
        formats.write_images(np.full((1, 1, 2, 2), 300), tmp_path / "x")
