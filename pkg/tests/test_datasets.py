import gzip
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rdcnn import datasets, network
from rdcnn.errors import ConfigError, FormatError, SizeMismatchError


def write_idx(tmp_path, images, labels, gz=False):
    img = struct.pack(">IIII", 0x803, *images.shape) + images.tobytes()
    lab = struct.pack(">II", 0x801, len(labels)) + bytes(labels)
    suffix = ".gz" if gz else ""
    ip, lp = tmp_path / f"img{suffix}", tmp_path / f"lab{suffix}"
    opener = gzip.open if gz else open
    for path, data in ((ip, img), (lp, lab)):
        with opener(path, "wb") as fh:
            fh.write(data)
    return ip, lp


@pytest.mark.parametrize("gz", [False, True])
def test_idx_two_images(tmp_path, gz):
    imgs = np.arange(2 * 28 * 28, dtype=np.uint32).reshape(2, 28, 28).astype(np.uint8)
    ds = datasets.load_idx(*write_idx(tmp_path, imgs, [3, 7], gz))
    assert ds.images.shape == (2, 1, 28, 28)
    np.testing.assert_array_equal(ds.images[:, 0], imgs)
    assert ds.labels.tolist() == [3, 7]


def test_idx_padding(tmp_path):
    imgs = np.full((1, 28, 28), 9, np.uint8)
    ds = datasets.load_idx(*write_idx(tmp_path, imgs, [1]), pad_to=32)
    assert ds.images.shape == (1, 1, 32, 32)
    assert ds.images[0, 0, 2:30, 2:30].min() == 9
    assert ds.images.sum() == 9 * 28 * 28


def test_idx_bad_magic_and_truncation(tmp_path):
    ip, lp = write_idx(tmp_path, np.zeros((2, 4, 4), np.uint8), [0, 1])
    raw = ip.read_bytes()
    ip.write_bytes(struct.pack(">I", 0x802) + raw[4:])
    with pytest.raises(FormatError) as err:
        datasets.load_idx(ip, lp)
    assert err.value.offset == 0
    ip.write_bytes(raw[:-1])
    with pytest.raises(SizeMismatchError):
        datasets.load_idx(ip, lp)


def test_idx_count_mismatch(tmp_path):
    ip, lp = write_idx(tmp_path, np.zeros((2, 4, 4), np.uint8), [0])
    with pytest.raises(SizeMismatchError):
        datasets.load_idx(ip, lp)


def cifar_record(label_prefix, r, g, b):
    return bytes(label_prefix) + bytes([r]) * 1024 + bytes([g]) * 1024 + bytes([b]) * 1024


def test_cifar10_records(tmp_path):
    root = tmp_path / "cifar-10-batches-bin"
    root.mkdir()
    (root / "test_batch.bin").write_bytes(cifar_record([4], 10, 20, 30) + cifar_record([9], 1, 2, 3))
    ds = datasets.load_cifar(tmp_path, "cifar10", "test")
    assert ds.images.shape == (2, 3, 32, 32)
    assert ds.labels.tolist() == [4, 9]
    assert ds.images[0, :, 5, 5].tolist() == [10, 20, 30]
    assert ds.images[1, :, 31, 0].tolist() == [1, 2, 3]


def test_cifar100_uses_fine_label(tmp_path):
    (tmp_path / "test.bin").write_bytes(cifar_record([3, 77], 0, 0, 0))
    ds = datasets.load_cifar(tmp_path, "cifar100", "test")
    assert ds.labels.tolist() == [77] and ds.class_count == 100


def test_cifar_partial_record(tmp_path):
    (tmp_path / "test_batch.bin").write_bytes(cifar_record([1], 0, 0, 0)[:-5])
    with pytest.raises(SizeMismatchError):
        datasets.load_cifar(tmp_path, "cifar10", "test")


def test_stl10_column_major():
    img = np.arange(3 * 96 * 96, dtype=np.uint32).reshape(3, 96, 96) % 251
    img = img.astype(np.uint8)
    stored = img.transpose(0, 2, 1).tobytes()  # column-major per channel
    images, labels = datasets.decode_stl10(stored, bytes([1]))
    np.testing.assert_array_equal(images[0], img)
    assert labels.tolist() == [0]
    with pytest.raises(SizeMismatchError):
        datasets.decode_stl10(stored[:-1])


def test_stl10_loader(tmp_path):
    root = tmp_path / "stl10_binary"
    root.mkdir()
    (root / "test_X.bin").write_bytes(bytes(2 * 3 * 96 * 96))
    (root / "test_y.bin").write_bytes(bytes([10, 2]))
    ds = datasets.load_stl10(tmp_path, "test")
    assert ds.labels.tolist() == [9, 1]


def test_raw_roundtrip(tmp_path):
    from rdcnn import formats
    imgs = np.random.default_rng(0).integers(0, 256, (4, 1, 5, 5), dtype=np.uint8)
    formats.write_images(imgs, tmp_path / "x.rdim", labels=[0, 2, 1, 2])
    ds = datasets.load("raw", tmp_path / "x.rdim")
    assert ds.class_count == 3
    np.testing.assert_array_equal(ds.images, imgs)


def test_unknown_format():
    with pytest.raises(ConfigError):
        datasets.load("svhn", ".")


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 9), st.integers(1, 9))
def test_hflip_involution(seed, h, w):
    img = np.random.default_rng(seed).integers(0, 256, (2, h, w), dtype=np.uint8)
    np.testing.assert_array_equal(datasets.hflip(datasets.hflip(img)), img)
    np.testing.assert_array_equal(datasets.hflip(img)[:, :, 0], img[:, :, -1])


def test_rotate_identities():
    img = np.random.default_rng(1).integers(0, 256, (1, 9, 9), dtype=np.uint8)
    np.testing.assert_array_equal(datasets.rotate(img, 0), img)
    np.testing.assert_array_equal(datasets.rotate(img, 360), img)
    np.testing.assert_array_equal(datasets.rotate(img, 90)[0], np.rot90(img[0]))
    assert datasets.rotate(img, 37).shape == img.shape


def test_cutout():
    img = np.full((3, 8, 8), 200, np.uint8)
    rng = np.random.default_rng(0)
    assert datasets.cutout(img, 8, rng).max() == 0
    out = datasets.cutout(img, 3, rng)
    assert (out == 0).sum() == 3 * 9
    with pytest.raises(ConfigError):
        datasets.cutout(img, 9, rng)


def test_augment_dataset_shapes_and_determinism():
    imgs = np.random.default_rng(2).integers(0, 256, (3, 1, 10, 10), dtype=np.uint8)
    a, pairing = datasets.augment_dataset(imgs, per_image=4, seed=5)
    b, _ = datasets.augment_dataset(imgs, per_image=4, seed=5)
    assert a.shape == (12, 1, 10, 10) and a.dtype == np.uint8
    assert pairing.tolist() == [0] * 4 + [1] * 4 + [2] * 4
    np.testing.assert_array_equal(a, b)
    c, _ = datasets.augment_dataset(imgs, mode="cutout", per_image=2, seed=5)
    assert c.shape == (6, 1, 10, 10)


@pytest.mark.parametrize("mode,lo,hi", [(network.Normalization.UNIT, 0.0, 1.0),
                                        (network.Normalization.SYMMETRIC, -1.0, 1.0),
                                        (network.Normalization.NONE, 0.0, 255.0)])
def test_normalization_ranges(mode, lo, hi):
    px = np.arange(256, dtype=np.uint8).reshape(1, 1, 16, 16)
    out = network.normalize(px, mode)
    assert out.min() == lo and out.max() == hi
