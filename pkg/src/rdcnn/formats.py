"""Binary file formats. All integers little-endian, fixed offsets, no padding.

RDCF (feature matrix), 32-byte header::

    0  magic      4s   b"RDCF"
    4  version    u32  1
    8  n_samples  u64
    16 n_features u64
    24 dtype      u8   1 = binary32
    25 has_labels u8   0 / 1
    26 reserved   6x   zero
    then n_samples * n_features f32 (row-major), then n_samples i32 labels if has_labels

RDSM (SVM model), 32-byte header::

    0  magic      4s   b"RDSM"
    4  version    u32  1
    8  n_classes  u64
    16 n_features u64  (weights per class = n_features + 1)
    24 dtype      u8   2 = binary64
    25 reserved   7x   zero
    then bias f64, n_classes i32 class labels, n_classes * (n_features + 1) f64 weights

RDIM (raw image dataset), 29-byte header::

    0  magic      4s   b"RDIM"
    4  version    u32  1
    8  count      u64
    16 channels   u32
    20 height     u32
    24 width      u32
    28 has_labels u8
    then count * channels * height * width u8 pixels (per image, channel-planar,
    row-major), then count i32 labels if has_labels
"""

import os
import struct

import numpy as np

from .errors import (
    CorruptHeaderError,
    FormatError,
    ShapeError,
    SizeMismatchError,
    UnsupportedVersionError,
)
from .network import FeatureMatrix
from .svm import SvmModel

FEATURE_HEADER = struct.Struct("<4sIQQBB6x")
MODEL_HEADER = struct.Struct("<4sIQQB7x")
IMAGE_HEADER = struct.Struct("<4sIQIIIB")
VERSION = 1
DTYPE_F32 = 1
DTYPE_F64 = 2

assert FEATURE_HEADER.size == 32 and MODEL_HEADER.size == 32 and IMAGE_HEADER.size == 29


def _write(path, chunks):
    try:
        with open(path, "wb") as fh:
            for chunk in chunks:
                fh.write(chunk)
            fh.flush()
            os.fsync(fh.fileno())
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write {path}: {exc.strerror}") from exc


def _read_header(fh, path, header, magic):
    raw = fh.read(header.size)
    if len(raw) < header.size:
        raise CorruptHeaderError(f"file shorter than the {header.size}-byte header", path=path,
                                 offset=len(raw))
    fields = header.unpack(raw)
    if fields[0] != magic:
        raise CorruptHeaderError(f"bad magic {fields[0]!r}, expected {magic!r}", path=path, offset=0)
    if fields[1] != VERSION:
        raise UnsupportedVersionError(f"unsupported version {fields[1]}", path=path, offset=4)
    return fields


def _check_size(path, expected):
    actual = os.path.getsize(path)
    if actual != expected:
        raise SizeMismatchError(f"file is {actual} bytes, header implies {expected}", path=path,
                                offset=min(actual, expected))


# -- features -----------------------------------------------------------------

def feature_header(n_samples, n_features, has_labels):
    return FEATURE_HEADER.pack(b"RDCF", VERSION, n_samples, n_features, DTYPE_F32, int(has_labels))


def write_features(matrix, path):
    values = np.ascontiguousarray(matrix.values, dtype="<f4")
    n, m = values.shape
    chunks = [feature_header(n, m, matrix.labels is not None), values.tobytes()]
    if matrix.labels is not None:
        chunks.append(np.ascontiguousarray(matrix.labels, dtype="<i4").tobytes())
    _write(path, chunks)


def read_features(path):
    with open(path, "rb") as fh:
        _, _, n, m, dtype, has_labels = _read_header(fh, path, FEATURE_HEADER, b"RDCF")
        if dtype != DTYPE_F32:
            raise UnsupportedVersionError(f"unsupported dtype code {dtype}", path=path, offset=24)
        if has_labels not in (0, 1):
            raise CorruptHeaderError(f"has_labels byte is {has_labels}", path=path, offset=25)
        _check_size(path, FEATURE_HEADER.size + 4 * n * m + (4 * n if has_labels else 0))
        values = np.fromfile(fh, dtype="<f4", count=n * m).reshape(n, m)
        labels = np.fromfile(fh, dtype="<i4", count=n).astype(np.int64) if has_labels else None
    return FeatureMatrix(values.astype(np.float32), labels)


class FeatureFileWriter:
    """Preallocated RDCF file whose value block is filled through a memmap.

    Used to stream large extractions to disk in tiles instead of holding the
    whole matrix in memory.
    """

    def __init__(self, path, n_samples, n_features, labels=None):
        self.path = path
        self.labels = labels
        self.n_features = n_features
        size = FEATURE_HEADER.size + 4 * n_samples * n_features + (4 * n_samples if labels is not None else 0)
        with open(path, "wb") as fh:
            fh.write(feature_header(n_samples, n_features, labels is not None))
            fh.truncate(size)
        if n_samples * n_features == 0:
            self.values = np.empty((n_samples, n_features), dtype="<f4")
        else:
            self.values = np.memmap(path, dtype="<f4", mode="r+", offset=FEATURE_HEADER.size,
                                    shape=(n_samples, n_features))

    def close(self):
        if isinstance(self.values, np.memmap):
            self.values.flush()
        del self.values
        with open(self.path, "r+b") as fh:
            if self.labels is not None:
                n = len(self.labels)
                fh.seek(FEATURE_HEADER.size + 4 * n * self.n_features)
                fh.write(np.ascontiguousarray(self.labels, dtype="<i4").tobytes())
            fh.flush()
            os.fsync(fh.fileno())


# -- models -------------------------------------------------------------------

def write_model(model, path):
    n_classes = model.classes.size
    if n_classes == 0:
        raise ShapeError("refusing to write a model with zero classes", dimension="classes")
    _write(path, [
        MODEL_HEADER.pack(b"RDSM", VERSION, n_classes, model.n_features, DTYPE_F64),
        struct.pack("<d", model.bias),
        np.ascontiguousarray(model.classes, dtype="<i4").tobytes(),
        np.ascontiguousarray(model.weights, dtype="<f8").tobytes(),
    ])


def read_model(path):
    with open(path, "rb") as fh:
        _, _, n_classes, n_features, dtype = _read_header(fh, path, MODEL_HEADER, b"RDSM")
        if dtype != DTYPE_F64:
            raise UnsupportedVersionError(f"unsupported dtype code {dtype}", path=path, offset=24)
        if n_classes == 0:
            raise CorruptHeaderError("model has zero classes", path=path, offset=8)
        width = n_features + 1
        _check_size(path, MODEL_HEADER.size + 8 + 4 * n_classes + 8 * n_classes * width)
        (bias,) = struct.unpack("<d", fh.read(8))
        classes = np.fromfile(fh, dtype="<i4", count=n_classes).astype(np.int64)
        weights = np.fromfile(fh, dtype="<f8", count=n_classes * width).reshape(n_classes, width)
    return SvmModel(classes, weights.astype(np.float64), bias)


# -- raw images ---------------------------------------------------------------

def write_images(images, path, labels=None):
    """Write ``(n, C, H, W)`` uint8 images (and optional labels) as RDIM."""
    arr = np.asarray(images)
    if arr.ndim != 4:
        raise ShapeError(f"images must be (n, C, H, W), got {arr.shape}", dimension="ndim")
    if arr.dtype != np.uint8:
        if arr.size and (arr.min() < 0 or arr.max() > 255 or not np.all(arr == np.round(arr))):
            raise FormatError("RDIM stores 8-bit pixels; values must be integers in [0, 255]", path=path)
        arr = arr.astype(np.uint8)
    n, c, h, w = arr.shape
    chunks = [IMAGE_HEADER.pack(b"RDIM", VERSION, n, c, h, w, int(labels is not None)),
              np.ascontiguousarray(arr).tobytes()]
    if labels is not None:
        if len(labels) != n:
            raise ShapeError(f"{len(labels)} labels for {n} images", dimension="n_samples")
        chunks.append(np.ascontiguousarray(labels, dtype="<i4").tobytes())
    _write(path, chunks)


def read_images(path):
    """Return ``(images uint8 (n, C, H, W), labels or None)``."""
    with open(path, "rb") as fh:
        _, _, n, c, h, w, has_labels = _read_header(fh, path, IMAGE_HEADER, b"RDIM")
        if has_labels not in (0, 1):
            raise CorruptHeaderError(f"has_labels byte is {has_labels}", path=path, offset=28)
        if min(c, h, w) == 0:
            raise CorruptHeaderError(f"zero image dimension {c}x{h}x{w}", path=path, offset=16)
        per = c * h * w
        _check_size(path, IMAGE_HEADER.size + n * per + (4 * n if has_labels else 0))
        images = np.fromfile(fh, dtype=np.uint8, count=n * per).reshape(n, c, h, w)
        labels = np.fromfile(fh, dtype="<i4", count=n).astype(np.int64) if has_labels else None
    return images, labels
