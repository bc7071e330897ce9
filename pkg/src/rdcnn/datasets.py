"""Benchmark dataset decoders and image augmentations.

Loaders return uint8 pixels shaped ``(n, C, H, W)``; normalization happens
at extraction time (see ``network.normalize``).
"""

import dataclasses
import gzip
import math
import os
import struct

import numpy as np

from . import formats
from .errors import ConfigError, FormatError, ShapeError, SizeMismatchError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

CIFAR_IMAGE_BYTES = 3 * 32 * 32
STL10_SIDE = 96


@dataclasses.dataclass
class Dataset:
    images: np.ndarray
    labels: np.ndarray
    class_count: int
    name: str

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 4:
            raise ShapeError(f"images must be (n, C, H, W), got {self.images.shape}", dimension="ndim")
        if len(self.images) != len(self.labels):
            raise ShapeError(f"{len(self.images)} images but {len(self.labels)} labels",
                             dimension="n_samples")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
            raise ConfigError(f"labels outside [0, {self.class_count}) in dataset {self.name!r}")

    def __len__(self):
        return len(self.images)

    @property
    def shape(self):
        return self.images.shape[1:]

    def subset(self, indices):
        idx = np.asarray(indices)
        return Dataset(self.images[idx], self.labels[idx], self.class_count, self.name)

    def head(self, limit):
        return self if limit is None else self.subset(np.arange(min(limit, len(self))))


def _read_bytes(path):
    opener = gzip.open if str(path).endswith(".gz") else open
    try:
        with opener(path, "rb") as fh:
            return fh.read()
    except OSError as exc:
        raise FormatError(f"cannot read: {exc}", path=path) from exc


def _idx_array(path, magic, ndim):
    data = _read_bytes(path)
    header = 4 + 4 * ndim
    if len(data) < header:
        raise FormatError("truncated IDX header", path=path, offset=len(data))
    (found,) = struct.unpack(">I", data[:4])
    if found != magic:
        raise FormatError(f"bad IDX magic 0x{found:08x}, expected 0x{magic:08x}", path=path, offset=0)
    dims = struct.unpack(f">{ndim}I", data[4:header])
    need = header + math.prod(dims)
    if len(data) < need:
        raise SizeMismatchError(f"IDX payload truncated: {len(data)} bytes, need {need}",
                                path=path, offset=len(data))
    return np.frombuffer(data, dtype=np.uint8, count=math.prod(dims), offset=header).reshape(dims)


def load_idx(images_path, labels_path, *, pad_to=None, class_count=10, name="mnist"):
    """Decode an IDX image/label file pair (optionally gzipped).

    ``pad_to`` zero-pads each image symmetrically to a ``pad_to x pad_to`` square.
    """
    images = _idx_array(images_path, IDX_IMAGES_MAGIC, 3)
    labels = _idx_array(labels_path, IDX_LABELS_MAGIC, 1)
    if len(images) != len(labels):
        raise SizeMismatchError(
            f"{len(images)} images but {len(labels)} labels ({labels_path})", path=images_path, offset=4
        )
    images = images[:, None]
    if pad_to is not None:
        images = pad_images(images, pad_to)
    return Dataset(np.ascontiguousarray(images), labels.astype(np.int64), class_count, name)


def pad_images(images, side):
    _, _, h, w = images.shape
    if side < h or side < w:
        raise ConfigError(f"cannot pad {h}x{w} images down to {side}x{side}")
    top, left = (side - h) // 2, (side - w) // 2
    return np.pad(images, ((0, 0), (0, 0), (top, side - h - top), (left, side - w - left)))


def _find(directory, names):
    for name in names:
        path = os.path.join(directory, name)
        if os.path.exists(path):
            return path
    raise FormatError(f"none of {names} found", path=directory)


def load_mnist(directory, split="train", *, pad_to=None):
    prefix = "train" if split == "train" else "t10k"
    img = _find(directory, [f"{prefix}-images-idx3-ubyte", f"{prefix}-images-idx3-ubyte.gz",
                            f"{prefix}-images.idx3-ubyte"])
    lab = _find(directory, [f"{prefix}-labels-idx1-ubyte", f"{prefix}-labels-idx1-ubyte.gz",
                            f"{prefix}-labels.idx1-ubyte"])
    return load_idx(img, lab, pad_to=pad_to)


def _cifar_records(path, label_bytes, label_index):
    data = _read_bytes(path)
    record = label_bytes + CIFAR_IMAGE_BYTES
    if len(data) % record:
        raise SizeMismatchError(
            f"size {len(data)} is not a whole number of {record}-byte records "
            f"(expected {len(data) // record} or {len(data) // record + 1} records)",
            path=path, offset=len(data) // record * record,
        )
    rows = np.frombuffer(data, dtype=np.uint8).reshape(-1, record)
    return rows[:, label_bytes:].reshape(-1, 3, 32, 32), rows[:, label_index].astype(np.int64)


def _cifar_dir(directory, marker):
    for cand in (directory, os.path.join(directory, marker)):
        if os.path.isdir(cand) and any(f.endswith(".bin") for f in os.listdir(cand)):
            return cand
    raise FormatError(f"no CIFAR .bin files found (looked in {directory} and {marker}/)", path=directory)


def load_cifar(directory, variant="cifar10", split="train"):
    """Decode CIFAR binary batches: labels then R, G, B 32x32 planes per record."""
    if variant == "cifar10":
        root = _cifar_dir(directory, "cifar-10-batches-bin")
        files = [f"data_batch_{i}.bin" for i in range(1, 6)] if split == "train" else ["test_batch.bin"]
        label_bytes, label_index, classes = 1, 0, 10
    elif variant == "cifar100":
        root = _cifar_dir(directory, "cifar-100-binary")
        files = ["train.bin"] if split == "train" else ["test.bin"]
        label_bytes, label_index, classes = 2, 1, 100  # coarse, fine
    else:
        raise ConfigError(f"unknown CIFAR variant {variant!r}")
    parts = [_cifar_records(os.path.join(root, f), label_bytes, label_index) for f in files]
    images = np.concatenate([p[0] for p in parts])
    labels = np.concatenate([p[1] for p in parts])
    return Dataset(np.ascontiguousarray(images), labels, classes, variant)


def decode_stl10(image_bytes, label_bytes=None, *, path=None):
    per = 3 * STL10_SIDE * STL10_SIDE
    if len(image_bytes) % per:
        raise SizeMismatchError(
            f"size {len(image_bytes)} is not a whole number of {per}-byte images "
            f"(expected {len(image_bytes) // per} records)",
            path=path, offset=len(image_bytes) // per * per,
        )
    # each image is stored column-major: (C, W, H) in C order
    images = np.frombuffer(image_bytes, dtype=np.uint8).reshape(-1, 3, STL10_SIDE, STL10_SIDE)
    images = np.ascontiguousarray(images.transpose(0, 1, 3, 2))
    if label_bytes is None:
        return images, None
    labels = np.frombuffer(label_bytes, dtype=np.uint8).astype(np.int64)
    if len(labels) != len(images):
        raise SizeMismatchError(f"{len(images)} images but {len(labels)} labels", path=path, offset=0)
    if labels.size and labels.min() < 1:
        raise FormatError("STL10 labels are 1-based; found 0", path=path)
    return images, labels - 1


def load_stl10(directory, split="train"):
    root = directory
    if os.path.isdir(os.path.join(directory, "stl10_binary")):
        root = os.path.join(directory, "stl10_binary")
    xs = os.path.join(root, f"{split}_X.bin")
    ys = os.path.join(root, f"{split}_y.bin")
    images, labels = decode_stl10(_read_bytes(xs), _read_bytes(ys), path=xs)
    return Dataset(images, labels, 10, "stl10")


def load_raw(path, class_count=None):
    images, labels = formats.read_images(path)
    if labels is None:
        labels = np.zeros(len(images), dtype=np.int64)
    count = class_count or (int(labels.max()) + 1 if labels.size else 1)
    return Dataset(images, labels, count, os.path.basename(str(path)))


def load(fmt, path, split="train", *, pad_to=None):
    """Dispatch on a format name: mnist, cifar10, cifar100, stl10 or raw."""
    if fmt == "mnist":
        return load_mnist(path, split, pad_to=pad_to)
    if fmt in ("cifar10", "cifar100"):
        return load_cifar(path, fmt, split)
    if fmt == "stl10":
        return load_stl10(path, split)
    if fmt == "raw":
        return load_raw(path)
    raise ConfigError(f"unknown dataset format {fmt!r}")


# -- augmentation -------------------------------------------------------------

def hflip(image):
    return np.ascontiguousarray(np.asarray(image)[..., ::-1])


def rotate(image, degrees):
    """Rotate counter-clockwise (as displayed) about the image center.

    Nearest-neighbor sampling; pixels mapped from outside the image are 0.
    """
    img = np.asarray(image)
    _, h, w = img.shape
    theta = math.radians(degrees)
    cos, sin = math.cos(theta), math.sin(theta)
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    yy, xx = np.mgrid[0:h, 0:w]
    dy, dx = yy - cy, xx - cx
    src_x = np.floor(cx + cos * dx - sin * dy + 0.5).astype(np.int64)
    src_y = np.floor(cy + sin * dx + cos * dy + 0.5).astype(np.int64)
    inside = (src_x >= 0) & (src_x < w) & (src_y >= 0) & (src_y < h)
    out = np.zeros_like(img)
    out[:, inside] = img[:, src_y[inside], src_x[inside]]
    return out


def cutout(image, size, rng):
    """Zero a ``size x size`` square placed uniformly at random inside the image."""
    img = np.asarray(image)
    _, h, w = img.shape
    if not 1 <= size <= min(h, w):
        raise ConfigError(f"cutout size must be in [1, {min(h, w)}], got {size}")
    top = int(rng.integers(0, h - size + 1))
    left = int(rng.integers(0, w - size + 1))
    out = img.copy()
    out[:, top:top + size, left:left + size] = 0
    return out


def augment(image, op, *, degrees=0.0, size=None, rng=None):
    """Apply one augmentation: ``hflip``, ``rotate`` (by ``degrees``) or ``cutout`` (``size``)."""
    if op == "hflip":
        return hflip(image)
    if op == "rotate":
        return rotate(image, degrees)
    if op == "cutout":
        if size is None:
            raise ConfigError("cutout needs a size")
        return cutout(image, size, rng if rng is not None else np.random.default_rng(0))
    raise ConfigError(f"unknown augmentation {op!r}")


def augment_dataset(images, *, mode="flip-rotate", per_image=10, max_degrees=15.0,
                    cutout_size=None, seed=0):
    """Generate ``per_image`` augmentations of every image.

    ``flip-rotate``: horizontal flip with probability 1/2, then a rotation
    drawn uniformly from [-max_degrees, max_degrees]. ``cutout``: one random
    square of side ``cutout_size`` (default half the shorter side).
    Randomness comes from numpy's PCG64 seeded with ``seed``.
    Returns ``(augmented, pairing)`` where ``pairing[i]`` is the source index.
    """
    images = np.asarray(images)
    rng = np.random.default_rng(seed)
    out = np.empty((len(images) * per_image,) + images.shape[1:], dtype=images.dtype)
    pairing = np.repeat(np.arange(len(images)), per_image)
    if mode == "cutout" and cutout_size is None:
        cutout_size = max(1, min(images.shape[2:]) // 2)
    for i, img in enumerate(images):
        for r in range(per_image):
            if mode == "flip-rotate":
                x = hflip(img) if rng.random() < 0.5 else img
                x = rotate(x, rng.uniform(-max_degrees, max_degrees))
            elif mode == "cutout":
                x = cutout(img, cutout_size, rng)
            else:
                raise ConfigError(f"unknown augmentation mode {mode!r}")
            out[i * per_image + r] = x
    return out, pairing
