"""Random depthwise signed convolutional network.

Every output feature ``j`` owns an independent chain of kernels: one
full-depth ``k x k`` kernel over the input channels followed by ``b - 1``
single-channel depthwise kernels. A block is conv -> sign -> 2x2 average
pool (stride 2); after the last block the map is globally averaged to one
number in [-1, 1]. A width-``m`` depthwise network is exactly ``m`` such
chains side by side, which is how it is computed here.

Extraction is split into fixed-size (image chunk, kernel chunk) tiles. Tile
boundaries do not depend on the worker count and BLAS is pinned to one
thread, so the output is bit-identical for any ``threads`` value.
"""

import dataclasses
import enum
import logging
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from threadpoolctl import threadpool_limits

from . import _backend, rng
from .errors import ConfigError, ImageTooSmallError, NonFiniteError, ShapeError

log = logging.getLogger(__name__)

IMAGE_CHUNK = 32
KERNEL_CHUNK = 128
TILE_BYTES = 64 << 20


class Normalization(str, enum.Enum):
    NONE = "none"
    UNIT = "unit"  # x / 255 -> [0, 1]
    SYMMETRIC = "symmetric"  # x / 127.5 - 1 -> [-1, 1]


def normalize(pixels, mode):
    """Map 8-bit pixel values according to ``mode``; returns float64."""
    x = np.asarray(pixels, dtype=np.float64)
    mode = Normalization(mode)
    if mode is Normalization.UNIT:
        return x / 255.0
    if mode is Normalization.SYMMETRIC:
        return x / 127.5 - 1.0
    return x


@dataclasses.dataclass(frozen=True)
class NetworkConfig:
    kernel_size: int = 5
    blocks: int = 1
    num_kernels: int = 1024
    seed: int = 0
    input_channels: int = 3
    normalization: Normalization = Normalization.UNIT
    bias_enabled: bool = False

    def __post_init__(self):
        object.__setattr__(self, "normalization", Normalization(self.normalization))
        for field in ("kernel_size", "blocks", "num_kernels", "input_channels"):
            value = getattr(self, field)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ConfigError(f"{field} must be a positive integer, got {value!r}")
        if self.kernel_size % 2 == 0:
            raise ConfigError(f"kernel_size must be odd, got {self.kernel_size}")
        try:
            rng.seed_from_u64(self.seed)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def output_size(self, height, width):
        """Spatial size of the final map, or raise if the image is too small."""
        h, w = height, width
        for blk in range(self.blocks):
            h, w = h - self.kernel_size + 1, w - self.kernel_size + 1
            if h < 2 or w < 2:
                best = max_blocks(height, width, self.kernel_size)
                raise ImageTooSmallError(
                    f"{height}x{width} image cannot pass {self.blocks} blocks of "
                    f"{self.kernel_size}x{self.kernel_size} conv + 2x2 pool "
                    f"(fails at block {blk + 1}); maximum feasible blocks is {best}",
                    max_blocks=best,
                )
            h, w = h // 2, w // 2
        return h, w


def max_blocks(height, width, kernel_size):
    count, h, w = 0, height, width
    while True:
        h, w = h - kernel_size + 1, w - kernel_size + 1
        if h < 2 or w < 2:
            return count
        h, w = h // 2, w // 2
        count += 1


@dataclasses.dataclass(frozen=True)
class KernelStack:
    """Weights of one feature chain.

    ``input_kernel`` is ``(C, k, k)``; ``depthwise_kernels`` is ``(b - 1, k, k)``.
    ``biases`` (length ``b``) is all zeros unless the config enables them.
    """

    input_kernel: np.ndarray
    depthwise_kernels: np.ndarray
    biases: np.ndarray


def stack_weights(config, index):
    """Raw weight vector of stack ``index``: input kernel, depthwise kernels, biases."""
    c, k, b = config.input_channels, config.kernel_size, config.blocks
    count = c * k * k + (b - 1) * k * k + (b if config.bias_enabled else 0)
    return rng.standard_normal(rng.stream_state(config.seed, index), count)


def generate_kernel_stacks(config, indices=None):
    """Kernel stacks for ``config`` (all ``num_kernels`` unless ``indices`` given)."""
    if indices is None:
        indices = range(config.num_kernels)
    c, k, b = config.input_channels, config.kernel_size, config.blocks
    n_in, n_dw = c * k * k, (b - 1) * k * k
    stacks = []
    for j in indices:
        wts = stack_weights(config, j)
        biases = wts[n_in + n_dw:] if config.bias_enabled else np.zeros(b)
        stacks.append(
            KernelStack(
                input_kernel=wts[:n_in].reshape(c, k, k),
                depthwise_kernels=wts[n_in:n_in + n_dw].reshape(b - 1, k, k),
                biases=biases,
            )
        )
    return stacks


@dataclasses.dataclass
class FeatureMatrix:
    """``n_samples x n_features`` float32 feature values with optional labels."""

    values: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        if self.values.ndim != 2:
            raise ShapeError(f"feature values must be 2-D, got shape {self.values.shape}",
                             dimension="ndim")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (self.values.shape[0],):
                raise ShapeError(
                    f"{self.labels.size} labels for {self.values.shape[0]} samples",
                    dimension="n_samples",
                )

    @property
    def n_samples(self):
        return self.values.shape[0]

    @property
    def n_features(self):
        return self.values.shape[1]


def _as_batch(images, config):
    try:
        arr = np.asarray(images)
    except ValueError:
        arr = np.empty(0, dtype=object)
    if arr.dtype == object or arr.ndim != 4:
        # ragged input: find the first image whose shape differs
        shapes = [np.shape(im) for im in images]
        for i, shp in enumerate(shapes):
            if shp != shapes[0]:
                raise ShapeError(f"image {i} has shape {shp}, expected {shapes[0]} (from image 0)",
                                 dimension="shape")
        raise ShapeError(f"images must be an (n, C, H, W) batch, got shape {arr.shape}",
                         dimension="ndim")
    if arr.shape[1] != config.input_channels:
        raise ShapeError(
            f"images have {arr.shape[1]} channels, config expects {config.input_channels}",
            dimension="channels",
        )
    return arr


class _Weights:
    """All stacks of a config packed for the batched kernels."""

    def __init__(self, config):
        c, k, b, m = config.input_channels, config.kernel_size, config.blocks, config.num_kernels
        n_in, n_dw = c * k * k, (b - 1) * k * k
        self.input = np.empty((m, n_in))
        self.depthwise = np.empty((m, b - 1, k, k))
        self.biases = np.zeros((m, b))
        for j in range(m):
            wts = stack_weights(config, j)
            self.input[j] = wts[:n_in]
            self.depthwise[j] = wts[n_in:n_in + n_dw].reshape(b - 1, k, k)
            if config.bias_enabled:
                self.biases[j] = wts[n_in + n_dw:]


def _tile(x, weights, config, ker_lo, ker_hi, kern):
    """Features of images ``x`` (float64, n x C x H x W) for kernels [ker_lo, ker_hi)."""
    k = config.kernel_size
    n = x.shape[0]
    win = sliding_window_view(x, (k, k), axis=(2, 3))  # n, C, oh, ow, k, k
    oh, ow = win.shape[2], win.shape[3]
    patches = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(n * oh * ow, -1)
    conv = patches @ weights.input[ker_lo:ker_hi].T  # (n*oh*ow, mc)
    conv = np.ascontiguousarray(conv.reshape(n, oh, ow, -1).transpose(0, 3, 1, 2))
    if not config.bias_enabled:
        return kern.finish_features(conv, np.ascontiguousarray(weights.depthwise[ker_lo:ker_hi]))
    return _finish_with_bias(conv, weights, ker_lo, ker_hi, kern)


def _finish_with_bias(conv, weights, lo, hi, kern):
    # Bias path: the block chain is re-run per block through the primitive
    # kernels so every block can add its own offset before the sign.
    out = np.empty(conv.shape[:2])
    for i in range(conv.shape[0]):
        for jj, j in enumerate(range(lo, hi)):
            x = conv[i, jj][None] + weights.biases[j, 0]
            x = kern.avg_pool_2x2(kern.sign_activate(np.ascontiguousarray(x)))
            for blk in range(weights.depthwise.shape[1]):
                x = kern.conv_depthwise(x, np.ascontiguousarray(weights.depthwise[j, blk][None]))
                x = kern.avg_pool_2x2(kern.sign_activate(x + weights.biases[j, blk + 1]))
            out[i, jj] = kern.global_avg_pool(x)[0]
    return out


def default_threads():
    env = os.environ.get("RDCNN_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def extract_features(images, config, labels=None, *, threads=None, normalized=False,
                     out=None, backend=None):
    """Feature matrix of ``images`` under ``config``.

    ``images`` is an ``(n, C, H, W)`` array of raw pixels (normalized per
    ``config.normalization``) or, with ``normalized=True``, values used as is.
    ``out`` may be a preallocated ``(n, m)`` float32 array (e.g. a memmap);
    tiles are written into it as they complete.
    """
    arr = _as_batch(images, config)
    n, _, h, w = arr.shape
    config.output_size(h, w)
    m = config.num_kernels
    kern = backend or _backend.kernels
    threads = threads or default_threads()
    weights = _Weights(config)
    values = np.empty((n, m), dtype=np.float32) if out is None else out
    if values.shape != (n, m):
        raise ShapeError(f"output buffer has shape {values.shape}, expected {(n, m)}",
                         dimension="shape")

    # chunk size depends only on the image shape, never on the thread count
    oh, ow = h - config.kernel_size + 1, w - config.kernel_size + 1
    chunk = max(1, min(IMAGE_CHUNK, TILE_BYTES // (oh * ow * KERNEL_CHUNK * 8)))

    def run(img_lo):
        x = arr[img_lo:img_lo + chunk]
        x = np.ascontiguousarray(x, dtype=np.float64) if normalized else normalize(x, config.normalization)
        if not np.isfinite(x).all():
            raise NonFiniteError(f"non-finite pixel in images {img_lo}..{img_lo + len(x) - 1}")
        for ker_lo in range(0, m, KERNEL_CHUNK):
            ker_hi = min(ker_lo + KERNEL_CHUNK, m)
            values[img_lo:img_lo + len(x), ker_lo:ker_hi] = _tile(x, weights, config, ker_lo, ker_hi, kern)

    starts = range(0, n, chunk)
    with threadpool_limits(limits=1, user_api="blas"):
        if threads == 1 or n <= chunk:
            for s in starts:
                run(s)
        else:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                list(pool.map(run, starts))
    log.debug("extracted %d x %d features with %d threads (%s backend)", n, m, threads, kern.NAME)
    return FeatureMatrix(values, labels)


def extract_feature(image, stack, config, *, normalized=True, backend=None):
    """Single feature of one ``C x H x W`` image under one kernel stack."""
    from . import tensor

    img = tensor.as_image(image)
    if not normalized:
        img = normalize(img, config.normalization)
    config.output_size(img.shape[1], img.shape[2])
    kw = {"backend": backend}
    x = tensor.conv_valid(img, stack.input_kernel, **kw) + stack.biases[0]
    x = tensor.avg_pool_2x2(tensor.sign_activate(x, **kw), **kw)
    for blk, kernel in enumerate(stack.depthwise_kernels):
        x = tensor.conv_depthwise(x, kernel[None], **kw) + stack.biases[blk + 1]
        x = tensor.avg_pool_2x2(tensor.sign_activate(x, **kw), **kw)
    return float(tensor.global_avg_pool(x, **kw)[0])
