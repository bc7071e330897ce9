"""Image tensors and the network's numeric primitives.

An image tensor is a ``(channels, height, width)`` numpy array of finite
reals; a kernel is a ``(in_channels, k, k)`` array. Convolutions are valid
(no padding), stride 1, cross-correlation orientation (no kernel flip) and
carry no bias. ``sign(0) = +1``. 2x2 pooling uses stride 2 and drops a
trailing odd row or column.

Every function here validates its inputs, then dispatches to the selected
backend (compiled ``_core`` or the numpy ``_fallback``); see
``rdcnn.reference`` for the naive loop versions used as test oracles.
"""

import numpy as np

from . import _backend
from .errors import NonFiniteError, ShapeError


def backend_name():
    return _backend.kernels.NAME


def as_image(data, name="image"):
    """Validate ``data`` as a C x H x W tensor and return it as contiguous float64."""
    arr = np.ascontiguousarray(data, dtype=np.float64)
    if arr.ndim != 3:
        raise ShapeError(f"{name} must be 3-D (channels, height, width), got shape {arr.shape}",
                         dimension="ndim")
    for axis, label in enumerate(("channels", "height", "width")):
        if arr.shape[axis] < 1:
            raise ShapeError(f"{name} has empty {label} axis", dimension=label)
    if not np.isfinite(arr).all():
        raise NonFiniteError(f"{name} contains NaN or infinite values")
    return arr


def as_kernel(data, name="kernel"):
    arr = as_image(data, name)
    if arr.shape[1] != arr.shape[2]:
        raise ShapeError(f"{name} must be square, got {arr.shape[1]}x{arr.shape[2]}",
                         dimension="size")
    return arr


def _check_fits(image, k):
    _, h, w = image.shape
    if k > h:
        raise ShapeError(f"kernel size {k} exceeds image height {h}", dimension="height")
    if k > w:
        raise ShapeError(f"kernel size {k} exceeds image width {w}", dimension="width")


def conv_valid(image, kernel, *, backend=None):
    """Full-depth valid convolution; returns a 1 x (H-k+1) x (W-k+1) tensor."""
    image, kernel = as_image(image), as_kernel(kernel)
    if kernel.shape[0] != image.shape[0]:
        raise ShapeError(
            f"kernel has {kernel.shape[0]} input channels but image has {image.shape[0]}",
            dimension="channels",
        )
    _check_fits(image, kernel.shape[-1])
    return (backend or _backend.kernels).conv_valid(image, kernel)


def conv_depthwise(image, kernels, *, backend=None):
    """Channel ``i`` of the output is channel ``i`` convolved with kernel ``i``.

    ``kernels`` is a sequence of single-channel kernels (each ``1 x k x k`` or
    ``k x k``) or an array of shape ``(C, k, k)``.
    """
    image = as_image(image)
    stack = np.asarray(kernels, dtype=np.float64)
    if stack.ndim == 4:
        if stack.shape[1] != 1:
            raise ShapeError("depthwise kernels must be single-channel", dimension="channels")
        stack = stack[:, 0]
    stack = as_kernel(stack, "kernels")
    if stack.shape[0] != image.shape[0]:
        raise ShapeError(
            f"got {stack.shape[0]} depthwise kernels for {image.shape[0]} channels",
            dimension="channels",
        )
    _check_fits(image, stack.shape[-1])
    return (backend or _backend.kernels).conv_depthwise(image, stack)


def sign_activate(image, *, backend=None):
    """Elementwise sign with values in {-1, +1}; zero maps to +1."""
    arr = np.ascontiguousarray(image, dtype=np.float64)
    if np.isnan(arr).any():
        raise NonFiniteError("sign of NaN is undefined")
    return (backend or _backend.kernels).sign_activate(as_image(np.clip(arr, -1.0, 1.0)))


def avg_pool_2x2(image, *, backend=None):
    image = as_image(image)
    _, h, w = image.shape
    if h < 2 or w < 2:
        raise ShapeError(
            f"cannot 2x2-pool a {h}x{w} map; use fewer blocks or a smaller kernel",
            dimension="height" if h < 2 else "width",
        )
    return (backend or _backend.kernels).avg_pool_2x2(image)


def global_avg_pool(image, *, backend=None):
    """Per-channel spatial mean, returned as a 1-D array of length C."""
    return (backend or _backend.kernels).global_avg_pool(as_image(image))
