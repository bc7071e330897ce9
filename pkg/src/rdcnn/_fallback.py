"""Pure numpy implementation of the hot kernels.

Selected at import when the compiled ``_core`` extension is unavailable, or
when ``RDCNN_BACKEND=python``. Same signatures and semantics as ``_core``;
all inputs are C-contiguous float64.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

NAME = "python"


def conv_valid(image, kernel):
    k = kernel.shape[-1]
    win = sliding_window_view(image, (k, k), axis=(1, 2))  # C, oh, ow, k, k
    return np.einsum("cyxij,cij->yx", win, kernel)[None]


def conv_depthwise(image, kernels):
    k = kernels.shape[-1]
    win = sliding_window_view(image, (k, k), axis=(1, 2))
    return np.einsum("cyxij,cij->cyx", win, kernels)


def sign_activate(image):
    return np.where(image >= 0, 1.0, -1.0)


def avg_pool_2x2(image):
    c, h, w = image.shape
    x = image[:, : h // 2 * 2, : w // 2 * 2]
    return (((x[:, 0::2, 0::2] + x[:, 0::2, 1::2]) + x[:, 1::2, 0::2]) + x[:, 1::2, 1::2]) * 0.25


def global_avg_pool(image):
    c = image.shape[0]
    return image.reshape(c, -1).sum(axis=1) / (image.shape[1] * image.shape[2])


def finish_features(conv, depthwise):
    """Complete the block chain after the input-layer convolution.

    conv: (n, m, h, w) first-layer convolution outputs.
    depthwise: (m, b - 1, k, k) per-feature depthwise kernels.
    Returns (n, m) features.
    """
    x = _sign_pool(conv)
    for blk in range(depthwise.shape[1]):
        k = depthwise.shape[-1]
        win = sliding_window_view(x, (k, k), axis=(2, 3))  # n, m, oh, ow, k, k
        x = _sign_pool(np.einsum("nmyxij,mij->nmyx", win, depthwise[:, blk]))
    n, m = x.shape[:2]
    return x.reshape(n, m, -1).sum(axis=2) / (x.shape[2] * x.shape[3])


def _sign_pool(x):
    h, w = x.shape[-2:]
    s = np.where(x[..., : h // 2 * 2, : w // 2 * 2] >= 0, 1.0, -1.0)
    return (((s[..., 0::2, 0::2] + s[..., 0::2, 1::2]) + s[..., 1::2, 0::2]) + s[..., 1::2, 1::2]) * 0.25
