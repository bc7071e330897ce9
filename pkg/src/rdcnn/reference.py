"""Naive loop implementations of the network primitives.

These are deliberately direct: explicit index loops, accumulation in Python
floats (IEEE double) in a fixed order. They exist to check the optimized
backends and are far too slow for real extraction.
"""

import numpy as np


def conv_valid(image, kernel):
    c, h, w = image.shape
    k = kernel.shape[-1]
    oh, ow = h - k + 1, w - k + 1
    out = np.zeros((1, oh, ow))
    for y in range(oh):
        for x in range(ow):
            acc = 0.0
            for ch in range(c):
                for dy in range(k):
                    for dx in range(k):
                        acc += float(image[ch, y + dy, x + dx]) * float(kernel[ch, dy, dx])
            out[0, y, x] = acc
    return out


def conv_depthwise(image, kernels):
    return np.concatenate(
        [conv_valid(image[i : i + 1], kernels[i].reshape(1, *kernels[i].shape[-2:]))
         for i in range(image.shape[0])]
    )


def sign_activate(image):
    out = np.empty(image.shape)
    flat_in, flat_out = image.reshape(-1), out.reshape(-1)
    for i in range(flat_in.size):
        flat_out[i] = 1.0 if flat_in[i] >= 0 else -1.0
    return out


def avg_pool_2x2(image):
    c, h, w = image.shape
    out = np.zeros((c, h // 2, w // 2))
    for ch in range(c):
        for y in range(h // 2):
            for x in range(w // 2):
                s = 0.0
                for dy in range(2):
                    for dx in range(2):
                        s += float(image[ch, 2 * y + dy, 2 * x + dx])
                out[ch, y, x] = s / 4.0
    return out


def global_avg_pool(image):
    c, h, w = image.shape
    out = np.zeros(c)
    for ch in range(c):
        s = 0.0
        for y in range(h):
            for x in range(w):
                s += float(image[ch, y, x])
        out[ch] = s / (h * w)
    return out


def extract_feature(image, input_kernel, depthwise_kernels):
    """One feature by the literal block pipeline, primitive by primitive."""
    x = avg_pool_2x2(sign_activate(conv_valid(image, input_kernel)))
    for kern in depthwise_kernels:
        x = avg_pool_2x2(sign_activate(conv_valid(x, kern.reshape(1, *kern.shape[-2:]))))
    return float(global_avg_pool(x)[0])
