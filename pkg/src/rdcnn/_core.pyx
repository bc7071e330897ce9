# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels. Mirrors ``rdcnn._fallback`` one function at a time.

All loops accumulate in double and run without the GIL, so callers can fan
work out over Python threads.
"""

import numpy as np
cimport numpy as cnp
from libc.stdlib cimport malloc, free

cnp.import_array()

NAME = "cython"


def conv_valid(const double[:, :, ::1] image, const double[:, :, ::1] kernel):
    cdef Py_ssize_t c = image.shape[0], h = image.shape[1], w = image.shape[2]
    cdef Py_ssize_t k = kernel.shape[2]
    cdef Py_ssize_t oh = h - k + 1, ow = w - k + 1
    out = np.empty((1, oh, ow))
    cdef double[:, :, ::1] o = out
    cdef Py_ssize_t y, x, ch, dy, dx
    cdef double acc
    with nogil:
        for y in range(oh):
            for x in range(ow):
                acc = 0.0
                for ch in range(c):
                    for dy in range(k):
                        for dx in range(k):
                            acc = acc + image[ch, y + dy, x + dx] * kernel[ch, dy, dx]
                o[0, y, x] = acc
    return out


def conv_depthwise(const double[:, :, ::1] image, const double[:, :, ::1] kernels):
    cdef Py_ssize_t c = image.shape[0], h = image.shape[1], w = image.shape[2]
    cdef Py_ssize_t k = kernels.shape[2]
    cdef Py_ssize_t oh = h - k + 1, ow = w - k + 1
    out = np.empty((c, oh, ow))
    cdef double[:, :, ::1] o = out
    cdef Py_ssize_t ch
    with nogil:
        for ch in range(c):
            _conv2d(&image[ch, 0, 0], h, w, &kernels[ch, 0, 0], k, &o[ch, 0, 0])
    return out


def sign_activate(const double[:, :, ::1] image):
    out = np.empty((image.shape[0], image.shape[1], image.shape[2]))
    cdef double[:, :, ::1] o = out
    cdef Py_ssize_t i, j, l
    with nogil:
        for i in range(image.shape[0]):
            for j in range(image.shape[1]):
                for l in range(image.shape[2]):
                    o[i, j, l] = 1.0 if image[i, j, l] >= 0.0 else -1.0
    return out


def avg_pool_2x2(const double[:, :, ::1] image):
    cdef Py_ssize_t c = image.shape[0], h = image.shape[1], w = image.shape[2]
    out = np.empty((c, h // 2, w // 2))
    cdef double[:, :, ::1] o = out
    cdef Py_ssize_t ch
    with nogil:
        for ch in range(c):
            _pool(&image[ch, 0, 0], h, w, &o[ch, 0, 0], 0)
    return out


def global_avg_pool(const double[:, :, ::1] image):
    cdef Py_ssize_t c = image.shape[0]
    out = np.empty(c)
    cdef double[::1] o = out
    cdef Py_ssize_t ch
    with nogil:
        for ch in range(c):
            o[ch] = _mean(&image[ch, 0, 0], image.shape[1] * image.shape[2])
    return out


def finish_features(const double[:, :, :, ::1] conv, const double[:, :, :, ::1] depthwise):
    """Fused sign -> pool -> [depthwise conv -> sign -> pool]* -> GAP.

    conv: (n, m, h, w) first-layer convolution outputs.
    depthwise: (m, b - 1, k, k) per-feature depthwise kernels.
    Returns (n, m) features.
    """
    cdef Py_ssize_t n = conv.shape[0], m = conv.shape[1]
    cdef Py_ssize_t h0 = conv.shape[2], w0 = conv.shape[3]
    cdef Py_ssize_t nblk = depthwise.shape[1], k = depthwise.shape[3]
    out = np.empty((n, m))
    cdef double[:, ::1] o = out
    cdef Py_ssize_t i, j, blk, h, w
    cdef double *a
    cdef double *b
    cdef double *tmp
    a = <double *> malloc(h0 * w0 * sizeof(double))
    b = <double *> malloc(h0 * w0 * sizeof(double))
    if a == NULL or b == NULL:
        free(a)
        free(b)
        raise MemoryError()
    try:
        with nogil:
            for i in range(n):
                for j in range(m):
                    _pool(&conv[i, j, 0, 0], h0, w0, a, 1)
                    h = h0 // 2
                    w = w0 // 2
                    for blk in range(nblk):
                        _conv2d(a, h, w, &depthwise[j, blk, 0, 0], k, b)
                        h = h - k + 1
                        w = w - k + 1
                        _pool(b, h, w, a, 1)
                        h = h // 2
                        w = w // 2
                    o[i, j] = _mean(a, h * w)
    finally:
        free(a)
        free(b)
    return out


cdef inline void _conv2d(const double *src, Py_ssize_t h, Py_ssize_t w,
                         const double *ker, Py_ssize_t k, double *dst) noexcept nogil:
    cdef Py_ssize_t oh = h - k + 1, ow = w - k + 1
    cdef Py_ssize_t y, x, dy, dx
    cdef double acc
    for y in range(oh):
        for x in range(ow):
            acc = 0.0
            for dy in range(k):
                for dx in range(k):
                    acc = acc + src[(y + dy) * w + x + dx] * ker[dy * k + dx]
            dst[y * ow + x] = acc


cdef inline double _sgn(double v) noexcept nogil:
    return 1.0 if v >= 0.0 else -1.0


cdef inline void _pool(const double *src, Py_ssize_t h, Py_ssize_t w,
                       double *dst, bint apply_sign) noexcept nogil:
    # 2x2 mean, stride 2; a trailing odd row/column is dropped.
    cdef Py_ssize_t oh = h // 2, ow = w // 2
    cdef Py_ssize_t y, x, r0, r1
    for y in range(oh):
        r0 = 2 * y * w
        r1 = r0 + w
        for x in range(ow):
            if apply_sign:
                dst[y * ow + x] = (((_sgn(src[r0 + 2 * x]) + _sgn(src[r0 + 2 * x + 1]))
                                    + _sgn(src[r1 + 2 * x])) + _sgn(src[r1 + 2 * x + 1])) * 0.25
            else:
                dst[y * ow + x] = (((src[r0 + 2 * x] + src[r0 + 2 * x + 1])
                                    + src[r1 + 2 * x]) + src[r1 + 2 * x + 1]) * 0.25


cdef inline double _mean(const double *src, Py_ssize_t count) noexcept nogil:
    cdef Py_ssize_t i
    cdef double s = 0.0
    for i in range(count):
        s = s + src[i]
    return s / count
