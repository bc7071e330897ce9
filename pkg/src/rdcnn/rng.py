"""Seeded Normal(0, 1) weights that any language can reproduce.

The generator is SplitMix64 (Steele, Lea & Flood 2014; reference code at
https://prng.di.unimi.it/splitmix64.c). Each kernel stack ``j`` gets its own
stream whose starting state is::

    state_j = mix64(seed + (j + 1) * GOLDEN)        (mod 2**64)

and the ``i``-th raw output of that stream is ``mix64(state_j + (i + 1) *
GOLDEN)``, i.e. the standard SplitMix64 sequence seeded with ``state_j``.
Raw outputs become uniforms on (0, 1) via ``((x >> 11) + 0.5) * 2**-53`` and
consecutive uniform pairs ``(u1, u2)`` become normals by Box-Muller::

    z_2t     = sqrt(-2 ln u1) * cos(2 pi u2)
    z_2t + 1 = sqrt(-2 ln u1) * sin(2 pi u2)

Stack ``j`` depends only on ``(seed, j)``, so generation order and thread
count never change the weights.
"""

import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK = (1 << 64) - 1


def mix64(z):
    """SplitMix64 finalizer; works on numpy uint64 scalars and arrays."""
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def stream_state(seed, index):
    """Starting SplitMix64 state of sub-stream ``index`` under ``seed``."""
    s = (int(seed) + (int(index) + 1) * int(GOLDEN)) & _MASK
    return mix64(np.uint64(s))


def splitmix64(state, count):
    """First ``count`` outputs of SplitMix64 started at ``state``."""
    steps = np.arange(1, count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return mix64(np.uint64(state) + steps * GOLDEN)


def uniforms(state, count):
    """``count`` doubles in the open interval (0, 1)."""
    raw = splitmix64(state, count)
    return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * (2.0 ** -53)


def standard_normal(state, count):
    """``count`` Normal(0, 1) draws by Box-Muller on a SplitMix64 stream."""
    pairs = (count + 1) // 2
    u = uniforms(state, 2 * pairs)
    u1, u2 = u[0::2], u[1::2]
    radius = np.sqrt(-2.0 * np.log(u1))
    angle = 2.0 * np.pi * u2
    out = np.empty(2 * pairs)
    out[0::2] = radius * np.cos(angle)
    out[1::2] = radius * np.sin(angle)
    return out[:count]


def seed_from_u64(value):
    value = int(value)
    if not 0 <= value <= _MASK:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {value}")
    return value
