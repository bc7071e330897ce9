"""Per-image value histograms and class-separability statistics.

Divergences use the natural log, so every Jensen-Shannon value lies in
[0, ln 2]. Histogram bins get an additive ``smoothing`` mass before
normalization so KL terms stay finite; pass ``smoothing=0`` for the raw
empirical distribution.
"""

import dataclasses
import math

import numpy as np

from .errors import ConfigError, ShapeError
from .retrieval import cosine_similarity

SMOOTHING = 1e-10
PIXEL_BINS = 256
FEATURE_BINS = 64


@dataclasses.dataclass
class ValueHistogram:
    bin_edges: np.ndarray
    masses: np.ndarray


@dataclasses.dataclass
class JsRatioReport:
    avg_js_across: float
    avg_js_within_a: float
    avg_js_within_b: float

    @property
    def ratio(self):
        return ratio_from_averages(self.avg_js_across, self.avg_js_within_a, self.avg_js_within_b)


def ratio_from_averages(across, within_a, within_b):
    denom = within_a + within_b
    if not denom > 0:
        raise ConfigError("within-class divergences sum to zero; ratio undefined")
    return across / denom


def bin_counts(values, bins, value_range):
    """Equal-width bin counts over ``value_range``; values outside are clamped in."""
    lo, hi = value_range
    v = np.clip(np.asarray(values, dtype=np.float64).ravel(), lo, hi)
    idx = np.floor((v - lo) / (hi - lo) * bins).astype(np.int64)
    np.clip(idx, 0, bins - 1, out=idx)  # hi itself belongs to the last bin
    return np.bincount(idx, minlength=bins)


def image_histogram(values, bins, value_range, smoothing=SMOOTHING):
    lo, hi = value_range
    if not lo < hi:
        raise ConfigError(f"histogram range must satisfy lo < hi, got {value_range}")
    if bins < 1:
        raise ConfigError(f"bins must be positive, got {bins}")
    v = np.asarray(values)
    if v.size == 0:
        raise ShapeError("cannot histogram an empty value list", dimension="values")
    counts = bin_counts(v, bins, value_range) + float(smoothing)
    return ValueHistogram(np.linspace(lo, hi, bins + 1), counts / counts.sum())


def _kl_terms(p, m):
    # 0 * log(0 / m) = 0
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(p > 0, p * np.log(p / m), 0.0)
    return t


def js_divergence(p, q):
    if p.bin_edges.shape != q.bin_edges.shape or not np.array_equal(p.bin_edges, q.bin_edges):
        raise ShapeError("histograms use different binning", dimension="bin_edges")
    m = 0.5 * (p.masses + q.masses)
    d = 0.5 * math.fsum(_kl_terms(p.masses, m)) + 0.5 * math.fsum(_kl_terms(q.masses, m))
    return min(max(d, 0.0), math.log(2.0))


def _pairwise_js(a, b):
    """Matrix of JSD between rows of mass arrays ``a`` (na x bins) and ``b`` (nb x bins)."""
    out = np.empty((a.shape[0], b.shape[0]))
    for i in range(a.shape[0]):
        p = a[i][None, :]
        m = 0.5 * (p + b)
        kl_p = _kl_terms(np.broadcast_to(p, b.shape), m)
        kl_q = _kl_terms(b, m)
        for j in range(b.shape[0]):
            out[i, j] = 0.5 * math.fsum(kl_p[j]) + 0.5 * math.fsum(kl_q[j])
    return np.clip(out, 0.0, math.log(2.0))


def _stack(hists, label):
    if len(hists) < 2:
        raise ShapeError(f"class {label} needs at least 2 images, got {len(hists)}",
                         dimension=f"class_{label}")
    edges = hists[0].bin_edges
    for h in hists:
        if not np.array_equal(h.bin_edges, edges):
            raise ShapeError("histograms use different binning", dimension="bin_edges")
    return np.stack([h.masses for h in hists]), edges


def avg_js_ratio(hists_a, hists_b):
    """Mean cross-class JSD over mean within-class JSDs (self-pairs excluded)."""
    a, ea = _stack(hists_a, "a")
    b, eb = _stack(hists_b, "b")
    if not np.array_equal(ea, eb):
        raise ShapeError("classes use different binning", dimension="bin_edges")
    across = _pairwise_js(a, b)
    iu_a = np.triu_indices(a.shape[0], k=1)
    iu_b = np.triu_indices(b.shape[0], k=1)
    within_a = _pairwise_js(a, a)[iu_a]
    within_b = _pairwise_js(b, b)[iu_b]
    # fsum is exactly rounded, so the averages do not depend on pair order
    return JsRatioReport(
        avg_js_across=math.fsum(across.ravel()) / across.size,
        avg_js_within_a=math.fsum(within_a) / within_a.size,
        avg_js_within_b=math.fsum(within_b) / within_b.size,
    )


def class_histograms(rows, bins, value_range, smoothing=SMOOTHING):
    """One histogram per row (image pixels or feature vector)."""
    return [image_histogram(r, bins, value_range, smoothing) for r in rows]


def augmentation_cosine_distribution(original, augmented, pairing=None):
    """Cosine of each augmented row to its original row.

    ``pairing[i]`` is the original row index of augmented row ``i``; by
    default row ``i`` pairs with row ``i``.
    """
    orig = np.asarray(getattr(original, "values", original), dtype=np.float64)
    aug = np.asarray(getattr(augmented, "values", augmented), dtype=np.float64)
    if orig.shape[1] != aug.shape[1]:
        raise ShapeError(f"feature widths differ: {orig.shape[1]} vs {aug.shape[1]}",
                         dimension="n_features")
    if pairing is None:
        if orig.shape[0] != aug.shape[0]:
            raise ShapeError("identity pairing needs equal row counts", dimension="n_samples")
        pairing = range(aug.shape[0])
    pairing = list(pairing)
    if len(pairing) != aug.shape[0]:
        raise ShapeError(f"pairing has {len(pairing)} entries for {aug.shape[0]} augmented rows",
                         dimension="n_samples")
    out = []
    for i, j in enumerate(pairing):
        if not 0 <= j < orig.shape[0]:
            raise ConfigError(f"pairing entry {i} points at original row {j}, out of range")
        out.append(cosine_similarity(aug[i], orig[j]))
    return out
