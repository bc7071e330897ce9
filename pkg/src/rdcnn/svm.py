"""One-vs-rest L2-regularized L2-loss linear SVM.

Each class ``c`` gets a weight vector ``w`` over bias-augmented examples
``[x, B]`` minimizing

    f(w) = 0.5 * ||w||^2 + C * sum_i max(0, 1 - y_i * w.[x_i, B])^2

with ``y_i = +1`` for class ``c`` and ``-1`` otherwise. The bias weight is
regularized like any other coordinate, as liblinear does with ``-B``.

The solver is a trust-region Newton method with truncated conjugate
gradient steps (Lin, Weng & Keerthi, JMLR 2008), stopping when
``||grad f(w)|| <= tol * max(min(n_pos, n_neg), 1) / n * ||grad f(0)||``.
"""

import dataclasses
import logging
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .errors import ConfigError, NonFiniteError, ShapeError

log = logging.getLogger(__name__)

# C defaults by dataset name; used by the CLI, never applied implicitly here.
DEFAULT_C = {
    "mnist": 0.01,
    "mini-imagenet": 0.01,
    "cifar10": 0.5,
    "cifar100": 0.5,
    "stl10": 0.5,
}


@dataclasses.dataclass(frozen=True)
class SvmConfig:
    c: float = 1.0
    bias: float = 1.0
    tolerance: float = 1e-2
    max_iterations: int = 1000

    def __post_init__(self):
        if not self.c > 0:
            raise ConfigError(f"C must be positive, got {self.c}")
        if not self.tolerance > 0:
            raise ConfigError(f"tolerance must be positive, got {self.tolerance}")
        if self.max_iterations < 1:
            raise ConfigError(f"max_iterations must be >= 1, got {self.max_iterations}")


@dataclasses.dataclass
class SvmModel:
    """Per-class weights; row ``r`` scores class ``classes[r]``.

    ``weights`` has shape ``(n_classes, n_features + 1)``; the last column
    multiplies the bias value ``bias``.
    """

    classes: np.ndarray
    weights: np.ndarray
    bias: float = 1.0
    converged: np.ndarray | None = None
    iterations: np.ndarray | None = None

    def __post_init__(self):
        self.classes = np.asarray(self.classes, dtype=np.int64)
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.ndim != 2 or self.weights.shape[0] != self.classes.size:
            raise ShapeError(
                f"weights shape {self.weights.shape} does not match {self.classes.size} classes",
                dimension="classes",
            )
        if not np.isfinite(self.weights).all():
            raise NonFiniteError("model weights must be finite")

    @property
    def n_features(self):
        return self.weights.shape[1] - 1


def objective(w, x, y, c):
    """Primal objective for augmented examples ``x`` and labels ``y`` in {-1, +1}."""
    margin = np.maximum(0.0, 1.0 - y * (x @ w))
    return 0.5 * float(w @ w) + c * float(margin @ margin)


class _Problem:
    def __init__(self, x, y, c):
        self.x, self.y, self.c = x, y, c
        self.active = None

    def fun(self, w):
        z = self.y * (self.x @ w)
        d = 1.0 - z
        self.active = d > 0
        self.z = z
        return 0.5 * float(w @ w) + self.c * float(d[self.active] @ d[self.active])

    # inactive rows are zeroed by the mask rather than sliced out, which
    # avoids copying the data matrix on every product
    def grad(self, w):
        resid = np.where(self.active, self.y * (self.z - 1.0), 0.0)
        return w + 2.0 * self.c * (self.x.T @ resid)

    def hess_vec(self, v):
        xv = np.where(self.active, self.x @ v, 0.0)
        return v + 2.0 * self.c * (self.x.T @ xv)


def _trcg(prob, delta, g):
    s = np.zeros_like(g)
    r = -g
    d = r.copy()
    rtr = float(r @ r)
    cgtol = 0.1 * np.sqrt(float(g @ g))
    while np.sqrt(rtr) > cgtol:
        hd = prob.hess_vec(d)
        alpha = rtr / float(d @ hd)
        s += alpha * d
        if np.sqrt(float(s @ s)) > delta:
            # step left the trust region: back up and move to the boundary
            s -= alpha * d
            std, sts, dtd = float(s @ d), float(s @ s), float(d @ d)
            dsq = delta * delta
            rad = np.sqrt(std * std + dtd * (dsq - sts))
            alpha = (dsq - sts) / (std + rad) if std >= 0 else (rad - std) / dtd
            s += alpha * d
            r -= alpha * hd
            break
        r -= alpha * hd
        rtr_new = float(r @ r)
        d = r + (rtr_new / rtr) * d
        rtr = rtr_new
    return s, r


def tron(prob, w, eps, max_iter):
    """Minimize ``prob`` from ``w``. Returns (w, iterations, converged)."""
    eta0, eta1, eta2 = 1e-4, 0.25, 0.75
    sigma1, sigma2, sigma3 = 0.25, 0.5, 4.0

    f = prob.fun(w)
    g = prob.grad(w)
    gnorm0 = np.linalg.norm(g)
    delta = gnorm0
    if gnorm0 <= eps * gnorm0 or gnorm0 == 0.0:
        return w, 0, True
    it = 1
    while it <= max_iter:
        s, r = _trcg(prob, delta, g)
        w_new = w + s
        gs = float(g @ s)
        prered = -0.5 * (gs - float(s @ r))
        f_new = prob.fun(w_new)
        actred = f - f_new
        snorm = np.linalg.norm(s)
        if it == 1:
            delta = min(delta, snorm)
        if f_new - f - gs <= 0:
            alpha = sigma3
        else:
            alpha = max(sigma1, -0.5 * (gs / (f_new - f - gs)))
        if actred < eta0 * prered:
            delta = min(max(alpha, sigma1) * snorm, sigma2 * delta)
        elif actred < eta1 * prered:
            delta = max(sigma1 * delta, min(alpha * snorm, sigma2 * delta))
        elif actred < eta2 * prered:
            delta = max(sigma1 * delta, min(alpha * snorm, sigma3 * delta))
        else:
            delta = max(delta, min(alpha * snorm, sigma3 * delta))

        if actred > eta0 * prered:
            it += 1
            w, f = w_new, f_new
            g = prob.grad(w)
            if np.linalg.norm(g) <= eps * gnorm0:
                return w, it - 1, True
        else:
            # rejected step: restore the active set of the current w
            prob.fun(w)
        if f < -1.0e32:
            break
        if abs(actred) <= 0 and prered <= 0:
            break
        if abs(actred) <= 1.0e-12 * abs(f) and abs(prered) <= 1.0e-12 * abs(f):
            break
    return w, it - 1, False


def _augment(values, bias):
    x = np.asarray(values, dtype=np.float64)
    return np.hstack([x, np.full((x.shape[0], 1), float(bias))])


def _check_finite(values):
    if not np.isfinite(values).all():
        bad = np.argwhere(~np.isfinite(values))[0]
        raise NonFiniteError(f"non-finite feature at row {bad[0]}, column {bad[1]}")


def train_binary(x_aug, y, config):
    """Train one binary problem on augmented features; returns (w, iterations, converged)."""
    n_pos = int((y > 0).sum())
    n_neg = y.size - n_pos
    eps = config.tolerance * max(min(n_pos, n_neg), 1) / y.size
    prob = _Problem(x_aug, y.astype(np.float64), config.c)
    return tron(prob, np.zeros(x_aug.shape[1]), eps, config.max_iterations)


def svm_train(features, labels=None, config=None, *, threads=1):
    """Fit one-vs-rest models. ``features`` is a FeatureMatrix or a 2-D array."""
    config = config or SvmConfig()
    values = getattr(features, "values", features)
    if labels is None:
        labels = getattr(features, "labels", None)
    if labels is None:
        raise ShapeError("training requires labels", dimension="labels")
    values = np.asarray(values)
    labels = np.asarray(labels, dtype=np.int64)
    if values.ndim != 2 or labels.shape != (values.shape[0],):
        raise ShapeError(f"{labels.size} labels for feature matrix of shape {values.shape}",
                         dimension="n_samples")
    if values.shape[0] < 2:
        raise ShapeError("training requires at least 2 samples", dimension="n_samples")
    _check_finite(values)
    classes = np.unique(labels)
    if classes.size < 2:
        raise ConfigError(f"training requires at least 2 classes, got {classes.tolist()}")
    x_aug = _augment(values, config.bias)

    def fit(cls):
        y = np.where(labels == cls, 1.0, -1.0)
        return train_binary(x_aug, y, config)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(fit, classes))
    else:
        results = [fit(cls) for cls in classes]
    weights = np.stack([r[0] for r in results])
    iterations = np.array([r[1] for r in results])
    converged = np.array([r[2] for r in results])
    if not converged.all():
        log.warning("solver hit max_iterations for classes %s", classes[~converged].tolist())
    return SvmModel(classes, weights, config.bias, converged, iterations)


def svm_discriminants(model, features):
    """``(n_samples, n_classes)`` matrix of ``w_c . [x_i, B]``; columns follow ``model.classes``."""
    values = np.asarray(getattr(features, "values", features), dtype=np.float64)
    if values.ndim != 2 or values.shape[1] != model.n_features:
        raise ShapeError(
            f"features have width {values.shape[-1]}, model expects {model.n_features}",
            dimension="n_features",
        )
    return values @ model.weights[:, :-1].T + model.bias * model.weights[:, -1]


def predict_topk(discriminants, k):
    """Column indices of the ``k`` largest scores per row, best first.

    Ties go to the lower column index.
    """
    scores = np.asarray(discriminants, dtype=np.float64)
    if scores.ndim != 2:
        raise ShapeError("discriminants must be 2-D", dimension="ndim")
    n_classes = scores.shape[1]
    if not 1 <= k <= n_classes:
        raise ConfigError(f"k must be in [1, {n_classes}], got {k}")
    # stable sort on the negated scores keeps equal scores in index order
    return np.argsort(-scores, axis=1, kind="stable")[:, :k]


def predict(model, features):
    return model.classes[predict_topk(svm_discriminants(model, features), 1)[:, 0]]


def topk_accuracy(discriminants, labels, k, classes=None):
    """Fraction of rows whose true label is among the top ``k``.

    ``classes`` maps discriminant columns to labels (defaults to 0..n-1).
    """
    top = predict_topk(discriminants, k)
    labels = np.asarray(labels)
    if labels.shape != (top.shape[0],):
        raise ShapeError(f"{labels.size} labels for {top.shape[0]} samples", dimension="n_samples")
    if top.shape[0] == 0:
        return 0.0
    if classes is not None:
        top = np.asarray(classes)[top]
    return float((top == labels[:, None]).any(axis=1).mean())
