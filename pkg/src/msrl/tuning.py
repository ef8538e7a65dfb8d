"""Tuning-parameter selection: pivotal Monte-Carlo quantiles, closed-form
rates, and K-fold cross-validation over a warm-started path.
"""
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .apgd import hybrid_path_fit
from .linalg import center_and_normalize, thin_svd
from .penalties import PenaltyKind, dual_norm

__all__ = [
    "TuneDistribution", "CorollaryConstants", "PathResult",
    "sample_stiefel_uniform", "mc_tune", "quantile", "corollary_lambda",
    "lambda_max", "default_grid", "cross_validate", "fit_path",
]

DEFAULT_LEVELS = (0.5, 0.75, 0.85, 0.95)


@dataclass(frozen=True)
class TuneDistribution:
    """Monte-Carlo draws of ``(c / sqrt(n)) * dual_norm(X' O)``."""

    samples: np.ndarray
    c: float
    kind: PenaltyKind
    n_draws: int
    seed: int
    sorted_samples: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.ndim != 1 or s.size != self.n_draws:
            raise ValueError("samples must be a vector of length n_draws")
        if s.size and s.min() < 0:
            raise ValueError("samples must be non-negative")
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "sorted_samples", np.sort(s))

    def to_csv(self, path):
        np.savetxt(path, self.samples[:, None], fmt="%.17g")


@dataclass(frozen=True)
class CorollaryConstants:
    c: float = 1.01
    c1: float = 1.01
    c2: float = 1.01
    c3: float = 1.01

    def __post_init__(self):
        for name in ("c", "c1", "c2", "c3"):
            if not getattr(self, name) > 1:
                raise ValueError(f"{name} must exceed 1, got {getattr(self, name)}")

    @property
    def c4(self):
        return 4.0 * math.log(7.0 + self.c3)


@dataclass
class PathResult:
    lambdas: np.ndarray
    fits: list
    cv_mean: Optional[np.ndarray] = None
    cv_se: Optional[np.ndarray] = None
    fold_errors: Optional[np.ndarray] = None  # folds x lambdas

    @property
    def best_index(self):
        if self.cv_mean is None:
            raise ValueError("no cross-validation errors on this path")
        return int(np.argmin(self.cv_mean))

    @property
    def best_lambda(self):
        return float(self.lambdas[self.best_index])

    @property
    def one_se_lambda(self):
        """Largest lambda whose mean error is within one SE of the minimum."""
        i = self.best_index
        bound = self.cv_mean[i] + self.cv_se[i]
        ok = np.flatnonzero(self.cv_mean <= bound)
        return float(self.lambdas[ok.min()])


def sample_stiefel_uniform(n, q, rng):
    """Uniform draw from the n x q matrices with orthonormal columns.

    Uses the polar factor ``U V'`` of a standard Gaussian matrix, whose
    distribution is invariant under left and right orthogonal rotations.
    """
    if q < 1 or n < q:
        raise ValueError(f"need n >= q >= 1 for orthonormal columns, got n={n}, q={q}")
    z = rng.standard_normal((n, q))
    u, _, vt = np.linalg.svd(z, full_matrices=False)
    return u @ vt


def mc_tune(data, kind, c=1.01, n_draws=5000, seed=0):
    """Sample the pivotal statistic ``(c / sqrt(n)) * dual_norm(kind, X' O)``.

    ``O`` is uniform on the n x q Stiefel manifold. The result depends on the
    design matrix only, never on the responses.
    """
    kind = PenaltyKind.parse(kind)
    if not c > 1:
        raise ValueError(f"c must exceed 1, got {c}")
    if n_draws < 1:
        raise ValueError("n_draws must be positive")
    n, q = data.n, data.q
    if n < q:
        raise ValueError(f"Monte-Carlo tuning needs n >= q to draw from O(n, q); got n={n}, q={q}")
    rng = np.random.default_rng(seed)
    xt = data.x.T
    scale = c / math.sqrt(n)
    samples = np.empty(n_draws)
    for i in range(n_draws):
        samples[i] = scale * dual_norm(kind, xt @ sample_stiefel_uniform(n, q, rng))
    return TuneDistribution(samples, float(c), kind, int(n_draws), int(seed))


def quantile(dist, level):
    """Type-7 empirical quantile of the draws."""
    if not 0 < level < 1:
        raise ValueError(f"quantile level must lie in (0, 1), got {level}")
    if dist.sorted_samples.size == 0:
        raise ValueError("empty distribution")
    return float(np.quantile(dist.sorted_samples, level, method="linear"))


def corollary_lambda(kind, n, p, q, consts=None, x_spectral_norm=None):
    """Closed-form lambda for each penalty.

    L1: ``c sqrt(2 c1 log(2pq) / (n - 1))``.
    Group: ``c sqrt(4 c2 log(p) / (n - 2)) + c sqrt(q / n)``.
    Nuclear: ``4 c n^{-1/2} ||X|| (sqrt(c4 (p + q) / (n - 2)) + n^{-1/2})``
    with ``c4 = 4 log(7 + c3)``.
    """
    kind = PenaltyKind.parse(kind)
    k = consts or CorollaryConstants()
    if kind is PenaltyKind.L1:
        need = 2 * k.c1 * math.log(2 * p * q) + 1
        if not n > need:
            raise ValueError(f"L1 rate requires n > 2*c1*log(2pq) + 1 = {need:.4g}, got n={n}")
        return k.c * math.sqrt(2 * k.c1 * math.log(2 * p * q) / (n - 1))
    if kind is PenaltyKind.GROUP:
        if n <= 2 or p < 2:
            raise ValueError("group rate requires n > 2 and p >= 2")
        lhs = (math.sqrt(2) - 1) * math.sqrt(2 * k.c2 * math.log(p))
        if not lhs > math.sqrt(math.pi):
            raise ValueError(
                f"group rate requires (sqrt2 - 1) sqrt(2 c2 log p) > sqrt(pi); "
                f"got {lhs:.4g} <= {math.sqrt(math.pi):.4g}; increase c2 or p")
        return k.c * math.sqrt(4 * k.c2 * math.log(p) / (n - 2)) + k.c * math.sqrt(q / n)
    if x_spectral_norm is None or x_spectral_norm <= 0:
        raise ValueError("nuclear rate needs the spectral norm of X")
    if n <= 2:
        raise ValueError("nuclear rate requires n > 2")
    lhs = (math.sqrt(2) - 1) * x_spectral_norm * math.sqrt(2 * math.log(7 + k.c3) * (p + q))
    if not lhs > math.sqrt(n * math.pi):
        raise ValueError(
            f"nuclear rate requires (sqrt2 - 1) ||X|| sqrt(2 log(7 + c3) (p + q)) > sqrt(n pi); "
            f"got {lhs:.4g} <= {math.sqrt(n * math.pi):.4g}")
    return (4 * k.c * x_spectral_norm / math.sqrt(n)
            * (math.sqrt(k.c4 * (p + q) / (n - 2)) + 1 / math.sqrt(n)))


def lambda_max(data, kind):
    """Smallest lambda at which the zero matrix is optimal."""
    if not np.any(data.y):
        return 0.0
    s = thin_svd(data.y)
    r = int(np.sum(s.d > 1e-12 * s.d[0]))
    return dual_norm(kind, data.x.T @ (s.u[:, :r] @ s.v[:, :r].T)) / math.sqrt(data.n)


def default_grid(data, kind, nlambda=100, ratio=1e-4):
    """``nlambda`` log-spaced values from lambda_max down to ``ratio * lambda_max``."""
    top = lambda_max(data, kind)
    if top <= 0:
        raise ValueError("lambda_max is zero: the responses are constant")
    return np.geomspace(top, top * ratio, nlambda)


def fit_path(data, kind, lambdas=None, cfg_admm=None, cfg_apgd=None):
    lambdas = default_grid(data, kind) if lambdas is None else np.asarray(lambdas, float)
    return PathResult(lambdas, hybrid_path_fit(data, kind, lambdas, cfg_admm, cfg_apgd))


def _fold_ids(n, folds, seed):
    rng = np.random.default_rng(seed)
    ids = np.arange(n) % folds
    rng.shuffle(ids)
    return ids


def cross_validate(data, kind, lambdas=None, folds=5, seed=0, cfg_admm=None,
                   cfg_apgd=None, fold_ids=None, x_raw=None, y_raw=None):
    """K-fold cross-validation of the squared prediction error.

    Each training fold is re-centered (and re-normalized when ``data`` is)
    from raw rows; held-out errors are averaged over observations and
    responses. Leave-one-out (``folds = n``) is allowed. Raw rows default to the centered data, which differs from the
    original only by constant shifts absorbed into the intercept.

    Returns the full-data path with ``cv_mean``, ``cv_se`` and per-fold
    errors attached.
    """
    kind = PenaltyKind.parse(kind)
    n = data.n
    if folds < 2 or folds > n:
        raise ValueError(f"need 2 <= folds <= n; got folds={folds}, n={n}")
    lambdas = default_grid(data, kind) if lambdas is None else np.asarray(lambdas, float)
    x_raw = data.x if x_raw is None else np.asarray(x_raw, float)
    y_raw = data.y if y_raw is None else np.asarray(y_raw, float)
    ids = _fold_ids(n, folds, seed) if fold_ids is None else np.asarray(fold_ids)
    errors = np.empty((folds, lambdas.size))
    for f in range(folds):
        test = ids == f
        if test.sum() < 1 or (~test).sum() < 2:
            raise ValueError(f"fold {f} is empty or leaves fewer than 2 training rows")
        train = center_and_normalize(y_raw[~test], x_raw[~test], data.normalized)
        fits = hybrid_path_fit(train, kind, lambdas, cfg_admm, cfg_apgd)
        x_test, y_test = x_raw[test], y_raw[test]
        for j, fit in enumerate(fits):
            resid = y_test - train.predict_raw(fit.b_hat, x_test)
            errors[f, j] = float(np.mean(resid * resid))
    full = fit_path(data, kind, lambdas, cfg_admm, cfg_apgd)
    full.fold_errors = errors
    full.cv_mean = errors.mean(axis=0)
    full.cv_se = errors.std(axis=0, ddof=1) / math.sqrt(folds)
    return full
