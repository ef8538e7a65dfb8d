"""Dense matrix kernels and data preparation.

Matrices are plain 2-d float ``numpy.ndarray`` objects (C order).
"""
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.linalg

__all__ = [
    "ThinSvd", "SvdError", "Dataset", "DataError",
    "thin_svd", "nuclear_norm", "spectral_norm", "frobenius_norm",
    "center_and_normalize", "read_matrix_csv", "write_matrix_csv",
]


class SvdError(ArithmeticError):
    """Raised when the SVD fails to converge with every available driver."""

    def __init__(self, message, attempts):
        super().__init__(f"{message} (after {attempts} attempts)")
        self.attempts = attempts


class DataError(ValueError):
    """Malformed or degenerate input data."""


class ThinSvd(NamedTuple):
    u: np.ndarray
    d: np.ndarray
    v: np.ndarray


def as_matrix(a, name="matrix"):
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a.reshape(-1, 1)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise DataError(f"{name} must be a non-empty 2-d array, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise DataError(f"{name} has non-finite entries")
    return a


def _raw_svd(a):
    # gesdd first, gesvd as fallback; the latter is slower but more robust
    try:
        return np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError:
        pass
    try:
        return scipy.linalg.svd(a, full_matrices=False, lapack_driver="gesvd")
    except np.linalg.LinAlgError as exc:
        raise SvdError(f"SVD of {a.shape} matrix did not converge", attempts=2) from exc


def thin_svd(a):
    """Thin SVD ``a = u @ diag(d) @ v.T`` with a deterministic sign convention.

    Each left singular vector is flipped so that its largest-magnitude entry
    is positive; the matching right singular vector is flipped with it.
    """
    a = as_matrix(a)
    u, d, vt = _raw_svd(a)
    v = vt.T
    idx = np.argmax(np.abs(u), axis=0)
    signs = np.sign(u[idx, np.arange(u.shape[1])])
    signs[signs == 0] = 1.0
    return ThinSvd(u * signs, d, v * signs)


def singular_values(a):
    try:
        return np.linalg.svd(a, compute_uv=False)
    except np.linalg.LinAlgError:
        return scipy.linalg.svd(a, compute_uv=False, lapack_driver="gesvd")


def nuclear_norm(a):
    return float(np.sum(singular_values(np.asarray(a, dtype=float))))


def spectral_norm(a):
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        return 0.0
    return float(singular_values(a)[0])


def frobenius_norm(a):
    return float(np.linalg.norm(a))


@dataclass(frozen=True)
class Dataset:
    """Centered responses ``y`` (n x q) and centered predictors ``x`` (n x p).

    ``x_mean``/``y_mean`` are the raw column means removed during centering
    and ``column_scales`` the divisors applied to the centered predictors, so
    ``x_raw = x * column_scales + x_mean``.
    """

    y: np.ndarray
    x: np.ndarray
    normalized: bool
    column_scales: np.ndarray
    x_mean: np.ndarray = field(default=None)
    y_mean: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.x_mean is None:
            object.__setattr__(self, "x_mean", np.zeros(self.p))
        if self.y_mean is None:
            object.__setattr__(self, "y_mean", np.zeros(self.q))

    @property
    def n(self):
        return self.y.shape[0]

    @property
    def p(self):
        return self.x.shape[1]

    @property
    def q(self):
        return self.y.shape[1]

    @classmethod
    def from_centered(cls, y, x):
        """Wrap matrices that are already centered; no scaling is recorded."""
        y = as_matrix(y, "y")
        x = as_matrix(x, "x")
        if y.shape[0] != x.shape[0]:
            raise DataError(f"row mismatch: y has {y.shape[0]} rows, x has {x.shape[0]}")
        return cls(y, x, False, np.ones(x.shape[1]))

    def raw_coef(self, b):
        """Map coefficients fitted on ``x`` back to the raw predictor scale."""
        return np.asarray(b) / self.column_scales[:, None]

    def intercept(self, b):
        """Intercept ``y_mean - raw_coef(b)' x_mean`` for raw-scale prediction."""
        return self.y_mean - self.x_mean @ self.raw_coef(b)

    def predict_raw(self, b, x_raw):
        x_raw = np.asarray(x_raw, dtype=float)
        return x_raw @ self.raw_coef(b) + self.intercept(b)

    def transform_x(self, x_raw):
        """Apply this dataset's centering and scaling to new predictor rows."""
        return (np.asarray(x_raw, dtype=float) - self.x_mean) / self.column_scales

    def subset(self, rows):
        """Rows of the centered data, re-wrapped without re-centering."""
        return Dataset(self.y[rows], self.x[rows], self.normalized,
                       self.column_scales, self.x_mean, self.y_mean)


def center_and_normalize(y_raw, x_raw, normalize=True):
    """Center both matrices column-wise; optionally scale predictor columns
    to Euclidean norm ``sqrt(n)``.
    """
    y_raw = as_matrix(y_raw, "y")
    x_raw = as_matrix(x_raw, "x")
    n = y_raw.shape[0]
    if x_raw.shape[0] != n:
        raise DataError(f"row mismatch: y has {n} rows, x has {x_raw.shape[0]}")
    if n < 2:
        raise DataError("need at least 2 observations")
    y_mean = y_raw.mean(axis=0)
    x_mean = x_raw.mean(axis=0)
    y = y_raw - y_mean
    x = x_raw - x_mean
    scales = np.ones(x.shape[1])
    if normalize:
        norms = np.linalg.norm(x, axis=0)
        # relative test so that round-off in a constant column still counts as zero
        tiny = norms <= 1e-12 * max(1.0, np.abs(x_raw).max()) * np.sqrt(n)
        if np.any(tiny):
            j = int(np.flatnonzero(tiny)[0])
            raise DataError(f"predictor column {j} has zero variance; cannot normalize")
        scales = norms / np.sqrt(n)
        x = x / scales
    return Dataset(y, x, bool(normalize), scales, x_mean, y_mean)


def read_matrix_csv(path):
    """Headerless comma-separated reals, one matrix row per line."""
    try:
        a = np.loadtxt(path, delimiter=",", ndmin=2)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    except ValueError as exc:
        raise DataError(f"{path} is not a numeric CSV matrix: {exc}") from exc
    return as_matrix(a, str(path))


def write_matrix_csv(path, a):
    np.savetxt(path, np.atleast_2d(np.asarray(a, dtype=float)), delimiter=",", fmt="%.17g")
