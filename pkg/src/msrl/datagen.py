"""Simulation designs: error covariance models, coefficient schemes, and
evaluation metrics.
"""
import math
from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np

from .linalg import Dataset, center_and_normalize, nuclear_norm
from .verification import psd_power

__all__ = [
    "SimDesign", "SimInstance", "Metrics", "make_sigma", "make_beta",
    "simulate", "evaluate", "haar_orthogonal", "ar1_design",
]

MODELS = ("compound", "condition", "factor")
ERRORS = ("normal", "t5")
SCHEMES = ("elementwise", "rowwise")
AR_RHO = 0.5


@dataclass(frozen=True)
class SimDesign:
    """One simulation setting.

    ``model`` is ``compound`` (parameter xi), ``condition`` (parameter cond)
    or ``factor`` (parameter r). With ``t5_covariance`` the t errors are
    rescaled so their covariance, rather than their shape, equals Sigma.
    """

    n: int
    p: int
    q: int
    model: str = "compound"
    param: float = 0.5
    errors: str = "normal"
    scheme: str = "elementwise"
    seed: int = 0
    t5_covariance: bool = False

    def __post_init__(self):
        if min(self.n, self.p, self.q) < 1:
            raise ValueError("n, p and q must be positive")
        if self.model not in MODELS:
            raise ValueError(f"unknown model {self.model!r}; expected one of {MODELS}")
        if self.errors not in ERRORS:
            raise ValueError(f"unknown error law {self.errors!r}; expected one of {ERRORS}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown beta scheme {self.scheme!r}; expected one of {SCHEMES}")
        _check_model(self.model, self.param, self.q)

    @classmethod
    def from_dict(cls, d):
        known = {k: d[k] for k in cls.__dataclass_fields__ if k in d}
        extra = set(d) - set(known)
        if extra:
            raise ValueError(f"unknown design fields: {sorted(extra)}")
        return cls(**known)

    def to_dict(self):
        return asdict(self)

    def with_seed(self, seed):
        return SimDesign(**{**asdict(self), "seed": int(seed)})


class SimInstance(NamedTuple):
    data: Dataset
    validation: Dataset
    beta_star: np.ndarray
    sigma_star: np.ndarray
    x_train: np.ndarray
    y_train: np.ndarray
    x_val: np.ndarray
    y_val: np.ndarray


class Metrics(NamedTuple):
    frob_sq_error: float
    tpr: float
    fpr: float
    weighted_pred_error: float
    nuclear_pred_error: float


def _check_model(model, param, q):
    if model == "compound" and not 0 <= param < 1:
        raise ValueError(f"compound symmetry needs 0 <= xi < 1, got {param}")
    if model == "condition" and not param >= 1:
        raise ValueError(f"condition number must be >= 1, got {param}")
    if model == "factor" and not (param == int(param) and 1 <= param <= q):
        raise ValueError(f"factor count must be an integer in [1, q], got {param}")


def haar_orthogonal(q, rng):
    """Haar-distributed q x q orthogonal matrix (QR with sign-fixed R)."""
    z = rng.standard_normal((q, q))
    qm, r = np.linalg.qr(z)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return qm * signs


def make_sigma(model, param, q, rng=None):
    """Error covariance for the three simulation models."""
    _check_model(model, param, q)
    if model == "compound":
        return 3.0 * ((1 - param) * np.eye(q) + param * np.ones((q, q)))
    rng = rng if rng is not None else np.random.default_rng(0)
    if model == "condition":
        o = haar_orthogonal(q, rng)
        gamma = np.linspace(1.0, 1.0 / param, q)
        s = 2.0 * (o * gamma) @ o.T
        return (s + s.T) / 2
    r_tilde = rng.standard_normal((int(param), q))
    k = math.sqrt(1.45) / np.linalg.norm(r_tilde, axis=0)
    r = r_tilde * k
    s = r.T @ r + 0.05 * np.eye(q)
    return (s + s.T) / 2


def make_beta(scheme, p, q, rng):
    """Sparse coefficients: five random entries per column, or five random rows."""
    if p < 5:
        raise ValueError(f"coefficient schemes need p >= 5, got p={p}")
    beta = np.zeros((p, q))
    if scheme == "elementwise":
        g = rng.standard_normal((p, q))
        for k in range(q):
            rows = rng.choice(p, size=5, replace=False)
            beta[rows, k] = g[rows, k]
        return beta
    if scheme == "rowwise":
        rows = rng.choice(p, size=5, replace=False)
        beta[rows] = 0.1 * rng.standard_normal((5, q))
        return beta
    raise ValueError(f"unknown beta scheme {scheme!r}; expected one of {SCHEMES}")


def ar1_design(n, p, rng, rho=AR_RHO):
    """Rows from N(0, S) with ``S[j, k] = rho ** |j - k|`` via the AR(1) recursion."""
    z = rng.standard_normal((n, p))
    x = np.empty((n, p))
    x[:, 0] = z[:, 0]
    c = math.sqrt(1 - rho * rho)
    for j in range(1, p):
        x[:, j] = rho * x[:, j - 1] + c * z[:, j]
    return x


def _errors(design, sigma_half, n, rng):
    z = rng.standard_normal((n, design.q)) @ sigma_half
    if design.errors == "normal":
        return z
    w = rng.chisquare(5, size=n)
    e = z * np.sqrt(5.0 / w)[:, None]
    if design.t5_covariance:
        e *= math.sqrt(3.0 / 5.0)
    return e


def simulate(design):
    """Training and independent validation sets of size n each."""
    rng = np.random.default_rng(design.seed)
    sigma = make_sigma(design.model, design.param, design.q, rng)
    beta = make_beta(design.scheme, design.p, design.q, rng)
    sigma_half = psd_power(sigma, 0.5)
    sets = []
    for _ in range(2):
        x = ar1_design(design.n, design.p, rng)
        y = x @ beta + _errors(design, sigma_half, design.n, rng)
        sets.append((x, y))
    (xt, yt), (xv, yv) = sets
    return SimInstance(center_and_normalize(yt, xt), center_and_normalize(yv, xv),
                       beta, sigma, xt, yt, xv, yv)


def evaluate(b_raw, instance, scheme="elementwise", threshold=1e-8, y_pred=None,
             nuclear_normalizer=1000.0):
    """Estimation, selection and validation-prediction metrics.

    ``b_raw`` is on the raw predictor scale. Selection is judged on entries
    for the elementwise scheme and on rows for the rowwise scheme. Predictions
    default to the training fit's intercept plus ``X_val @ b_raw``.
    """
    b_raw = np.asarray(b_raw, dtype=float)
    beta = instance.beta_star
    if b_raw.shape != beta.shape:
        raise ValueError(f"coefficient shape {b_raw.shape} != {beta.shape}")
    frob = float(np.sum((b_raw - beta) ** 2))
    if scheme == "rowwise":
        est = np.abs(b_raw).max(axis=1) > threshold
        true = np.abs(beta).max(axis=1) > 0
    else:
        est = np.abs(b_raw) > threshold
        true = beta != 0
    tpr = float(np.sum(est & true) / max(true.sum(), 1))
    fpr = float(np.sum(est & ~true) / max((~true).sum(), 1))
    if y_pred is None:
        y_pred = instance.data.predict_raw(instance.data.column_scales[:, None] * b_raw,
                                           instance.x_val)
    resid = instance.y_val - y_pred
    sd = instance.y_val.std(axis=0, ddof=1)
    n_val, q = resid.shape
    wpe = float(np.sum((resid / sd) ** 2) / (n_val * q))
    npe = nuclear_norm(resid) / nuclear_normalizer
    return Metrics(frob, tpr, fpr, wpe, npe)
