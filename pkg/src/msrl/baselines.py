"""Comparator estimators: penalized least squares, the column-wise
calibrated (square-root) estimator, and a post-selection SUR refit.
"""
import math
from dataclasses import dataclass

import numpy as np

from .admm import AdmmConfig, FitResult, admm_fit, step_bound
from .linalg import Dataset
from .penalties import PenaltyKind, PenaltySpec, dual_norm, penalty_value, prox
from .tuning import lambda_max
from .verification import subgradient_distance

__all__ = [
    "PlsConfig", "pls_fit", "pls_path", "pls_lambda_max", "calibrated_fit",
    "calibrated_path", "calibrated_lambda_max", "refit", "UnsupportedPenalty",
]


class UnsupportedPenalty(ValueError):
    """The estimator is only defined for separable penalties."""


@dataclass(frozen=True)
class PlsConfig:
    kkt_tol: float = 1e-6
    max_iter: int = 100000
    check_every: int = 5


def pls_objective(data, pen, b):
    resid = data.y - data.x @ b
    return float(np.sum(resid * resid)) / (2 * data.n) + pen.lam * penalty_value(pen.kind, b)


def pls_lambda_max(data, kind):
    """Smallest lambda with a zero least-squares solution."""
    return dual_norm(kind, data.x.T @ data.y) / data.n


def _pls_kkt(data, pen, b, xtx, xty):
    g = (xty - xtx @ b) / data.n
    return subgradient_distance(pen.kind, g, b, pen.lam)


def pls_fit(data, pen, cfg=None, warm_start=None, lipschitz=None):
    """Minimize ``(1/2n) ||Y - X B||_F^2 + lam g(B)`` by FISTA.

    Uses the constant step ``n / ||X||^2`` with function-value restart and
    stops once the KKT residual of the gradient ``X'(Y - X B) / n`` falls
    below ``cfg.kkt_tol``.
    """
    cfg = cfg or PlsConfig()
    n = data.n
    xtx = data.x.T @ data.x
    xty = data.x.T @ data.y
    if lipschitz is None:
        lipschitz = step_bound(data, 0.0) / n
    t = 1.0 / max(lipschitz, 1e-300)
    b = np.zeros((data.p, data.q)) if warm_start is None else np.array(warm_start, float)

    def grad(point):
        return (xtx @ point - xty) / n

    def obj(point):
        return pls_objective(data, pen, point)

    y, theta = b, 1.0
    obj_b = obj(b)
    converged = _pls_kkt(data, pen, b, xtx, xty) <= cfg.kkt_tol
    k = 0
    while not converged and k < cfg.max_iter:
        k += 1
        cand = prox(pen.kind, y - t * grad(y), t * pen.lam)
        obj_c = obj(cand)
        if obj_c > obj_b and y is not b:
            y, theta = b, 1.0
            continue
        theta_next = (1 + math.sqrt(1 + 4 * theta * theta)) / 2
        momentum = (theta - 1) / theta_next
        y = cand + momentum * (cand - b) if momentum > 0 else cand
        theta = theta_next
        b, obj_b = cand, obj_c
        if k % cfg.check_every == 0:
            converged = _pls_kkt(data, pen, b, xtx, xty) <= cfg.kkt_tol
    return FitResult(b_hat=b, objective=obj_b, iterations=k, converged=converged,
                     solver="pls", lam=pen.lam)


def pls_path(data, kind, lambdas, cfg=None):
    """Warm-started PLS fits over a grid."""
    lip = step_bound(data, 0.0) / data.n
    fits, b = [], None
    for lam in lambdas:
        fit = pls_fit(data, PenaltySpec(kind, lam), cfg, warm_start=b, lipschitz=lip)
        fits.append(fit)
        b = fit.b_hat
    return fits


def _column(data, k):
    return Dataset(data.y[:, [k]], data.x, data.normalized, data.column_scales,
                   data.x_mean, data.y_mean[[k]])


def calibrated_lambda_max(data):
    """Smallest common lambda at which every univariate fit is zero."""
    return max(lambda_max(_column(data, k), "lasso") for k in range(data.q))


def _require_l1(kind):
    if PenaltyKind.parse(kind) is not PenaltyKind.L1:
        raise UnsupportedPenalty("the calibrated estimator is implemented for the separable L1 penalty only")


def calibrated_fit(data, lam, kind="lasso", cfg=None):
    """Sum over responses of univariate square-root lasso fits with a common lambda."""
    _require_l1(kind)
    cfg = cfg or AdmmConfig()
    eta = step_bound(data, cfg.eta_pad)
    pen = PenaltySpec(kind, lam)
    cols = [admm_fit(_column(data, k), pen, cfg, eta=eta) for k in range(data.q)]
    return _stack(data, pen, cols)


def _stack(data, pen, cols):
    b = np.hstack([c.b_hat for c in cols])
    obj = sum(c.objective for c in cols)
    return FitResult(b_hat=b, objective=obj, iterations=sum(c.iterations for c in cols),
                     converged=all(c.converged for c in cols), solver="calibrated",
                     lam=pen.lam)


def calibrated_path(data, lambdas, kind="lasso", cfg=None):
    """Calibrated fits over a descending grid, warm-started per response."""
    _require_l1(kind)
    cfg = cfg or AdmmConfig()
    eta = step_bound(data, cfg.eta_pad)
    states = [None] * data.q
    fits = []
    for lam in lambdas:
        pen = PenaltySpec(kind, lam)
        cols = []
        for k in range(data.q):
            c = admm_fit(_column(data, k), pen, cfg, warm_start=states[k], eta=eta)
            states[k] = c.state
            cols.append(c)
        fits.append(_stack(data, pen, cols))
    return fits


def refit(data, b_hat, ridge=1e-6, max_alt=100, tol=1e-6):
    """Seemingly-unrelated-regression refit on the support of ``b_hat``.

    Alternates a generalized least squares solve for the supported entries,
    weighted by the inverse of the current residual covariance plus
    ``ridge * I``, with the covariance update ``R'R / n``. The first solve
    uses identity weights. Entries off the support stay exactly zero.
    """
    b_hat = np.asarray(b_hat, dtype=float)
    support = b_hat != 0
    n, q = data.n, data.q
    per_response = support.sum(axis=0)
    if np.any(per_response >= n):
        k = int(np.argmax(per_response))
        raise ValueError(f"response {k} has {per_response[k]} selected predictors >= n={n}; "
                         "refit needs a sparser fit (larger lambda)")
    out = np.zeros_like(b_hat)
    if not support.any():
        return out
    rows, cols = np.nonzero(support)
    xtx = data.x.T @ data.x
    xty = data.x.T @ data.y
    gram = xtx[np.ix_(rows, rows)]
    omega = np.eye(q)
    prev = None
    for _ in range(max_alt):
        a = gram * omega[np.ix_(cols, cols)]
        rhs = (xty @ omega)[rows, cols]
        out[rows, cols] = np.linalg.lstsq(a, rhs, rcond=None)[0]
        if prev is not None and np.linalg.norm(out - prev) < tol:
            break
        prev = out.copy()
        resid = data.y - data.x @ out
        sigma = resid.T @ resid / n + ridge * np.eye(q)
        omega = np.linalg.inv(sigma)
        omega = (omega + omega.T) / 2
    return out
