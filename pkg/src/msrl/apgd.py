"""Accelerated proximal gradient for the square-root lasso, and the hybrid
path driver that hands over to ADMM once residuals lose rank.

When ``R = Y - X B`` has q non-zero singular values, ``B -> ||R||_*`` is
differentiable with gradient ``-X' U V'`` (``R = U D V'``), so the objective
splits into a smooth loss plus a proximable penalty. Near residuals of
reduced rank the gradient stops being Lipschitz and the method is abandoned.
"""
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .admm import AdmmConfig, FitResult, SolverState, admm_fit, objective, step_bound
from .penalties import PenaltySpec, penalty_value, prox

__all__ = [
    "ApgdConfig", "RankDeficient", "nuclear_residual_gradient", "apgd_fit",
    "hybrid_path_fit", "solve",
]


class RankDeficient(ArithmeticError):
    """Residual matrix lost rank; carries the last accepted iterate."""

    def __init__(self, message, last_good=None):
        super().__init__(message)
        self.last_good = last_good


@dataclass(frozen=True)
class ApgdConfig:
    initial_step: Optional[float] = None  # None: local Lipschitz estimate at the start point
    backtrack_shrink: float = 0.5
    max_iter: int = 10000
    obj_tol: float = 1e-8
    rank_tol_factor: float = 1e-8
    step_collapse: float = 1e-6
    patience: int = 3

    def __post_init__(self):
        if self.initial_step is not None and self.initial_step <= 0:
            raise ValueError("initial_step must be positive")
        if not 0 < self.backtrack_shrink < 1:
            raise ValueError("backtrack_shrink must lie in (0, 1)")
        if self.max_iter < 1 or self.obj_tol <= 0 or self.rank_tol_factor <= 0:
            raise ValueError("max_iter, obj_tol and rank_tol_factor must be positive")


def _residual_svd(data, b, rank_tol):
    resid = data.y - data.x @ b
    n, q = resid.shape
    if n <= q:
        raise RankDeficient(f"n={n} <= q={q}: residual cannot have full column rank")
    u, d, vt = np.linalg.svd(resid, full_matrices=False)
    if not np.all(np.isfinite(d)):
        raise ArithmeticError("non-finite residual")
    if d[0] == 0 or d[-1] <= rank_tol * d[0]:
        raise RankDeficient(f"sigma_q/sigma_1 = {d[-1] / d[0] if d[0] else 0:.3g} "
                            f"<= {rank_tol:g}")
    return u, d, vt


def nuclear_residual_gradient(data, b, rank_tol_factor=1e-8):
    """Gradient of ``B -> ||Y - X B||_*`` at ``b``: ``-X' U V'``.

    Raises RankDeficient when the residual has fewer than q singular values
    above ``rank_tol_factor * sigma_1``.
    """
    u, _, vt = _residual_svd(data, b, rank_tol_factor)
    return -data.x.T @ (u @ vt)


def apgd_fit(data, pen, cfg=None, warm_start=None):
    """FISTA with backtracking and function-value restart.

    Stops when the relative objective change stays below ``cfg.obj_tol`` for
    ``cfg.patience`` consecutive accepted steps. Raises RankDeficient when an
    accepted iterate's residual fails the rank test or when backtracking
    drives the step below ``cfg.step_collapse`` times its starting value.
    """
    cfg = cfg or ApgdConfig()
    X = data.x
    sqrt_n = math.sqrt(data.n)
    lam = pen.lam
    rank_tol = cfg.rank_tol_factor

    b = np.zeros((data.p, data.q)) if warm_start is None else np.array(warm_start, dtype=float)

    def smooth(point):
        u, d, vt = _residual_svd(data, point, rank_tol)
        return float(d.sum()) / sqrt_n, -(X.T @ (u @ vt)) / sqrt_n, d

    f_b, g_b, d_b = smooth(b)
    if cfg.initial_step is not None:
        t = cfg.initial_step
    else:
        # curvature of the nuclear norm scales like 1/sigma_q
        t = sqrt_n * d_b[-1] / step_bound(data, 0.0)
    t0 = t
    obj_b = f_b + lam * penalty_value(pen.kind, b)
    y, f_y, g_y = b, f_b, g_b
    theta = 1.0
    quiet = 0
    converged = False
    history = [obj_b]
    k = 0
    for k in range(1, cfg.max_iter + 1):
        while True:
            cand = prox(pen.kind, y - t * g_y, t * lam)
            step = cand - y
            try:
                f_c, g_c, _ = smooth(cand)
            except RankDeficient:
                f_c = math.inf
            if f_c <= f_y + float(np.sum(g_y * step)) + float(np.sum(step * step)) / (2 * t) + 1e-15 * abs(f_y):
                break
            t *= cfg.backtrack_shrink
            if t < cfg.step_collapse * t0:
                raise RankDeficient(
                    f"step size collapsed at iteration {k}; residual is near rank deficiency",
                    last_good=b)
        obj_c = f_c + lam * penalty_value(pen.kind, cand)
        if not math.isfinite(obj_c):
            raise ArithmeticError(f"non-finite objective at iteration {k}")
        if obj_c > obj_b and y is not b:
            # momentum overshoot: restart from the last accepted point
            y, f_y, g_y, theta = b, f_b, g_b, 1.0
            continue
        change = abs(obj_b - obj_c) / max(abs(obj_c), 1e-300)
        theta_next = (1 + math.sqrt(1 + 4 * theta * theta)) / 2
        momentum = (theta - 1) / theta_next
        y = cand + momentum * (cand - b) if momentum > 0 else cand
        theta = theta_next
        b, f_b, g_b, obj_b = cand, f_c, g_c, obj_c
        history.append(obj_b)
        if y is b:
            f_y, g_y = f_b, g_b
        else:
            try:
                f_y, g_y, _ = smooth(y)
            except RankDeficient:
                y, f_y, g_y, theta = b, f_b, g_b, 1.0
        quiet = quiet + 1 if change < cfg.obj_tol else 0
        if quiet >= cfg.patience:
            converged = True
            break

    return FitResult(
        b_hat=b, objective=objective(data, pen, b), iterations=k,
        converged=converged, solver="apgd", lam=lam,
        primal_residuals=history, step=t,
    )


def _admm_state_from(data, b, rho):
    """ADMM warm start at coefficients ``b`` with the smooth-case dual ``U V'``."""
    resid = data.y - data.x @ b
    u, _, vt = np.linalg.svd(resid, full_matrices=False)
    return SolverState(b.copy(), resid, u @ vt, rho, 0)


def hybrid_path_fit(data, kind, lambdas, cfg_admm=None, cfg_apgd=None):
    """Warm-started fits over a strictly descending grid.

    APGD is used until its first RankDeficient (or non-convergence); that
    lambda and every smaller one are then solved with ADMM. When ``n <= q``
    the whole path uses ADMM.
    """
    lambdas = np.asarray(lambdas, dtype=float)
    if lambdas.ndim != 1 or lambdas.size == 0:
        raise ValueError("lambdas must be a non-empty 1-d grid")
    if np.any(lambdas <= 0) or np.any(np.diff(lambdas) >= 0):
        raise ValueError("lambdas must be positive and strictly descending")
    cfg_admm = cfg_admm or AdmmConfig()
    cfg_apgd = cfg_apgd or ApgdConfig()
    eta = step_bound(data, cfg_admm.eta_pad)
    use_apgd = data.n > data.q
    results = []
    b_prev = np.zeros((data.p, data.q))
    state = None
    for lam in lambdas:
        pen = PenaltySpec(kind, lam)
        if use_apgd:
            try:
                fit = apgd_fit(data, pen, cfg_apgd, warm_start=b_prev)
            except RankDeficient:
                fit = None
            except ArithmeticError as exc:
                raise ArithmeticError(f"lambda={lam:g}: {exc}") from exc
            if fit is not None and fit.converged:
                results.append(fit)
                b_prev = fit.b_hat
                continue
            use_apgd = False
            state = _admm_state_from(data, b_prev, cfg_admm.rho0)
        try:
            fit = admm_fit(data, pen, cfg_admm, warm_start=state, eta=eta)
        except ArithmeticError as exc:
            raise ArithmeticError(f"lambda={lam:g}: {exc}") from exc
        state = fit.state
        b_prev = fit.b_hat
        results.append(fit)
    return results


def solve(data, pen, solver="auto", cfg_admm=None, cfg_apgd=None):
    """Single-lambda fit. ``auto`` tries APGD when ``n > q`` and falls back
    to ADMM on rank deficiency or non-convergence.
    """
    if solver not in ("auto", "admm", "apgd"):
        raise ValueError(f"unknown solver {solver!r}; expected auto, admm or apgd")
    if solver == "apgd" or (solver == "auto" and data.n > data.q):
        try:
            fit = apgd_fit(data, pen, cfg_apgd)
            if fit.converged or solver == "apgd":
                return fit
        except RankDeficient:
            if solver == "apgd":
                raise
    return admm_fit(data, pen, cfg_admm)
