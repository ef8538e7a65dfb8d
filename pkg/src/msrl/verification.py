"""Optimality and identity checks that do not depend on any solver."""
import math

import numpy as np

from .penalties import PenaltyKind, penalty_value

__all__ = [
    "RankDeficientResidual", "subgradient_distance", "kkt_residual",
    "weighted_rss_identity", "joint_objective", "lemma1_check", "psd_power",
]

RANK_TOL = 1e-8


class RankDeficientResidual(ValueError):
    """The residual matrix has fewer than q non-zero singular values."""


def psd_power(gram, power, clip=1e-12):
    """``gram ** power`` for a symmetric PSD matrix via eigendecomposition.

    Eigenvalues below ``clip * max_eigenvalue`` are treated as zero; for
    negative powers they are dropped, which yields the pseudo-inverse power.
    """
    w, v = np.linalg.eigh((gram + gram.T) / 2)
    top = max(w.max(), 0.0)
    keep = w > clip * top
    wp = np.zeros_like(w)
    wp[keep] = w[keep] ** power
    return (v * wp) @ v.T


def subgradient_distance(kind, g, b, lam, zero_tol=1e-10):
    """Distance from ``g`` to ``lam * subdifferential(penalty)(b)``.

    L1 and group penalties use the max over entries / rows; the nuclear
    penalty takes the larger of the Frobenius gap on the tangent space of
    ``b`` and the spectral-norm excess on its complement.
    """
    kind = PenaltyKind.parse(kind)
    g = np.asarray(g, dtype=float)
    b = np.asarray(b, dtype=float)
    if kind is PenaltyKind.L1:
        on = b != 0
        gap = np.where(on, np.abs(g - lam * np.sign(b)), np.maximum(np.abs(g) - lam, 0.0))
        return float(gap.max()) if gap.size else 0.0
    if kind is PenaltyKind.GROUP:
        norms = np.linalg.norm(b, axis=1)
        on = norms > 0
        gap = np.empty(b.shape[0])
        unit = np.zeros_like(b)
        unit[on] = b[on] / norms[on, None]
        gap[on] = np.linalg.norm(g[on] - lam * unit[on], axis=1)
        gap[~on] = np.maximum(np.linalg.norm(g[~on], axis=1) - lam, 0.0)
        return float(gap.max()) if gap.size else 0.0
    u, d, vt = np.linalg.svd(b, full_matrices=False)
    r = int(np.sum(d > zero_tol))
    u1, v1 = u[:, :r], vt[:r].T
    pu = np.eye(b.shape[0]) - u1 @ u1.T
    pv = np.eye(b.shape[1]) - v1 @ v1.T
    g_perp = pu @ g @ pv
    tangent = g - g_perp - lam * (u1 @ v1.T)
    perp_norm = np.linalg.norm(g_perp, 2) if g_perp.size else 0.0
    return float(max(np.linalg.norm(tangent), max(perp_norm - lam, 0.0)))


def _check_full_rank(resid):
    n, q = resid.shape
    if n <= q:
        raise RankDeficientResidual(f"residual is {n}x{q}; need n > q")
    d = np.linalg.svd(resid, compute_uv=False)
    if d[0] == 0 or d[-1] <= RANK_TOL * d[0]:
        raise RankDeficientResidual(
            "residual has fewer than q non-zero singular values; the smooth "
            "first-order conditions do not apply (validate with the subgradient "
            "form or by cross-solver objective agreement)")


def kkt_residual(data, pen, b):
    """Distance of ``(1/sqrt(n)) X' R (R'R)^{-1/2}`` from ``lam * dg(b)``,
    with ``R = Y - X b`` required to have full column rank.
    """
    resid = data.y - data.x @ b
    _check_full_rank(resid)
    g = data.x.T @ resid @ psd_power(resid.T @ resid, -0.5) / math.sqrt(data.n)
    return subgradient_distance(pen.kind, g, b, pen.lam)


def weighted_rss_identity(data, b):
    """Return ``(nuclear form, weighted-RSS form)`` of the scaled residual norm.

    The weight is the pseudo-inverse of ``(1/sqrt(n)) (R'R)^{1/2}``; both
    numbers agree for any residual, including rank-deficient ones.
    """
    n = data.n
    resid = data.y - data.x @ b
    lhs = float(np.linalg.svd(resid, compute_uv=False).sum()) / math.sqrt(n)
    weight = psd_power(resid.T @ resid, 0.5) / math.sqrt(n)
    w_pinv = np.linalg.pinv(weight, hermitian=True, rcond=1e-12)
    rhs = float(np.trace(resid @ w_pinv @ resid.T)) / n
    return lhs, rhs


def joint_objective(data, pen, b, sigma_half):
    """``(1/2n) tr(R S^{-1} R') + tr(S)/2 + lam g(b)`` for positive definite ``S``."""
    resid = data.y - data.x @ b
    solved = np.linalg.solve(sigma_half, resid.T)
    return (float(np.sum(resid * solved.T)) / (2 * data.n)
            + float(np.trace(sigma_half)) / 2
            + pen.lam * penalty_value(pen.kind, b))


def lemma1_check(data, pen, b_hat, trials, rng, scale=1e-2, tol=1e-9):
    """Probe local minimality of the joint (coefficients, covariance root)
    criterion at ``(b_hat, ((1/n) R'R)^{1/2})``.

    Each trial perturbs both arguments: ``b_hat`` by ``scale`` times a
    standard normal matrix and the covariance root by a symmetric direction of
    Frobenius norm ``scale * ||S||_F`` (redrawn until positive definite,
    halving the size after every 100 failed draws).
    Returns a dict with the baseline value, the number of trials with a value
    below ``baseline - tol`` and the largest such improvement.
    """
    resid = data.y - data.x @ b_hat
    _check_full_rank(resid)
    q = data.q
    s_bar = psd_power(resid.T @ resid / data.n, 0.5)
    base = joint_objective(data, pen, b_hat, s_bar)
    s_norm = np.linalg.norm(s_bar)
    violations = 0
    worst = 0.0
    for _ in range(trials):
        db = scale * rng.standard_normal(b_hat.shape)
        step = scale * s_norm
        for attempt in range(1, 1001):
            e = rng.standard_normal((q, q))
            e = (e + e.T) / 2
            s_new = s_bar + step * e / np.linalg.norm(e)
            if np.linalg.eigvalsh(s_new)[0] > 0:
                break
            if attempt % 100 == 0:
                step /= 2
        else:
            raise ArithmeticError("could not draw a positive definite perturbation")
        value = joint_objective(data, pen, b_hat + db, s_new)
        if value < base - tol:
            violations += 1
            worst = max(worst, base - value)
    return {"baseline": base, "violations": violations, "max_violation": worst,
            "trials": trials, "scale": scale}
