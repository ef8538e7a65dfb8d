"""Penalty norms on coefficient matrices, their duals, and proximal maps.

Three penalties are supported:

* ``L1``: sum of absolute entries,
* ``GROUP``: sum of row Euclidean norms (rows of the coefficient matrix are
  the groups),
* ``NUCLEAR``: sum of singular values.
"""
import enum
from dataclasses import dataclass

import numpy as np

from .linalg import singular_values

__all__ = ["PenaltyKind", "PenaltySpec", "penalty_value", "dual_norm", "prox"]


class PenaltyKind(enum.Enum):
    L1 = "lasso"
    GROUP = "group"
    NUCLEAR = "nuclear"

    @classmethod
    def parse(cls, name):
        if isinstance(name, cls):
            return name
        try:
            return cls(str(name).lower())
        except ValueError:
            valid = ", ".join(k.value for k in cls)
            raise ValueError(f"unknown penalty {name!r}; expected one of: {valid}") from None


@dataclass(frozen=True)
class PenaltySpec:
    kind: PenaltyKind
    lam: float

    def __post_init__(self):
        object.__setattr__(self, "kind", PenaltyKind.parse(self.kind))
        lam = float(self.lam)
        if not np.isfinite(lam) or lam < 0:
            raise ValueError(f"lambda must be finite and non-negative, got {self.lam}")
        object.__setattr__(self, "lam", lam)


def penalty_value(kind, b):
    kind = PenaltyKind.parse(kind)
    b = np.asarray(b, dtype=float)
    if kind is PenaltyKind.L1:
        return float(np.abs(b).sum())
    if kind is PenaltyKind.GROUP:
        return float(np.linalg.norm(b, axis=1).sum())
    return float(singular_values(b).sum())


def dual_norm(kind, a):
    """Dual norm: max-abs entry, max row norm, or spectral norm."""
    kind = PenaltyKind.parse(kind)
    a = np.asarray(a, dtype=float)
    if kind is PenaltyKind.L1:
        return float(np.abs(a).max())
    if kind is PenaltyKind.GROUP:
        return float(np.linalg.norm(a, axis=1).max())
    return float(singular_values(a)[0])


def soft_threshold(a, t):
    return np.sign(a) * np.maximum(np.abs(a) - t, 0.0)


def group_shrink(a, t):
    norms = np.linalg.norm(a, axis=1, keepdims=True)
    scale = np.zeros_like(norms)
    np.divide(t, norms, out=scale, where=norms > 0)
    return a * np.maximum(1.0 - scale, 0.0) * (norms > 0)


def singular_value_shrink(a, t):
    u, d, vt = np.linalg.svd(a, full_matrices=False)
    d = np.maximum(d - t, 0.0)
    keep = d > 0
    return (u[:, keep] * d[keep]) @ vt[keep]


def prox(kind, a, threshold):
    """``argmin_x 0.5 * ||a - x||_F^2 + threshold * g(x)``."""
    kind = PenaltyKind.parse(kind)
    if threshold < 0:
        raise ValueError("threshold must be non-negative")
    a = np.asarray(a, dtype=float)
    if threshold == 0:
        return a.copy()
    if kind is PenaltyKind.L1:
        return soft_threshold(a, threshold)
    if kind is PenaltyKind.GROUP:
        return group_shrink(a, threshold)
    return singular_value_shrink(a, threshold)
