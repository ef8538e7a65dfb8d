import math

import numpy as np
import pytest

from msrl.admm import AdmmConfig, admm_fit
from msrl.linalg import Dataset
from msrl.penalties import PenaltySpec
from msrl.tuning import lambda_max
from msrl.verification import (RankDeficientResidual, joint_objective, kkt_residual,
                               lemma1_check, psd_power, subgradient_distance,
                               weighted_rss_identity)

from conftest import KINDS, random_penalty, random_problem

TIGHT = AdmmConfig(eps_rel=1e-10, eps_abs=1e-12, max_iter=100000)


def test_psd_power(rng):
    a = rng.standard_normal((5, 5))
    g = a @ a.T
    h = psd_power(g, 0.5)
    assert np.allclose(h @ h, g)
    assert np.allclose(psd_power(g, -0.5) @ g @ psd_power(g, -0.5), np.eye(5), atol=1e-8)


def test_subgradient_distance_l1():
    b = np.array([[1.0, 0.0]])
    assert subgradient_distance("lasso", np.array([[0.5, 0.3]]), b, 0.5) == 0.0
    assert subgradient_distance("lasso", np.array([[0.5, 0.7]]), b, 0.5) == pytest.approx(0.2)
    assert subgradient_distance("lasso", np.array([[0.1, 0.0]]), b, 0.5) == pytest.approx(0.4)


def test_subgradient_distance_nuclear():
    b = np.diag([2.0, 0.0])
    assert subgradient_distance("nuclear", np.diag([1.0, 0.5]), b, 1.0) == pytest.approx(0.0)
    assert subgradient_distance("nuclear", np.diag([1.0, 1.5]), b, 1.0) == pytest.approx(0.5)


@pytest.mark.parametrize("kind", KINDS)
def test_kkt_round_trip_and_sensitivity(kind, rng):
    d = random_problem(rng)
    pen = random_penalty(rng, d, kind)
    fit = admm_fit(d, pen, TIGHT)
    assert kkt_residual(d, pen, fit.b_hat) <= 1e-4
    assert kkt_residual(d, pen, fit.b_hat + 0.1) > 1e-3


@pytest.mark.parametrize("kind", KINDS)
def test_zero_is_optimal_above_lambda_max(kind, rng):
    d = random_problem(rng)
    pen = PenaltySpec(kind, lambda_max(d, kind))
    assert kkt_residual(d, pen, np.zeros((d.p, d.q))) <= 1e-8


def test_kkt_refuses_rank_deficient(rng):
    x = rng.standard_normal((10, 3))
    b = rng.standard_normal((3, 2))
    y = x @ b
    y[:, 0] += rng.standard_normal(10)
    with pytest.raises(RankDeficientResidual, match="subgradient"):
        kkt_residual(Dataset.from_centered(y, x), PenaltySpec("lasso", 0.1), b)


def test_weighted_rss_identity_full_and_deficient(rng):
    d = random_problem(rng, n=30, p=8, q=4)
    lhs, rhs = weighted_rss_identity(d, rng.standard_normal((8, 4)))
    assert abs(lhs - rhs) <= 1e-10 * lhs
    x = rng.standard_normal((12, 3))
    b = rng.standard_normal((3, 3))
    y = x @ b + np.outer(rng.standard_normal(12), [1.0, -2.0, 0.5])  # rank-one residual
    lhs, rhs = weighted_rss_identity(Dataset.from_centered(y, x), b)
    assert abs(lhs - rhs) <= 1e-8 * lhs
    zero = Dataset.from_centered(x @ b, x)
    assert weighted_rss_identity(zero, b) == pytest.approx((0.0, 0.0), abs=1e-12)


def test_weighted_rss_identity_on_many_pairs():
    rng = np.random.default_rng(99)
    for i in range(1000):
        n, p, q = rng.integers(3, 25), rng.integers(1, 8), rng.integers(1, 6)
        x = rng.standard_normal((n, p))
        b = rng.standard_normal((p, q))
        rank = rng.integers(0, min(n, q) + 1) if i % 3 == 0 else min(n, q)
        noise = rng.standard_normal((n, rank)) @ rng.standard_normal((rank, q))
        d = Dataset.from_centered(x @ b + noise, x)
        lhs, rhs = weighted_rss_identity(d, b)
        assert abs(lhs - rhs) <= 1e-8 * max(lhs, 1e-300) or lhs < 1e-12


def test_joint_minimality_zero_violations_and_direct_evaluations(rng):
    d = random_problem(rng, n=70, p=20, q=4)
    for kind in KINDS:
        pen = random_penalty(rng, d, kind)
        fit = admm_fit(d, pen, TIGHT)
        for scale in (1e-1, 1e-2, 1e-3):
            rep = lemma1_check(d, pen, fit.b_hat, 200, rng, scale=scale)
            assert rep["violations"] == 0
        resid = d.y - d.x @ fit.b_hat
        s_bar = psd_power(resid.T @ resid / d.n, 0.5)
        base = joint_objective(d, pen, fit.b_hat, s_bar)
        assert base == pytest.approx(fit.objective, rel=1e-10)
        assert lemma1_check(d, pen, fit.b_hat, 5, rng, scale=0.0)["max_violation"] == 0.0
        assert joint_objective(d, pen, fit.b_hat, 2 * s_bar) > base


def test_joint_minimality_refuses_rank_deficient(rng):
    x = rng.standard_normal((10, 3))
    b = rng.standard_normal((3, 2))
    with pytest.raises(RankDeficientResidual):
        lemma1_check(Dataset.from_centered(x @ b, x), PenaltySpec("lasso", 0.1), b, 3, rng)
