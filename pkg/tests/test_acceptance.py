"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line."""
import math
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from msrl.admm import AdmmConfig, admm_fit, theorem3_certificate
from msrl.apgd import ApgdConfig, apgd_fit, hybrid_path_fit, nuclear_residual_gradient
from msrl.baselines import PlsConfig, pls_lambda_max, pls_path
from msrl.datagen import SimDesign, simulate
from msrl.linalg import nuclear_norm
from msrl.penalties import PenaltySpec
from msrl.simulation import SimSettings, run_simulation, summarize
from msrl.tuning import default_grid, lambda_max, mc_tune, quantile
from msrl.verification import kkt_residual, lemma1_check

from conftest import KINDS, random_penalty, random_problem, report_criterion

TIGHT = AdmmConfig(eps_rel=1e-12, eps_abs=1e-14, max_iter=200000)
FULL_RANK = 1e-3  # sigma_q / sigma_1 of the solution residual
WITNESS_SEED = 0


def _full_rank_instances(count, seed, lo=0.2, hi=1.2):
    """Random instances whose solution residual keeps q well-separated singular values."""
    rng = np.random.default_rng(seed)
    out, rejected, i = [], 0, 0
    while len(out) < count:
        d = random_problem(rng)
        kind = KINDS[i % 3]
        i += 1
        pen = random_penalty(rng, d, kind, lo, hi)
        fit = admm_fit(d, pen, TIGHT)
        s = np.linalg.svd(d.y - d.x @ fit.b_hat, compute_uv=False)
        if s[-1] < FULL_RANK * s[0]:
            rejected += 1
            continue
        out.append((d, pen, fit))
    return out, rejected


def test_criterion_01_kkt():
    t0 = time.perf_counter()
    cases, rejected = _full_rank_instances(100, 101)
    worst = max(kkt_residual(d, pen, fit.b_hat) for d, pen, fit in cases)
    elapsed = time.perf_counter() - t0
    ok = all(fit.converged for _, _, fit in cases) and worst <= 1e-4 and elapsed < 300
    assert report_criterion(1, "KKT optimality", ok,
                            f"max residual {worst:.2e} over 100 fits, {rejected} near-deficient "
                            f"draws skipped, {elapsed:.1f}s")


def test_criterion_02_cross_solver():
    cases, _ = _full_rank_instances(50, 202)
    gaps = []
    for d, pen, fa in cases:
        fp = apgd_fit(d, pen)
        gaps.append(abs(fa.objective - fp.objective) / fp.objective)
    worst = max(gaps)
    assert report_criterion(2, "cross-solver agreement", worst <= 1e-5,
                            f"max relative objective gap {worst:.2e} over 50 instances")


def test_criterion_03_covariance_minimality():
    cases, _ = _full_rank_instances(20, 303)
    rng = np.random.default_rng(3)
    violations = 0
    for d, pen, fit in cases:
        for scale in (1e-1, 1e-2, 1e-3):
            violations += lemma1_check(d, pen, fit.b_hat, 200, rng, scale=scale)["violations"]
    assert report_criterion(3, "implicit covariance minimality", violations == 0,
                            f"{violations} violations in 20 fits x 3 scales x 200 trials")


def test_criterion_04_distance_certificate():
    rng = np.random.default_rng(404)
    increases, slopes, refs = 0, [], True
    for i in range(20):
        d = random_problem(rng)
        cert = theorem3_certificate(d, random_penalty(rng, d, KINDS[i % 3]),
                                    AdmmConfig(eps_rel=1e-8), reference_eps_rel=1e-13,
                                    reference_max_iter=500000)
        increases += int(np.sum(np.diff(cert["d"]) > 1e-9))
        slopes.append(cert["tail_slope"])
        refs &= cert["reference_converged"]
    worst = float(np.max(slopes))  # nan propagates
    ok = increases == 0 and worst <= -0.7 and refs
    assert report_criterion(4, "ADMM distance certificate", ok,
                            f"{increases} increases, worst tail slope {worst:.2f}")


def test_criterion_05_gradient():
    rng = np.random.default_rng(505)
    worst, h = 0.0, 1e-6
    for _ in range(50):
        d = random_problem(rng)
        b = 0.1 * rng.standard_normal((d.p, d.q))
        g = nuclear_residual_gradient(d, b)
        for _ in range(20):
            j, k = rng.integers(d.p), rng.integers(d.q)
            e = np.zeros_like(b)
            e[j, k] = h
            fd = (nuclear_norm(d.y - d.x @ (b + e)) - nuclear_norm(d.y - d.x @ (b - e))) / (2 * h)
            worst = max(worst, abs(fd - g[j, k]))
    assert report_criterion(5, "gradient check", worst <= 1e-5,
                            f"max |finite difference - gradient| {worst:.2e} at 1000 coordinates")


def _bootstrap_ci(samples, level, rng, reps=2000):
    idx = rng.integers(0, samples.size, size=(reps, samples.size))
    qs = np.quantile(samples[idx], level, axis=1)
    return np.quantile(qs, [0.025, 0.975])


def test_criterion_06_pivotality():
    a = simulate(SimDesign(100, 120, 15, "compound", 0.0, seed=6))
    b = simulate(SimDesign(100, 120, 15, "compound", 0.9, seed=6))
    same = (quantile(mc_tune(a.data, "lasso", n_draws=500, seed=1), 0.95)
            == quantile(mc_tune(b.data, "lasso", n_draws=500, seed=1), 0.95))
    rng = np.random.default_rng(6)
    batch1 = mc_tune(a.data, "lasso", n_draws=5000, seed=11).samples
    batch2 = mc_tune(a.data, "lasso", n_draws=5000, seed=12).samples
    lo1, hi1 = _bootstrap_ci(batch1, 0.95, rng)
    lo2, hi2 = _bootstrap_ci(batch2, 0.95, rng)
    overlap = lo1 <= hi2 and lo2 <= hi1
    assert report_criterion(6, "pivotal tuning", same and overlap,
                            f"identical across covariances: {same}; CIs [{lo1:.4f}, {hi1:.4f}] "
                            f"and [{lo2:.4f}, {hi2:.4f}]")


def test_criterion_07_zero_threshold():
    rng = np.random.default_rng(707)
    failures = 0
    for kind in KINDS:
        for _ in range(50):
            d = random_problem(rng)
            top = lambda_max(d, kind)
            above = admm_fit(d, PenaltySpec(kind, 1.001 * top), TIGHT).b_hat
            below = admm_fit(d, PenaltySpec(kind, 0.9 * top), TIGHT).b_hat
            failures += np.linalg.norm(above) > 1e-6 or np.linalg.norm(below) <= 1e-6
    assert report_criterion(7, "zero-solution threshold", failures == 0,
                            f"{failures} failures over 150 instances")


@pytest.fixture(scope="module")
def desk_simulation():
    design = SimDesign(100, 120, 15, "compound", 0.9, seed=2024)
    t0 = time.perf_counter()
    rows = run_simulation(design, 20, ["msr-cv", "msr-q95", "pls"], SimSettings())
    return summarize(rows), time.perf_counter() - t0


def test_criterion_08_estimation_error(desk_simulation):
    summary, elapsed = desk_simulation
    cv, pls = summary["msr-cv"]["frob_sq_error"], summary["pls"]["frob_sq_error"]
    se = math.hypot(cv["se"], pls["se"])
    ok = cv["mean"] < pls["mean"] and pls["mean"] - cv["mean"] > 2 * se
    assert report_criterion(8, "estimation error trend", ok,
                            f"msr-cv {cv['mean']:.3f} vs pls {pls['mean']:.3f}, "
                            f"difference {(pls['mean'] - cv['mean']) / se:.1f} SE, {elapsed:.0f}s")


def test_criterion_09_selection(desk_simulation):
    summary, _ = desk_simulation
    q95, cv = summary["msr-q95"], summary["msr-cv"]
    ok = (q95["fpr"]["mean"] <= 0.01 and q95["fpr"]["mean"] < cv["fpr"]["mean"]
          and cv["tpr"]["mean"] >= q95["tpr"]["mean"])
    assert report_criterion(9, "selection behaviour", ok,
                            f"FPR q95 {q95['fpr']['mean']:.4f} / cv {cv['fpr']['mean']:.4f}; "
                            f"TPR cv {cv['tpr']['mean']:.3f} / q95 {q95['tpr']['mean']:.3f}")


def _support(b):
    return frozenset(map(tuple, np.argwhere(b != 0)))


def test_criterion_10_distinct_paths():
    d = simulate(SimDesign(30, 12, 3, "compound", 0.9, seed=WITNESS_SEED)).data
    grid = default_grid(d, "lasso", 50, 1e-2)
    fits = hybrid_path_fit(d, "lasso", grid, TIGHT, ApgdConfig(obj_tol=1e-13))
    top = pls_lambda_max(d, "lasso")
    pls_fits = pls_path(d, "lasso", np.geomspace(top, 1e-4 * top, 200), PlsConfig(kkt_tol=1e-10))
    pls_supports = {_support(f.b_hat) for f in pls_fits}
    witnesses = []
    for lam, fit in zip(grid, fits):
        b = fit.b_hat
        robust = np.abs(b[b != 0]).min(initial=np.inf) >= 1e-4
        certified = kkt_residual(d, PenaltySpec("lasso", lam), b) <= 1e-6
        if robust and certified and _support(b) not in pls_supports:
            witnesses.append(lam)
    ok = bool(witnesses) and all(f.converged for f in pls_fits)
    assert report_criterion(10, "distinct solution paths", ok,
                            f"seed {WITNESS_SEED}: {len(witnesses)} of 50 grid values have a "
                            f"support absent from all 200 PLS supports")


def test_criterion_11_performance():
    d = simulate(SimDesign(200, 500, 50, "compound", 0.9, seed=11)).data
    t0 = time.perf_counter()
    fits = hybrid_path_fit(d, "lasso", default_grid(d, "lasso", 100))
    elapsed = time.perf_counter() - t0
    tags = [f.solver for f in fits]
    head = tags.index("admm") if "admm" in tags else len(tags)
    ok = elapsed < 120 and head >= 1 and len(fits) == 100
    assert report_criterion(11, "performance envelope", ok,
                            f"{elapsed:.1f}s for 100 values, apgd on the first {head}")


def test_criterion_12_property_suites():
    tests = Path(__file__).parent
    targets = [str(tests / "test_penalties.py"),
               str(tests / "test_verification.py") + "::test_weighted_rss_identity_on_many_pairs",
               str(tests / "test_verification.py") + "::test_weighted_rss_identity_full_and_deficient",
               str(tests / "test_datagen.py")]
    proc = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider",
                           *targets], capture_output=True, text=True, cwd=tests.parent)
    tail = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr[-200:]
    assert report_criterion(12, "property suites", proc.returncode == 0, tail)
