"""Replication loop comparing estimators on simulated designs.

Path-based methods pick lambda by the squared prediction error on the
independent validation set; quantile methods use Monte-Carlo tuning on the
training design. Prediction metrics are reported on the validation set.
"""
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .admm import AdmmConfig
from .apgd import ApgdConfig, hybrid_path_fit, solve
from .baselines import calibrated_lambda_max, calibrated_path, pls_lambda_max, pls_path, refit
from .datagen import evaluate, simulate
from .penalties import PenaltySpec
from .tuning import default_grid, mc_tune, quantile

__all__ = ["METHODS", "SimSettings", "parse_methods", "run_method", "run_replication",
           "run_simulation", "summarize"]

QUANTILE_METHODS = {f"msr-q{int(round(100 * lv))}": lv for lv in (0.5, 0.75, 0.85, 0.95)}
METHODS = (("msr-cv",) + tuple(QUANTILE_METHODS)
           + tuple(f"{m}-rf" for m in QUANTILE_METHODS) + ("pls", "calibrated"))
METRIC_FIELDS = ("frob_sq_error", "tpr", "fpr", "weighted_pred_error", "nuclear_pred_error")


@dataclass(frozen=True)
class SimSettings:
    nlambda: int = 100
    ratio: float = 1e-4
    n_draws: int = 5000
    c: float = 1.01
    eps_rel: float = 1e-6


def parse_methods(text):
    names = [m.strip() for m in text.split(",") if m.strip()]
    bad = [m for m in names if m not in METHODS]
    if bad or not names:
        raise ValueError(f"unknown method(s) {bad}; valid names: {', '.join(METHODS)}")
    return names


def _penalty_for(scheme):
    return "group" if scheme == "rowwise" else "lasso"


def _val_error(inst, b):
    pred = inst.data.predict_raw(b, inst.x_val)
    return float(np.mean((inst.y_val - pred) ** 2))


def _pick(inst, fits):
    errs = [_val_error(inst, f.b_hat) for f in fits]
    i = int(np.argmin(errs))
    return fits[i], i


def run_method(inst, method, design, settings=None):
    """Fit one method; returns (metrics, chosen lambda, grid index or -1)."""
    s = settings or SimSettings()
    data = inst.data
    kind = _penalty_for(design.scheme)
    cfg_admm = AdmmConfig(eps_rel=s.eps_rel)
    cfg_apgd = ApgdConfig()
    index = -1
    if method == "msr-cv":
        grid = default_grid(data, kind, s.nlambda, s.ratio)
        fit, index = _pick(inst, hybrid_path_fit(data, kind, grid, cfg_admm, cfg_apgd))
        b = fit.b_hat
    elif method in ("pls", "calibrated"):
        if method == "pls":
            top = pls_lambda_max(data, kind)
            fits = pls_path(data, kind, np.geomspace(top, top * s.ratio, s.nlambda))
        else:
            top = calibrated_lambda_max(data)
            fits = calibrated_path(data, np.geomspace(top, top * s.ratio, s.nlambda), kind, cfg_admm)
        fit, index = _pick(inst, fits)
        b = fit.b_hat
    else:
        base = method[:-3] if method.endswith("-rf") else method
        dist = mc_tune(data, kind, s.c, s.n_draws, seed=design.seed)
        lam = quantile(dist, QUANTILE_METHODS[base])
        fit = solve(data, PenaltySpec(kind, lam), "auto", cfg_admm, cfg_apgd)
        b = refit(data, fit.b_hat) if method.endswith("-rf") else fit.b_hat
    metrics = evaluate(data.raw_coef(b), inst, design.scheme,
                       y_pred=data.predict_raw(b, inst.x_val))
    return metrics, fit.lam, index


def run_replication(design, methods, settings=None):
    """All methods on one simulated instance; returns a list of row dicts."""
    inst = simulate(design)
    rows = []
    for m in methods:
        t0 = time.perf_counter()
        metrics, lam, index = run_method(inst, m, design, settings)
        rows.append({"rep_seed": design.seed, "method": m, **metrics._asdict(),
                     "lambda": lam, "grid_index": index,
                     "seconds": time.perf_counter() - t0})
    return rows


def _rep_seeds(master_seed, reps):
    ss = np.random.SeedSequence(master_seed)
    return [int(c.generate_state(1)[0]) for c in ss.spawn(reps)]


def _run_one(args):
    design, methods, settings = args
    return run_replication(design, methods, settings)


def run_simulation(design, reps, methods, settings=None, workers=1):
    """Replications with per-replication seeds derived from ``design.seed``.

    Rows are returned in replication order regardless of ``workers``.
    """
    jobs = [(design.with_seed(s), methods, settings) for s in _rep_seeds(design.seed, reps)]
    if workers <= 1 or reps <= 1:
        results = [_run_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_one, jobs))
    rows = []
    for i, block in enumerate(results):
        for row in block:
            rows.append({"rep": i, **row})
    return rows


def summarize(rows):
    """Mean and standard error of every metric per method."""
    out = {}
    for m in dict.fromkeys(r["method"] for r in rows):
        sub = [r for r in rows if r["method"] == m]
        entry = {"reps": len(sub)}
        for f in METRIC_FIELDS + ("seconds",):
            v = np.array([r[f] for r in sub], dtype=float)
            se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else float("nan")
            entry[f] = {"mean": float(v.mean()), "se": se}
        out[m] = entry
    return out
