import numpy as np
import pytest

from msrl.datagen import SimDesign, simulate
from msrl.simulation import (METHODS, SimSettings, parse_methods, run_method,
                             run_simulation, summarize)

FAST = SimSettings(nlambda=20, n_draws=200)


def test_parse_methods():
    assert parse_methods("msr-cv, pls") == ["msr-cv", "pls"]
    with pytest.raises(ValueError, match="valid names"):
        parse_methods("msr-cv,mrce")
    assert "msr-q95-rf" in METHODS


def test_each_method_runs():
    design = SimDesign(40, 30, 4, "compound", 0.5, seed=2)
    inst = simulate(design)
    for m in METHODS:
        metrics, lam, index = run_method(inst, m, design, FAST)
        assert 0 <= metrics.tpr <= 1 and 0 <= metrics.fpr <= 1
        assert lam > 0
        assert (index >= 0) == (m in ("msr-cv", "pls", "calibrated"))


def test_rowwise_scheme_uses_group_penalty():
    design = SimDesign(40, 30, 4, "condition", 5.0, scheme="rowwise", seed=2)
    metrics, _, _ = run_method(simulate(design), "msr-q95", design, FAST)
    assert metrics.fpr <= 0.2


def test_replications_are_deterministic_and_ordered():
    design = SimDesign(30, 20, 3, seed=5)
    a = run_simulation(design, 2, ["msr-q95", "pls"], FAST)
    b = run_simulation(design, 2, ["msr-q95", "pls"], FAST)
    strip = lambda rows: [{k: v for k, v in r.items() if k != "seconds"} for r in rows]
    assert strip(a) == strip(b)
    assert [r["rep"] for r in a] == [0, 0, 1, 1]
    assert a[0]["rep_seed"] != a[2]["rep_seed"]


def test_parallel_matches_serial():
    design = SimDesign(30, 20, 3, seed=8)
    strip = lambda rows: [{k: v for k, v in r.items() if k != "seconds"} for r in rows]
    serial = run_simulation(design, 2, ["msr-q50"], FAST, workers=1)
    parallel = run_simulation(design, 2, ["msr-q50"], FAST, workers=2)
    assert strip(serial) == strip(parallel)


def test_summarize_standard_errors():
    rows = [{"method": "pls", "frob_sq_error": v, "tpr": 1.0, "fpr": 0.0,
             "weighted_pred_error": 0.0, "nuclear_pred_error": 0.0, "seconds": 0.0}
            for v in (1.0, 2.0, 3.0)]
    s = summarize(rows)["pls"]["frob_sq_error"]
    assert s["mean"] == pytest.approx(2.0)
    assert s["se"] == pytest.approx(1.0 / np.sqrt(3))
