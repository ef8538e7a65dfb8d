import numpy as np
import pytest

from msrl.linalg import center_and_normalize
from msrl.penalties import PenaltySpec
from msrl.tuning import lambda_max

KINDS = ("lasso", "group", "nuclear")


def random_problem(rng, n=None, p=None, q=None, signal_rows=3):
    n = n or int(rng.integers(30, 101))
    p = p or int(rng.integers(5, 81))
    q = q or int(rng.integers(2, 11))
    x = rng.standard_normal((n, p))
    b = np.zeros((p, q))
    b[:min(signal_rows, p)] = 1.0
    y = x @ b + rng.standard_normal((n, q))
    return center_and_normalize(y, x)


def random_penalty(rng, data, kind, lo=0.2, hi=0.9):
    return PenaltySpec(kind, rng.uniform(lo, hi) * lambda_max(data, kind))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_data(rng):
    return random_problem(rng, n=60, p=20, q=4)


ACCEPTANCE_LINES = []


def report_criterion(number, title, passed, detail):
    line = f"criterion {number:>2} {title}: {'PASS' if passed else 'FAIL'} ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
