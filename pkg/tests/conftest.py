import numpy as np
import pytest

from entropot.core import Problem

# Acceptance tests register one line each; printed after the run so the
# per-criterion verdicts survive pytest's output capture.
ACCEPTANCE_RESULTS = []


def record_acceptance(name, passed, detail=""):
    ACCEPTANCE_RESULTS.append((name, bool(passed), detail))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for name, passed, detail in ACCEPTANCE_RESULTS:
        status = "PASS" if passed else "FAIL"
        suffix = f"  [{detail}]" if detail else ""
        terminalreporter.write_line(f"{status}  {name}{suffix}")


def random_marginal(rng, n, floor=0.02):
    x = rng.random(n) + floor
    return x / x.sum()


def random_problem(rng, n, gamma_rel=0.3, cost_scale=1.0):
    """Random dense instance with strictly positive marginals."""
    a = random_marginal(rng, n)
    b = random_marginal(rng, n)
    C = rng.random((n, n)) * cost_scale
    return Problem(a, b, C, gamma_rel * float(C.max()))


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
