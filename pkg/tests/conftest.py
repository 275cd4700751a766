import numpy as np
import pytest
import scipy.sparse as sp

from physarum_bp import BasisPursuitProblem
from physarum_bp.generators import RandomBpSpec, generate_random_bp

# name -> (passed, detail); printed by the terminal-summary hook below
ACCEPTANCE: dict[str, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
        ok, detail = ACCEPTANCE[name]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")


@pytest.fixture
def record_criterion():
    def record(name: str, ok: bool, detail: str = ""):
        ACCEPTANCE[name] = (bool(ok), detail)
        print(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")
        return ok

    return record


@pytest.fixture
def diag_problem():
    return BasisPursuitProblem(np.eye(3), np.ones(3), np.array([1.0, -2.0, 3.0]))


@pytest.fixture
def path3():
    # edges 0->1, 1->2; rows are nodes
    A = sp.csc_matrix(np.array([[1.0, 0.0], [-1.0, 1.0], [0.0, -1.0]]))
    return A


@pytest.fixture
def tiny():
    def make(seed=0, n=10, m=30, k=3, **kw):
        return generate_random_bp(RandomBpSpec(n, m, k, seed=seed, **kw))

    return make


def random_state(rng, problem, lo=0.5, hi=2.0):
    """Random positive mu and an arbitrary (not solved) potential."""
    from physarum_bp import TransportState

    mu = rng.uniform(lo, hi, problem.m)
    u = rng.normal(size=problem.n) * 0.3
    return TransportState(mu, u)
