import numpy as np
import pytest
from scipy.optimize import linprog

from physarum_bp import BasisPursuitProblem
from physarum_bp.dynamics import optimality_residuals
from physarum_bp.generators import generate_graph_problem, path_graph
from physarum_bp.oracle import INFEASIBLE, OPTIMAL, OracleError, lp_solve_l1
from physarum_bp.stepper import run


def test_diagonal(diag_problem):
    lp = lp_solve_l1(diag_problem)
    assert lp.status == OPTIMAL
    np.testing.assert_allclose(lp.v_opt, [1, -2, 3])
    assert lp.objective == pytest.approx(6.0)


def test_path():
    lp = lp_solve_l1(generate_graph_problem(path_graph(3)))
    assert lp.objective == pytest.approx(2.0)


def test_random_seed7_matches_physarum(tiny):
    p = tiny(seed=7)
    lp = lp_solve_l1(p)
    res = run(p)
    assert res.converged
    primal = optimality_residuals(p, res.state).primal_obj
    assert abs(primal - lp.objective) <= 1e-6 * lp.objective


def test_infeasible():
    A = np.array([[1.0, 1.0], [1.0, 1.0]])
    p = BasisPursuitProblem(A, np.ones(2), np.array([1.0, 2.0]))
    assert lp_solve_l1(p).status == INFEASIBLE


def test_redundant_rows_handled():
    A = np.array([[1.0, 2.0, 0.0], [2.0, 4.0, 0.0], [0.0, 1.0, 1.0]])
    p = BasisPursuitProblem(A, np.ones(3), A @ np.array([1.0, 0.0, 1.0]))
    lp = lp_solve_l1(p)
    assert lp.status == OPTIMAL
    np.testing.assert_allclose(A @ lp.v_opt, p.f, atol=1e-9)


def test_size_guard():
    p = BasisPursuitProblem(np.ones((1, 2001)), np.ones(2001), np.ones(1))
    with pytest.raises(OracleError, match="m <= 2000"):
        lp_solve_l1(p)


@pytest.mark.parametrize("seed", range(12))
def test_optimality_certificates(seed, tiny):
    p = tiny(seed=seed, n=8, m=25, k=3)
    rng = np.random.default_rng(seed)
    p = BasisPursuitProblem(p.A, rng.uniform(0.5, 2, p.m), p.f)
    lp = lp_solve_l1(p)
    assert lp.status == OPTIMAL
    assert np.linalg.norm(p.A @ lp.v_opt - p.f, np.inf) <= 1e-9
    assert lp.objective == pytest.approx(np.sum(np.abs(lp.v_opt) * p.w))
    assert abs(lp.objective - p.f @ lp.dual_u) <= 1e-8 * lp.objective
    g = (p.A.T @ lp.dual_u) / p.w
    assert np.all(np.abs(g) <= 1 + 1e-8)
    support = np.abs(lp.v_opt) > 1e-12
    np.testing.assert_allclose(np.abs(g[support]), 1.0, atol=1e-6)
    # cross-check against an independent LP code
    ref = linprog(np.concatenate([p.w, p.w]), A_eq=np.hstack([p.A, -p.A]), b_eq=p.f, bounds=(0, None), method="highs")
    assert lp.objective == pytest.approx(ref.fun, rel=1e-9)
