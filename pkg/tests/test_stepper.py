import csv
import io
import math

import numpy as np
import pytest

from physarum_bp import BasisPursuitProblem
from physarum_bp.core import initial_state
from physarum_bp.dynamics import optimality_residuals
from physarum_bp.newton import SolverConfig
from physarum_bp.stepper import (
    CONVERGED,
    FORWARD_EULER,
    MAX_STEPS,
    STALLED,
    TRACE_COLUMNS,
    StepperConfig,
    advance,
    run,
    trace_csv,
    variation,
)

DIRECT = SolverConfig(linear_mode="direct-cholesky")


def test_variation_examples():
    mu = np.array([0.4, 2.0])
    assert variation(mu, mu, 1.0) == 0.0
    assert variation(np.array([1.0, 1.0]), np.array([1.0, 0.0]), 2.0) == 0.5


def test_config_validation():
    for bad in ({"dt0": 0}, {"tau": -1}, {"growth_factor": 1.0}):
        with pytest.raises(ValueError):
            StepperConfig(**bad)


def test_diagonal_converges_to_abs_f(diag_problem):
    res = run(diag_problem)
    assert res.status == CONVERGED
    np.testing.assert_allclose(res.state.mu, [1.0, 2.0, 3.0], rtol=1e-6)
    assert res.trace[-1].var < 5e-8
    assert optimality_residuals(diag_problem, res.state).primal_obj == pytest.approx(6.0, rel=1e-9)


def test_forced_d2_violation_halves_once(diag_problem):
    # |Gu| = (1, 2, 3) at mu = 1: dt = 0.6 violates D2 > 0, dt = 0.3 does not
    s0 = initial_state(diag_problem)
    new, rec = advance(diag_problem, s0, dt_trial=0.6)
    assert rec.halvings == 1
    assert rec.dt == 0.3 and new.dt == 0.3 and new.t == 0.3
    assert np.all(new.mu > 0)


def test_dt_doubles_near_equilibrium(diag_problem):
    res = run(diag_problem)
    s = res.state
    dts, vars_ = [], []
    for k in range(3):
        s, rec = advance(diag_problem, s)
        dts.append(rec.dt)
        vars_.append(rec.var)
    assert dts[1] == 2 * dts[0] and dts[2] == 2 * dts[1]
    assert vars_[0] > vars_[1] > vars_[2]


def test_max_steps_budget(tiny):
    res = run(tiny(seed=1), StepperConfig(max_steps=1))
    assert res.status == MAX_STEPS and len(res.trace) == 1 and not res.converged


def test_stalled_reports_last_good_state(tiny):
    p = tiny(seed=1)
    res = run(p, StepperConfig(max_steps=5), SolverConfig(newton_max_iter=0))
    assert res.status == STALLED and "stalled" in res.message
    assert not res.trace
    np.testing.assert_array_equal(res.state.mu, np.ones(p.m))


def test_sparse_recovery_100x1000(tiny):
    p = tiny(seed=0, n=100, m=1000, k=8)
    res = run(p)
    assert res.converged
    assert res.trace[-1].err_x < 1e-5
    assert len(res.trace) < 200


def test_trace_invariants(tiny):
    res = run(tiny(seed=13))
    ts = [r.t for r in res.trace]
    assert all(b > a for a, b in zip(ts, ts[1:]))
    assert all(r.var >= 0 and r.dt > 0 and r.min_mu > 0 for r in res.trace)
    assert [r.step for r in res.trace] == list(range(len(res.trace)))


@pytest.mark.parametrize("seed", range(6))
def test_var_eventually_monotone(seed, tiny):
    res = run(tiny(seed=300 + seed))
    assert res.converged and len(res.trace) >= 5
    tail = [r.var for r in res.trace[-5:]]
    assert all(b < a for a, b in zip(tail, tail[1:]))


@pytest.mark.parametrize("cut", [1, 4, 8])
def test_restart_reproduces_trace(cut, tiny):
    p = tiny(seed=21)
    cfg = StepperConfig(timing=False)
    full = run(p, cfg, DIRECT)
    assert full.converged and len(full.trace) > cut
    head = run(p, StepperConfig(timing=False, max_steps=cut), DIRECT)
    tail = run(p, cfg, DIRECT, state=head.state, first_step=cut)
    assert tail.status == full.status
    assert trace_csv(tail.trace, timing=False) == trace_csv(full.trace[cut:], timing=False)
    np.testing.assert_array_equal(tail.state.mu, full.state.mu)


def test_csv_columns_and_empty_err_x(diag_problem):
    res = run(diag_problem, StepperConfig(timing=False))
    rows = list(csv.reader(io.StringIO(trace_csv(res.trace, timing=False))))
    assert tuple(rows[0]) == TRACE_COLUMNS
    assert all(r[TRACE_COLUMNS.index("err_x")] == "" for r in rows[1:])
    assert all(r[TRACE_COLUMNS.index("wall_seconds")] == "" for r in rows[1:])
    assert len(rows) == len(res.trace) + 1


def test_csv_byte_identical_reruns(tiny):
    p = tiny(seed=2)
    cfg = StepperConfig(timing=False)
    a = trace_csv(run(p, cfg).trace, timing=False)
    b = trace_csv(run(p, cfg).trace, timing=False)
    assert a == b


def test_forward_euler_positivity_bound(tiny):
    p = tiny(seed=17)
    dt = 1e-3
    res = run(p, StepperConfig(integrator=FORWARD_EULER, forward_dt=dt, max_steps=1000, tau=1e-300))
    assert len(res.trace) == 1000
    mu0_min = 1.0
    for rec in res.trace:
        assert rec.min_mu >= 0.95 * math.exp(-rec.t) * mu0_min
    assert res.trace[-1].t == pytest.approx(1.0)


def test_forward_euler_fixed_step(tiny):
    res = run(tiny(seed=4), StepperConfig(integrator=FORWARD_EULER, forward_dt=0.05, max_steps=20))
    assert all(r.dt == 0.05 and r.newton_iterations == 0 for r in res.trace)


def test_forward_euler_loses_positivity():
    p = BasisPursuitProblem(np.eye(2), np.ones(2), np.array([1.0, 0.0]) + 1e-3)
    res = run(p, StepperConfig(integrator=FORWARD_EULER, forward_dt=1.5, max_steps=5))
    assert res.status == STALLED
