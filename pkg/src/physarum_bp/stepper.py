"""Outer pseudo-time loop with step doubling / halving.

Each accepted backward Euler step doubles the trial step for the next
one; a nonpositive ``D2`` entry or a failed Newton solve halves it and
retries. The run stops once

    var = |mu^{k+1} - mu^k| / (dt |mu^k|) < tau.
"""

from __future__ import annotations

import csv
import io
import logging
import time
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .core import (
    BasisPursuitProblem,
    SingularSystemError,
    TransportState,
    initial_state,
    solve_potential,
)
from .dynamics import dual_error, lyapunov, recovery_error, rhs
from .krylov import LinearSolverHandle
from .newton import SolverConfig, newton_solve

log = logging.getLogger(__name__)

BACKWARD_EULER = "backward-euler"
FORWARD_EULER = "forward-euler"
INTEGRATORS = (BACKWARD_EULER, FORWARD_EULER)

CONVERGED = "converged"
MAX_STEPS = "max_steps"
STALLED = "stalled"
TIME_BUDGET = "time_budget"

TRACE_COLUMNS = (
    "step", "t", "dt", "newton_iters", "pcg_iters", "var", "err_x", "err_dual",
    "lyapunov", "energy", "mass", "wall_seconds",
)

MAX_HALVINGS = 40
DT_MIN = 1e-14


class StalledError(RuntimeError):
    """The step controller could not find an acceptable step."""

    def __init__(self, msg: str, state: TransportState):
        super().__init__(msg)
        self.state = state


@dataclass
class StepperConfig:
    dt0: float = 1.0
    tau: float = 5e-8
    max_steps: int = 1000
    max_wall_seconds: float = float("inf")
    growth_factor: float = 2.0
    backoff_factor: float = 2.0
    mu0: float = 1.0
    integrator: str = BACKWARD_EULER
    # fixed step of the explicit integrator
    forward_dt: float = 0.1
    timing: bool = True

    def __post_init__(self):
        if not self.dt0 > 0:
            raise ValueError("dt0 must be positive")
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if not self.growth_factor > 1:
            raise ValueError("growth_factor must exceed 1")
        if not self.backoff_factor > 1:
            raise ValueError("backoff_factor must exceed 1")
        if not self.mu0 > 0:
            raise ValueError("mu0 must be positive")
        if self.integrator not in INTEGRATORS:
            raise ValueError(f"integrator must be one of {INTEGRATORS}")


@dataclass
class StepRecord:
    step: int
    t: float
    dt: float
    var: float
    err_x: float | None
    err_dual: float
    lyapunov: float
    energy: float
    mass: float
    newton_iterations: int
    pcg_iterations: int
    wall_seconds: float
    halvings: int = 0
    min_mu: float = 0.0

    def row(self, timing: bool = True) -> list[str]:
        def fmt(x: float | None) -> str:
            return "" if x is None else repr(float(x))

        return [
            str(self.step), fmt(self.t), fmt(self.dt), str(self.newton_iterations),
            str(self.pcg_iterations), fmt(self.var), fmt(self.err_x), fmt(self.err_dual),
            fmt(self.lyapunov), fmt(self.energy), fmt(self.mass),
            fmt(self.wall_seconds) if timing else "",
        ]


@dataclass
class RunResult:
    state: TransportState
    trace: list[StepRecord]
    status: str
    message: str = ""
    linear_solver: LinearSolverHandle | None = field(default=None, repr=False)

    def __iter__(self):
        return iter((self.state, self.trace, self.status))

    @property
    def converged(self) -> bool:
        return self.status == CONVERGED


def variation(mu_next: np.ndarray, mu_prev: np.ndarray, dt: float) -> float:
    return float(np.linalg.norm(mu_next - mu_prev) / (dt * np.linalg.norm(mu_prev)))


def _record(problem, state, step, dt, var, report_its, pcg_its, wall, halvings) -> StepRecord:
    ly = lyapunov(problem, state)
    return StepRecord(
        step=step, t=state.t, dt=dt, var=var,
        err_x=recovery_error(problem, state), err_dual=dual_error(problem, state),
        lyapunov=ly.lyapunov, energy=ly.energy, mass=ly.mass,
        newton_iterations=report_its, pcg_iterations=pcg_its, wall_seconds=wall,
        halvings=halvings, min_mu=float(state.mu.min()),
    )


def advance(
    problem: BasisPursuitProblem,
    state: TransportState,
    config: StepperConfig | None = None,
    solver: SolverConfig | None = None,
    linear_solver: LinearSolverHandle | None = None,
    dt_trial: float | None = None,
    step: int = 0,
) -> tuple[TransportState, StepRecord]:
    """One accepted backward Euler step.

    The trial step is ``growth_factor * state.dt`` unless ``dt_trial`` is
    given. Rejected trials are divided by ``backoff_factor``.

    Raises
    ------
    StalledError
        after ``MAX_HALVINGS`` rejections or once the trial step drops
        below ``DT_MIN``.
    """
    config = config or StepperConfig()
    solver = solver or SolverConfig()
    if linear_solver is None:
        linear_solver = solver.make_linear_solver()
    t0 = time.perf_counter()
    dt = config.growth_factor * state.dt if dt_trial is None else dt_trial
    newton_its = pcg_its = 0
    halvings = 0
    while True:
        if dt < DT_MIN:
            raise StalledError(f"stalled: step size underflow (dt = {dt:.3e})", state)
        new, report = newton_solve(problem, state.mu, dt, solver, state.u, linear_solver)
        newton_its += report.iterations
        pcg_its += report.pcg_iterations
        if report.converged and np.all(new.mu > 0):
            break
        log.debug("step %d rejected at dt=%.3e (%s)", step, dt, report.failure_reason)
        halvings += 1
        if halvings > MAX_HALVINGS:
            raise StalledError(
                f"stalled: {MAX_HALVINGS} step reductions ({report.failure_reason})", state
            )
        dt /= config.backoff_factor
    var = variation(new.mu, state.mu, dt)
    new.t = state.t + dt
    new.dt = dt
    wall = time.perf_counter() - t0
    return new, _record(problem, new, step, dt, var, newton_its, pcg_its, wall, halvings)


def advance_forward(
    problem: BasisPursuitProblem,
    state: TransportState,
    dt: float,
    linear_solver: LinearSolverHandle | None = None,
    step: int = 0,
) -> tuple[TransportState, StepRecord]:
    """Explicit Euler step ``mu + dt (C(mu)|Gu| - mu)`` with a fixed ``dt``."""
    t0 = time.perf_counter()
    mu = state.mu + dt * rhs(problem, state)
    if not np.all(mu > 0):
        raise StalledError(f"stalled: explicit step lost positivity at dt = {dt:.3e}", state)
    u = solve_potential(problem, mu, linear_solver)
    new = TransportState(mu, u, state.t + dt, dt)
    var = variation(mu, state.mu, dt)
    pcg_its = linear_solver.last_iterations if linear_solver else 0
    wall = time.perf_counter() - t0
    return new, _record(problem, new, step, dt, var, 0, pcg_its, wall, 0)


def run(
    problem: BasisPursuitProblem,
    config: StepperConfig | None = None,
    solver: SolverConfig | None = None,
    state: TransportState | None = None,
    linear_solver: LinearSolverHandle | None = None,
    first_step: int = 0,
) -> RunResult:
    """Integrate until ``var < tau`` or a budget runs out.

    A fresh run starts at ``mu = mu0`` and tries ``dt0`` first. Passing a
    recorded ``state`` resumes from it: the next trial step is
    ``growth_factor * state.dt``.
    """
    config = config or StepperConfig()
    solver = solver or SolverConfig()
    if linear_solver is None:
        linear_solver = solver.make_linear_solver()
    forward = config.integrator == FORWARD_EULER
    dt_trial = None
    if state is None:
        state = initial_state(problem, config.mu0, config.dt0, linear_solver)
        dt_trial = config.forward_dt if forward else config.dt0
    trace: list[StepRecord] = []
    status, message = MAX_STEPS, ""
    t_start = time.perf_counter()
    step = first_step
    for _ in range(config.max_steps):
        try:
            if forward:
                state, rec = advance_forward(problem, state, config.forward_dt, linear_solver, step)
            else:
                state, rec = advance(problem, state, config, solver, linear_solver, dt_trial, step)
        except StalledError as exc:
            status, message = STALLED, str(exc)
            state = exc.state
            break
        except SingularSystemError as exc:
            status, message = STALLED, str(exc)
            break
        dt_trial = None
        step += 1
        trace.append(rec)
        log.info(
            "step %d t=%.4e dt=%.3e var=%.3e err_dual=%.3e newton=%d pcg=%d",
            rec.step, rec.t, rec.dt, rec.var, rec.err_dual, rec.newton_iterations, rec.pcg_iterations,
        )
        if rec.var < config.tau:
            status = CONVERGED
            break
        if time.perf_counter() - t_start > config.max_wall_seconds:
            status = TIME_BUDGET
            break
    return RunResult(state, trace, status, message, linear_solver)


def write_trace_csv(trace: Iterable[StepRecord], fh, timing: bool = True) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(TRACE_COLUMNS)
    for rec in trace:
        writer.writerow(rec.row(timing))


def trace_csv(trace: Iterable[StepRecord], timing: bool = True) -> str:
    buf = io.StringIO()
    write_trace_csv(trace, buf, timing)
    return buf.getvalue()
