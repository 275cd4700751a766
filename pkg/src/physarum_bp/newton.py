"""One implicit Euler step solved by inexact Newton.

Unknowns ``z = (u, mu)``; the step from ``mu_prev`` with size ``dt`` is the
zero of

    F1 = S(mu) u - f
    F2 = mu - dt (C(mu)|G u| - mu) - mu_prev

with Jacobian

    [ S(mu)                  A Diag(G u) ]
    [ -dt C(mu) D1 G         D2          ]

    D1 = Diag(sign(G u)),  D2 = Diag(1 - dt (|G u| - 1)).

Eliminating the ``mu`` update leaves ``S(mu_tilde) s1 = A Diag(Gu) D2^-1 F2 - F1``
with ``mu_tilde = mu (1 + dt) / D2``, which is SPD whenever ``D2 > 0``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .core import (
    BasisPursuitProblem,
    TransportState,
    apply_A,
    apply_G,
    apply_S,
    assemble_S,
    solve_potential,
)
from .krylov import (
    PCG_CACHE,
    InnerSolveError,
    LinearSolverHandle,
    forcing_term,
)

log = logging.getLogger(__name__)


class StepTooLargeError(RuntimeError):
    """Some entry of D2 is nonpositive: the time step must shrink."""


@dataclass
class SolverConfig:
    """Newton and inner-solver settings."""

    newton_tol: float = 1e-11
    newton_max_iter: int = 20
    linear_mode: str = PCG_CACHE
    pcg_tol: float = 1e-12
    pcg_max_iter: int = 200
    precond_refresh: int = 30

    def make_linear_solver(self) -> LinearSolverHandle:
        return LinearSolverHandle(
            mode=self.linear_mode,
            tolerance=self.pcg_tol,
            max_iterations=self.pcg_max_iter,
            refresh_threshold=self.precond_refresh,
        )


@dataclass
class NewtonWorkspace:
    Gu: np.ndarray
    D1: np.ndarray
    D2: np.ndarray
    mu_tilde: np.ndarray | None
    mu: np.ndarray
    dt: float
    F1: np.ndarray | None = None
    F2: np.ndarray | None = None


@dataclass
class NewtonReport:
    iterations: int = 0
    final_residual: float = np.inf
    pcg_iterations: int = 0
    converged: bool = False
    failure_reason: str | None = None
    residual_history: list[float] = field(default_factory=list)


def residual(
    problem: BasisPursuitProblem, state: TransportState, mu_prev: np.ndarray, dt: float
) -> tuple[np.ndarray, np.ndarray]:
    mu, u = state.mu, state.u
    gu = apply_G(problem, u)
    F1 = apply_A(problem, mu * gu) - problem.f
    F2 = mu - dt * (mu * np.abs(gu) - mu) - mu_prev
    return F1, F2


def mu_tilde(mu: np.ndarray, Gu_abs: np.ndarray, dt: float) -> np.ndarray:
    return mu * (1.0 + dt) / (1.0 - dt * (Gu_abs - 1.0))


def jacobian_blocks(
    problem: BasisPursuitProblem,
    state: TransportState,
    dt: float,
    mu_prev: np.ndarray | None = None,
) -> NewtonWorkspace:
    """Diagonal pieces of the Jacobian at ``state``; ``sign(0)`` is taken as 0."""
    gu = apply_G(problem, state.u)
    g_abs = np.abs(gu)
    D2 = 1.0 - dt * (g_abs - 1.0)
    mt = mu_tilde(state.mu, g_abs, dt) if np.all(D2 > 0) else None
    ws = NewtonWorkspace(gu, np.sign(gu), D2, mt, state.mu, dt)
    if mu_prev is not None:
        ws.F1, ws.F2 = residual(problem, state, mu_prev, dt)
    return ws


def assemble_jacobian(problem: BasisPursuitProblem, state: TransportState, dt: float) -> np.ndarray:
    """Dense (n+m) x (n+m) Jacobian; for verification on small instances."""
    ws = jacobian_blocks(problem, state, dt)
    A = problem.A.toarray() if problem.is_sparse else np.asarray(problem.A)
    G = A.T / problem.w[:, None]
    n, m = problem.n, problem.m
    J = np.zeros((n + m, n + m))
    S = assemble_S(problem, state.mu)
    J[:n, :n] = S.toarray() if problem.is_sparse else S
    J[:n, n:] = A * ws.Gu
    J[n:, :n] = -dt * (state.mu * ws.D1)[:, None] * G
    J[n:, n:] = np.diag(ws.D2)
    return J


def schur_solve(
    workspace: NewtonWorkspace,
    problem: BasisPursuitProblem,
    dt: float,
    linear_solver: LinearSolverHandle,
    tol: float | None = None,
) -> tuple[np.ndarray, np.ndarray, int]:
    """Solve ``J s = -F`` through the reduced SPD system.

    Returns ``(s1, s2, pcg_iterations)``. The conductivity update is
    recovered by back substitution from the second block row,
    ``s2 = D2^-1 (dt C D1 G s1 - F2)``.

    Raises
    ------
    StepTooLargeError
        if ``D2`` has a nonpositive entry.
    InnerSolveError
        if PCG fails even with a fresh preconditioner.
    """
    ws = workspace
    if not np.all(ws.D2 > 0):
        raise StepTooLargeError(f"step too large: min D2 = {ws.D2.min():.3e} at dt = {dt:.3e}")
    if ws.F1 is None or ws.F2 is None:
        raise ValueError("workspace carries no residual")
    mt = ws.mu_tilde if ws.mu_tilde is not None else mu_tilde(ws.mu, np.abs(ws.Gu), dt)
    rhs = apply_A(problem, ws.Gu / ws.D2 * ws.F2) - ws.F1
    if tol is None:
        tol = linear_solver.tolerance
    if not np.any(rhs):
        s1, its = np.zeros(problem.n), 0
    else:
        s1, its = linear_solver.solve(
            lambda x: apply_S(problem, mt, x), lambda: assemble_S(problem, mt), rhs, tol
        )
    s2 = (dt * ws.mu * ws.D1 * apply_G(problem, s1) - ws.F2) / ws.D2
    return s1, s2, its


def _norm(F1: np.ndarray, F2: np.ndarray) -> float:
    return float(np.sqrt(F1 @ F1 + F2 @ F2))


def newton_solve(
    problem: BasisPursuitProblem,
    mu_prev: np.ndarray,
    dt: float,
    config: SolverConfig | None = None,
    u_prev: np.ndarray | None = None,
    linear_solver: LinearSolverHandle | None = None,
) -> tuple[TransportState, NewtonReport]:
    """Backward Euler step from ``mu_prev``, starting Newton at ``(u_prev, mu_prev)``.

    Grounded problems are solved on their reduced form and the potential
    is lifted back. Failures are reported, not raised; the returned state
    is then the last iterate and must not be accepted.
    """
    config = config or SolverConfig()
    if linear_solver is None:
        linear_solver = config.make_linear_solver()
    work = problem.reduced()
    if u_prev is None:
        u = solve_potential(work, mu_prev, linear_solver)
    else:
        u = np.array(u_prev, dtype=np.float64)
        if problem.ground:
            u = u[problem.free_rows]
    mu = np.array(mu_prev, dtype=np.float64)
    state = TransportState(mu, u, 0.0, dt)
    report = NewtonReport()
    tol = config.newton_tol * max(1.0, float(np.linalg.norm(work.f)))

    F1, F2 = residual(work, state, mu_prev, dt)
    fnorm = _norm(F1, F2)
    f0 = fnorm
    report.residual_history.append(fnorm)
    while True:
        # for dt > 0 the starting iterate is never accepted untouched: at tiny dt it
        # passes the tolerance trivially and would fake a zero variation
        if fnorm <= tol and (report.iterations > 0 or dt == 0.0):
            report.converged = True
            break
        if report.iterations >= config.newton_max_iter:
            report.failure_reason = "max_iterations"
            break
        if not np.isfinite(fnorm):
            report.failure_reason = "non_finite"
            break
        ws = jacobian_blocks(work, state, dt)
        ws.F1, ws.F2 = F1, F2
        try:
            s1, s2, its = schur_solve(ws, work, dt, linear_solver, forcing_term(fnorm, f0))
        except StepTooLargeError:
            report.failure_reason = "step_too_large"
            break
        except InnerSolveError as exc:
            report.failure_reason = f"inner_solve_failed: {exc}"
            break
        report.pcg_iterations += its
        report.iterations += 1
        state.u = state.u + s1
        state.mu = state.mu + s2
        if not np.all(state.mu > 0):
            report.failure_reason = "nonpositive_mu"
            break
        F1, F2 = residual(work, state, mu_prev, dt)
        fnorm = _norm(F1, F2)
        report.residual_history.append(fnorm)
    report.final_residual = fnorm
    log.debug(
        "newton dt=%.3e its=%d |F|=%.3e reason=%s",
        dt, report.iterations, fnorm, report.failure_reason,
    )
    state.u = problem.expand_potential(state.u)
    return state, report
