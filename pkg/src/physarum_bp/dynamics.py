"""Right-hand side of the conductivity ODE and its Lyapunov functional.

    d mu / dt = C(mu) |G u| - mu,   S(mu) u = f

    L(mu) = E(mu) + M(mu),  E = 1/2 f^T u = 1/2 u^T S(mu) u,  M = 1/2 mu^T w
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import BasisPursuitProblem, TransportState, apply_G, compute_flux


class StalePotentialError(RuntimeError):
    """The stored potential does not solve S(mu) u = f for the stored mu."""


@dataclass(frozen=True)
class LyapunovBreakdown:
    energy: float
    mass: float
    lyapunov: float
    lie_derivative: float


def rhs(problem: BasisPursuitProblem, state: TransportState) -> np.ndarray:
    return state.mu * np.abs(apply_G(problem, state.u)) - state.mu


def mass(problem: BasisPursuitProblem, mu: np.ndarray) -> float:
    return 0.5 * float(np.dot(mu, problem.w))


def energy(problem: BasisPursuitProblem, state: TransportState, rtol: float = 1e-10) -> float:
    """Energy ``1/2 f^T u``, cross-checked against ``1/2 u^T S(mu) u``.

    The two agree only when ``u`` solves the linear system for ``mu``.
    """
    e_dual = 0.5 * float(problem.f @ state.u)
    gu = apply_G(problem, state.u)
    e_quad = 0.5 * float(np.sum(state.mu * problem.w * gu * gu))
    scale = max(abs(e_dual), abs(e_quad))
    if abs(e_dual - e_quad) > rtol * scale + 1e-300:
        raise StalePotentialError(
            f"stale potential: f^T u / 2 = {e_dual:.16e} but u^T S u / 2 = {e_quad:.16e}"
        )
    return e_dual


def lie_derivative(problem: BasisPursuitProblem, state: TransportState) -> float:
    """Time derivative of L along the flow; every summand is nonpositive."""
    g = np.abs(apply_G(problem, state.u))
    return -0.5 * float(np.sum(state.mu * (g + 1.0) * (g - 1.0) ** 2 * problem.w))


def lyapunov(problem: BasisPursuitProblem, state: TransportState, check: bool = True) -> LyapunovBreakdown:
    if check:
        e = energy(problem, state)
    else:
        e = 0.5 * float(problem.f @ state.u)
    m = mass(problem, state.mu)
    return LyapunovBreakdown(e, m, e + m, lie_derivative(problem, state))


@dataclass(frozen=True)
class OptimalityResiduals:
    primal_obj: float
    dual_obj: float
    duality_gap: float
    dual_feasibility: float

    def __iter__(self):
        return iter((self.primal_obj, self.dual_obj, self.duality_gap, self.dual_feasibility))


def optimality_residuals(problem: BasisPursuitProblem, state: TransportState) -> OptimalityResiduals:
    """Primal ``|v|_{1,W}``, dual ``f^T u``, gap ``|primal - dual|`` and ``max(0, |Gu|_inf - 1)``.

    ``f^T u`` bounds the optimum from below only once ``|Gu| <= 1``; before
    that it may overshoot, hence the absolute value in the gap.
    """
    v = compute_flux(problem, state)
    primal = float(np.sum(np.abs(v) * problem.w))
    dual = float(problem.f @ state.u)
    gmax = float(np.max(np.abs(apply_G(problem, state.u))))
    return OptimalityResiduals(primal, dual, abs(primal - dual), max(0.0, gmax - 1.0))


def dual_error(problem: BasisPursuitProblem, state: TransportState) -> float:
    """``| |Gu|_inf - 1 |``; with unit weights this is ``| |A^T u|_inf - 1 |``."""
    return abs(float(np.max(np.abs(apply_G(problem, state.u)))) - 1.0)


def recovery_error(problem: BasisPursuitProblem, state: TransportState) -> float | None:
    if problem.x_true is None:
        return None
    ref = np.linalg.norm(problem.x_true)
    diff = np.linalg.norm(compute_flux(problem, state) - problem.x_true)
    return float(diff / ref) if ref > 0 else float(diff)
