"""Problem and state containers plus the linear operators built on them.

Every solver component works with three operators assembled from the
constraint matrix ``A`` and the weights ``w``::

    G      = W^-1 A^T              (gradient, m x n)
    C(mu)  = Diag(mu)
    S(mu)  = A C(mu) W^-1 A^T      (weighted stiffness, n x n, SPD)

``A`` may be a dense ``ndarray`` or a ``scipy.sparse`` matrix; the storage
is whatever the caller (or the file loader) supplied.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import TYPE_CHECKING

import numpy as np
import scipy.sparse as sp

if TYPE_CHECKING:
    from .krylov import LinearSolverHandle


class InputError(ValueError):
    """Malformed problem data (shapes, signs, unbalanced supplies)."""


class SingularSystemError(RuntimeError):
    """S(mu) u = f could not be solved to tolerance."""


def _as_vector(x, name: str, size: int | None = None) -> np.ndarray:
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1:
        v = v.reshape(-1)
    if size is not None and v.shape[0] != size:
        raise InputError(f"{name} has length {v.shape[0]}, expected {size}")
    if not np.all(np.isfinite(v)):
        raise InputError(f"{name} contains non-finite entries")
    return v


def _freeze(a):
    if isinstance(a, np.ndarray):
        a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class BasisPursuitProblem:
    """min sum_e |v_e| w_e  subject to  A v = f.

    Parameters
    ----------
    A : (n, m) dense array or sparse matrix
    w : (m,) positive edge weights / column lengths
    f : (n,) right-hand side
    x_true : (m,) optional ground-truth solution
    ground : row indices whose potential is pinned to zero. Used for graph
        incidence matrices, where each connected component contributes a
        one-dimensional null space to ``A^T``.
    """

    A: object
    w: np.ndarray
    f: np.ndarray
    x_true: np.ndarray | None = None
    ground: tuple[int, ...] = ()
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        A = self.A
        if sp.issparse(A):
            A = sp.csc_matrix(A, dtype=np.float64)
            A.sort_indices()
        else:
            A = np.ascontiguousarray(A, dtype=np.float64)
            if A.ndim != 2:
                raise InputError("A must be two-dimensional")
        n, m = A.shape
        if n < 1 or m < 1:
            raise InputError(f"empty constraint matrix ({n} x {m})")
        w = _as_vector(self.w, "w", m)
        if np.any(w <= 0):
            raise InputError("weights must be strictly positive")
        f = _as_vector(self.f, "f", n)
        x_true = None if self.x_true is None else _as_vector(self.x_true, "x_true", m)
        ground = tuple(sorted(int(i) for i in self.ground))
        if any(i < 0 or i >= n for i in ground):
            raise InputError("ground index out of range")
        if len(set(ground)) != len(ground) or len(ground) >= n:
            raise InputError("invalid ground set")
        if m < n - len(ground):
            raise InputError(f"need m >= n (after grounding), got n={n - len(ground)}, m={m}")
        object.__setattr__(self, "A", _freeze(A))
        object.__setattr__(self, "w", _freeze(w))
        object.__setattr__(self, "f", _freeze(f))
        object.__setattr__(self, "x_true", _freeze(x_true) if x_true is not None else None)
        object.__setattr__(self, "ground", ground)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.A.shape[1]

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.A)

    @cached_property
    def free_rows(self) -> np.ndarray:
        mask = np.ones(self.n, dtype=bool)
        mask[list(self.ground)] = False
        return np.flatnonzero(mask)

    @cached_property
    def _reduced(self) -> BasisPursuitProblem:
        rows = self.free_rows
        A = self.A[rows, :] if not self.is_sparse else self.A.tocsr()[rows, :].tocsc()
        return BasisPursuitProblem(A, self.w, self.f[rows], self.x_true, (), dict(self.meta))

    def reduced(self) -> BasisPursuitProblem:
        """Problem with the grounded rows removed (full row rank for graphs).

        Dropping a grounded row is exact when the supplies of its
        component sum to zero: that row of ``A v = f`` is minus the sum of
        the others.
        """
        if not self.ground:
            return self
        return self._reduced

    def expand_potential(self, u_reduced: np.ndarray) -> np.ndarray:
        """Lift a potential of :meth:`reduced` back to length n (zeros on ground)."""
        if not self.ground:
            return np.asarray(u_reduced, dtype=np.float64)
        u = np.zeros(self.n)
        u[self.free_rows] = u_reduced
        return u


@dataclass
class TransportState:
    """Conductivity ``mu`` (m,), potential ``u`` (n,), time ``t`` and step ``dt``."""

    mu: np.ndarray
    u: np.ndarray
    t: float = 0.0
    dt: float = 1.0

    def copy(self) -> TransportState:
        return TransportState(self.mu.copy(), self.u.copy(), self.t, self.dt)


def _check_len(x, size: int, name: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != size:
        raise InputError(f"{name} must have shape ({size},), got {x.shape}")
    return x


def apply_A(problem: BasisPursuitProblem, v: np.ndarray) -> np.ndarray:
    return np.asarray(problem.A @ v).ravel()


def apply_AT(problem: BasisPursuitProblem, u: np.ndarray) -> np.ndarray:
    return np.asarray(problem.A.T @ u).ravel()


def apply_G(problem: BasisPursuitProblem, u: np.ndarray) -> np.ndarray:
    """Return ``W^-1 A^T u``."""
    u = _check_len(u, problem.n, "u")
    return apply_AT(problem, u) / problem.w


def apply_S(problem: BasisPursuitProblem, mu: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Matrix-free ``S(mu) x``, evaluated right to left."""
    return apply_A(problem, mu * apply_G(problem, x))


def assemble_S(problem: BasisPursuitProblem, mu: np.ndarray):
    """Form ``A Diag(mu) W^-1 A^T`` explicitly (dense or sparse like ``A``)."""
    mu = _check_len(mu, problem.m, "mu")
    scale = mu / problem.w
    A = problem.A
    if problem.is_sparse:
        S = (A @ sp.diags(scale) @ A.T).tocsc()
        return ((S + S.T) * 0.5).tocsc()
    S = (A * scale) @ A.T
    # the product is symmetric only up to BLAS summation order
    return 0.5 * (S + S.T)


def solve_potential(
    problem: BasisPursuitProblem,
    mu: np.ndarray,
    solver: LinearSolverHandle | None = None,
) -> np.ndarray:
    """Solve ``S(mu) u = f``; grounded rows get zero potential.

    Raises
    ------
    SingularSystemError
        if the factorization breaks down or the residual check fails; this
        signals rank deficiency of ``A`` or ``f`` outside its range.
    """
    from .krylov import InnerSolveError, LinearSolverHandle

    mu = _check_len(mu, problem.m, "mu")
    if np.any(mu <= 0):
        raise InputError("mu must be strictly positive")
    if solver is None:
        solver = LinearSolverHandle()
    work = problem.reduced()
    f = work.f
    fnorm = np.linalg.norm(f)
    if fnorm == 0.0:
        return np.zeros(problem.n)
    try:
        u, _ = solver.solve(
            lambda x: apply_S(work, mu, x), lambda: assemble_S(work, mu), f, solver.tolerance
        )
    except InnerSolveError as exc:
        raise SingularSystemError(f"singular system: {exc}") from exc
    rel = np.linalg.norm(apply_S(work, mu, u) - f) / fnorm
    if not rel <= max(solver.tolerance, 1e-10):
        raise SingularSystemError(
            f"singular system: relative residual {rel:.3e} after solve "
            "(A rank deficient or f outside range(A))"
        )
    return problem.expand_potential(u)


def compute_flux(problem: BasisPursuitProblem, state: TransportState) -> np.ndarray:
    """Flux ``v = C(mu) G u``."""
    return state.mu * apply_G(problem, state.u)


def initial_state(
    problem: BasisPursuitProblem,
    mu0: float | np.ndarray = 1.0,
    dt: float = 1.0,
    solver: LinearSolverHandle | None = None,
) -> TransportState:
    mu = np.broadcast_to(np.asarray(mu0, dtype=np.float64), (problem.m,)).copy()
    return TransportState(mu, solve_potential(problem, mu, solver), 0.0, dt)
