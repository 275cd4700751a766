"""Inner linear solves: PCG preconditioned by a reused Cholesky factor.

The reduced Newton matrix ``M = S(mu_tilde)`` is only formed when a new
preconditioner is needed; every PCG product goes through
``A (mu_tilde * (W^-1 (A^T x)))``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)

DIRECT = "direct-cholesky"
PCG_CACHE = "pcg-with-cache"
MODES = (DIRECT, PCG_CACHE)


class InnerSolveError(RuntimeError):
    """PCG did not reach its tolerance."""

    def __init__(self, msg: str, x: np.ndarray | None = None, iterations: int = 0):
        super().__init__(msg)
        self.x = x
        self.iterations = iterations


class IndefinitePreconditionerError(InnerSolveError):
    """Cholesky breakdown while building the preconditioner."""


class CholeskyFactor:
    """Cholesky factor of an SPD matrix, dense or sparse.

    Sparse matrices go through SuperLU with an approximate minimum degree
    ordering on ``M + M^T`` and no off-diagonal pivoting, which for an SPD
    matrix is a symmetric ``L D L^T`` factorization in disguise.
    """

    def __init__(self, M):
        self.n = M.shape[0]
        if sp.issparse(M):
            try:
                lu = spla.splu(
                    sp.csc_matrix(M),
                    permc_spec="MMD_AT_PLUS_A",
                    diag_pivot_thresh=0.0,
                    options={"SymmetricMode": True},
                )
            except RuntimeError as exc:
                raise IndefinitePreconditionerError(f"sparse factorization failed: {exc}")
            pivots = lu.U.diagonal()
            self.min_pivot = float(pivots.min())
            if not self.min_pivot > 0 or not np.all(np.isfinite(pivots)):
                raise IndefinitePreconditionerError(
                    f"indefinite preconditioner: smallest pivot {self.min_pivot:.3e}"
                )
            self._lu = lu
            self._solve = lu.solve
        else:
            try:
                L = sla.cholesky(M, lower=True, check_finite=False)
            except sla.LinAlgError as exc:
                raise IndefinitePreconditionerError(f"indefinite preconditioner: {exc}")
            diag = np.diag(L)
            self.min_pivot = float(diag.min() ** 2)
            if not np.all(np.isfinite(diag)) or not self.min_pivot > 0:
                raise IndefinitePreconditionerError(
                    f"indefinite preconditioner: smallest pivot {self.min_pivot:.3e}"
                )
            self._L = L
            self._solve = lambda b: sla.cho_solve((L, True), b, check_finite=False)

    def solve(self, b: np.ndarray) -> np.ndarray:
        return self._solve(b)


@dataclass
class PreconditionerCache:
    factor: CholeskyFactor | None = None
    age: int = 0
    last_pcg_iterations: int = 0

    @property
    def empty(self) -> bool:
        return self.factor is None


def pcg(
    apply_M: Callable[[np.ndarray], np.ndarray],
    rhs: np.ndarray,
    precond: PreconditionerCache | CholeskyFactor | Callable | None,
    tol: float,
    max_iterations: int = 200,
    x0: np.ndarray | None = None,
    callback: Callable[[np.ndarray], None] | None = None,
) -> tuple[np.ndarray, int]:
    """Preconditioned conjugate gradient for an SPD operator.

    Stops when ``sqrt(r^T P^-1 r)`` drops below ``tol`` times its initial
    value. ``precond`` may be a cache, a factor, a callable ``r -> P^-1 r``
    or ``None`` (identity).

    Raises
    ------
    InnerSolveError
        after ``max_iterations`` without convergence; carries the best
        iterate in ``.x``.
    """
    if isinstance(precond, PreconditionerCache):
        precond = precond.factor
    if precond is None:
        psolve = lambda r: r.copy()  # noqa: E731
    elif isinstance(precond, CholeskyFactor):
        psolve = precond.solve
    else:
        psolve = precond

    rhs = np.asarray(rhs, dtype=np.float64)
    if x0 is None:
        x = np.zeros_like(rhs)
        r = rhs.copy()
    else:
        x = np.array(x0, dtype=np.float64)
        r = rhs - apply_M(x)
    z = psolve(r)
    rz = float(r @ z)
    if rz <= 0.0:
        if rz == 0.0:
            return x, 0
        raise IndefinitePreconditionerError("preconditioner is not positive definite")
    target = tol * np.sqrt(rz)
    p = z.copy()
    for it in range(1, max_iterations + 1):
        q = apply_M(p)
        pq = float(p @ q)
        if not pq > 0:
            raise InnerSolveError(f"operator not positive definite (p^T M p = {pq:.3e})", x, it)
        alpha = rz / pq
        x += alpha * p
        r -= alpha * q
        if callback is not None:
            callback(x)
        z = psolve(r)
        rz_new = float(r @ z)
        if rz_new < 0:
            raise IndefinitePreconditionerError("preconditioner is not positive definite")
        if np.sqrt(rz_new) <= target:
            return x, it
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise InnerSolveError(
        f"PCG did not converge in {max_iterations} iterations", x, max_iterations
    )


def forcing_term(newton_residual_norm: float, initial_residual_norm: float) -> float:
    """Inexact-Newton inner tolerance, ``sqrt(|F_m| / |F_0|)`` clamped to [1e-12, 0.1]."""
    if initial_residual_norm <= 0:
        return 1e-12
    eta = np.sqrt(newton_residual_norm / initial_residual_norm)
    return float(min(max(eta, 1e-12), 0.1))


def maybe_refresh(
    cache: PreconditionerCache,
    M_assembler: Callable[[], object],
    last_iterations: int,
    threshold: int,
) -> PreconditionerCache:
    """Refactorize when the cache is empty or PCG needed more than ``threshold`` iterations."""
    if cache.empty or last_iterations > threshold:
        factor = CholeskyFactor(M_assembler())
        return PreconditionerCache(factor=factor, age=0, last_pcg_iterations=0)
    return cache


@dataclass
class LinearSolverHandle:
    """Inner-solver settings plus the preconditioner it carries between solves.

    ``direct-cholesky`` refactorizes for every solve (PCG then needs one or
    two iterations); ``pcg-with-cache`` keeps a factor until PCG needs more
    than ``refresh_threshold`` iterations.
    """

    mode: str = PCG_CACHE
    tolerance: float = 1e-12
    max_iterations: int = 200
    refresh_threshold: int = 30
    cache: PreconditionerCache = field(default_factory=PreconditionerCache)
    factorizations: int = 0
    last_iterations: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown linear solver mode {self.mode!r}; expected one of {MODES}")
        if not 0 < self.tolerance < 1:
            raise ValueError("tolerance must lie in (0, 1)")
        if self.refresh_threshold < 1:
            raise ValueError("refresh_threshold must be >= 1")

    def _refresh(self, assembler, force: bool = False) -> None:
        last = self.cache.last_pcg_iterations
        if self.mode == DIRECT or force:
            self.cache = PreconditionerCache()
        new = maybe_refresh(self.cache, assembler, last, self.refresh_threshold)
        if new is not self.cache:
            self.factorizations += 1
            log.debug("preconditioner refactorized (last PCG iterations %d)", last)
        self.cache = new

    def solve(
        self,
        apply_M: Callable[[np.ndarray], np.ndarray],
        assemble_M: Callable[[], object],
        rhs: np.ndarray,
        tol: float,
    ) -> tuple[np.ndarray, int]:
        """Solve ``M x = rhs``; returns ``(x, pcg_iterations)``.

        A stale preconditioner that lets PCG run out of iterations is
        replaced and the solve retried once before giving up.
        """
        tol = max(tol, self.tolerance)
        self._refresh(assemble_M)
        fresh = self.cache.age == 0
        total = 0
        try:
            x, its = pcg(apply_M, rhs, self.cache, tol, self.max_iterations)
        except IndefinitePreconditionerError:
            raise
        except InnerSolveError as exc:
            total += exc.iterations
            if fresh:
                raise
            self._refresh(assemble_M, force=True)
            x, its = pcg(apply_M, rhs, self.cache, tol, self.max_iterations)
        total += its
        self.cache.age += 1
        self.cache.last_pcg_iterations = its
        self.last_iterations = total
        return x, total
