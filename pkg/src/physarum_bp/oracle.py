"""Reference optimum for small instances via a dense tableau simplex.

The weighted l1 problem is split as ``v = p - q`` with ``p, q >= 0``::

    min  w^T p + w^T q   s.t.  A p - A q = f

and solved by the two-phase simplex method with Bland's rule. The dual
``u`` is read off the optimal basis, ``B^T u = c_B``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import BasisPursuitProblem

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"


class OracleError(RuntimeError):
    pass


@dataclass
class LpSolution:
    v_opt: np.ndarray | None
    objective: float
    dual_u: np.ndarray | None
    status: str
    pivots: int = 0
    # all nonbasic reduced costs strictly positive: the optimal vertex is unique
    unique: bool = False


def _pivot(T: np.ndarray, row: int, col: int) -> None:
    T[row] /= T[row, col]
    col_vals = T[:, col].copy()
    col_vals[row] = 0.0
    T -= np.outer(col_vals, T[row])


def _simplex(T, basis, allowed, tol, max_pivots):
    """Bland-rule simplex on tableau ``T`` whose last row holds reduced costs."""
    pivots = 0
    n_rows = T.shape[0] - 1
    while True:
        cost = T[-1, :-1]
        candidates = np.flatnonzero((cost < -tol) & allowed)
        if candidates.size == 0:
            return OPTIMAL, pivots
        col = int(candidates[0])
        column = T[:n_rows, col]
        pos = column > tol
        if not np.any(pos):
            return UNBOUNDED, pivots
        ratios = np.full(n_rows, np.inf)
        ratios[pos] = T[:n_rows, -1][pos] / column[pos]
        best = ratios.min()
        ties = np.flatnonzero(ratios <= best + tol * max(1.0, abs(best)))
        row = int(min(ties, key=lambda r: basis[r]))
        _pivot(T, row, col)
        basis[row] = col
        pivots += 1
        if pivots > max_pivots:
            raise OracleError(f"simplex exceeded {max_pivots} pivots")


def lp_solve_l1(
    problem: BasisPursuitProblem,
    tol: float = 1e-10,
    max_m: int = 2000,
    max_pivots: int | None = None,
) -> LpSolution:
    """Exact minimizer of ``sum |v_e| w_e`` subject to ``A v = f``.

    Raises
    ------
    OracleError
        if ``m > max_m`` (dense tableau guard) or the pivot budget is exhausted.
    """
    m = problem.m
    if m > max_m:
        raise OracleError(f"dense simplex limited to m <= {max_m}, got m = {m}")
    A = problem.A.toarray() if problem.is_sparse else np.array(problem.A)
    f = np.array(problem.f)
    n = A.shape[0]
    E = np.hstack([A, -A])
    c = np.concatenate([problem.w, problem.w])
    nv = 2 * m
    if max_pivots is None:
        max_pivots = 50 * (nv + n) + 1000

    sign = np.where(f < 0, -1.0, 1.0)
    T = np.zeros((n + 1, nv + n + 1))
    T[:n, :nv] = E * sign[:, None]
    T[:n, nv:nv + n] = np.eye(n)
    T[:n, -1] = f * sign
    basis = list(range(nv, nv + n))

    # phase 1: minimize the sum of artificials
    T[-1, :nv] = -T[:n, :nv].sum(axis=0)
    T[-1, -1] = -T[:n, -1].sum()
    allowed = np.ones(nv + n, dtype=bool)
    status, pivots = _simplex(T, basis, allowed, tol, max_pivots)
    scale = max(1.0, float(np.abs(f).sum()))
    if -T[-1, -1] > 1e-8 * scale:
        return LpSolution(None, np.inf, None, INFEASIBLE, pivots)

    # drive artificials out of the basis; rows where that is impossible are redundant
    keep = []
    for r in range(n):
        if basis[r] >= nv:
            nz = np.flatnonzero(np.abs(T[r, :nv]) > 1e-9)
            if nz.size:
                _pivot(T, r, int(nz[0]))
                basis[r] = int(nz[0])
                pivots += 1
                keep.append(r)
        else:
            keep.append(r)
    rows = keep
    T = np.vstack([T[rows], T[-1:]])
    basis = [basis[r] for r in rows]
    T = np.hstack([T[:, :nv], T[:, -1:]])

    # phase 2
    T[-1, :] = 0.0
    T[-1, :nv] = c
    for r, b in enumerate(basis):
        T[-1] -= c[b] * T[r]
    allowed = np.ones(nv, dtype=bool)
    status, p2 = _simplex(T, basis, allowed, tol, max_pivots)
    pivots += p2
    if status == UNBOUNDED:
        return LpSolution(None, -np.inf, None, UNBOUNDED, pivots)

    x = np.zeros(nv)
    for r, b in enumerate(basis):
        x[b] = T[r, -1]
    v = x[:m] - x[m:]
    objective = float(np.sum(np.abs(v) * problem.w))

    u = np.zeros(n)
    B = E[np.ix_(rows, basis)]
    u[rows] = np.linalg.solve(B.T, c[basis])
    reduced = T[-1, :nv]
    nonbasic = np.ones(nv, dtype=bool)
    nonbasic[basis] = False
    unique = bool(np.all(reduced[nonbasic] > 1e-9))
    return LpSolution(v, objective, u, OPTIMAL, pivots, unique)
