"""Benchmark problems: random dense basis pursuit and graph transshipment.

Random numbers come from the Philox-4x64 counter-based generator (keyed
by the seed) through fixed mappings, so every instance is reproducible
from ``(spec, seed)`` alone:

* raw 64-bit word ``r`` -> uniform ``U = ((r >> 11) + 0.5) * 2**-53`` in (0, 1);
* standard normal ``Z = Phi^-1(U)`` (inverse CDF);
* uniform on ``[a, b]``: ``a + (b - a) * U``;
* support: partial Fisher-Yates, swapping slot ``i`` with
  ``i + floor(U * (m - i))`` for ``i = 0 .. k-1``.

The draw order for :func:`generate_random_bp` is: ``n*m`` normals for
``A`` (row-major), ``k`` uniforms for the support, ``k`` uniforms for the
values.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.special import ndtri

from .core import BasisPursuitProblem, InputError

_INV_2_53 = 2.0 ** -53

PAPER_BASE = (250, 25000, 5)


class PhiloxStream:
    """Sequential draws from Philox-4x64 keyed by ``seed``."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._bitgen = np.random.Philox(key=self.seed & (2**64 - 1))

    def raw(self, size: int) -> np.ndarray:
        return self._bitgen.random_raw(size)

    def uniform(self, size: int) -> np.ndarray:
        r = self.raw(size)
        return ((r >> np.uint64(11)).astype(np.float64) + 0.5) * _INV_2_53

    def normal(self, size: int) -> np.ndarray:
        return ndtri(self.uniform(size))


@dataclass(frozen=True)
class RandomBpSpec:
    n: int
    m: int
    k: int
    seed: int = 0
    value_range: tuple[float, float] = (-10.0, 10.0)

    def __post_init__(self):
        if not (1 <= self.n <= self.m):
            raise InputError(f"need 1 <= n <= m, got n={self.n}, m={self.m}")
        if not (0 <= self.k <= self.m):
            raise InputError(f"need 0 <= k <= m, got k={self.k}")
        lo, hi = self.value_range
        if not lo < hi:
            raise InputError("value_range must be an increasing interval")


def generate_random_bp(spec: RandomBpSpec) -> BasisPursuitProblem:
    """Row-normalized Gaussian ``A``, ``k``-sparse ``x_true``, ``f = A x_true``, ``w = 1``."""
    rng = PhiloxStream(spec.seed)
    n, m, k = spec.n, spec.m, spec.k
    A = rng.normal(n * m).reshape(n, m)
    A /= np.linalg.norm(A, axis=1)[:, None]
    perm = np.arange(m)
    picks = rng.uniform(k)
    for i in range(k):
        j = i + int(picks[i] * (m - i))
        perm[i], perm[j] = perm[j], perm[i]
    support = perm[:k]
    lo, hi = spec.value_range
    x = np.zeros(m)
    x[support] = lo + (hi - lo) * rng.uniform(k)
    f = A @ x
    meta = {"kind": "random", "n": n, "m": m, "k": k, "seed": spec.seed}
    return BasisPursuitProblem(A, np.ones(m), f, x, (), meta)


def paper_suite(i: int) -> RandomBpSpec:
    """Instance ``i`` of the four-problem sequence ``(250, 25000, 5) * 2**(i-1)``; seed ``i``."""
    if i not in (1, 2, 3, 4):
        raise InputError(f"suite index must be 1..4, got {i}")
    s = 2 ** (i - 1)
    n, m, k = PAPER_BASE
    return RandomBpSpec(n * s, m * s, k * s, seed=i)


def scaled_suite(i: int, scale: float) -> RandomBpSpec:
    """Suite instance ``i`` with ``n`` and ``m`` shrunk by ``scale``; ``k`` is kept."""
    base = paper_suite(i)
    n = max(1, int(round(base.n * scale)))
    m = max(n, int(round(base.m * scale)))
    return RandomBpSpec(n, m, min(base.k, n), seed=base.seed)


@dataclass(frozen=True)
class GraphSpec:
    """Graph with ``n_nodes`` vertices; edge ``e = (i, j)`` is oriented ``i -> j``."""

    n_nodes: int
    edges: tuple[tuple[int, int], ...]
    lengths: tuple[float, ...]
    supply: tuple[float, ...]
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if len(self.lengths) != len(self.edges):
            raise InputError("one length per edge required")
        if len(self.supply) != self.n_nodes:
            raise InputError("one supply value per node required")
        if any(not (l > 0) for l in self.lengths):
            raise InputError("edge lengths must be positive")
        for i, j in self.edges:
            if not (0 <= i < self.n_nodes and 0 <= j < self.n_nodes) or i == j:
                raise InputError(f"invalid edge ({i}, {j})")


def incidence_matrix(n_nodes: int, edges) -> sp.csc_matrix:
    """Signed incidence: column ``e`` has ``+1`` at its tail and ``-1`` at its head."""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    m = edges.shape[0]
    rows = np.concatenate([edges[:, 0], edges[:, 1]])
    cols = np.concatenate([np.arange(m), np.arange(m)])
    vals = np.concatenate([np.ones(m), -np.ones(m)])
    return sp.csc_matrix((vals, (rows, cols)), shape=(n_nodes, m))


def connected_components(n_nodes: int, edges) -> np.ndarray:
    from scipy.sparse.csgraph import connected_components as cc

    A = incidence_matrix(n_nodes, edges)
    adj = abs(A) @ abs(A).T
    _, labels = cc(adj, directed=False)
    return labels


def generate_graph_problem(spec: GraphSpec, tol: float = 1e-12) -> BasisPursuitProblem:
    """Transshipment problem on the graph; grounds the lowest node of each component."""
    A = incidence_matrix(spec.n_nodes, spec.edges)
    f = np.asarray(spec.supply, dtype=np.float64)
    labels = connected_components(spec.n_nodes, spec.edges)
    ground = []
    for c in np.unique(labels):
        nodes = np.flatnonzero(labels == c)
        total = f[nodes].sum()
        if abs(total) > tol * max(1.0, np.abs(f[nodes]).sum()):
            raise InputError(f"unbalanced supplies: component of node {nodes[0]} sums to {total:g}")
        ground.append(int(nodes[0]))
    if len(ground) >= spec.n_nodes:
        raise InputError("every node is isolated")
    meta = {"kind": "graph", "n_nodes": spec.n_nodes, **spec.meta}
    return BasisPursuitProblem(A, np.asarray(spec.lengths, dtype=np.float64), f, None, tuple(ground), meta)


def path_graph(n_nodes: int, lengths=None) -> GraphSpec:
    """Path ``0 -> 1 -> ... -> n-1`` carrying one unit from node 0 to the last node."""
    if n_nodes < 2:
        raise InputError("path needs at least two nodes")
    edges = tuple((i, i + 1) for i in range(n_nodes - 1))
    lens = tuple(float(l) for l in lengths) if lengths is not None else (1.0,) * (n_nodes - 1)
    supply = [0.0] * n_nodes
    supply[0], supply[-1] = 1.0, -1.0
    return GraphSpec(n_nodes, edges, lens, tuple(supply), {"topology": "path"})


def grid_graph(rows: int, cols: int, seed: int = 0) -> GraphSpec:
    """Grid with Philox-random edge lengths in [1, 2], one source corner and one sink corner."""
    if rows < 1 or cols < 1 or rows * cols < 2:
        raise InputError("grid needs at least two nodes")
    idx = lambda r, c: r * cols + c  # noqa: E731
    edges = []
    for r in range(rows):
        for c in range(cols):
            if c + 1 < cols:
                edges.append((idx(r, c), idx(r, c + 1)))
            if r + 1 < rows:
                edges.append((idx(r, c), idx(r + 1, c)))
    lens = 1.0 + PhiloxStream(seed).uniform(len(edges))
    supply = [0.0] * (rows * cols)
    supply[0], supply[-1] = 1.0, -1.0
    return GraphSpec(
        rows * cols, tuple(edges), tuple(float(l) for l in lens), tuple(supply),
        {"topology": "grid", "rows": rows, "cols": cols, "seed": seed},
    )
