"""Weighted similarity graphs, their regularized Laplacians, and generators.

Edges are stored once per unordered pair with ``u < v``. The Laplacian is
never materialized: :class:`LaplacianOperator` applies ``(D - W + ridge*I)``
through the weighted degree vector and a sparse adjacency sweep, so memory
stays linear in the number of edges.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable, Literal, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import spsolve

__all__ = [
    "EdgeListError",
    "WeightedGraph",
    "LaplacianOperator",
    "laplacian",
    "gen_sbm",
    "sbm_probabilities",
    "gen_small_world",
    "ring_lattice_size",
    "newman_watts_candidate_pairs",
    "gen_cliques",
    "smooth_solve",
    "smooth_signal",
    "load_edge_list",
    "load_labels",
    "largest_connected_component",
]


class EdgeListError(ValueError):
    """Raised when an edge-list or label file cannot be parsed."""


@dataclass(frozen=True, eq=False)
class WeightedGraph:
    """Undirected graph on ``n_vertices`` vertices with positive edge weights.

    ``u``, ``v`` and ``w`` are parallel arrays; each unordered pair appears
    at most once and ``u[e] < v[e]`` for every edge. Build instances with
    :meth:`from_edges` unless the arrays are already canonical.
    """

    n_vertices: int
    u: np.ndarray
    v: np.ndarray
    w: np.ndarray

    def __post_init__(self) -> None:
        u = np.ascontiguousarray(self.u, dtype=np.int64)
        v = np.ascontiguousarray(self.v, dtype=np.int64)
        w = np.ascontiguousarray(self.w, dtype=np.float64)
        if self.n_vertices < 0:
            raise ValueError("n_vertices must be nonnegative")
        if not (u.shape == v.shape == w.shape) or u.ndim != 1:
            raise ValueError("u, v, w must be 1-d arrays of equal length")
        if u.size:
            if np.any(u >= v):
                raise ValueError("edges must satisfy u < v (no self-loops)")
            if u.min() < 0 or v.max() >= self.n_vertices:
                raise ValueError("vertex index out of range")
            if not np.all(np.isfinite(w)) or np.any(w <= 0):
                raise ValueError("edge weights must be finite and strictly positive")
            keys = u * self.n_vertices + v
            if np.unique(keys).size != keys.size:
                raise ValueError("duplicate edge; use WeightedGraph.from_edges to merge")
        for name, arr in (("u", u), ("v", v), ("w", w)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_edges(
        cls,
        n_vertices: int,
        edges: Iterable[Sequence[float]],
        *,
        drop_self_loops: bool = False,
    ) -> "WeightedGraph":
        """Build a graph from ``(u, v)`` or ``(u, v, w)`` tuples.

        Repeated pairs, in either orientation, are merged by summing weights.
        Zero-weight edges are discarded.
        """
        rows = [tuple(e) for e in edges]
        if not rows:
            return cls.empty(n_vertices)
        u = np.array([int(r[0]) for r in rows], dtype=np.int64)
        v = np.array([int(r[1]) for r in rows], dtype=np.int64)
        w = np.array([float(r[2]) if len(r) > 2 else 1.0 for r in rows])
        return cls.from_arrays(n_vertices, u, v, w, drop_self_loops=drop_self_loops)

    @classmethod
    def from_arrays(
        cls,
        n_vertices: int,
        u: np.ndarray,
        v: np.ndarray,
        w: np.ndarray | None = None,
        *,
        drop_self_loops: bool = False,
    ) -> "WeightedGraph":
        u = np.asarray(u, dtype=np.int64)
        v = np.asarray(v, dtype=np.int64)
        w = np.ones(u.shape) if w is None else np.asarray(w, dtype=np.float64)
        loops = u == v
        if loops.any():
            if not drop_self_loops:
                raise ValueError("self-loops are not allowed")
            u, v, w = u[~loops], v[~loops], w[~loops]
        if np.any(w < 0):
            raise ValueError("edge weights must be nonnegative")
        lo, hi = np.minimum(u, v), np.maximum(u, v)
        if lo.size and (lo.min() < 0 or hi.max() >= n_vertices):
            raise ValueError("vertex index out of range")
        keys, inverse = np.unique(lo * n_vertices + hi, return_inverse=True)
        summed = np.bincount(inverse, weights=w, minlength=keys.size)
        keep = summed > 0
        keys, summed = keys[keep], summed[keep]
        return cls(n_vertices, keys // n_vertices, keys % n_vertices, summed)

    @classmethod
    def empty(cls, n_vertices: int) -> "WeightedGraph":
        z = np.zeros(0, dtype=np.int64)
        return cls(n_vertices, z, z.copy(), np.zeros(0))

    @property
    def n_edges(self) -> int:
        return int(self.u.size)

    def edges(self) -> list[tuple[int, int, float]]:
        return list(zip(self.u.tolist(), self.v.tolist(), self.w.tolist()))

    @cached_property
    def adjacency(self) -> sp.csr_matrix:
        """Symmetric weight matrix ``W`` in CSR form."""
        n = self.n_vertices
        rows = np.concatenate([self.u, self.v])
        cols = np.concatenate([self.v, self.u])
        vals = np.concatenate([self.w, self.w])
        return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))

    @cached_property
    def degrees(self) -> np.ndarray:
        # Same summation order as the adjacency matvec, so L @ 1 is exactly 0.
        deg = self.adjacency @ np.ones(self.n_vertices)
        deg.setflags(write=False)
        return deg

    def quadratic_form(self, x: np.ndarray) -> float:
        """``x^T L x`` evaluated as the edge sum of ``w_uv (x_u - x_v)^2``."""
        x = np.asarray(x, dtype=np.float64)
        d = x[self.u] - x[self.v]
        return float(np.dot(self.w, d * d))

    def dense_laplacian(self) -> np.ndarray:
        return np.diag(self.degrees) - self.adjacency.toarray()


class LaplacianOperator:
    """Matrix-free ``L + ridge * I`` for a :class:`WeightedGraph`."""

    def __init__(self, graph: WeightedGraph, ridge: float) -> None:
        ridge = float(ridge)
        if not ridge > 0 or not math.isfinite(ridge):
            raise ValueError(f"ridge must be a positive finite number, got {ridge!r}")
        self.graph = graph
        self.ridge = ridge
        self._adj = graph.adjacency
        self._diag = graph.degrees + ridge
        self._diag.setflags(write=False)

    @property
    def n(self) -> int:
        return self.graph.n_vertices

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n, self.n)

    def diagonal(self) -> np.ndarray:
        return self._diag

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self._diag * x - self._adj @ x

    __matmul__ = matvec

    def quadratic_form(self, x: np.ndarray) -> float:
        """``x^T (L + ridge I) x`` without forming the matrix."""
        x = np.asarray(x, dtype=np.float64)
        return self.graph.quadratic_form(x) + self.ridge * float(np.dot(x, x))

    def norm(self, x: np.ndarray) -> float:
        return math.sqrt(self.quadratic_form(x))

    def to_sparse(self) -> sp.csc_matrix:
        return (sp.diags(self._diag) - self._adj).tocsc()

    def to_dense(self) -> np.ndarray:
        return np.diag(self._diag) - self._adj.toarray()


def laplacian(graph: WeightedGraph, lam: float) -> LaplacianOperator:
    """Regularized Laplacian ``L_lambda = D - W + lam * I``."""
    return LaplacianOperator(graph, lam)


def _decode_triu(k: np.ndarray, m: int) -> tuple[np.ndarray, np.ndarray]:
    # Row-major index over pairs (i, j), 0 <= i < j < m.
    k = np.asarray(k, dtype=np.int64)
    b = 2 * m - 1
    i = np.floor((b - np.sqrt(np.maximum(b * b - 8 * k.astype(np.float64), 0.0))) / 2).astype(np.int64)
    i = np.clip(i, 0, m - 2)

    def start(r):
        return r * (2 * m - r - 1) // 2

    for _ in range(3):
        i = np.where(start(i) > k, i - 1, i)
        i = np.where(start(i + 1) <= k, i + 1, i)
    j = k - start(i) + i + 1
    return i, j


def _sample_pairs(rng: np.random.Generator, n_pairs: int, p: float) -> np.ndarray:
    # Independent Bernoulli(p) per pair, drawn as a binomial count plus a
    # uniform subset; cost is linear in the number of realized edges.
    if n_pairs <= 0 or p <= 0:
        return np.zeros(0, dtype=np.int64)
    if p >= 1:
        return np.arange(n_pairs, dtype=np.int64)
    k = int(rng.binomial(n_pairs, p))
    return np.sort(rng.choice(n_pairs, size=k, replace=False).astype(np.int64))


def sbm_probabilities(n: int) -> tuple[float, float]:
    """Within- and cross-community edge probabilities for ``gen_sbm``."""
    m = n / 2
    return math.log(m) / m, math.log(m) / m**1.5


def gen_sbm(n: int, seed: int | np.random.SeedSequence | None) -> WeightedGraph:
    """Two-community stochastic block model with unit weights.

    Vertices ``0 .. n/2 - 1`` form the first community. Within-community
    pairs connect with probability ``log(n/2) / (n/2)``, cross pairs with
    ``log(n/2) / (n/2)**1.5``.
    """
    if n < 4 or n % 2:
        raise ValueError(f"gen_sbm needs an even n >= 4, got {n}")
    rng = np.random.default_rng(seed)
    m = n // 2
    p_in, p_out = sbm_probabilities(n)
    us, vs = [], []
    for offset in (0, m):
        i, j = _decode_triu(_sample_pairs(rng, m * (m - 1) // 2, p_in), m)
        us.append(i + offset)
        vs.append(j + offset)
    cross = _sample_pairs(rng, m * m, p_out)
    us.append(cross // m)
    vs.append(cross % m + m)
    u, v = np.concatenate(us), np.concatenate(vs)
    return WeightedGraph.from_arrays(n, u, v)


def ring_lattice_size(n: int, k_ring: int) -> int:
    """Number of distinct ring edges when each vertex links ``k_ring`` neighbours."""
    return n * k_ring // 2


def gen_small_world(
    n: int,
    k_ring: int,
    p_new: float,
    seed: int | np.random.SeedSequence | None,
    *,
    shortcuts: Literal["per_edge", "per_pair"] = "per_edge",
) -> WeightedGraph:
    """Newman-Watts small-world graph.

    Start from a ring where each vertex links to its ``k_ring`` nearest
    neighbours and add shortcuts without ever removing a ring edge.

    ``shortcuts="per_edge"`` is the classic model: every ring edge ``(u, .)``
    spawns, with probability ``p_new``, a shortcut from ``u`` to a uniformly
    chosen vertex it is not yet linked to. ``shortcuts="per_pair"`` instead
    adds every non-ring pair independently with probability ``p_new``, which
    yields ``O(p_new n^2)`` shortcuts rather than ``O(p_new n k_ring)``.
    """
    if k_ring < 0 or k_ring % 2 or k_ring >= n:
        raise ValueError(f"k_ring must be even with 0 <= k_ring < n, got k_ring={k_ring}, n={n}")
    if not 0 <= p_new <= 1:
        raise ValueError("p_new must be a probability")
    rng = np.random.default_rng(seed)
    half = k_ring // 2
    base = np.arange(n, dtype=np.int64)
    ru = np.tile(base, half)
    rv = np.concatenate([(base + s) % n for s in range(1, half + 1)]) if half else base[:0]

    if shortcuts == "per_pair":
        i, j = _decode_triu(_sample_pairs(rng, n * (n - 1) // 2, p_new), n)
        gap = j - i
        on_ring = np.minimum(gap, n - gap) <= half
        u = np.concatenate([ru, i[~on_ring]])
        v = np.concatenate([rv, j[~on_ring]])
        return WeightedGraph.from_arrays(n, u, v)
    if shortcuts != "per_edge":
        raise ValueError(f"unknown shortcut model {shortcuts!r}")

    # Ring edges ordered by source vertex, then by ring distance.
    order = np.lexsort((np.repeat(np.arange(1, half + 1), n), ru))
    sources = ru[order]
    spawn = sources[rng.random(sources.size) < p_new]
    neighbours = [set() for _ in range(n)]
    for a, b in zip(ru.tolist(), rv.tolist()):
        neighbours[a].add(b)
        neighbours[b].add(a)
    extra_u, extra_v = [], []
    for src in spawn.tolist():
        if len(neighbours[src]) >= n - 1:
            continue
        dst = int(rng.integers(n))
        while dst == src or dst in neighbours[src]:
            dst = int(rng.integers(n))
        neighbours[src].add(dst)
        neighbours[dst].add(src)
        extra_u.append(src)
        extra_v.append(dst)
    u = np.concatenate([ru, np.array(extra_u, dtype=np.int64)])
    v = np.concatenate([rv, np.array(extra_v, dtype=np.int64)])
    return WeightedGraph.from_arrays(n, u, v)


def newman_watts_candidate_pairs(n: int, k_ring: int) -> int:
    """Number of non-ring pairs, i.e. possible shortcuts under ``shortcuts="per_pair"``."""
    return n * (n - 1) // 2 - ring_lattice_size(n, k_ring)


def gen_cliques(d: int, k: int) -> WeightedGraph:
    """``d`` disjoint unit-weight ``k``-cliques; vertex ``i`` is in clique ``i // k``."""
    if d < 1 or k < 1:
        raise ValueError("d and k must be positive")
    iu, ju = np.triu_indices(k, 1)
    offsets = np.arange(d, dtype=np.int64)[:, None] * k
    u = (iu[None, :] + offsets).ravel()
    v = (ju[None, :] + offsets).ravel()
    return WeightedGraph(d * k, u, v, np.ones(u.size))


def smooth_solve(graph: WeightedGraph, y: np.ndarray) -> np.ndarray:
    """Solve ``(L + I / N^2) mu0 = y`` by sparse direct factorization."""
    n = graph.n_vertices
    if n == 0:
        raise ValueError("graph has no vertices")
    op = LaplacianOperator(graph, 1.0 / n**2)
    mu0 = np.atleast_1d(spsolve(op.to_sparse(), np.asarray(y, dtype=np.float64)))
    if not np.all(np.isfinite(mu0)):
        raise np.linalg.LinAlgError("smooth-signal solve produced non-finite values")
    return mu0


def smooth_signal(
    graph: WeightedGraph,
    seed: int | np.random.SeedSequence | None,
    *,
    sd: float = 0.2,
    center: float = 0.5,
) -> np.ndarray:
    """Random graph-smooth mean vector in ``[0, 1]``.

    A standard normal ``y`` is pushed through ``(L + I/N^2)^{-1}``, shifted
    to zero median, scaled to population standard deviation ``sd``, offset
    by ``center`` and clipped to the unit interval.
    """
    rng = np.random.default_rng(seed)
    y = rng.standard_normal(graph.n_vertices)
    mu0 = smooth_solve(graph, y)
    mu0 = mu0 - np.median(mu0)
    spread = mu0.std()
    if spread == 0:
        raise ValueError("smooth signal is constant; cannot rescale")
    return np.clip(mu0 * (sd / spread) + center, 0.0, 1.0)


_SPLIT = re.compile(r"[,\s]+")


def _fields(path: Path) -> Iterable[tuple[int, list[str]]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if line:
                yield lineno, _SPLIT.split(line)


def load_edge_list(path: str | Path, n_vertices: int | None = None) -> WeightedGraph:
    """Read ``u v [w]`` lines (whitespace or comma separated, default ``w = 1``).

    Entries for the same pair, including reciprocal ``v u`` lines, are
    summed into one undirected edge. Self-loops are dropped.
    """
    path = Path(path)
    us, vs, ws = [], [], []
    for lineno, parts in _fields(path):
        if len(parts) not in (2, 3):
            raise EdgeListError(f"{path}, line {lineno}: expected 'u v [w]', got {len(parts)} fields")
        try:
            a, b = int(parts[0]), int(parts[1])
            wt = float(parts[2]) if len(parts) == 3 else 1.0
        except ValueError as exc:
            raise EdgeListError(f"{path}, line {lineno}: {exc}") from None
        if a < 0 or b < 0 or not math.isfinite(wt) or wt < 0:
            raise EdgeListError(f"{path}, line {lineno}: negative index or invalid weight")
        us.append(a)
        vs.append(b)
        ws.append(wt)
    if not us:
        raise EdgeListError(f"{path}: no edges")
    n = max(max(us), max(vs)) + 1 if n_vertices is None else n_vertices
    graph = WeightedGraph.from_arrays(n, np.array(us), np.array(vs), np.array(ws), drop_self_loops=True)
    if graph.n_edges == 0:
        raise EdgeListError(f"{path}: graph is empty after dropping self-loops")
    return graph


def load_labels(path: str | Path, n_vertices: int) -> np.ndarray:
    """Read ``vertex_id value`` lines into a length-``n_vertices`` vector.

    Every vertex must be labelled exactly once.
    """
    path = Path(path)
    out = np.full(n_vertices, np.nan)
    for lineno, parts in _fields(path):
        if len(parts) != 2:
            raise EdgeListError(f"{path}, line {lineno}: expected 'vertex value'")
        try:
            idx, val = int(parts[0]), float(parts[1])
        except ValueError as exc:
            raise EdgeListError(f"{path}, line {lineno}: {exc}") from None
        if not 0 <= idx < n_vertices:
            raise EdgeListError(f"{path}, line {lineno}: vertex {idx} out of range")
        if not np.isnan(out[idx]):
            raise EdgeListError(f"{path}, line {lineno}: vertex {idx} labelled twice")
        out[idx] = val
    missing = np.flatnonzero(np.isnan(out))
    if missing.size:
        raise EdgeListError(f"{path}: {missing.size} vertices without a label (first: {missing[0]})")
    return out


def largest_connected_component(graph: WeightedGraph) -> tuple[WeightedGraph, np.ndarray]:
    """Restrict to the largest connected component.

    Returns the re-indexed subgraph and ``mapping`` with
    ``mapping[new_index] == original_index``. Ties go to the component
    holding the smallest original vertex.
    """
    if graph.n_vertices == 0:
        raise ValueError("graph has no vertices")
    _, comp = connected_components(graph.adjacency, directed=False)
    sizes = np.bincount(comp)
    mapping = np.flatnonzero(comp == int(np.argmax(sizes)))
    new_index = np.full(graph.n_vertices, -1, dtype=np.int64)
    new_index[mapping] = np.arange(mapping.size)
    keep = new_index[graph.u] >= 0
    sub = WeightedGraph(mapping.size, new_index[graph.u[keep]], new_index[graph.v[keep]], graph.w[keep])
    return sub, mapping
