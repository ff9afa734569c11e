"""Agent graphs: reference topologies, hop distances, expanded graphs and walk counts."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from netlqr import kernels
from netlqr.errors import ParameterError, TopologyError

__all__ = [
    "Topology",
    "NeighborhoodIndex",
    "WalkTable",
    "build_topology",
    "neighborhoods",
    "expand_graph",
    "count_walks",
    "iter_walk_counts",
    "walk_bound_constants",
    "table1_bound",
    "WALK_INT_LIMIT",
    "CLOSED_FORM_KINDS",
    "bound_params_for",
]

KINDS = ("line", "cycle", "tree", "grid4", "custom")
CLOSED_FORM_KINDS = ("line", "cycle", "tree", "grid4")

# int64 walk counts switch to Python ints once an entry would pass this
WALK_INT_LIMIT = 2**62


@dataclass(frozen=True)
class Topology:
    """Undirected simple graph on agents ``0..n-1``.

    ``edges`` holds pairs ``(i, j)`` with ``i < j``. ``params`` records the
    size parameters the graph was built from (``f`` and ``depth`` for trees,
    ``side`` for grids).
    """

    n: int
    edges: frozenset
    kind: str = "custom"
    params: tuple = ()

    def __post_init__(self):
        if self.n < 1:
            raise ParameterError(f"topology needs at least one agent, got n={self.n}")
        if self.kind not in KINDS:
            raise ParameterError(f"unknown topology kind {self.kind!r}")
        norm = set()
        for i, j in self.edges:
            i, j = int(i), int(j)
            if i == j:
                raise TopologyError(f"self-loop on agent {i}")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise TopologyError(f"edge ({i}, {j}) out of range for n={self.n}")
            norm.add((min(i, j), max(i, j)))
        object.__setattr__(self, "edges", frozenset(norm))

    @classmethod
    def from_edges(cls, n, edges, kind="custom", **params):
        return cls(int(n), frozenset(edges), kind, tuple(sorted(params.items())))

    @property
    def param_dict(self):
        return dict(self.params)

    def adjacency(self, dtype=np.int64):
        adj = np.zeros((self.n, self.n), dtype=dtype)
        for i, j in self.edges:
            adj[i, j] = adj[j, i] = 1
        return adj

    def neighbor_lists(self):
        nbrs = [[] for _ in range(self.n)]
        for i, j in sorted(self.edges):
            nbrs[i].append(j)
            nbrs[j].append(i)
        return [sorted(x) for x in nbrs]

    def csr(self):
        """Adjacency in compressed-row form ``(indptr, indices)``."""
        nbrs = self.neighbor_lists()
        indptr = np.zeros(self.n + 1, dtype=np.int64)
        indptr[1:] = np.cumsum([len(x) for x in nbrs])
        indices = np.array([k for x in nbrs for k in x], dtype=np.int64)
        return indptr, indices

    def __repr__(self):
        extra = "".join(f", {k}={v}" for k, v in self.params)
        return f"Topology(kind={self.kind!r}, n={self.n}, edges={len(self.edges)}{extra})"


def build_topology(kind, n=None, *, f=2, depth=None, side=None):
    """Build one of the reference graphs.

    ``line`` and ``cycle`` take ``n``; ``tree`` takes branching factor ``f``
    and number of levels ``depth`` (``depth=7, f=2`` gives 127 agents);
    ``grid4`` takes ``side`` and produces the side x side lattice with
    4-neighbour edges and no wraparound.
    """
    if kind == "line":
        if n is None or n < 1:
            raise ParameterError(f"line needs n >= 1, got {n}")
        return Topology.from_edges(n, [(i, i + 1) for i in range(n - 1)], "line")
    if kind == "cycle":
        if n is None or n < 3:
            raise ParameterError(f"cycle needs n >= 3, got {n}")
        return Topology.from_edges(n, [(i, (i + 1) % n) for i in range(n)], "cycle")
    if kind == "tree":
        if depth is None or depth < 1:
            raise ParameterError(f"tree needs depth >= 1, got {depth}")
        if f < 1:
            raise ParameterError(f"tree needs branching factor f >= 1, got {f}")
        size = depth if f == 1 else (f**depth - 1) // (f - 1)
        # heap numbering: children of v are f*v+1 .. f*v+f
        edges = [((v - 1) // f, v) for v in range(1, size)]
        return Topology.from_edges(size, edges, "tree", f=f, depth=depth)
    if kind == "grid4":
        if side is None or side < 2:
            raise ParameterError(f"grid4 needs side >= 2, got {side}")
        edges = []
        for r in range(side):
            for c in range(side):
                v = r * side + c
                if c + 1 < side:
                    edges.append((v, v + 1))
                if r + 1 < side:
                    edges.append((v, v + side))
        return Topology.from_edges(side * side, edges, "grid4", side=side)
    raise ParameterError(f"unknown topology kind {kind!r}")


@dataclass(frozen=True)
class NeighborhoodIndex:
    """All-pairs hop distances plus sorted k-hop neighbourhoods."""

    dist: np.ndarray
    diameter: int
    _cache: dict = field(repr=False, default_factory=dict, compare=False)

    @property
    def n(self):
        return self.dist.shape[0]

    def hop(self, i, k):
        """Sorted agents within ``k`` hops of ``i`` (including ``i``)."""
        if k < 0:
            raise ParameterError(f"radius must be >= 0, got {k}")
        key = (i, min(k, self.diameter))
        if key not in self._cache:
            self._cache[key] = tuple(np.flatnonzero(self.dist[i] <= key[1]).tolist())
        return self._cache[key]

    def outside(self, i, k):
        return tuple(j for j in range(self.n) if self.dist[i, j] > k)

    def within(self, k):
        """Boolean ``n x n`` mask of pairs at distance <= k."""
        return self.dist <= k


def neighborhoods(topology):
    """BFS distances from every agent; raises TopologyError if disconnected."""
    n = topology.n
    nbrs = topology.neighbor_lists()
    dist = np.full((n, n), -1, dtype=np.int64)
    for s in range(n):
        dist[s, s] = 0
        queue = deque([s])
        while queue:
            v = queue.popleft()
            for w in nbrs[v]:
                if dist[s, w] < 0:
                    dist[s, w] = dist[s, v] + 1
                    queue.append(w)
    if (dist < 0).any():
        raise TopologyError("graph is disconnected")
    dist.setflags(write=False)
    return NeighborhoodIndex(dist, int(dist.max()))


def expand_graph(topology, r, nbr=None):
    """Graph with an edge between every pair at hop distance 1..r."""
    if r < 1:
        raise ParameterError(f"expansion radius must be >= 1, got {r}")
    if r == 1:
        return topology
    nbr = nbr or neighborhoods(topology)
    ii, jj = np.nonzero(np.triu((nbr.dist >= 1) & (nbr.dist <= r)))
    return Topology.from_edges(topology.n, zip(ii.tolist(), jj.tolist()), "custom", expanded_from=topology.kind, r=r)


@dataclass(frozen=True)
class WalkTable:
    """Exact walk counts ``counts[t][i, j]`` in the expanded graph G(r)."""

    r: int
    counts: tuple

    @property
    def t_max(self):
        return len(self.counts) - 1

    def count(self, i, j, t):
        return int(self.counts[t][i, j])

    def __getitem__(self, key):
        i, j, t = key
        return self.count(i, j, t)


def iter_walk_counts(topology, r, t_max):
    """Yield ``(t, W_t)`` for t = 0..t_max, W_t the t-th adjacency power of G(r).

    Entries are int64 until some count would pass ``WALK_INT_LIMIT``; from
    then on the arrays have object dtype holding Python ints.
    """
    if t_max < 0:
        raise ParameterError(f"t_max must be >= 0, got {t_max}")
    g = expand_graph(topology, r)
    indptr, indices = g.csr()
    W = np.eye(g.n, dtype=np.int64)
    yield 0, W
    big = False
    for t in range(1, t_max + 1):
        if not big:
            nxt, overflow = kernels.walk_step(W, indptr, indices, WALK_INT_LIMIT)
            if overflow:
                big = True
                W = W.astype(object)
            else:
                W = nxt
        if big:
            W = kernels.walk_step_object(W, indptr, indices)
        yield t, W


def count_walks(topology, r, t_max):
    return WalkTable(r, tuple(W for _, W in iter_walk_counts(topology, r, t_max)))


def walk_bound_constants(kind, n=None, f=2):
    """``(C, D, rho)`` for the closed-form walk-count bounds of the reference graphs.

    For ``cycle`` the bound decays as ``exp(-kappa)`` even though the tabulated
    rate is ``exp(-1/2)``; the bound uses the former, and the tabulated value
    is returned as the third element for reporting.
    """
    e = math.e
    if kind == "line":
        return e, (1.5 * e) ** 1.5, e**-0.5
    if kind == "cycle":
        if n is None or n < 1:
            raise ParameterError("cycle bound needs the agent count n")
        return e / (2 * n), 1.5 * e**2, e**-0.5
    if kind == "tree":
        return 1.0, 2 * e**2 * math.sqrt(f), 1 / (e * math.sqrt(f))
    if kind == "grid4":
        return e / 2, 2.5 * e**2, 1 / e
    raise ParameterError(f"no closed-form walk bound for kind {kind!r}")


def table1_bound(kind, t, kappa, n=None, f=2):
    """Walk-count bound ``C * D**t * rho**kappa`` for a reference graph."""
    if t < 0 or kappa < 0:
        raise ParameterError("t and kappa must be non-negative")
    C, D, rho = walk_bound_constants(kind, n=n, f=f)
    if kind == "cycle":
        rho = 1 / math.e
    return C * D**t * rho**kappa


def bound_params_for(topology):
    """Keyword arguments for :func:`table1_bound` derived from a built topology."""
    p = topology.param_dict
    return {"n": topology.n, "f": p.get("f", 2)}
