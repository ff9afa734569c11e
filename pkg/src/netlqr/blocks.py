"""Agent-partitioned matrices with hop-distance sparsity classes."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from netlqr.errors import DegenerateInputError, ParameterError

__all__ = [
    "BlockLayout",
    "BlockMatrix",
    "SedFit",
    "block_mask",
    "project_Mr",
    "block_norms",
    "fit_sed",
    "in_class",
    "PRODUCT_ZERO_TOL",
]

PRODUCT_ZERO_TOL = 1e-14
SED_TOL = 1e-12
_GAMMA_CLAMP = (1e-6, 1 - 1e-6)


@dataclass(frozen=True, eq=False)
class BlockLayout:
    """Per-agent row and column sizes plus the distance table of the agent graph."""

    row_dims: tuple
    col_dims: tuple
    nbr: object = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "row_dims", tuple(int(d) for d in self.row_dims))
        object.__setattr__(self, "col_dims", tuple(int(d) for d in self.col_dims))
        n = self.nbr.n
        if len(self.row_dims) != n or len(self.col_dims) != n:
            raise ParameterError(f"layout needs {n} row and column sizes")
        if min(self.row_dims + self.col_dims) < 1:
            raise ParameterError("per-agent dimensions must be >= 1")

    @property
    def n(self):
        return len(self.row_dims)

    @property
    def shape(self):
        return sum(self.row_dims), sum(self.col_dims)

    @cached_property
    def row_offsets(self):
        return np.concatenate([[0], np.cumsum(self.row_dims)])

    @cached_property
    def col_offsets(self):
        return np.concatenate([[0], np.cumsum(self.col_dims)])

    @cached_property
    def row_agent(self):
        return np.repeat(np.arange(self.n), self.row_dims)

    @cached_property
    def col_agent(self):
        return np.repeat(np.arange(self.n), self.col_dims)

    def rows(self, i):
        return slice(self.row_offsets[i], self.row_offsets[i + 1])

    def cols(self, j):
        return slice(self.col_offsets[j], self.col_offsets[j + 1])

    def row_index(self, agents):
        """Flat row indices belonging to ``agents`` (ascending agent order)."""
        return np.flatnonzero(np.isin(self.row_agent, agents))

    def col_index(self, agents):
        return np.flatnonzero(np.isin(self.col_agent, agents))

    def transpose(self):
        return BlockLayout(self.col_dims, self.row_dims, self.nbr)

    def compose(self, other):
        if self.col_dims != other.row_dims:
            raise ParameterError("inner block dimensions do not match")
        return BlockLayout(self.row_dims, other.col_dims, self.nbr)

    @cached_property
    def uniform(self):
        """Common block size ``(p, q)`` if every block has the same shape."""
        if len(set(self.row_dims)) == 1 and len(set(self.col_dims)) == 1:
            return self.row_dims[0], self.col_dims[0]
        return None

    def __eq__(self, other):
        return (
            isinstance(other, BlockLayout)
            and self.row_dims == other.row_dims
            and self.col_dims == other.col_dims
            and (self.nbr is other.nbr or np.array_equal(self.nbr.dist, other.nbr.dist))
        )

    __hash__ = object.__hash__


def block_mask(layout, r):
    """Elementwise mask of entries whose row and column agents are within r hops."""
    d = layout.nbr.dist
    return d[np.ix_(layout.row_agent, layout.col_agent)] <= r


def in_class(data, layout, kappa, tol=0.0):
    """True if every block at distance > kappa has max-abs entry <= tol."""
    outside = ~block_mask(layout, kappa)
    if not outside.any():
        return True
    return bool(np.abs(np.asarray(data)[outside]).max() <= tol)


@dataclass(frozen=True, eq=False)
class BlockMatrix:
    """Dense matrix partitioned by agent.

    ``sparsity_class`` is an optional radius k asserting membership in M^k:
    all blocks between agents further than k hops apart are exactly zero.
    """

    layout: BlockLayout
    data: np.ndarray
    sparsity_class: int | None = None

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float64)
        if data.shape != self.layout.shape:
            raise ParameterError(f"data shape {data.shape} does not match layout {self.layout.shape}")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        if self.sparsity_class is not None and not in_class(data, self.layout, self.sparsity_class):
            raise ParameterError(f"matrix has nonzero blocks outside M^{self.sparsity_class}")

    @property
    def n(self):
        return self.layout.n

    def block(self, i, j):
        return self.data[self.layout.rows(i), self.layout.cols(j)]

    @property
    def T(self):
        return BlockMatrix(self.layout.transpose(), self.data.T, self.sparsity_class)

    def __add__(self, other):
        if self.layout != other.layout:
            raise ParameterError("layouts differ")
        cls = None
        if self.sparsity_class is not None and other.sparsity_class is not None:
            cls = max(self.sparsity_class, other.sparsity_class)
        return BlockMatrix(self.layout, self.data + other.data, cls)

    def __sub__(self, other):
        return self + BlockMatrix(other.layout, -other.data, other.sparsity_class)

    def __matmul__(self, other):
        layout = self.layout.compose(other.layout)
        # product sparsity class is inferred, not asserted: sums of products need slack
        return BlockMatrix(layout, self.data @ other.data)

    def __mul__(self, scalar):
        return BlockMatrix(self.layout, scalar * self.data, self.sparsity_class)

    __rmul__ = __mul__

    def __array__(self, dtype=None, copy=None):
        return self.data if dtype is None else self.data.astype(dtype)

    def smallest_class(self, tol=PRODUCT_ZERO_TOL):
        """Smallest k with the matrix in M^k (zero test at ``tol``)."""
        norms, _ = block_norms(self)
        live = norms > tol
        if not live.any():
            return 0
        return int(self.layout.nbr.dist[live].max())


def project_Mr(X, r):
    """Zero every block of ``X`` whose agents are more than ``r`` hops apart."""
    if r < 0:
        raise ParameterError(f"radius must be >= 0, got {r}")
    data = np.where(block_mask(X.layout, r), X.data, 0.0)
    return BlockMatrix(X.layout, data, r)


def block_norms(X):
    """Spectral norm of every block, and the largest of them.

    Returns ``(norms, overline)`` with ``norms`` an ``n x n`` array.
    """
    layout = X.layout
    n = layout.n
    data = np.asarray(X.data)
    if layout.uniform == (1, 1):
        norms = np.abs(data)
    elif layout.uniform is not None:
        p, q = layout.uniform
        blocks = data.reshape(n, p, n, q).transpose(0, 2, 1, 3)
        norms = np.linalg.norm(blocks, ord=2, axis=(2, 3))
    else:
        norms = np.empty((n, n))
        for i in range(n):
            for j in range(n):
                norms[i, j] = np.linalg.norm(X.block(i, j), ord=2)
    return norms, float(norms.max(initial=0.0))


@dataclass(frozen=True)
class SedFit:
    """Constants of a (c, gamma) spatial exponential decay bound.

    ``residuals`` holds ``log(c * gamma**dist) - log||block||`` per block
    (NaN for zero blocks, whose constraint is vacuous).
    """

    c: float
    gamma: float
    residuals: np.ndarray = field(repr=False)
    fitted: bool = True

    def bound(self, dist):
        return self.c * self.gamma ** np.asarray(dist)

    def holds(self, X, tol=SED_TOL):
        norms, _ = block_norms(X)
        return bool((norms <= self.bound(X.layout.nbr.dist) * (1 + tol) + tol).all())


def fit_sed(X, gamma=None):
    """Fit a spatially exponentially decaying bound to the block norms of ``X``.

    With ``gamma`` given, ``c`` is the smallest constant making the bound
    valid. Without it, ``log||[X]_ij||`` is regressed on ``dist(i, j)`` over
    the nonzero blocks, the slope gives ``gamma`` (clamped into (0, 1)), and
    ``c`` is then made valid as above. When the nonzero blocks all sit at a
    single distance the slope is unidentifiable; ``gamma`` then defaults to
    0.5 and ``fitted`` is False.
    """
    norms, top = block_norms(X)
    if top == 0.0:
        raise DegenerateInputError("cannot fit a decay bound to an all-zero matrix")
    dist = X.layout.nbr.dist
    live = norms > 0
    fitted = gamma is None
    if gamma is None:
        d = dist[live].astype(float)
        y = np.log(norms[live])
        if np.ptp(d) == 0:
            gamma, fitted = 0.5, False
        else:
            slope = np.polyfit(d, y, 1)[0]
            gamma = float(np.clip(np.exp(slope), *_GAMMA_CLAMP))
    elif not 0 < gamma < 1:
        raise ParameterError(f"gamma must lie in (0, 1), got {gamma}")
    scaled = np.where(live, norms / gamma**dist.astype(float), 0.0)
    c = float(scaled.max())
    with np.errstate(divide="ignore"):
        residuals = np.where(live, np.log(c) + dist * np.log(gamma) - np.log(np.where(live, norms, 1.0)), np.nan)
    return SedFit(c, float(gamma), residuals, fitted)
