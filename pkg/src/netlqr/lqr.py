"""Centralized LQR machinery for networked systems.

Closed loop ``x(t+1) = (A - BK) x(t) + eps(t)`` with ``eps ~ N(0, Psi)`` and
``Psi = Phi + sigma0**2 B B^T``. For a stabilizing gain the value matrix P
and the stationary covariance Xi solve the Stein (discrete Lyapunov)
equations

    P  = (Q + K^T R K) + (A - BK)^T P (A - BK)
    Xi = Psi + (A - BK) Xi (A - BK)^T

and the average cost is ``tr(P Psi) + sigma0**2 tr(R)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from netlqr.blocks import BlockLayout, BlockMatrix, in_class
from netlqr.errors import NumericalError, ParameterError, StabilityError, StabilizabilityError
from netlqr.graph import neighborhoods

log = logging.getLogger(__name__)

__all__ = [
    "NetworkedSystem",
    "Controller",
    "SolutionCache",
    "make_system",
    "build_paper_system",
    "split_local_costs",
    "spectral_radius",
    "is_stabilizing",
    "solve_stein",
    "solve_lyapunov_P",
    "solve_lyapunov_Xi",
    "solve",
    "cost",
    "local_costs",
    "exact_gradient",
    "riccati_optimal",
    "gradient_descent",
    "q_constant",
    "EPS_STAB",
]

EPS_STAB = 1e-9
LYAP_RTOL = 1e-15


def spectral_radius(M):
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return 0.0
    try:
        ev = np.linalg.eigvals(M)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigenvalue computation failed: {exc}") from exc
    if not np.all(np.isfinite(ev)):
        raise NumericalError("eigenvalue computation returned non-finite values")
    return float(np.abs(ev).max())


@dataclass(frozen=True, eq=False)
class NetworkedSystem:
    """Linear system over an agent graph with per-agent quadratic costs.

    ``local_Q[i]`` and ``local_R[i]`` are the zero-padded local cost
    matrices; their averages equal ``Q`` and ``R``.
    """

    topology: object
    nbr: object
    x_dims: tuple
    u_dims: tuple
    A: np.ndarray
    B: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    local_Q: np.ndarray = field(repr=False)
    local_R: np.ndarray = field(repr=False)
    Phi: np.ndarray = field(repr=False)
    sigma0: float = 0.0

    @property
    def n(self):
        return self.topology.n

    @property
    def dx(self):
        return self.A.shape[0]

    @property
    def du(self):
        return self.B.shape[1]

    @cached_property
    def Psi(self):
        return self.Phi + self.sigma0**2 * (self.B @ self.B.T)

    @cached_property
    def xx_layout(self):
        return BlockLayout(self.x_dims, self.x_dims, self.nbr)

    @cached_property
    def xu_layout(self):
        return BlockLayout(self.x_dims, self.u_dims, self.nbr)

    @cached_property
    def ux_layout(self):
        return BlockLayout(self.u_dims, self.x_dims, self.nbr)

    @cached_property
    def uu_layout(self):
        return BlockLayout(self.u_dims, self.u_dims, self.nbr)

    def gain(self, K, r=None):
        """Wrap a raw gain array as a :class:`BlockMatrix` (optionally in M^r)."""
        return BlockMatrix(self.ux_layout, _as_array(K), r)

    def with_sigma0(self, sigma0):
        if sigma0 < 0:
            raise ParameterError("sigma0 must be >= 0")
        return replace(self, sigma0=float(sigma0))

    def closed_loop(self, K):
        return self.A - self.B @ _as_array(K)


@dataclass(frozen=True)
class Controller:
    """Block gain ``K`` (d_u x d_x) restricted to M^r."""

    K: BlockMatrix
    r: int

    def __post_init__(self):
        if self.K.sparsity_class is None or self.K.sparsity_class > self.r:
            object.__setattr__(self, "K", BlockMatrix(self.K.layout, self.K.data, self.r))

    @property
    def data(self):
        return self.K.data


def _as_array(K):
    if isinstance(K, Controller):
        return K.K.data
    if isinstance(K, BlockMatrix):
        return K.data
    return np.asarray(K, dtype=float)


def _check_symmetric(name, M, tol=1e-12):
    if not np.allclose(M, M.T, atol=tol * max(1.0, np.abs(M).max())):
        raise ParameterError(f"{name} must be symmetric")


def _min_eig(M):
    return float(np.linalg.eigvalsh((M + M.T) / 2).min())


def split_local_costs(M, layout):
    """Split a global cost matrix into per-agent pieces averaging to it.

    Diagonal block (k, k) goes to agent k; an off-diagonal block (k, l) goes
    to the lowest-numbered agent whose 1-hop neighbourhood holds both k and
    l. Every piece is scaled by n so that ``mean(pieces) == M``.
    """
    n = layout.n
    dist = layout.nbr.dist
    pieces = np.zeros((n,) + M.shape)
    for k in range(n):
        for l in range(n):
            blk = M[layout.rows(k), layout.cols(l)]
            if not blk.any():
                continue
            if k == l:
                owner = k
            else:
                owners = np.flatnonzero((dist[:, k] <= 1) & (dist[:, l] <= 1))
                if len(owners) == 0:
                    raise ParameterError(f"cost block ({k}, {l}) spans more than two hops")
                owner = int(owners[0])
            pieces[owner][layout.rows(k), layout.cols(l)] = n * blk
    return pieces


def make_system(topology, A, B, Q, R, Phi, sigma0=0.0, *, x_dims=None, u_dims=None,
                local_Q=None, local_R=None, nbr=None):
    """Validate matrices against the graph and assemble a :class:`NetworkedSystem`."""
    nbr = nbr or neighborhoods(topology)
    n = topology.n
    A, B, Q, R, Phi = (np.atleast_2d(np.asarray(m, dtype=float)) for m in (A, B, Q, R, Phi))
    x_dims = tuple(x_dims) if x_dims is not None else _even_dims(A.shape[0], n, "A")
    u_dims = tuple(u_dims) if u_dims is not None else _even_dims(B.shape[1], n, "B")
    xx = BlockLayout(x_dims, x_dims, nbr)
    xu = BlockLayout(x_dims, u_dims, nbr)
    uu = BlockLayout(u_dims, u_dims, nbr)
    for name, M, lay in (("A", A, xx), ("B", B, xu), ("Q", Q, xx), ("R", R, uu), ("Phi", Phi, xx)):
        if M.shape != lay.shape:
            raise ParameterError(f"{name} has shape {M.shape}, expected {lay.shape}")
    if not in_class(A, xx, 2):
        raise ParameterError("A must lie in M^2")
    if not in_class(B, xu, 0):
        raise ParameterError("B must lie in M^0 (block diagonal)")
    if not in_class(Q, xx, 2):
        raise ParameterError("Q must lie in M^2")
    if not in_class(R, uu, 0):
        raise ParameterError("R must lie in M^0 (block diagonal)")
    for name, M in (("Q", Q), ("R", R), ("Phi", Phi)):
        _check_symmetric(name, M)
    if _min_eig(Q) < -1e-12:
        raise ParameterError("Q must be positive semidefinite")
    if _min_eig(R) <= 0:
        raise ParameterError("R must be positive definite")
    if _min_eig(Phi) < -1e-12:
        raise ParameterError("Phi must be positive semidefinite")
    if sigma0 < 0:
        raise ParameterError("sigma0 must be >= 0")

    local_Q = split_local_costs(Q, xx) if local_Q is None else np.asarray(local_Q, dtype=float)
    local_R = split_local_costs(R, uu) if local_R is None else np.asarray(local_R, dtype=float)
    if local_Q.shape != (n,) + Q.shape or local_R.shape != (n,) + R.shape:
        raise ParameterError("need one local cost matrix per agent")
    if not np.allclose(local_Q.mean(axis=0), Q, rtol=0, atol=1e-12 * max(1.0, np.abs(Q).max())):
        raise ParameterError("local Q matrices must average to Q")
    if not np.allclose(local_R.mean(axis=0), R, rtol=0, atol=1e-12 * max(1.0, np.abs(R).max())):
        raise ParameterError("local R matrices must average to R")
    for i in range(n):
        near = nbr.dist[i] <= 1
        support = np.outer(near[xx.row_agent], near[xx.col_agent])
        if np.abs(local_Q[i][~support]).max(initial=0) > 0:
            raise ParameterError(f"local Q of agent {i} must be supported on its 1-hop neighbourhood")
        off = np.ones_like(local_R[i], dtype=bool)
        off[uu.rows(i), uu.cols(i)] = False
        if np.abs(local_R[i][off]).max(initial=0) > 0:
            raise ParameterError(f"local R of agent {i} must be supported on block ({i}, {i})")
    if _min_eig(Phi + sigma0**2 * B @ B.T) <= 0:
        raise ParameterError("Psi = Phi + sigma0^2 B B^T must be positive definite")
    return NetworkedSystem(topology, nbr, x_dims, u_dims, A, B, Q, R, local_Q, local_R, Phi, float(sigma0))


def _even_dims(total, n, name):
    if total % n:
        raise ParameterError(f"{name}: cannot split {total} rows evenly over {n} agents; pass dims")
    return (total // n,) * n


def build_paper_system(topology, *, a_diag=0, scale=0.9, psi_scale=0.5, sigma0=0.0, nbr=None):
    """Scalar-agent benchmark system.

    A starts as the graph adjacency (plus ``a_diag`` on the diagonal) and is
    multiplied by ``scale`` until its spectral radius drops below one.
    B = Q = R = I and Phi = psi_scale * I, so Psi = psi_scale * I when
    sigma0 = 0 and K = 0 is stabilizing.
    """
    if a_diag not in (0, 1):
        raise ParameterError("a_diag must be 0 or 1")
    if not 0 < scale < 1:
        raise ParameterError("scale must lie in (0, 1)")
    n = topology.n
    A = topology.adjacency(float) + a_diag * np.eye(n)
    while spectral_radius(A) >= 1:
        A = scale * A
    eye = np.eye(n)
    return make_system(topology, A, eye, eye, eye, psi_scale * eye, sigma0, nbr=nbr)


def is_stabilizing(sys, K, margin=EPS_STAB):
    return spectral_radius(sys.closed_loop(K)) < 1 - margin


def _require_stable(sys, K):
    rho = spectral_radius(sys.closed_loop(K))
    if not rho < 1 - EPS_STAB:
        raise StabilityError(f"closed loop is not stable: spectral radius {rho:.12g}", radius=rho)
    return rho


def solve_stein(M, W, method="doubling", rtol=LYAP_RTOL, max_iter=None):
    """Solve ``X = W + M^T X M`` for ``rho(M) < 1``.

    ``W`` may be a single matrix or a stack ``(m, d, d)`` sharing ``M``.
    Methods: ``"doubling"`` (fixed-point iteration with squared steps,
    ``X <- X + G^T X G``, ``G <- G @ G``), ``"fixed_point"`` (plain iteration)
    and ``"kronecker"`` (direct vectorized solve).
    """
    M = np.asarray(M, dtype=float)
    W = np.asarray(W, dtype=float)
    d = M.shape[0]
    if method == "kronecker":
        big = np.eye(d * d) - np.kron(M.T, M.T)
        rhs = W.reshape(-1, d * d).T
        try:
            X = np.linalg.solve(big, rhs).T.reshape(W.shape)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"Kronecker Lyapunov solve failed: {exc}") from exc
        return _sym(X)
    if method == "fixed_point":
        max_iter = max_iter or 1_000_000
        X = W.copy()
        for _ in range(max_iter):
            X_new = W + M.T @ X @ M
            delta = np.linalg.norm(X_new - X, axis=(-2, -1))
            X = X_new
            if np.all(delta <= rtol * np.maximum(np.linalg.norm(X, axis=(-2, -1)), 1e-300)):
                return _sym(X)
        raise NumericalError("fixed-point Lyapunov iteration did not converge")
    if method != "doubling":
        raise ParameterError(f"unknown Lyapunov method {method!r}")
    max_iter = max_iter or 64
    X = W.copy()
    G = M.copy()
    for _ in range(max_iter):
        inc = G.T @ X @ G
        X = X + inc
        G = G @ G
        scale = np.linalg.norm(X, axis=(-2, -1))
        if np.all(np.linalg.norm(inc, axis=(-2, -1)) <= rtol * np.maximum(scale, 1e-300)):
            return _sym(X)
        if not np.all(np.isfinite(X)):
            break
    raise NumericalError("doubling Lyapunov iteration did not converge")


def _sym(X):
    return (X + np.swapaxes(X, -1, -2)) / 2


def solve_lyapunov_P(sys, K, method=None):
    _require_stable(sys, K)
    K = _as_array(K)
    M = sys.closed_loop(K)
    return solve_stein(M, sys.Q + K.T @ sys.R @ K, method or "doubling")


def solve_lyapunov_Xi(sys, K, method=None):
    _require_stable(sys, K)
    M = sys.closed_loop(K)
    return solve_stein(M.T, sys.Psi, method or "doubling")


@dataclass(frozen=True, eq=False)
class SolutionCache:
    """Everything derived from one stabilizing gain. Build with :func:`solve`."""

    sys: NetworkedSystem = field(repr=False)
    K: np.ndarray = field(repr=False)
    closed_loop: np.ndarray = field(repr=False)
    radius: float
    P: np.ndarray = field(repr=False)
    Xi: np.ndarray = field(repr=False)

    @property
    def Psi(self):
        return self.sys.Psi

    @cached_property
    def cost(self):
        return float(np.trace(self.P @ self.Psi) + self.sys.sigma0**2 * np.trace(self.sys.R))

    @cached_property
    def H_uu(self):
        """``R + B^T P B``."""
        B = self.sys.B
        return self.sys.R + B.T @ self.P @ B

    @cached_property
    def E(self):
        """``(R + B^T P B) K - B^T P A``."""
        return self.H_uu @ self.K - self.sys.B.T @ self.P @ self.sys.A

    @cached_property
    def grad(self):
        return 2.0 * self.E @ self.Xi

    @cached_property
    def local_P(self):
        """Stack ``(n, d_x, d_x)`` of per-agent value matrices."""
        s = self.sys
        W = s.local_Q + self.K.T @ s.local_R @ self.K
        return solve_stein(self.closed_loop, W)

    @cached_property
    def local_costs(self):
        s = self.sys
        trR = np.trace(s.local_R, axis1=1, axis2=2)
        return np.einsum("iab,ba->i", self.local_P, self.Psi) + s.sigma0**2 * trR

    @cached_property
    def local_E(self):
        """Per-agent ``(R_i + B^T P^i B) K - B^T P^i A``, shape ``(n, d_u, d_x)``."""
        s = self.sys
        BtP = s.B.T @ self.local_P
        Huu = s.local_R + BtP @ s.B
        return Huu @ self.K - BtP @ s.A


def solve(sys, K, method=None):
    """Solve both Lyapunov equations for a stabilizing ``K``."""
    K = _as_array(K)
    if K.shape != (sys.du, sys.dx):
        raise ParameterError(f"gain has shape {K.shape}, expected {(sys.du, sys.dx)}")
    rho = _require_stable(sys, K)
    M = sys.closed_loop(K)
    method = method or "doubling"
    P = solve_stein(M, sys.Q + K.T @ sys.R @ K, method)
    Xi = solve_stein(M.T, sys.Psi, method)
    return SolutionCache(sys, K, M, rho, P, Xi)


def cost(sys, K):
    return solve(sys, K).cost


def local_costs(sys, K):
    return solve(sys, K).local_costs


def exact_gradient(sys, K, cache=None):
    """Closed-form policy gradient ``2[(R + B^T P B) K - B^T P A] Xi``."""
    cache = cache or solve(sys, K)
    return BlockMatrix(sys.ux_layout, cache.grad)


def q_constant(cache, P=None, R=None):
    """Additive constant of the quadratic Q function for value matrix ``P``.

    ``-tr(P Xi) - sigma0^2 tr(R + P B B^T)``; it cancels in every gradient and
    difference computation.
    """
    s = cache.sys
    P = cache.P if P is None else P
    R = s.R if R is None else R
    return float(-np.trace(P @ cache.Xi) - s.sigma0**2 * np.trace(R + P @ s.B @ s.B.T))


def riccati_optimal(sys, tol=1e-12, max_iters=100_000, grad_tol=1e-6):
    """Centralized optimal gain from fixed-point iteration of the Riccati map.

    Returns a :class:`Controller` with ``r`` equal to the graph diameter. The
    stationarity of the result is checked through :func:`exact_gradient`.
    """
    A, B, Q, R = sys.A, sys.B, sys.Q, sys.R
    P = Q.copy()
    for it in range(max_iters):
        BtPA = B.T @ P @ A
        P_new = Q + A.T @ P @ A - BtPA.T @ np.linalg.solve(R + B.T @ P @ B, BtPA)
        P_new = _sym(P_new)
        if not np.all(np.isfinite(P_new)):
            break
        done = np.linalg.norm(P_new - P) <= tol * np.linalg.norm(P_new)
        P = P_new
        if done:
            break
    else:
        raise StabilizabilityError(f"Riccati iteration did not converge in {max_iters} iterations")
    if not np.all(np.isfinite(P)):
        raise StabilizabilityError("Riccati iteration diverged")
    K = np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)
    if not is_stabilizing(sys, K):
        raise StabilizabilityError("Riccati gain is not stabilizing")
    g = solve(sys, K).grad
    gnorm = float(np.linalg.norm(g))
    if gnorm > grad_tol * max(1.0, np.linalg.norm(K)):
        raise NumericalError(f"Riccati gain is not stationary: |grad| = {gnorm:.3g}")
    log.debug("riccati converged after %d iterations, |grad|=%.3g", it + 1, gnorm)
    return Controller(BlockMatrix(sys.ux_layout, K), sys.nbr.diameter)


def gradient_descent(sys, K0, eta, steps, r=None):
    """Plain projected gradient descent with the exact gradient.

    Used as a centralized reference; returns the final gain array.
    """
    K = _as_array(K0).copy()
    mask = None
    if r is not None:
        from netlqr.blocks import block_mask

        mask = block_mask(sys.ux_layout, r)
    for t in range(steps):
        g = solve(sys, K).grad
        if mask is not None:
            g = np.where(mask, g, 0.0)
        K = K - eta * g
        if not is_stabilizing(sys, K):
            raise StabilityError("gradient step left the stabilizing set", step=t + 1)
    return K
