"""Distributed policy gradient with kappa-hop communication and r-hop control.

Each agent i estimates its own gradient block from truncated local Q
functions of the agents within ``kappa`` hops. Under the linear-Gaussian
policy ``u = -K x + sigma0 * eps`` the Q function of agent j is a quadratic
form in ``z = (x, eps)``; truncation zeroes every coordinate owned by an
agent outside ``N_j^kappa``. The score-function expectation is then a
Gaussian fourth moment and is evaluated in closed form.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from netlqr import kernels
from netlqr.blocks import block_mask
from netlqr.errors import ParameterError, StabilityError
from netlqr.lqr import (
    Controller,
    _as_array,
    is_stabilizing,
    q_constant,
    riccati_optimal,
    solve,
)

log = logging.getLogger(__name__)

__all__ = [
    "TruncatedQ",
    "DescentConfig",
    "DescentTrace",
    "GuardParams",
    "GuardReport",
    "DecayFit",
    "MCEstimate",
    "local_P",
    "q_function",
    "truncated_q",
    "approx_gradient",
    "approx_gradient_all",
    "score_bounds",
    "fit_decay_constants",
    "step_size_guard",
    "iteration_bound",
    "run_descent",
    "mc_gradient",
    "TRACE_COLUMNS",
]

TRACE_COLUMNS = (
    "step",
    "cost",
    "rel_error_vs_opt",
    "proj_grad_norm",
    "approx_err_norm",
    "spectral_radius",
    "eta_used",
    "guard_min_term",
)


def _cache_for(sys, K, cache):
    if cache is not None:
        return cache
    return solve(sys, K)


def local_P(sys, K, i, cache=None):
    """Value matrix of agent i's local cost ``Q_i + K^T R_i K``."""
    return _cache_for(sys, K, cache).local_P[i]


def _z_agents(sys):
    """Owning agent of every coordinate of ``z = (x, eps)``."""
    return np.concatenate([sys.xx_layout.row_agent, sys.uu_layout.row_agent])


@dataclass(frozen=True, eq=False)
class TruncatedQ:
    """Quadratic form ``z^T M z + c0`` over ``z = (x, eps)``.

    ``kappa=None`` marks the untruncated local Q function.
    """

    agent: int
    kappa: int | None
    M: np.ndarray = field(repr=False)
    c0: float
    dx: int

    def __call__(self, x, eps):
        z = np.concatenate([np.asarray(x, float), np.asarray(eps, float)], axis=-1)
        return np.einsum("...a,ab,...b->...", z, self.M, z) + self.c0


def q_function(sys, K, i, cache=None):
    """Untruncated local Q function of agent i in ``(x, eps)`` coordinates."""
    c = _cache_for(sys, K, cache)
    Pi = c.local_P[i]
    A, B, K = sys.A, sys.B, c.K
    H = np.block(
        [
            [sys.local_Q[i] + A.T @ Pi @ A, A.T @ Pi @ B],
            [B.T @ Pi @ A, sys.local_R[i] + B.T @ Pi @ B],
        ]
    )
    # [x; u] = T z with u = -K x + sigma0 * eps
    T = np.block(
        [
            [np.eye(sys.dx), np.zeros((sys.dx, sys.du))],
            [-K, sys.sigma0 * np.eye(sys.du)],
        ]
    )
    M = T.T @ H @ T
    return TruncatedQ(i, None, (M + M.T) / 2, q_constant(c, Pi, sys.local_R[i]), sys.dx)


def truncated_q(sys, K, i, kappa, cache=None):
    """Local Q function of agent i with coordinates beyond ``kappa`` hops removed.

    Out-of-neighbourhood coordinates are pinned at zero, which makes the
    result a quadratic form supported exactly on ``N_i^kappa``.
    """
    if kappa < 0:
        raise ParameterError(f"kappa must be >= 0, got {kappa}")
    full = q_function(sys, K, i, cache)
    keep = sys.nbr.dist[i][_z_agents(sys)] <= kappa
    M = np.where(np.outer(keep, keep), full.M, 0.0)
    return TruncatedQ(i, kappa, M, full.c0, sys.dx)


def _check_score(sys):
    if sys.sigma0 <= 0:
        raise ParameterError("score function needs sigma0 > 0")


def approx_gradient(sys, K, i, kappa, r=None, cache=None):
    """Agent i's localized gradient block, shape ``(d_u^i, d_x)``.

    Averages ``Qhat^j * grad log pi_i`` over the stationary state and the
    exploration noise for all j within ``kappa`` hops. With
    ``Sigma = blockdiag(Xi, I)`` the Isserlis identity gives
    ``E[(z^T M z) z_a z_b] = tr(M Sigma) Sigma_ab + 2 (Sigma M Sigma)_ab``;
    the score pairs eps-coordinates with x-coordinates, whose covariance is
    zero, so only ``2 Sigma M Sigma`` contributes. Columns outside
    ``N_i^r`` are zero.
    """
    _check_score(sys)
    c = _cache_for(sys, K, cache)
    r = sys.nbr.diameter if r is None else r
    n, dx = sys.n, sys.dx
    Sigma = np.zeros((dx + sys.du, dx + sys.du))
    Sigma[:dx, :dx] = c.Xi
    Sigma[dx:, dx:] = np.eye(sys.du)
    rows = dx + np.flatnonzero(sys.uu_layout.row_agent == i)
    h = np.zeros((len(rows), dx))
    for j in sys.nbr.hop(i, kappa):
        M = truncated_q(sys, K, j, kappa, c).M
        h += 2.0 * (Sigma @ M @ Sigma)[rows, :dx]
    # grad log pi_i = -eps_i x^T / sigma0
    h *= -1.0 / (n * sys.sigma0)
    cols = sys.nbr.dist[i][sys.xx_layout.col_agent] <= r
    h[:, ~cols] = 0.0
    return h


def approx_gradient_all(sys, K, kappa, r=None, cache=None):
    """All agents' localized gradient blocks stacked into a ``d_u x d_x`` matrix.

    Algebraically identical to stacking :func:`approx_gradient` over agents:
    ``(2/n) * sum_j mask_j(E^j) @ Xi`` projected onto M^r, where
    ``E^j = (R_j + B^T P^j B) K - B^T P^j A`` and ``mask_j`` keeps the entries
    whose row and column agents are both within ``kappa`` hops of j.
    """
    _check_score(sys)
    c = _cache_for(sys, K, cache)
    r = sys.nbr.diameter if r is None else r
    S = kernels.masked_local_sum(
        c.local_E,
        np.arange(sys.n),
        sys.uu_layout.row_agent,
        sys.xx_layout.col_agent,
        sys.nbr.dist,
        kappa,
    )
    h = (2.0 / sys.n) * S @ c.Xi
    return np.where(block_mask(sys.ux_layout, r), h, 0.0)


def score_bounds(sys, cache, r):
    """Per-agent bound ``L_i = sqrt(d_u^i tr([Xi]_{N_i^r})) / sigma0`` on E||score||."""
    _check_score(sys)
    Xi = cache.Xi
    diag = np.diag(Xi)
    out = np.empty(sys.n)
    for i in range(sys.n):
        idx = sys.nbr.dist[i][sys.xx_layout.row_agent] <= r
        out[i] = math.sqrt(sys.u_dims[i] * diag[idx].sum()) / sys.sigma0
    return out


@dataclass(frozen=True)
class DecayFit:
    """Measured gradient-approximation decay ``err_i(kappa) <= c_prime * L_i * rho**(kappa+1)``."""

    c_prime: float
    rho: float
    kappas: tuple
    errors: tuple
    slope: float
    r2: float


def fit_decay_constants(sys, K, r=None, kappas=None, cache=None):
    """Fit ``(c_prime, rho)`` from per-agent approximation errors over kappa.

    ``rho`` comes from a log-linear regression of ``max_i err_i / L_i`` on
    ``kappa + 1``; ``c_prime`` is then inflated until the bound holds for
    every measured agent and radius.
    """
    c = _cache_for(sys, K, cache)
    r = sys.nbr.diameter if r is None else r
    diam = sys.nbr.diameter
    if kappas is None:
        kappas = tuple(range(0, max(diam, 1)))
    L = score_bounds(sys, c, r)
    g = np.where(block_mask(sys.ux_layout, r), c.grad, 0.0)
    ua = sys.uu_layout.row_agent
    per = []
    for k in kappas:
        diff = approx_gradient_all(sys, K, k, r, c) - g
        err = np.array([np.linalg.norm(diff[ua == i], 2) for i in range(sys.n)])
        per.append(err / L)
    per = np.array(per)
    worst = per.max(axis=1) if len(per) else np.array([])
    live = worst > 1e-15 * max(1.0, np.abs(g).max())
    if live.sum() >= 2:
        x = np.asarray(kappas, float)[live] + 1
        y = np.log(worst[live])
        slope, icpt = np.polyfit(x, y, 1)
        pred = slope * x + icpt
        ss = ((y - y.mean()) ** 2).sum()
        r2 = float(1 - ((y - pred) ** 2).sum() / ss) if ss > 0 else 1.0
        rho = float(np.clip(math.exp(slope), 1e-6, 1 - 1e-6))
    else:
        slope, r2, rho = float("nan"), float("nan"), 0.5
    kk = np.asarray(kappas, float)[:, None] + 1
    c_prime = float((per / rho**kk).max()) if per.size else 0.0
    return DecayFit(c_prime, rho, tuple(kappas), tuple(worst.tolist()), float(slope), r2)


@dataclass(frozen=True)
class GuardParams:
    """Constants the step-size guard cannot derive from the current gain alone.

    ``c_opt`` is the optimal cost C(K*), ``c_init`` the cost at the initial
    gain, ``c_prime``/``rho`` the gradient-approximation decay constants and
    ``zeta`` the smoothness constant in the global Lipschitz bound. ``L``
    overrides the per-agent score bounds.
    """

    c_opt: float
    c_init: float
    c_prime: float = 0.0
    rho: float = 0.5
    zeta: float = 1.0
    L: tuple | None = None


@dataclass(frozen=True)
class GuardReport:
    terms: dict
    minimum: float
    kappa_insufficient: bool
    varpi: tuple
    f_coeffs: tuple
    kappa_min: float
    lipschitz: float
    upsilon: float


def _safe_div(a, b):
    return math.inf if b <= 0 else a / b


def step_size_guard(sys, K, kappa, r, params, cache=None):
    """Upper bounds on the step size that keep the next gain stabilizing and descending.

    Returns a :class:`GuardReport` whose ``terms`` are:

    * ``T1`` keeps the covariance perturbation small,
    * ``T2`` the centralized convergence condition,
    * ``T3`` keeps the distributed step stabilizing given the approximation error,
    * ``T4`` the inverse global smoothness constant,
    * ``T5`` the positive root of the cubic descent polynomial,
    * ``cap`` = 1.

    When the approximation error dominates the projected gradient
    (``varpi0 <= 0``) ``T5`` is undefined and ``kappa_insufficient`` is set.
    """
    c = _cache_for(sys, K, cache)
    lam = lambda M: np.linalg.eigvalsh((M + M.T) / 2)  # noqa: E731
    sQ, sQ_max = lam(sys.Q)[[0, -1]]
    sR, sR_max = lam(sys.R)[[0, -1]]
    mu = lam(c.Psi)[0]
    C = c.cost
    Cs = min(params.c_opt, C)
    d = max(sys.dx, sys.du)
    nB = np.linalg.norm(sys.B, 2)
    nH = np.linalg.norm(c.H_uu, 2)
    nM = np.linalg.norm(c.closed_loop, 2)
    g = np.where(block_mask(sys.ux_layout, r), c.grad, 0.0)
    g2, gF = np.linalg.norm(g, 2), np.linalg.norm(g)
    exact = kappa >= sys.nbr.diameter
    if params.L is not None:
        L = np.asarray(params.L, float)
    elif exact:
        L = np.zeros(sys.n)  # every L_i term is multiplied by a zero truncation error
    else:
        L = score_bounds(sys, c, r)
    trunc = 0.0 if exact else params.c_prime * params.rho ** (kappa + 1)
    a = math.sqrt(d) * L.sum()  # ||K'' - K'|| <= eta * a * trunc

    gap = max(C - Cs, 0.0)
    root = math.sqrt(nH * gap / mu)
    upsilon = (
        np.linalg.norm(sys.A, 2)
        + math.sqrt(d) * nB / sR * (root + np.linalg.norm(sys.B.T @ c.P @ sys.A, 2))
        + nB * C / sQ * root
    )
    lip = (2 * sR_max + 2 * nB**2 * params.c_init / mu + 4 * math.sqrt(2) * params.zeta * nB * params.c_init / mu) * params.c_init / sQ_max

    xi_fac = 4 * (C / sQ) ** 2 * nB * (nM + 1) / mu
    e_bound = math.sqrt(gap * np.linalg.norm(sys.R + (C / mu) * sys.B.T @ sys.B, 2) / mu)
    xi_bound = C / sQ
    f11 = 2 * math.sqrt(d) * xi_bound * e_bound * a
    f12 = 2 * math.sqrt(d) * xi_fac * e_bound * a**2 + math.sqrt(d) * xi_bound * nH * a**2
    f13 = math.sqrt(d) * xi_fac * nH * a**3

    w0 = gF**2 - f11 * trunc
    w1 = -(lip / 2) * gF**2 - f12 * trunc**2
    w2 = -f13 * trunc**3

    terms = {
        "T1": _safe_div((sQ * mu / C) ** 2 / 16, nB * g2 * (1 + nM)),
        "T2": sQ / (32 * C * nH),
        "T3": _safe_div(sQ * mu, 4 * C * nB * (upsilon + 1) * params.c_prime * a * (0.0 if exact else params.rho ** (kappa + 1))),
        "T4": 1 / lip,
    }
    insufficient = w0 <= 0
    if insufficient:
        terms["T5"] = math.nan
    elif w2 < 0:
        terms["T5"] = (-w1 - math.sqrt(w1 * w1 - 4 * w2 * w0)) / (2 * w2)
    else:
        terms["T5"] = _safe_div(w0, -w1)
    terms["cap"] = 1.0
    finite = [v for v in terms.values() if not math.isnan(v)]
    minimum = min(finite)
    if exact or f11 == 0 or gF == 0:
        kappa_min = -math.inf
    else:
        kappa_min = math.log(f11 * params.c_prime / gF**2) / -math.log(params.rho) - 1
    return GuardReport(terms, minimum, insufficient, (w0, w1, w2), (f11, f12, f13), kappa_min, lip, float(upsilon))


def iteration_bound(xi_opt_norm, eta, mu, sigma_r, gap0, eps):
    """Steps needed for the contraction term to fall below ``eps``.

    ``T >= ||Xi_{K*}|| / (eta mu^2 sigma_1(R)) * log(gap0 / eps)``.
    """
    if eta <= 0 or eps <= 0:
        raise ParameterError("eta and eps must be positive")
    return xi_opt_norm / (eta * mu**2 * sigma_r) * math.log(max(gap0 / eps, 1.0))


@dataclass
class DescentConfig:
    """Settings for :func:`run_descent`.

    ``sigma0`` is the exploration level used for the gradient; costs in the
    trace are evaluated at ``eval_sigma0``.
    """

    eta: float = 1e-3
    kappa: int = 1
    r: int = 1
    T: int = 4000
    guard_mode: str = "fixed_eta"
    seed: int = 0
    sigma0: float = 0.1
    eval_sigma0: float = 0.0
    zeta: float = 1.0

    def validate(self, diameter):
        if self.eta < 0:
            raise ParameterError(f"eta must be >= 0, got {self.eta}")
        if self.T < 1:
            raise ParameterError(f"T must be >= 1, got {self.T}")
        for name in ("kappa", "r"):
            v = getattr(self, name)
            if not 0 <= v <= max(diameter, 0):
                raise ParameterError(f"{name}={v} must lie in [0, diameter={diameter}]")
        if self.guard_mode not in ("fixed_eta", "theorem_guard"):
            raise ParameterError(f"unknown guard mode {self.guard_mode!r}")
        if self.sigma0 <= 0:
            raise ParameterError("sigma0 must be > 0 for the score-function gradient")


@dataclass
class DescentTrace:
    """Per-step diagnostics of a descent run (row 0 is the initial gain)."""

    columns: dict = field(default_factory=lambda: {c: [] for c in TRACE_COLUMNS})
    c_opt: float = math.nan
    sigma0: float = math.nan
    eval_sigma0: float = math.nan
    score_bounds: tuple = ()
    decay: DecayFit | None = None
    zeta: float = math.nan
    insufficient_steps: int = 0

    def append(self, **row):
        for c in TRACE_COLUMNS:
            self.columns[c].append(row[c])

    def __len__(self):
        return len(self.columns["step"])

    def array(self, name):
        return np.asarray(self.columns[name], dtype=float)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRACE_COLUMNS)
            for k in range(len(self)):
                w.writerow([_fmt(self.columns[c][k]) for c in TRACE_COLUMNS])


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def run_descent(sys, config, K0=None, c_opt=None, guard_params=None):
    """Distributed projected policy-gradient descent.

    Every step each agent forms its localized gradient block with range
    ``kappa`` and moves ``K_i <- K_i - eta * h_i``; the blocks have support
    ``N_i^r`` so K stays in M^r. In ``theorem_guard`` mode the step size is
    clamped to the smallest guard term each step (and frozen at zero while
    the communication range is insufficient for guaranteed descent).

    Returns ``(Controller, DescentTrace)``. Raises :class:`StabilityError`
    carrying the step index if an iterate leaves the stabilizing set.
    """
    diam = sys.nbr.diameter
    config.validate(diam)
    train = sys.with_sigma0(config.sigma0)
    K = np.zeros((sys.du, sys.dx)) if K0 is None else _as_array(K0).copy()
    mask = block_mask(sys.ux_layout, config.r)
    if not np.all(K[~mask] == 0):
        raise ParameterError(f"initial gain is not in M^{config.r}")
    if not is_stabilizing(sys, K):
        raise StabilityError("initial gain is not stabilizing", step=0)
    if c_opt is None:
        c_opt = _eval_cost(sys, riccati_optimal(sys).data, config.eval_sigma0)

    trace = DescentTrace(c_opt=c_opt, sigma0=config.sigma0, eval_sigma0=config.eval_sigma0, zeta=config.zeta)
    cache = solve(train, K)
    trace.score_bounds = tuple(score_bounds(train, cache, config.r).tolist())
    guard = config.guard_mode == "theorem_guard"
    if guard and guard_params is None:
        fit = fit_decay_constants(train, K, config.r, cache=cache)
        trace.decay = fit
        guard_params = GuardParams(
            c_opt=_eval_cost(train, riccati_optimal(train).data, config.sigma0),
            c_init=cache.cost,
            c_prime=fit.c_prime,
            rho=fit.rho,
            zeta=config.zeta,
        )

    for t in range(config.T + 1):
        h = approx_gradient_all(train, K, config.kappa, config.r, cache)
        g = np.where(mask, cache.grad, 0.0)
        eta = config.eta
        gmin = math.nan
        if guard:
            rep = step_size_guard(train, K, config.kappa, config.r, guard_params, cache)
            gmin = rep.minimum
            if rep.kappa_insufficient:
                trace.insufficient_steps += 1 if t < config.T else 0
                eta = 0.0
            else:
                eta = min(eta, rep.minimum)
        c_eval = _eval_cost_from(cache, sys, config.eval_sigma0)
        trace.append(
            step=t,
            cost=c_eval,
            rel_error_vs_opt=(c_eval - c_opt) / c_opt,
            proj_grad_norm=float(np.linalg.norm(g)),
            approx_err_norm=float(np.linalg.norm(h - g)),
            spectral_radius=cache.radius,
            eta_used=eta if t < config.T else 0.0,
            guard_min_term=gmin,
        )
        if t == config.T:
            break
        K = K - eta * h
        try:
            cache = solve(train, K)
        except StabilityError as exc:
            raise StabilityError(
                f"iterate {t + 1} is not stabilizing (spectral radius {exc.radius:.6g})", step=t + 1, radius=exc.radius
            ) from None
    return Controller(sys.gain(K), config.r), trace


def _eval_cost(sys, K, sigma0):
    return solve(sys.with_sigma0(sigma0), K).cost


def _eval_cost_from(cache, sys, sigma0):
    # P does not depend on the noise level; only Psi does
    Psi = sys.Phi + sigma0**2 * sys.B @ sys.B.T
    return float(np.trace(cache.P @ Psi) + sigma0**2 * np.trace(sys.R))


@dataclass(frozen=True)
class MCEstimate:
    mean: np.ndarray
    stderr: np.ndarray
    n_rollouts: int
    horizon: int


def mc_gradient(sys, K, i, kappa, n_rollouts, horizon=None, seed=0, r=None):
    """Monte-Carlo estimate of agent i's localized gradient block.

    Samples ``x ~ N(0, Xi)`` and ``eps ~ N(0, I)``, rolls the closed loop
    forward from the truncated initial condition of every agent j within
    ``kappa`` hops (common random numbers across j), sums centred stage
    costs over ``horizon`` steps as the Q estimate and averages it against
    the score. Stage costs after the first step use their conditional
    expectation given the state.
    """
    _check_score(sys)
    if n_rollouts < 1:
        raise ParameterError("n_rollouts must be >= 1")
    c = solve(sys, K)
    r = sys.nbr.diameter if r is None else r
    if horizon is None:
        horizon = int(min(10_000, math.ceil(math.log(1e-12) / math.log(max(c.radius, 1e-3)))))
    if horizon < 1:
        raise ParameterError("horizon must be >= 1")
    rng = np.random.default_rng(seed)
    n, dx, du, s0 = sys.n, sys.dx, sys.du, sys.sigma0
    Kmat = c.K
    Lxi = np.linalg.cholesky(c.Xi)
    Lpsi = np.linalg.cholesky(c.Psi)
    Lphi = _psd_factor(sys.Phi)

    x0 = rng.standard_normal((n_rollouts, dx)) @ Lxi.T
    e0 = rng.standard_normal((n_rollouts, du))
    js = sys.nbr.hop(i, kappa)
    xa, ua = sys.xx_layout.row_agent, sys.uu_layout.row_agent
    keep_x = np.array([sys.nbr.dist[j][xa] <= kappa for j in js], float)
    keep_u = np.array([sys.nbr.dist[j][ua] <= kappa for j in js], float)
    X = x0[None] * keep_x[:, None, :]
    U = -X @ Kmat.T + s0 * (e0[None] * keep_u[:, None, :])
    Qj = sys.local_Q[list(js)]
    Rj = sys.local_R[list(js)]
    Wj = Qj + np.einsum("ba,jbc,cd->jad", Kmat, Rj, Kmat)
    trR = np.trace(Rj, axis1=1, axis2=2)

    costs = np.einsum("jna,jab,jnb->jn", X, Qj, X) + np.einsum("jna,jab,jnb->jn", U, Rj, U)
    totals = costs.copy()
    stage_sum = np.zeros(len(js))
    w0 = rng.standard_normal((n_rollouts, dx)) @ Lphi.T
    X = X @ sys.A.T + U @ sys.B.T + w0[None]
    Acl = c.closed_loop
    for _ in range(1, horizon):
        cb = np.einsum("jna,jab,jnb->jn", X, Wj, X) + s0**2 * trR[:, None]
        totals += cb
        stage_sum += cb.mean(axis=1)
        X = X @ Acl.T + (rng.standard_normal((n_rollouts, dx)) @ Lpsi.T)[None]
    avg = stage_sum / max(horizon - 1, 1) if horizon > 1 else costs.mean(axis=1)
    qhat = totals - horizon * avg[:, None]
    # constant baseline: E[score] = 0, so centring only removes variance
    qhat -= qhat.mean(axis=1, keepdims=True)

    rows = np.flatnonzero(ua == i)
    cols = np.flatnonzero(sys.nbr.dist[i][sys.xx_layout.col_agent] <= r)
    # per-rollout score: -eps_i x_{N_i^r}^T / sigma0
    score = -np.einsum("na,nb->nab", e0[:, rows], x0[:, cols]) / s0
    samples = qhat.sum(axis=0)[:, None, None] * score / n
    full_mean = np.zeros((len(rows), dx))
    full_se = np.zeros((len(rows), dx))
    full_mean[:, cols] = samples.mean(axis=0)
    if n_rollouts > 1:
        full_se[:, cols] = samples.std(axis=0, ddof=1) / math.sqrt(n_rollouts)
    return MCEstimate(full_mean, full_se, n_rollouts, horizon)


def _psd_factor(M):
    w, V = np.linalg.eigh((M + M.T) / 2)
    return V * np.sqrt(np.clip(w, 0.0, None))
