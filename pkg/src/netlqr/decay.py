"""Checks for the spatial decay conditions behind localized gradient estimates.

Three independent pieces of evidence are gathered for a closed loop
``M = A - BK``:

* a block-norm ratio test on the powers ``M^t`` (neighbouring distance
  shells must shrink by a factor ``rho``),
* a walk-count bound ``|W_{i->j}^t| <= C D^t rho^kappa`` together with the
  product condition ``max_block_norm(M) * D <= 1``,
* spatially exponentially decaying fits of every power and of the gradient.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from netlqr import kernels
from netlqr.blocks import BlockMatrix, block_norms, fit_sed
from netlqr.errors import DegenerateInputError, ParameterError
from netlqr.graph import CLOSED_FORM_KINDS, bound_params_for, count_walks, walk_bound_constants
from netlqr.lqr import _as_array, _require_stable, solve

__all__ = [
    "RATIO_TINY",
    "RatioTestResult",
    "WalkBoundResult",
    "SedPowers",
    "DecayCertificate",
    "lemma4_ratio_test",
    "lemma5_check",
    "sed_of_powers",
    "projection_loss",
    "truncation_errors",
    "certify",
]

# both blocks of a ratio are structural zeros below this
RATIO_TINY = 1e-13


def _closed_loop_blocks(sys, K):
    K = _as_array(K)
    _require_stable(sys, K)
    return BlockMatrix(sys.xx_layout, sys.closed_loop(K))


@dataclass(frozen=True)
class RatioTestResult:
    """Worst shell ratio ``||[M^t]_{i'j}|| / ||[M^t]_{ij}||`` per distance kappa.

    ``worst[k]`` compares distance ``k + 1`` against distance ``k``; NaN marks
    radii where every denominator was a structural zero.
    """

    t_max: int
    worst: np.ndarray
    worst_by_t: np.ndarray = field(repr=False)
    rho_fit: float
    rho_target: float
    passed: bool
    vacuous: bool


def lemma4_ratio_test(sys, K, t_max=15, rho_target=None):
    """Block-norm ratio test on the powers ``(A - BK)^t``, t = 1..t_max.

    Passes iff the worst ratio over all tested powers and distances is at
    most ``rho_target`` (default: strictly below one).
    """
    if t_max < 1:
        raise ParameterError(f"t_max must be >= 1, got {t_max}")
    M = _closed_loop_blocks(sys, K)
    dist = np.ascontiguousarray(sys.nbr.dist)
    kmax = sys.nbr.diameter
    by_t = np.full((t_max, max(kmax, 0)), -1.0)
    P = M
    for t in range(1, t_max + 1):
        if t > 1:
            P = BlockMatrix(M.layout, P.data @ M.data)
        norms, _ = block_norms(P)
        if kmax:
            by_t[t - 1] = kernels.ratio_scan(norms, dist, kmax, RATIO_TINY)
    worst = by_t.max(axis=0) if kmax else np.zeros(0)
    worst = np.where(worst < 0, np.nan, worst)
    by_t = np.where(by_t < 0, np.nan, by_t)
    live = worst[~np.isnan(worst)]
    rho_fit = float(live.max()) if live.size else 0.0
    target = 1.0 if rho_target is None else float(rho_target)
    passed = rho_fit <= target if rho_target is not None else rho_fit < 1.0
    return RatioTestResult(t_max, worst, by_t, rho_fit, target, bool(passed), not live.size or rho_fit == 0.0)


@dataclass(frozen=True)
class WalkBoundResult:
    """Walk-count bound and product condition for the closed loop.

    ``margins`` rows are ``(t, kappa, max_count, bound, holds)`` where
    ``max_count`` is the largest count over pairs at distance kappa.
    ``rho_tabulated`` differs from ``rho`` only for the cycle, whose
    tabulated rate and bound expression disagree.
    """

    kind: str
    r: int
    C: float
    D: float
    rho: float
    rho_tabulated: float
    source: str
    margins: list = field(repr=False)
    bound_holds: bool
    overline: float
    product: float
    product_holds: bool


def _max_by_distance(W, dist, kmax):
    out = [0] * (kmax + 1)
    for k in range(kmax + 1):
        sel = W[dist == k]
        if sel.size:
            out[k] = int(sel.max())
    return out


def _fit_walk_constants(cells):
    """Least-squares ``log count = log C + t log D + kappa log rho``, then inflate C."""
    live = [(t, k, c) for t, k, c in cells if c > 0]
    if len(live) < 3:
        raise DegenerateInputError("too few nonzero walk counts to fit a bound")
    X = np.array([[1.0, t, k] for t, k, _ in live])
    y = np.array([math.log(c) for *_, c in live])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    D = math.exp(coef[1])
    rho = float(np.clip(math.exp(coef[2]), 1e-6, 1 - 1e-6))
    C = max(c / (D**t * rho**k) for t, k, c in live)
    return C, D, rho


def lemma5_check(sys, K, topology_kind=None, t_max=20, r=None):
    """Walk-count bound plus product condition; failures are reported, not raised.

    ``r`` is the walk-graph radius, by default the smallest sparsity class of
    ``A - BK`` (at least 1). Known kinds with ``r = 1`` use the closed-form
    constants; anything else fits them from the counts.
    """
    M = _closed_loop_blocks(sys, K)
    topo = sys.topology
    kind = topo.kind if topology_kind is None else topology_kind
    if r is None:
        r = max(1, M.smallest_class())
    table = count_walks(topo, r, t_max)
    dist = sys.nbr.dist
    kmax = sys.nbr.diameter
    cells = []
    for t in range(t_max + 1):
        for k, c in enumerate(_max_by_distance(table.counts[t], dist, kmax)):
            cells.append((t, k, c))

    if kind in CLOSED_FORM_KINDS and r == 1:
        p = bound_params_for(topo)
        C, D, rho_tab = walk_bound_constants(kind, n=p["n"], f=p["f"])
        rho = 1 / math.e if kind == "cycle" else rho_tab
        source = "closed_form"
    else:
        C, D, rho = _fit_walk_constants(cells)
        rho_tab = rho
        source = "fitted"

    margins = []
    ok = True
    for t, k, c in cells:
        b = C * D**t * rho**k
        holds = c <= b
        ok &= holds
        margins.append((t, k, c, b, holds))
    _, overline = block_norms(M)
    product = overline * D
    return WalkBoundResult(kind, r, C, D, rho, rho_tab, source, margins, bool(ok), overline, product, product <= 1.0)


@dataclass(frozen=True)
class SedPowers:
    """SED fits of ``(A - BK)^t`` for t = 0..t_max and of the gradient.

    ``fits[t]`` is None when the power is identically zero (nilpotent loop).
    """

    fits: list = field(repr=False)
    vacuous: tuple
    gradient: object
    gradient_decays: bool


def sed_of_powers(sys, K, t_max=20):
    if t_max < 0:
        raise ParameterError(f"t_max must be >= 0, got {t_max}")
    M = _closed_loop_blocks(sys, K)
    P = BlockMatrix(M.layout, np.eye(sys.dx))
    fits, vacuous = [], []
    for t in range(t_max + 1):
        if t:
            P = BlockMatrix(M.layout, P.data @ M.data)
        try:
            fits.append(fit_sed(P))
        except DegenerateInputError:
            fits.append(None)
            vacuous.append(t)
    cache = solve(sys, K)
    try:
        g = fit_sed(BlockMatrix(sys.ux_layout, cache.grad))
        decays = g.gamma < 1
    except DegenerateInputError:
        g, decays = None, True
    return SedPowers(fits, tuple(vacuous), g, bool(decays))


def projection_loss(sys, K, radii):
    """``||grad - P_{M^r} grad||_F`` for every r in ``radii``."""
    cache = solve(sys, K)
    g = cache.grad
    dist = sys.nbr.dist[np.ix_(sys.ux_layout.row_agent, sys.ux_layout.col_agent)]
    return np.array([np.linalg.norm(np.where(dist > r, g, 0.0)) for r in radii])


def truncation_errors(sys, K, i, kappas, samples=64, seed=0):
    """Largest ``|Q^i(z) - Qhat^i_kappa(z)|`` over random unit-norm ``z = (x, eps)``."""
    from netlqr.distributed import q_function, truncated_q

    cache = solve(sys, K)
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((samples, sys.dx + sys.du))
    Z /= np.linalg.norm(Z, axis=1, keepdims=True)
    full = q_function(sys, K, i, cache)
    out = []
    for k in kappas:
        D = full.M - truncated_q(sys, K, i, k, cache).M
        out.append(float(np.abs(np.einsum("na,ab,nb->n", Z, D, Z)).max()))
    return np.array(out)


@dataclass(frozen=True)
class DecayCertificate:
    label: str
    ratio_test: RatioTestResult
    walk_bound: WalkBoundResult
    sed: SedPowers

    def report(self):
        rt, wb, s = self.ratio_test, self.walk_bound, self.sed
        lines = [f"decay certificate: {self.label}", ""]
        lines.append(f"[ratio test] t_max={rt.t_max} rho_target={rt.rho_target:.6g}")
        for k, w in enumerate(rt.worst):
            lines.append(f"  kappa={k}: worst ratio {'vacuous' if np.isnan(w) else f'{w:.6g}'}")
        lines.append(f"  fitted rho={rt.rho_fit:.6g} vacuous={rt.vacuous} -> {'PASS' if rt.passed else 'FAIL'}")
        lines.append("")
        lines.append(f"[walk bound] kind={wb.kind} r={wb.r} constants={wb.source}")
        lines.append(f"  C={wb.C:.6g} D={wb.D:.6g} rho={wb.rho:.6g} (tabulated rho={wb.rho_tabulated:.6g})")
        bad = sum(1 for m in wb.margins if not m[4])
        lines.append(f"  count bound over {len(wb.margins)} (t, kappa) cells: {'PASS' if wb.bound_holds else f'FAIL ({bad} cells)'}")
        lines.append(f"  max block norm={wb.overline:.6g} product with D={wb.product:.6g} -> {'PASS' if wb.product_holds else 'FAIL'}")
        lines.append("")
        lines.append(f"[SED of powers] t=0..{len(s.fits) - 1}, nilpotent at t={list(s.vacuous)}")
        for t, f in enumerate(s.fits):
            if f is not None:
                lines.append(f"  t={t}: c={f.c:.6g} gamma={f.gamma:.6g}{'' if f.fitted else ' (single distance)'}")
        if s.gradient is None:
            lines.append("  gradient: zero (vacuous)")
        else:
            lines.append(f"  gradient: c={s.gradient.c:.6g} gamma={s.gradient.gamma:.6g} decays={s.gradient_decays}")
        return "\n".join(lines) + "\n"

    def margins_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "kappa", "max_count", "bound", "margin", "holds"])
        for t, k, c, b, holds in self.walk_bound.margins:
            margin = b / c if c else math.inf
            w.writerow([t, k, c, repr(float(b)), repr(float(margin)), int(holds)])
        return buf.getvalue()

    def ratios_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "kappa", "worst_ratio"])
        for t, row in enumerate(self.ratio_test.worst_by_t, start=1):
            for k, v in enumerate(row):
                w.writerow([t, k, "" if np.isnan(v) else repr(float(v))])
        return buf.getvalue()


def certify(sys, K, t_max=20, rho_target=None, label="", ratio_t_max=None):
    """Run all three checks on one gain."""
    return DecayCertificate(
        label,
        lemma4_ratio_test(sys, K, ratio_t_max or t_max, rho_target),
        lemma5_check(sys, K, t_max=t_max),
        sed_of_powers(sys, K, t_max),
    )
