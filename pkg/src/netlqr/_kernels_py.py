"""Pure numpy implementations of the hot kernels.

Signatures match the compiled ``_kernels`` extension exactly; ``netlqr.kernels``
picks one of the two at import time.
"""

import numpy as np

BACKEND = "python"


def walk_step(W, indptr, indices, limit):
    """One step of walk propagation: ``out[i, j] = sum_{k in nbr(j)} W[i, k]``.

    Returns ``(out, overflow)``. ``overflow`` is True when some entry of the
    result would exceed ``limit``; ``out`` is then not meaningful.
    """
    W = np.asarray(W, dtype=np.int64)
    n = W.shape[0]
    deg = np.diff(indptr)
    # exact int64 bound: every output entry is a sum of deg[j] entries of W
    peak = int(W.max(initial=0))
    if peak and peak > limit // max(int(deg.max(initial=1)), 1):
        # sum in float to decide; only a near-limit result is ambiguous
        est = _propagate(W.astype(np.float64), indptr, indices, deg, n)
        if est.max(initial=0.0) > 0.99 * limit:
            exact = _propagate(W.astype(object), indptr, indices, deg, n)
            if max(exact.ravel(), default=0) > limit:
                return np.zeros_like(W), True
    return _propagate(W, indptr, indices, deg, n), False


def walk_step_object(W, indptr, indices):
    """Arbitrary-precision version of :func:`walk_step` on object arrays."""
    n = W.shape[0]
    return _propagate(W, indptr, indices, np.diff(indptr), n)


def _propagate(W, indptr, indices, deg, n):
    out = np.zeros_like(W)
    if len(indices) == 0:
        return out
    gathered = W[:, indices]
    sums = np.add.reduceat(gathered, indptr[:-1].clip(max=len(indices) - 1), axis=1)
    has = deg > 0
    out[:, has] = sums[:, has]
    return out


def ratio_scan(norms, dist, kmax, tiny):
    """Worst neighbour-shell ratio per radius.

    For every column ``j`` and radius ``k < kmax`` computes
    ``max_{dist(i',j)=k+1} norms[i', j] / min_{dist(i,j)=k} norms[i, j]``,
    skipping denominators below ``tiny``. Entry ``k`` of the result is the
    max over ``j``; ``-1`` marks radii where every ratio was vacuous.
    """
    norms = np.asarray(norms, dtype=np.float64)
    dist = np.asarray(dist, dtype=np.int64)
    worst = np.full(kmax, -1.0)
    for k in range(kmax):
        num_mask = dist == k + 1
        den_mask = (dist == k) & (norms >= tiny)
        num = np.where(num_mask, norms, -np.inf).max(axis=0)
        den = np.where(den_mask, norms, np.inf).min(axis=0)
        ok = np.isfinite(den)
        if not ok.any():
            continue
        num = np.where(np.isfinite(num), num, 0.0)
        worst[k] = float((num[ok] / den[ok]).max())
    return worst


def masked_local_sum(E, owners, row_agent, col_agent, dist, kappa):
    """Sum of per-agent gradient pieces restricted to each owner's neighbourhood.

    ``out[a, b] = sum_j E[j, a, b]`` over slices ``j`` whose owner agent lies
    within ``kappa`` hops of both the agent of row ``a`` and of column ``b``.
    """
    near = np.asarray(dist)[np.asarray(owners)] <= kappa
    rmask = near[:, row_agent]
    cmask = near[:, col_agent]
    return np.einsum("jab,ja,jb->ab", E, rmask, cmask, optimize=True)
