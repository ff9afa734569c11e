"""Backend selection for the hot kernels.

The compiled extension is used when it was built; otherwise the numpy
implementations in ``_kernels_py`` are used. Setting ``NETLQR_PURE_PYTHON=1``
forces the fallback (used by the benchmark and the backend-parity tests).
"""

import os

import numpy as np

from netlqr import _kernels_py

if os.environ.get("NETLQR_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
else:
    try:
        from netlqr import _kernels as _impl
    except ImportError:  # extension not built
        _impl = _kernels_py

BACKEND = _impl.BACKEND


def walk_step(W, indptr, indices, limit):
    return _impl.walk_step(
        np.ascontiguousarray(W, dtype=np.int64),
        np.ascontiguousarray(indptr, dtype=np.int64),
        np.ascontiguousarray(indices, dtype=np.int64),
        int(limit),
    )


def walk_step_object(W, indptr, indices):
    return _kernels_py.walk_step_object(W, indptr, indices)


def ratio_scan(norms, dist, kmax, tiny):
    return _impl.ratio_scan(
        np.ascontiguousarray(norms, dtype=np.float64),
        np.ascontiguousarray(dist, dtype=np.int64),
        int(kmax),
        float(tiny),
    )


def masked_local_sum(E, owners, row_agent, col_agent, dist, kappa):
    return _impl.masked_local_sum(
        np.ascontiguousarray(E, dtype=np.float64),
        np.ascontiguousarray(owners, dtype=np.int64),
        np.ascontiguousarray(row_agent, dtype=np.int64),
        np.ascontiguousarray(col_agent, dtype=np.int64),
        np.ascontiguousarray(dist, dtype=np.int64),
        int(kappa),
    )
