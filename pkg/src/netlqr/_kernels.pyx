# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels. See ``_kernels_py`` for the reference semantics."""

import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY

cnp.import_array()

BACKEND = "cython"


def walk_step(const cnp.int64_t[:, ::1] W, const cnp.int64_t[::1] indptr,
              const cnp.int64_t[::1] indices, cnp.int64_t limit):
    cdef Py_ssize_t n = W.shape[0]
    cdef Py_ssize_t i, j, p
    cdef cnp.int64_t acc, v
    cdef bint overflow = False
    out_arr = np.zeros((n, n), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] out = out_arr
    with nogil:
        for i in range(n):
            if overflow:
                break
            for j in range(n):
                acc = 0
                for p in range(indptr[j], indptr[j + 1]):
                    v = W[i, indices[p]]
                    # inputs are <= limit, so limit - v cannot wrap
                    if acc > limit - v:
                        overflow = True
                        break
                    acc += v
                if overflow:
                    break
                out[i, j] = acc
    return out_arr, bool(overflow)


def walk_step_object(W, indptr, indices):
    from netlqr._kernels_py import walk_step_object as _obj
    return _obj(W, indptr, indices)


def ratio_scan(const double[:, ::1] norms, const cnp.int64_t[:, ::1] dist, Py_ssize_t kmax,
               double tiny):
    cdef Py_ssize_t n = norms.shape[0]
    cdef Py_ssize_t i, j, k
    cdef cnp.int64_t d
    cdef double v, r
    worst_arr = np.full(kmax, -1.0)
    cdef double[::1] worst = worst_arr
    num_arr = np.empty(kmax + 2)
    den_arr = np.empty(kmax + 2)
    cdef double[::1] num = num_arr
    cdef double[::1] den = den_arr
    with nogil:
        for j in range(n):
            for k in range(kmax + 2):
                num[k] = 0.0
                den[k] = INFINITY
            for i in range(n):
                d = dist[i, j]
                if d > kmax:
                    continue
                v = norms[i, j]
                if d >= 1 and v > num[d - 1]:
                    num[d - 1] = v
                if v >= tiny and v < den[d]:
                    den[d] = v
            for k in range(kmax):
                if den[k] == INFINITY:
                    continue
                r = num[k] / den[k]
                if r > worst[k]:
                    worst[k] = r
    return worst_arr


def masked_local_sum(const double[:, :, ::1] E, const cnp.int64_t[::1] owners,
                     const cnp.int64_t[::1] row_agent, const cnp.int64_t[::1] col_agent,
                     const cnp.int64_t[:, ::1] dist, cnp.int64_t kappa):
    cdef Py_ssize_t m = E.shape[0]
    cdef Py_ssize_t du = E.shape[1]
    cdef Py_ssize_t dx = E.shape[2]
    cdef Py_ssize_t s, a, b
    cdef cnp.int64_t o
    out_arr = np.zeros((du, dx))
    cdef double[:, ::1] out = out_arr
    with nogil:
        for s in range(m):
            o = owners[s]
            for a in range(du):
                if dist[o, row_agent[a]] > kappa:
                    continue
                for b in range(dx):
                    if dist[o, col_agent[b]] <= kappa:
                        out[a, b] += E[s, a, b]
    return out_arr
