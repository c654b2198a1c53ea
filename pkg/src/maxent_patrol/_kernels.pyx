# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the kernels in ``_kernels_py``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log1p, INFINITY

cnp.import_array()


cdef inline double _logadd(double a, double b) noexcept nogil:
    if a == -INFINITY:
        return b
    if b == -INFINITY:
        return a
    if a > b:
        return a + log1p(exp(b - a))
    return b + log1p(exp(a - b))


def walk_chains(const double[:, ::1] cum, const cnp.int64_t[:, ::1] nxt,
                const cnp.int64_t[::1] nopt, const cnp.int64_t[::1] start,
                const double[:, ::1] u):
    cdef Py_ssize_t M = u.shape[0], L = u.shape[1]
    out_arr = np.full((M, L + 1), -1, dtype=np.int64)
    cdef cnp.int64_t[:, ::1] out = out_arr
    cdef Py_ssize_t m, step, lo, hi, mid
    cdef cnp.int64_t s
    cdef double x
    with nogil:
        for m in range(M):
            s = start[m]
            out[m, 0] = s
            for step in range(L):
                if s < 0 or nopt[s] == 0:
                    break
                x = u[m, step]
                lo = 0
                hi = nopt[s] - 1
                while lo < hi:
                    mid = (lo + hi) >> 1
                    if cum[s, mid] > x:
                        hi = mid
                    else:
                        lo = mid + 1
                s = nxt[s, lo]
                out[m, step + 1] = s
    return out_arr


def fams_log_dp(const double[:, :, ::1] logw, Py_ssize_t kmax):
    cdef Py_ssize_t V = logw.shape[0], n1 = logw.shape[1], n2 = logw.shape[2]
    cdef Py_ssize_t K = kmax + 1
    dp_arr = np.full((V, n1 + 1, n2 + 1, K), -np.inf)
    dp_arr[..., 0] = 0.0
    col_arr = np.full((n2 + 1, K), -np.inf)
    row_arr = np.empty(K)
    edge_arr = np.empty(K)
    cdef double[:, :, :, ::1] dp = dp_arr
    cdef double[:, ::1] col = col_arr
    cdef double[::1] row = row_arr
    cdef double[::1] edge = edge_arr
    cdef Py_ssize_t v, l, r, d
    cdef double w, val
    with nogil:
        for v in range(V):
            for r in range(n2 + 1):
                for d in range(K):
                    col[r, d] = -INFINITY
            for l in range(1, n1 + 1):
                for d in range(K):
                    row[d] = -INFINITY
                for r in range(1, n2 + 1):
                    w = logw[v, l - 1, r - 1]
                    for d in range(1, K):
                        val = _logadd(dp[v, l - 1, r - 1, d], _logadd(row[d], col[r, d]))
                        if w != -INFINITY:
                            edge[d] = w + dp[v, l - 1, r - 1, d - 1]
                            row[d] = _logadd(row[d], edge[d])
                            val = _logadd(val, edge[d])
                            col[r, d] = _logadd(col[r, d], edge[d])
                        dp[v, l, r, d] = val
    return dp_arr


def fams_max_dp(const double[:, ::1] w, Py_ssize_t kmax):
    cdef Py_ssize_t n1 = w.shape[0], n2 = w.shape[1], K = kmax + 1
    dp_arr = np.full((n1 + 1, n2 + 1, K), -np.inf)
    dp_arr[..., 0] = 0.0
    arg_arr = np.full((n1 + 1, n2 + 1, K), -1, dtype=np.int64)
    col_arr = np.full((n2 + 1, K), -np.inf)
    col_arg_arr = np.full((n2 + 1, K), -1, dtype=np.int64)
    row_arr = np.empty(K)
    row_arg_arr = np.empty(K, dtype=np.int64)
    cdef double[:, :, ::1] dp = dp_arr
    cdef cnp.int64_t[:, :, ::1] arg = arg_arr
    cdef double[:, ::1] col = col_arr
    cdef cnp.int64_t[:, ::1] col_arg = col_arg_arr
    cdef double[::1] row = row_arr
    cdef cnp.int64_t[::1] row_arg = row_arg_arr
    cdef Py_ssize_t l, r, d
    cdef cnp.int64_t cell, barg
    cdef double wt, edge, best
    with nogil:
        for l in range(1, n1 + 1):
            for d in range(K):
                row[d] = -INFINITY
                row_arg[d] = -1
            for r in range(1, n2 + 1):
                wt = w[l - 1, r - 1]
                cell = (l - 1) * n2 + (r - 1)
                for d in range(1, K):
                    best = dp[l - 1, r - 1, d]
                    barg = -1
                    edge = -INFINITY
                    if wt != -INFINITY:
                        edge = wt + dp[l - 1, r - 1, d - 1]
                        if edge > row[d]:
                            row[d] = edge
                            row_arg[d] = cell
                    if row[d] > best:
                        best = row[d]
                        barg = row_arg[d]
                    if col[r, d] > best:
                        best = col[r, d]
                        barg = col_arg[r, d]
                    if edge > col[r, d]:
                        col[r, d] = edge
                        col_arg[r, d] = cell
                    dp[l, r, d] = best
                    arg[l, r, d] = barg
    return dp_arr, arg_arr
