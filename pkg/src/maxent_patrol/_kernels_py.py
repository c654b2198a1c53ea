"""Pure numpy implementations of the hot kernels.

These mirror ``_kernels.pyx`` operation for operation and are used whenever
the compiled extension is unavailable (or ``MAXENT_PATROL_BACKEND=python``).
"""
from __future__ import annotations

import numpy as np

_CHUNK = 1 << 14


def walk_chains(cum, nxt, nopt, start, u):
    """Walk ``M`` independent categorical chains.

    State ``s`` has ``nopt[s]`` options with cumulative probabilities
    ``cum[s, :nopt[s]]`` (last one exactly 1.0, padding above 1) and successor
    states ``nxt[s, :nopt[s]]``.  Step ``l`` of chain ``m`` picks the first
    option whose cumulative probability exceeds ``u[m, l]``.  Returns the
    visited states, shape ``(M, L + 1)``, padded with -1 after termination.
    """
    M, L = u.shape
    out = np.full((M, L + 1), -1, dtype=np.int64)
    for lo in range(0, M, _CHUNK):
        hi = min(lo + _CHUNK, M)
        cur = np.asarray(start[lo:hi], dtype=np.int64).copy()
        out[lo:hi, 0] = cur
        for step in range(L):
            live = np.flatnonzero(cur >= 0)
            if live.size == 0:
                break
            s = cur[live]
            has = nopt[s] > 0
            cur[live[~has]] = -1
            live = live[has]
            s = s[has]
            o = (cum[s] <= u[lo + live, step, None]).sum(axis=1)
            cur[live] = nxt[s, o]
            out[lo:hi, step + 1] = cur
    return out


def fams_log_dp(logw, kmax):
    """Log-domain ordered-matching DP for a batch of edge-weight variants.

    ``logw`` has shape ``(V, n1, n2)`` with ``-inf`` for absent edges.  Returns
    ``dp`` of shape ``(V, n1 + 1, n2 + 1, kmax + 1)`` where ``dp[v, l, r, d]``
    is the log total weight of size-``d`` ordered matchings using only the
    first ``l`` outbound and first ``r`` return flights.
    """
    V, n1, n2 = logw.shape
    K = kmax + 1
    ninf = -np.inf
    dp = np.full((V, n1 + 1, n2 + 1, K), ninf)
    dp[..., 0] = 0.0
    col = np.full((V, n2 + 1, K), ninf)
    edge = np.empty((V, K))
    present = np.isfinite(logw).any(axis=0)
    with np.errstate(invalid="ignore"):
        for l in range(1, n1 + 1):
            row = np.full((V, K), ninf)
            for r in range(1, n2 + 1):
                prev_col = col[:, r].copy()
                if present[l - 1, r - 1]:
                    edge[:, 0] = ninf
                    edge[:, 1:] = logw[:, l - 1, r - 1, None] + dp[:, l - 1, r - 1, :-1]
                    row = np.logaddexp(row, edge)
                    col[:, r] = np.logaddexp(prev_col, edge)
                val = np.logaddexp(dp[:, l - 1, r - 1], np.logaddexp(row, prev_col))
                val[:, 0] = 0.0
                dp[:, l, r] = val
    return dp


def fams_max_dp(w, kmax):
    """Max-plus ordered-matching DP with back-pointers.

    ``w`` has shape ``(n1, n2)`` with ``-inf`` for absent edges.  Returns
    ``(dp, arg)``, both of shape ``(n1 + 1, n2 + 1, kmax + 1)``:
    ``dp[l, r, d]`` is the best weight of a size-``d`` ordered matching within
    the first ``l`` / ``r`` flights and ``arg[l, r, d]`` is ``-1`` when the
    optimum skips to ``(l-1, r-1)`` or else the flattened cell
    ``(i - 1) * n2 + (j - 1)`` of its boundary edge.  Ties prefer skipping,
    then edges in row ``l`` by ascending ``j``, then edges in column ``r`` by
    ascending ``i``.
    """
    n1, n2 = w.shape
    K = kmax + 1
    ninf = -np.inf
    dp = np.full((n1 + 1, n2 + 1, K), ninf)
    dp[..., 0] = 0.0
    arg = np.full((n1 + 1, n2 + 1, K), -1, dtype=np.int64)
    col = np.full((n2 + 1, K), ninf)
    col_arg = np.full((n2 + 1, K), -1, dtype=np.int64)
    for l in range(1, n1 + 1):
        row = np.full(K, ninf)
        row_arg = np.full(K, -1, dtype=np.int64)
        for r in range(1, n2 + 1):
            best = dp[l - 1, r - 1].copy()
            barg = np.full(K, -1, dtype=np.int64)
            wt = w[l - 1, r - 1]
            if wt != ninf:
                edge = np.full(K, ninf)
                edge[1:] = wt + dp[l - 1, r - 1, :-1]
                cell = (l - 1) * n2 + (r - 1)
                up = edge > row
                row[up] = edge[up]
                row_arg[up] = cell
            take = row > best
            best[take] = row[take]
            barg[take] = row_arg[take]
            take = col[r] > best
            best[take] = col[r][take]
            barg[take] = col_arg[r][take]
            if wt != ninf:
                up = edge > col[r]
                col[r][up] = edge[up]
                col_arg[r][up] = cell
            best[0] = 0.0
            barg[0] = -1
            dp[l, r] = best
            arg[l, r] = barg
    return dp, arg
