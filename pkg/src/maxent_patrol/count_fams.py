"""Counting, marginals and sampling of ordered ``k``-matchings for FAMS instances.

Within a city component, with outbound flights sorted by arrival and return
flights sorted by departure, ``DP(l, r; d)`` is the total weight of size-``d``
ordered matchings whose edges use only the first ``l`` outbound and first
``r`` return flights.  Splitting on the uppermost edge gives

    DP(l, r; d) = DP(l-1, r-1; d) + sum_{(i, j): i = l or j = r} w_ij DP(i-1, j-1; d-1)

Components are independent, so the global count is the size-``k``
convolution of per-component count polynomials.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np
from scipy.special import logsumexp

from . import _backend
from .errors import InfeasibleK, NotAMatching
from .model import FamsInstance, PureStrategy, fams_strategy

# --------------------------------------------------------------------------- #
# Canonicalization
# --------------------------------------------------------------------------- #


def is_ordered(matching: Iterable[tuple[int, int]]) -> bool:
    edges = sorted(matching)
    return all(a[0] < b[0] and a[1] < b[1] for a, b in zip(edges, edges[1:]))


def uncrossing_potential(matching: Iterable[tuple[int, int]]) -> int:
    return sum((i - j) ** 2 for i, j in matching)


def canonicalize(instance: FamsInstance, matching: Iterable[tuple[int, int]], *, trace: list | None = None):
    """Return the unique ordered matching covering the same flights.

    Crossing pairs ``(i, j), (i', j')`` with ``i > i'`` and ``j < j'`` are
    replaced by ``(i, j'), (i', j)`` until none remain.  When ``trace`` is a
    list, the potential ``sum (i - j)^2`` is appended after every step.
    """
    edges = [(int(i), int(j)) for i, j in matching]
    edge_set = set(instance.edges)
    if len({i for i, _ in edges}) < len(edges) or len({j for _, j in edges}) < len(edges):
        raise NotAMatching(f"repeated endpoint in {edges}")
    for e in edges:
        if e not in edge_set:
            raise NotAMatching(f"{e} is not an edge of the instance")
    if trace is not None:
        trace.append(uncrossing_potential(edges))
    changed = True
    while changed:
        changed = False
        for x in range(len(edges)):
            for y in range(len(edges)):
                i, j = edges[x]
                ip, jp = edges[y]
                if i > ip and j < jp:
                    a, b = (i, jp), (ip, j)
                    if a not in edge_set or b not in edge_set:
                        raise NotAMatching(f"uncrossing {edges[x]}, {edges[y]} leaves the edge set")
                    edges[x], edges[y] = a, b
                    changed = True
                    if trace is not None:
                        trace.append(uncrossing_potential(edges))
    return tuple(sorted(edges))


# --------------------------------------------------------------------------- #
# Weights
# --------------------------------------------------------------------------- #


def edge_log_weights(instance: FamsInstance, theta: np.ndarray) -> np.ndarray:
    """``log w_e = theta_{A_i} + theta_{B_j}`` for every edge, in ``instance.edges`` order."""
    theta = np.asarray(theta, dtype=float)
    if not instance.edges:
        return np.zeros(0)
    e = np.asarray(instance.edges)
    return theta[e[:, 0]] + theta[instance.n1 + e[:, 1]]


def _component_logw(instance: FamsInstance, log_w: np.ndarray) -> list[np.ndarray]:
    mats = [np.full((c.n1, c.n2), -np.inf) for c in instance.components]
    comp_of = {}
    for ci, c in enumerate(instance.components):
        for i in range(c.a_start, c.a_stop):
            comp_of[i] = ci
    for (i, j), lw in zip(instance.edges, log_w):
        ci = comp_of[i]
        c = instance.components[ci]
        mats[ci][i - c.a_start, j - c.b_start] = lw
    return mats


def _kcap(instance: FamsInstance, k: int) -> list[int]:
    return [min(k, c.n1, c.n2) for c in instance.components]


def _logconv(a: np.ndarray, b: np.ndarray, K: int) -> np.ndarray:
    """Log-domain polynomial product truncated at degree ``K``."""
    out = np.full(K + 1, -np.inf)
    for d1 in range(min(len(a), K + 1)):
        if not np.isfinite(a[d1]):
            continue
        hi = min(len(b), K + 1 - d1)
        out[d1 : d1 + hi] = np.logaddexp(out[d1 : d1 + hi], a[d1] + b[:hi])
    return out


def _component_polys(instance: FamsInstance, log_w: np.ndarray, k: int, variants: bool = False):
    """Per-component log count polynomials (and zeroed-flight variants)."""
    dp_kernel = _backend.fams_log_dp
    polys, dps, vpolys = [], [], []
    for c, mat, kc in zip(instance.components, _component_logw(instance, log_w), _kcap(instance, k)):
        if variants:
            V = 1 + c.n1 + c.n2
            batch = np.broadcast_to(mat, (V, c.n1, c.n2)).copy()
            for a in range(c.n1):
                batch[1 + a, a, :] = -np.inf
            for b in range(c.n2):
                batch[1 + c.n1 + b, :, b] = -np.inf
        else:
            batch = mat[None]
        dp = dp_kernel(np.ascontiguousarray(batch), kc)
        polys.append(dp[0, c.n1, c.n2].copy())
        dps.append(dp[0])
        if variants:
            vpolys.append(dp[1:, c.n1, c.n2].copy())
    return polys, dps, vpolys


def _resolve_log_w(instance: FamsInstance, alpha, edge_weights, log_weights: bool) -> np.ndarray:
    if edge_weights is not None:
        w = np.array([edge_weights[e] for e in instance.edges] if isinstance(edge_weights, dict)
                     else edge_weights, dtype=float)
        if log_weights:
            return w
        if (w < 0).any():
            raise ValueError("edge weights must be nonnegative")
        with np.errstate(divide="ignore"):
            return np.log(w)
    if alpha is None:
        return np.zeros(len(instance.edges))
    a = np.asarray(alpha, dtype=float)
    if not log_weights:
        if (a < 0).any():
            raise ValueError("weights must be nonnegative")
        with np.errstate(divide="ignore"):
            a = np.log(a)
    return edge_log_weights(instance, a)


def log_count_edges(instance: FamsInstance, log_w: np.ndarray, k: int | None = None) -> float:
    k = instance.k if k is None else k
    polys, _, _ = _component_polys(instance, log_w, k)
    total = np.full(k + 1, -np.inf)
    total[0] = 0.0
    for p in polys:
        total = _logconv(total, p, k)
    return float(total[k])


def _exact_count(instance: FamsInstance, weights: dict, k: int) -> Fraction:
    total = [Fraction(1)] + [Fraction(0)] * k
    for c in instance.components:
        kc = min(k, c.n1, c.n2)
        w = {(i - c.a_start, j - c.b_start): Fraction(weights[(i, j)])
             for (i, j) in instance.edges if c.a_start <= i < c.a_stop}
        dp = [[[Fraction(int(d == 0)) for d in range(kc + 1)] for _ in range(c.n2 + 1)] for _ in range(c.n1 + 1)]
        for l in range(1, c.n1 + 1):
            for r in range(1, c.n2 + 1):
                for d in range(1, kc + 1):
                    val = dp[l - 1][r - 1][d]
                    for j in range(1, r + 1):
                        if (l - 1, j - 1) in w:
                            val += w[(l - 1, j - 1)] * dp[l - 1][j - 1][d - 1]
                    for i in range(1, l):
                        if (i - 1, r - 1) in w:
                            val += w[(i - 1, r - 1)] * dp[i - 1][r - 1][d - 1]
                    dp[l][r][d] = val
        poly = dp[c.n1][c.n2]
        new = [Fraction(0)] * (k + 1)
        for d1, v1 in enumerate(total):
            for d2, v2 in enumerate(poly):
                if d1 + d2 <= k:
                    new[d1 + d2] += v1 * v2
        total = new
    return total[k]


def count(instance: FamsInstance, alpha=None, *, edge_weights=None, k: int | None = None,
          log_weights: bool = False, exact: bool = False):
    """Weighted count of size-``k`` ordered matchings.

    Weights come from per-flight ``alpha`` (``w_e = alpha_A * alpha_B``) or
    directly from ``edge_weights`` (dict keyed by edge or array aligned with
    ``instance.edges``).  Returns the log count, or a ``Fraction`` when
    ``exact=True``.
    """
    k = instance.k if k is None else k
    if exact:
        if edge_weights is not None:
            w = edge_weights if isinstance(edge_weights, dict) else dict(zip(instance.edges, edge_weights))
        else:
            a = [Fraction(1)] * instance.n if alpha is None else [Fraction(v) for v in alpha]
            w = {(i, j): a[i] * a[instance.n1 + j] for (i, j) in instance.edges}
        return _exact_count(instance, w, k)
    return log_count_edges(instance, _resolve_log_w(instance, alpha, edge_weights, log_weights), k)


def check_feasible(instance: FamsInstance) -> None:
    if not np.isfinite(count(instance)):
        raise InfeasibleK(f"no ordered matching of size {instance.k}")


def log_count_and_marginals(instance: FamsInstance, theta: np.ndarray) -> tuple[float, np.ndarray]:
    """``(log C, Pr[flight covered])`` via the zeroed-flight counting identity."""
    k = instance.k
    log_w = edge_log_weights(instance, theta)
    polys, _, vpolys = _component_polys(instance, log_w, k, variants=True)
    unit = np.full(k + 1, -np.inf)
    unit[0] = 0.0
    pre = [unit]
    for p in polys:
        pre.append(_logconv(pre[-1], p, k))
    suf = [unit]
    for p in reversed(polys):
        suf.append(_logconv(suf[-1], p, k))
    suf.reverse()
    log_c = float(pre[-1][k])
    if not np.isfinite(log_c):
        raise InfeasibleK("weighted count is zero")
    marg = np.zeros(instance.n)
    for ci, comp in enumerate(instance.components):
        others = _logconv(pre[ci], suf[ci + 1], k)
        vp = vpolys[ci]
        kc = vp.shape[1] - 1
        d = np.arange(kc + 1)
        terms = vp + others[k - d][None, :]
        zeroed = logsumexp(terms, axis=1)
        with np.errstate(invalid="ignore"):
            m = 1.0 - np.exp(zeroed - log_c)
        m = np.nan_to_num(m, nan=1.0)
        marg[comp.a_start:comp.a_stop] = m[: comp.n1]
        marg[instance.n1 + comp.b_start: instance.n1 + comp.b_stop] = m[comp.n1:]
    return log_c, np.clip(marg, 0.0, 1.0)


def flight_marginals(instance: FamsInstance, alpha=None, *, log_weights: bool = False) -> np.ndarray:
    if alpha is None:
        theta = np.zeros(instance.n)
    else:
        a = np.asarray(alpha, dtype=float)
        with np.errstate(divide="ignore"):
            theta = a if log_weights else np.log(a)
    return log_count_and_marginals(instance, theta)[1]


# --------------------------------------------------------------------------- #
# Sampling
# --------------------------------------------------------------------------- #


def _cum_rows(weights: list[np.ndarray], nexts: list[np.ndarray]):
    """Pack per-state log option weights into cumulative tables (positive options only)."""
    S = len(weights)
    keep = [np.isfinite(w) for w in weights]
    O = max([int(k.sum()) for k in keep] + [1])
    cum = np.full((S, O), 2.0)
    nxt = np.full((S, O), -1, dtype=np.int64)
    nopt = np.zeros(S, dtype=np.int64)
    for s, (w, n, kp) in enumerate(zip(weights, nexts, keep)):
        if not kp.any():
            continue
        w = w[kp]
        p = np.exp(w - w.max())
        c = np.cumsum(p) / p.sum()
        c[-1] = 1.0
        cum[s, : len(c)] = c
        nxt[s, : len(c)] = n[kp]
        nopt[s] = len(c)
    return cum, nxt, nopt


@dataclass(frozen=True, eq=False)
class ComponentChain:
    cum: np.ndarray
    nxt: np.ndarray
    nopt: np.ndarray
    shape: tuple[int, int, int]  # (n1c + 1, n2c + 1, kc + 1)


@dataclass(frozen=True, eq=False)
class FamsChain:
    alloc: tuple  # (cum, nxt, nopt) over states (component, remaining)
    components: tuple[ComponentChain, ...]
    log_count: float
    k: int


def _component_chain(dp: np.ndarray, logw: np.ndarray) -> ComponentChain:
    n1p, n2p, K = dp.shape
    S = n1p * n2p * K
    sid = lambda l, r, d: (l * n2p + r) * K + d  # noqa: E731
    weights: list = [np.full(0, -np.inf)] * S
    nexts: list = [np.zeros(0, dtype=np.int64)] * S
    for l in range(1, n1p):
        for r in range(1, n2p):
            opts = [(l, j) for j in range(1, r + 1) if np.isfinite(logw[l - 1, j - 1])]
            opts += [(i, r) for i in range(1, l) if np.isfinite(logw[i - 1, r - 1])]
            for d in range(1, K):
                if not np.isfinite(dp[l, r, d]):
                    continue
                w = [dp[l - 1, r - 1, d]] + [logw[i - 1, j - 1] + dp[i - 1, j - 1, d - 1] for i, j in opts]
                n = [sid(l - 1, r - 1, d)] + [sid(i - 1, j - 1, d - 1) for i, j in opts]
                weights[sid(l, r, d)] = np.array(w)
                nexts[sid(l, r, d)] = np.array(n, dtype=np.int64)
    cum, nxt, nopt = _cum_rows(weights, nexts)
    return ComponentChain(cum, nxt, nopt, (n1p, n2p, K))


def sampling_chain(instance: FamsInstance, theta: np.ndarray) -> FamsChain:
    k = instance.k
    log_w = edge_log_weights(instance, theta)
    polys, dps, _ = _component_polys(instance, log_w, k)
    mats = _component_logw(instance, log_w)
    unit = np.full(k + 1, -np.inf)
    unit[0] = 0.0
    pre = [unit]
    for p in polys:
        pre.append(_logconv(pre[-1], p, k))
    log_c = float(pre[-1][k])
    if not np.isfinite(log_c):
        raise InfeasibleK("weighted count is zero")
    C = len(polys)
    # allotment chain: state c*(k+1)+rem means components < c+1 still to allot ``rem``
    weights, nexts = [], []
    for c in range(C):
        for rem in range(k + 1):
            kc = len(polys[c]) - 1
            ds = np.arange(min(kc, rem) + 1)
            w = polys[c][ds] + pre[c][rem - ds]
            nxt = (c - 1) * (k + 1) + rem - ds if c > 0 else np.full(len(ds), C * (k + 1)) + rem - ds
            weights.append(w)
            nexts.append(np.asarray(nxt, dtype=np.int64))
    for rem in range(k + 1):  # terminal states record the leftover (always 0)
        weights.append(np.full(0, -np.inf))
        nexts.append(np.zeros(0, dtype=np.int64))
    alloc = _cum_rows(weights, nexts)
    comps = tuple(_component_chain(dp, m) for dp, m in zip(dps, mats))
    return FamsChain(alloc, comps, log_c, k)


def sample_matchings(instance: FamsInstance, theta: np.ndarray, rng: np.random.Generator, size: int,
                     chain: FamsChain | None = None) -> np.ndarray:
    """Draw ``size`` ordered ``k``-matchings; returns edges of shape ``(size, k, 2)``."""
    if chain is None:
        chain = sampling_chain(instance, theta)
    k, C = chain.k, len(instance.components)
    walk = _backend.walk_chains
    cum, nxt, nopt = chain.alloc
    start = np.full(size, (C - 1) * (k + 1) + k, dtype=np.int64)
    visited = walk(cum, nxt, nopt, start, rng.random((size, C)))
    rem = np.where(visited < C * (k + 1), visited % (k + 1), visited - C * (k + 1))
    # visited[:, s] is the state before allotting component C-1-s
    allot = rem[:, :-1] - rem[:, 1:]
    out = np.empty((size, k, 2), dtype=np.int64)
    fill = np.zeros(size, dtype=np.int64)
    for s in range(C):
        ci = C - 1 - s
        comp, cc = instance.components[ci], chain.components[ci]
        d = allot[:, s]
        n1p, n2p, K = cc.shape
        L = min(n1p, n2p)
        starts = ((n1p - 1) * n2p + (n2p - 1)) * K + d
        path = walk(cc.cum, cc.nxt, cc.nopt, starts, rng.random((size, L)))
        a, b = path[:, :-1], path[:, 1:]
        ok = b >= 0
        da = a % K
        db = b % K
        take = ok & (db == da - 1)
        rows, cols = np.nonzero(take)
        lr = b[rows, cols] // K
        i = lr // n2p + comp.a_start
        j = lr % n2p + comp.b_start
        # emitted top-down; place after any edges from later components
        order = np.lexsort((cols, rows))
        rows, i, j = rows[order], i[order], j[order]
        rank = np.arange(len(rows)) - np.searchsorted(rows, rows)
        pos = fill[rows] + rank
        out[rows, pos, 0] = i
        out[rows, pos, 1] = j
        fill += np.bincount(rows, minlength=size)
    # sort edges ascending within each sample
    order = np.argsort(out[:, :, 0], axis=1, kind="stable")
    return np.take_along_axis(out, order[:, :, None], axis=1)


def covered_matrix(instance: FamsInstance, matchings: np.ndarray) -> np.ndarray:
    M = matchings.shape[0]
    cov = np.zeros((M, instance.n), dtype=bool)
    rows = np.repeat(np.arange(M), matchings.shape[1])
    cov[rows, matchings[:, :, 0].reshape(-1)] = True
    cov[rows, instance.n1 + matchings[:, :, 1].reshape(-1)] = True
    return cov


def sample(instance: FamsInstance, alpha, rng: np.random.Generator, *, log_weights: bool = False) -> PureStrategy:
    a = np.asarray(alpha, dtype=float)
    with np.errstate(divide="ignore"):
        theta = a if log_weights else np.log(a)
    m = sample_matchings(instance, theta, rng, 1)[0]
    return fams_strategy(instance, map(tuple, m))


def realization_probability(instance: FamsInstance, theta: np.ndarray, matching: Sequence[tuple[int, int]],
                            chain: FamsChain | None = None) -> float:
    """Probability of ``matching`` under the backward-sampling chain (product of choice probabilities)."""
    if chain is None:
        chain = sampling_chain(instance, theta)
    k, C = chain.k, len(instance.components)
    edges = sorted((int(i), int(j)) for i, j in matching)
    per_comp = [[(i - c.a_start + 1, j - c.b_start + 1) for i, j in edges if c.a_start <= i < c.a_stop]
                for c in instance.components]

    def step_prob(cum, nxt, nopt, state, target):
        n = nopt[state]
        hits = np.flatnonzero(nxt[state, :n] == target)
        if hits.size == 0:
            return 0.0
        o = hits[0]
        return float(cum[state, o] - (cum[state, o - 1] if o > 0 else 0.0))

    prob = 1.0
    cum, nxt, nopt = chain.alloc
    rem = k
    for ci in range(C - 1, -1, -1):
        d = len(per_comp[ci])
        state = ci * (k + 1) + rem
        target = (ci - 1) * (k + 1) + rem - d if ci > 0 else C * (k + 1) + rem - d
        prob *= step_prob(cum, nxt, nopt, state, target)
        rem -= d
    for ci, cc in enumerate(chain.components):
        n1p, n2p, K = cc.shape
        sid = lambda l, r, d: (l * n2p + r) * K + d  # noqa: E731
        todo = sorted(per_comp[ci], reverse=True)
        l, r, d = n1p - 1, n2p - 1, len(todo)
        for i, j in todo:
            while not (i == l or j == r):
                prob *= step_prob(cc.cum, cc.nxt, cc.nopt, sid(l, r, d), sid(l - 1, r - 1, d))
                l, r = l - 1, r - 1
            prob *= step_prob(cc.cum, cc.nxt, cc.nopt, sid(l, r, d), sid(i - 1, j - 1, d - 1))
            l, r, d = i - 1, j - 1, d - 1
    return prob


# --------------------------------------------------------------------------- #
# Max-weight ordered k-matching (pricing oracle)
# --------------------------------------------------------------------------- #


def best_matching(instance: FamsInstance, weights) -> tuple[float, tuple]:
    """Ordered ``k``-matching maximizing the summed weight of covered flights.

    Ties resolve deterministically (see ``fams_max_dp``; components with
    equal gain keep the smaller allotment for later components).
    """
    k = instance.k
    wt = np.asarray(weights, dtype=float)
    tables, polys = [], []
    for c, kc in zip(instance.components, _kcap(instance, k)):
        w = np.full((c.n1, c.n2), -np.inf)
        for i, j in instance.edges:
            if c.a_start <= i < c.a_stop:
                w[i - c.a_start, j - c.b_start] = wt[i] + wt[instance.n1 + j]
        dp, arg = _backend.fams_max_dp(w, kc)
        tables.append((dp, arg))
        polys.append(dp[c.n1, c.n2])
    # max-plus allotment over components
    acc = [np.concatenate([[0.0], np.full(k, -np.inf)])]
    picks = []
    for p in polys:
        prev = acc[-1]
        new = np.full(k + 1, -np.inf)
        pick = np.zeros(k + 1, dtype=int)
        for rem in range(k + 1):
            for d in range(min(rem, len(p) - 1) + 1):
                v = prev[rem - d] + p[d]
                if v > new[rem]:
                    new[rem], pick[rem] = v, d
        acc.append(new)
        picks.append(pick)
    value = acc[-1][k]
    if not np.isfinite(value):
        raise InfeasibleK(f"no ordered matching of size {k}")
    edges = []
    rem = k
    for ci in range(len(polys) - 1, -1, -1):
        d = int(picks[ci][rem])
        rem -= d
        c = instance.components[ci]
        dp, arg = tables[ci]
        l, r = c.n1, c.n2
        while d > 0:
            cell = int(arg[l, r, d])
            if cell < 0:
                l, r = l - 1, r - 1
            else:
                i, j = divmod(cell, c.n2)
                edges.append((i + c.a_start, j + c.b_start))
                l, r, d = i, j, d - 1
    return float(value), tuple(sorted(edges))
