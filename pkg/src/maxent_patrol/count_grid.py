"""Weighted counting, marginals and exact sampling over grid patrol strategies.

Realizations are ordered ``k``-tuples of feasible paths.  The forward table
holds, for every layer ``t`` and patroller-position tuple ``s``, the total
weight of truncated tuples ending in ``s``; a tuple whose patrollers share a
cell multiplies that cell's weight once.  Transitions between position tuples
are the componentwise product of single-patroller moves, so the table is
propagated by contracting each tuple axis with the layer adjacency.

Float mode works with log-weights ``theta`` (``-inf`` for a zero weight) and
rescales each layer; exact mode runs the same recursion on ``Fraction``
objects.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

import numpy as np

from . import _backend
from .errors import NoFeasiblePath
from .model import GridGame, PureStrategy, grid_strategy

MAX_K = 3


@lru_cache(maxsize=32)
def _tuple_structure(N: int, k: int):
    """Position tuples in C order and their distinct-cell incidence matrix."""
    states = np.array(list(itertools.product(range(N), repeat=k)), dtype=np.int64).reshape(-1, k)
    D = np.zeros((len(states), N), dtype=bool)
    for m in range(k):
        D[np.arange(len(states)), states[:, m]] = True
    states.setflags(write=False)
    D.setflags(write=False)
    return states, D


def _check_k(game: GridGame):
    if game.k > MAX_K:
        raise ValueError(f"k={game.k} exceeds the supported maximum of {MAX_K} patrollers")


def _propagate(f: np.ndarray, adj: np.ndarray, k: int, N: int, forward: bool) -> np.ndarray:
    """Apply the tuple transition to a flat table.

    forward: ``g(s) = sum_{s'} K(s', s) f(s')``; backward: ``g(s) = sum_{s''} K(s, s'') f(s'')``.
    """
    g = f.reshape((N,) * k)
    axis = 0 if forward else 1
    for _ in range(k):
        g = np.tensordot(g, adj, axes=([0], [axis]))
    return g.reshape(-1)


def _as_theta(game: GridGame, weights, log: bool) -> np.ndarray:
    w = np.asarray(weights, dtype=float).reshape(game.T, game.N)
    if log:
        return w
    if (w < 0).any():
        raise ValueError("weights must be nonnegative")
    with np.errstate(divide="ignore"):
        return np.log(w)


def _layer_logw(D: np.ndarray, theta_t: np.ndarray) -> np.ndarray:
    finite = np.isfinite(theta_t)
    logw = D @ np.where(finite, theta_t, 0.0)
    if not finite.all():
        logw[(D & ~finite).any(axis=1)] = -np.inf
    return logw


@dataclass
class _Forward:
    f: list  # scaled forward tables, each (NS,)
    logscale: np.ndarray  # true f_t = f[t] * exp(logscale[t])
    logw: list  # per-layer log state weights
    log_count: float


def _forward(game: GridGame, theta: np.ndarray) -> _Forward:
    _check_k(game)
    N, k = game.N, game.k
    _, D = _tuple_structure(N, k)
    adjs = [a.astype(float) for a in game.adjacency]
    f_list, logw_list = [], []
    logscale = np.full(game.T, -np.inf)
    prev = None
    for t in range(game.T):
        logw = _layer_logw(D, theta[t])
        logw_list.append(logw)
        top = logw.max()
        if not np.isfinite(top):
            return _Forward(f_list, logscale, logw_list, -np.inf)
        w = np.exp(logw - top)
        if prev is None:
            h = w
            base = top
        else:
            h = w * _propagate(prev, adjs[t - 1], k, N, forward=True)
            base = logscale[t - 1] + top
        z = h.max()
        if z <= 0.0:
            return _Forward(f_list, logscale, logw_list, -np.inf)
        h = h / z
        logscale[t] = base + np.log(z)
        f_list.append(h)
        prev = h
    return _Forward(f_list, logscale, logw_list, float(logscale[-1] + np.log(f_list[-1].sum())))


def _exact_count(game: GridGame, alpha) -> Fraction:
    _check_k(game)
    N, k = game.N, game.k
    states, _ = _tuple_structure(N, k)
    a = [[Fraction(v) for v in row] for row in np.asarray(alpha, dtype=object).reshape(game.T, N)]
    adjs = [a_t.astype(int).astype(object) for a_t in game.adjacency]
    f = None
    for t in range(game.T):
        w = np.empty(len(states), dtype=object)
        for idx, s in enumerate(states):
            prod = Fraction(1)
            for c in set(s.tolist()):
                prod *= a[t][c]
            w[idx] = prod
        f = w if f is None else w * _propagate(f, adjs[t - 1], k, N, forward=True)
    return Fraction(sum(f, Fraction(0)))


def count(game: GridGame, alpha=None, *, log_weights: bool = False, exact: bool = False):
    """Weighted count of ordered path tuples.

    Returns ``log C(alpha)`` (float, ``-inf`` when zero) or, with ``exact=True``,
    ``C(alpha)`` as a ``Fraction`` (``alpha`` entries may be ints/Fractions).
    ``log_weights=True`` interprets ``alpha`` as log-weights.
    """
    if alpha is None:
        alpha = np.zeros((game.T, game.N)) if log_weights else np.ones((game.T, game.N))
    if exact:
        if log_weights:
            raise ValueError("exact mode needs linear weights")
        return _exact_count(game, alpha)
    return _forward(game, _as_theta(game, alpha, log_weights)).log_count


def check_feasible(game: GridGame) -> None:
    if not np.isfinite(count(game)):
        raise NoFeasiblePath("no ordered tuple of feasible paths exists")


def _layer_posteriors(game: GridGame, theta: np.ndarray) -> tuple[float, list]:
    fw = _forward(game, theta)
    if not np.isfinite(fw.log_count):
        raise NoFeasiblePath("weighted count is zero")
    N, k = game.N, game.k
    adjs = [a.astype(float) for a in game.adjacency]
    posts = [None] * game.T
    b = np.ones_like(fw.f[-1])
    for t in range(game.T - 1, -1, -1):
        p = fw.f[t] * b
        posts[t] = p / p.sum()
        if t > 0:
            logw = fw.logw[t]
            w = np.exp(logw - logw.max())
            b = _propagate(w * b, adjs[t - 1], k, N, forward=False)
            b = b / b.max()
    return fw.log_count, posts


def log_count_and_marginals(game: GridGame, theta: np.ndarray) -> tuple[float, np.ndarray]:
    """One forward-backward pass: ``(log C, per-target coverage probabilities)``."""
    theta = np.asarray(theta, dtype=float).reshape(game.T, game.N)
    log_c, posts = _layer_posteriors(game, theta)
    _, D = _tuple_structure(game.N, game.k)
    marg = np.stack([p @ D for p in posts]).reshape(-1)
    return log_c, np.clip(marg, 0.0, 1.0)


def node_marginals(game: GridGame, alpha, *, log_weights: bool = False) -> np.ndarray:
    """``Pr[v covered]`` under ``p ∝ alpha_S`` over ordered path tuples."""
    return log_count_and_marginals(game, _as_theta(game, alpha, log_weights))[1]


# --------------------------------------------------------------------------- #
# Sampling
# --------------------------------------------------------------------------- #


@dataclass(frozen=True, eq=False)
class SamplingChain:
    """Backward-sampling chain: root -> final tuple -> ... -> first-layer tuple.

    State ``0`` is the root; state ``1 + t * NS + s`` is tuple ``s`` at layer ``t``.
    """

    cum: np.ndarray
    nxt: np.ndarray
    nopt: np.ndarray
    NS: int
    log_count: float


def _option_rows(P: np.ndarray):
    """Per-row positive entries of ``P`` (in column order) as cumulative tables."""
    mask = P > 0
    counts = mask.sum(axis=1)
    O = max(int(counts.max()), 1)
    order = np.argsort(~mask, axis=1, kind="stable")[:, :O]
    vals = np.take_along_axis(P, order, axis=1)
    valid = np.arange(O)[None, :] < counts[:, None]
    vals = np.where(valid, vals, 0.0)
    tot = vals.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        cum = np.cumsum(vals, axis=1) / tot
    cum = np.where(valid, cum, 2.0)
    rows = np.flatnonzero(counts > 0)
    cum[rows, counts[rows] - 1] = 1.0
    return cum, order, counts


def sampling_chain(game: GridGame, theta: np.ndarray) -> SamplingChain:
    theta = np.asarray(theta, dtype=float).reshape(game.T, game.N)
    fw = _forward(game, theta)
    if not np.isfinite(fw.log_count):
        raise NoFeasiblePath("weighted count is zero")
    N, k, T = game.N, game.k, game.T
    NS = N**k
    blocks = []
    # root: choose the final-layer tuple proportional to the forward table
    blocks.append((fw.f[-1][None, :], np.array([0]), 1 + (T - 1) * NS))
    for t in range(T - 1, 0, -1):
        K = game.adjacency[t - 1].astype(float)
        for _ in range(k - 1):
            K = np.kron(K, game.adjacency[t - 1].astype(float))
        P = (fw.f[t - 1][:, None] * K).T  # rows: current tuple, cols: predecessor
        blocks.append((P, 1 + t * NS + np.arange(NS), 1 + (t - 1) * NS))
    O = max(max(int((P > 0).sum(axis=1).max()), 1) for P, _, _ in blocks)
    S = 1 + T * NS
    cum = np.full((S, O), 2.0)
    nxt = np.full((S, O), -1, dtype=np.int64)
    nopt = np.zeros(S, dtype=np.int64)
    for P, rows, offset in blocks:
        c, order, counts = _option_rows(P)
        w = c.shape[1]
        cum[rows, :w] = c
        nxt[rows, :w] = np.where(c <= 1.0, order + offset, -1)
        nopt[rows] = counts
    return SamplingChain(cum, nxt, nopt, NS, fw.log_count)


def _decode_states(game: GridGame, chain: SamplingChain, visited: np.ndarray) -> np.ndarray:
    """Visited chain states -> paths array of shape ``(M, k, T)``."""
    states, _ = _tuple_structure(game.N, game.k)
    tuples = visited[:, 1:] - 1  # layer T-1 down to 0
    local = tuples - (np.arange(game.T - 1, -1, -1) * chain.NS)[None, :]
    cells = states[local[:, ::-1]]  # (M, T, k)
    return np.ascontiguousarray(cells.transpose(0, 2, 1))


def sample_paths(game: GridGame, theta: np.ndarray, rng: np.random.Generator, size: int,
                 chain: SamplingChain | None = None) -> np.ndarray:
    """Draw ``size`` ordered path tuples; returns cells with shape ``(size, k, T)``."""
    if chain is None:
        chain = sampling_chain(game, theta)
    u = rng.random((size, game.T))
    walk = _backend.walk_chains
    visited = walk(chain.cum, chain.nxt, chain.nopt, np.zeros(size, dtype=np.int64), u)
    return _decode_states(game, chain, visited)


def covered_matrix(game: GridGame, paths: np.ndarray) -> np.ndarray:
    """Boolean ``(M, n)`` coverage indicators for an ``(M, k, T)`` paths array."""
    M = paths.shape[0]
    cov = np.zeros((M, game.n), dtype=bool)
    targets = paths + (np.arange(game.T) * game.N)[None, None, :]
    rows = np.repeat(np.arange(M), game.k * game.T)
    cov[rows, targets.reshape(-1)] = True
    return cov


def sample(game: GridGame, alpha, rng: np.random.Generator, *, log_weights: bool = False) -> PureStrategy:
    """One exact draw with probability ``alpha_S' / C(alpha)``."""
    paths = sample_paths(game, _as_theta(game, alpha, log_weights), rng, 1)[0]
    return grid_strategy(game, paths)


def realization_probability(game: GridGame, alpha, paths: Sequence[Sequence[int]], *,
                            log_weights: bool = False, chain: SamplingChain | None = None) -> float:
    """Probability that the backward-sampling chain emits ``paths``.

    Computed as the product of the chain's per-step choice probabilities.
    """
    if chain is None:
        chain = sampling_chain(game, _as_theta(game, alpha, log_weights))
    N, k, T = game.N, game.k, game.T
    cells = np.asarray(paths, dtype=np.int64).reshape(k, T)
    tuple_ids = [int(np.ravel_multi_index(tuple(cells[:, t]), (N,) * k)) for t in range(T)]
    targets = [1 + t * chain.NS + tuple_ids[t] for t in range(T - 1, -1, -1)]
    prob = 1.0
    state = 0
    for target in targets:
        n = chain.nopt[state]
        hits = np.flatnonzero(chain.nxt[state, :n] == target)
        if hits.size == 0:
            return 0.0
        o = hits[0]
        lo = chain.cum[state, o - 1] if o > 0 else 0.0
        prob *= chain.cum[state, o] - lo
        state = target
    return float(prob)


# --------------------------------------------------------------------------- #
# Max-weight tuple (pricing oracle)
# --------------------------------------------------------------------------- #


def best_tuple(game: GridGame, weights) -> tuple[float, np.ndarray]:
    """Ordered path tuple maximizing the summed weight of its distinct covered nodes.

    Ties resolve to the lexicographically smallest tuple indices.  Returns
    ``(value, paths)`` with paths of shape ``(k, T)``.
    """
    _check_k(game)
    N, k, T = game.N, game.k, game.T
    states, D = _tuple_structure(N, k)
    w = np.asarray(weights, dtype=float).reshape(T, N)
    F = D @ w[0]
    back = []
    for t in range(1, T):
        K = game.adjacency[t - 1]
        Kt = K
        for _ in range(k - 1):
            Kt = np.kron(Kt, K)
        cand = np.where(Kt.astype(bool), F[:, None], -np.inf)  # (prev, cur)
        arg = np.argmax(cand, axis=0)
        best = cand[arg, np.arange(len(arg))]
        back.append(arg)
        F = best + D @ w[t]
    s = int(np.argmax(F))
    value = float(F[s])
    if not np.isfinite(value):
        raise NoFeasiblePath("no feasible path tuple")
    seq = [s]
    for arg in reversed(back):
        s = int(arg[s])
        seq.append(s)
    seq.reverse()
    paths = states[np.array(seq)].T.copy()
    return value, paths
