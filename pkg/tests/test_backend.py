from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, strategies as st

from maxent_patrol import _backend
from maxent_patrol.count_grid import sampling_chain

py_walk, py_log_dp, py_max_dp = _backend.get_kernels("python")
try:
    cy_walk, cy_log_dp, cy_max_dp = _backend.get_kernels("cython")
except ImportError:  # pragma: no cover - depends on the build
    cy_walk = None

needs_cython = pytest.mark.skipif(cy_walk is None, reason="compiled kernels not built")


def test_active_backend_named():
    assert _backend.BACKEND in ("cython", "python")
    assert _backend.get_kernels()[0] is _backend.walk_chains


def _random_weights(rng, n1, n2, density=0.6, V=1):
    w = rng.normal(size=(V, n1, n2))
    w[:, rng.random((n1, n2)) > density] = -np.inf
    return np.ascontiguousarray(w)


def test_python_log_dp_counts_ordered_matchings():
    # complete 3x3: C(3, d)^2 ordered matchings of size d
    dp = py_log_dp(np.zeros((1, 3, 3)), 3)
    np.testing.assert_allclose(np.exp(dp[0, 3, 3]), [1, 9, 9, 1])


@needs_cython
@given(st.integers(0, 10**6))
def test_log_dp_agrees(seed):
    rng = np.random.default_rng(seed)
    n1, n2 = rng.integers(1, 7, 2)
    w = _random_weights(rng, n1, n2, V=int(rng.integers(1, 4)))
    k = int(rng.integers(1, 4))
    np.testing.assert_allclose(cy_log_dp(w, k), py_log_dp(w, k), rtol=1e-12, atol=0)


@needs_cython
@given(st.integers(0, 10**6))
def test_max_dp_agrees(seed):
    rng = np.random.default_rng(seed)
    n1, n2 = rng.integers(1, 7, 2)
    w = _random_weights(rng, n1, n2)[0]
    # ties exercise the back-pointer preferences
    w[np.isfinite(w)] = np.round(w[np.isfinite(w)])
    k = int(rng.integers(1, 4))
    dp_c, arg_c = cy_max_dp(w, k)
    dp_p, arg_p = py_max_dp(w, k)
    np.testing.assert_array_equal(dp_c, dp_p)
    np.testing.assert_array_equal(arg_c, arg_p)


@needs_cython
@given(st.integers(0, 10**6))
def test_walk_agrees(seed):
    from maxent_patrol.model import random_game
    game, _ = random_game("grid", seed % 50, N=4, T=3, k=2)
    rng = np.random.default_rng(seed)
    chain = sampling_chain(game, rng.normal(size=game.n))
    u = rng.random((300, game.T))
    start = np.zeros(300, dtype=np.int64)
    a = cy_walk(chain.cum, chain.nxt, chain.nopt, start, u)
    b = py_walk(chain.cum, chain.nxt, chain.nopt, start, u)
    np.testing.assert_array_equal(a, b)


def test_walk_terminates_with_padding():
    cum = np.array([[0.5, 1.0], [1.0, 2.0], [2.0, 2.0]])
    nxt = np.array([[1, 2], [2, -1], [-1, -1]], dtype=np.int64)
    nopt = np.array([2, 1, 0], dtype=np.int64)
    u = np.array([[0.2, 0.3, 0.9], [0.7, 0.1, 0.1]])
    out = py_walk(cum, nxt, nopt, np.zeros(2, dtype=np.int64), u)
    np.testing.assert_array_equal(out, [[0, 1, 2, -1], [0, 2, -1, -1]])
    if cy_walk is not None:
        np.testing.assert_array_equal(cy_walk(cum, nxt, nopt, np.zeros(2, dtype=np.int64), u), out)
