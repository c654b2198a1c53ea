from __future__ import annotations

import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from maxent_patrol.model import build_fams, build_grid, board_moves, full_moves

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.register_profile("ci", deadline=None, max_examples=100, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def random_small_grid(rng: np.random.Generator, N_max=4, T_max=4, k_max=2, density=0.6):
    """Random grid game, retrying until every layer keeps a feasible path."""
    while True:
        N = int(rng.integers(1, N_max + 1))
        T = int(rng.integers(1, T_max + 1))
        k = int(rng.integers(1, k_max + 1))
        moves = [(t, i, j) for t, i, j in full_moves(T, N) if rng.random() < density]
        try:
            return build_grid(T, N, moves, k)
        except ValueError:
            continue


def random_small_fams(rng: np.random.Generator, n_max=6, k_max=3, cities=2):
    """Random window graph with at most ``n_max`` flights per side."""
    while True:
        n1 = int(rng.integers(1, n_max + 1))
        n2 = int(rng.integers(1, n_max + 1))
        k = int(rng.integers(1, k_max + 1))
        A = [{"arr": float(rng.uniform(0, 10)), "city": f"C{rng.integers(cities)}"} for _ in range(n1)]
        B = [{"dep": float(rng.uniform(0, 14)), "city": f"C{rng.integers(cities)}"} for _ in range(n2)]
        try:
            return build_fams(A, B, 0.5, 5.0, k)
        except ValueError:
            continue


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def complete22():
    A = [{"arr": 0.0, "city": "X"}, {"arr": 1.0, "city": "X"}]
    B = [{"dep": 5.0, "city": "X"}, {"dep": 6.0, "city": "X"}]
    return build_fams(A, B, 1.0, 12.0, 2)


@pytest.fixture
def board_game():
    return build_grid(3, 9, board_moves(3, 9), 2)
