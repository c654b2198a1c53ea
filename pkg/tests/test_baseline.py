from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from maxent_patrol.baseline import (
    LeakageModel,
    best_response_column,
    rigoropt_mini,
    solve_full_lp,
    solve_no_leakage,
)
from maxent_patrol.leakage import evaluate_model, no_leakage_utility
from maxent_patrol.model import Payoffs, enumerate_pure, random_payoffs

from conftest import random_small_fams, random_small_grid


def _tiny(seed):
    rng = np.random.default_rng(seed)
    inst = random_small_grid(rng, N_max=3, T_max=3) if seed % 2 else random_small_fams(rng)
    pay = random_payoffs(np.arange(inst.n), rng)
    return inst, pay


@given(st.integers(0, 10**6))
@settings(max_examples=25)
def test_column_generation_matches_full_lp(seed):
    inst, pay = _tiny(seed)
    cg = solve_no_leakage(inst, pay)
    _, value = solve_full_lp(inst, pay)
    assert np.isclose(cg.value, value, atol=1e-7)
    # the value is the attacker's best response to the marginals
    assert np.isclose(no_leakage_utility(cg.x, pay), cg.value, atol=1e-7)


@given(st.integers(0, 10**6))
@settings(max_examples=25)
def test_master_value_never_increases(seed):
    inst, pay = _tiny(seed)
    cg = solve_no_leakage(inst, pay)
    assert all(b <= a + 1e-9 for a, b in zip(cg.history, cg.history[1:]))
    assert np.isclose(cg.strategy.probs.sum(), 1.0)
    assert cg.strategy.support_size <= cg.columns


def test_best_response_column_rejects_negative(complete22):
    with pytest.raises(ValueError):
        best_response_column(complete22, [-1, 0, 0, 0])


def test_best_response_column_value(board_game):
    w = np.random.default_rng(1).random(board_game.n)
    gain, col = best_response_column(board_game, w)
    assert np.isclose(gain, w[list(col.covered)].sum())
    assert gain == pytest.approx(max(w[list(s.covered)].sum() for s in enumerate_pure(board_game, 10**6)))


class TestLeakageModel:
    def test_validation(self):
        with pytest.raises(ValueError):
            LeakageModel("probabilistic", (0, 1), (0.7, 0.7))
        with pytest.raises(ValueError):
            LeakageModel("psychic", (0,))
        assert LeakageModel.single(3).mu == (1.0,)

    @given(st.integers(0, 10**6))
    @settings(max_examples=20)
    def test_rigoropt_bounds(self, seed):
        inst, pay = _tiny(seed)
        cg = solve_no_leakage(inst, pay)
        k = int(np.random.default_rng(seed).integers(inst.n))
        model = LeakageModel.single(k)
        strat, value = rigoropt_mini(inst, pay, model)
        # leakage can only help the attacker, and the exact optimum beats the
        # leakage-blind optimum evaluated under leakage
        assert value >= cg.value - 1e-7
        assert value <= evaluate_model(cg.strategy, pay, model) + 1e-7
        assert np.isclose(evaluate_model(strat, pay, model), value, atol=1e-7)

    @given(st.integers(0, 10**6))
    @settings(max_examples=15)
    def test_adversarial_is_worst_case(self, seed):
        inst, pay = _tiny(seed)
        rng = np.random.default_rng(seed)
        cands = tuple(sorted(rng.choice(inst.n, size=min(2, inst.n), replace=False).tolist()))
        strat, value = rigoropt_mini(inst, pay, LeakageModel("adversarial", cands))
        assert np.isclose(evaluate_model(strat, pay, LeakageModel("adversarial", cands)), value, atol=1e-7)
        for k in cands:
            _, single = rigoropt_mini(inst, pay, LeakageModel.single(k))
            assert value >= single - 1e-7


def test_payoffs_restrict():
    pay = Payoffs([0, 2, 5], [1.0, 2.0, 3.0], [-1.0, -2.0, -3.0])
    sub = pay.restrict([5, 0])
    assert sorted(sub.attackable.tolist()) == [0, 5]


def test_single_attackable_target():
    from maxent_patrol.model import build_grid, full_moves
    game = build_grid(2, 3, full_moves(2, 3), 1)
    pay = Payoffs([4], [6.0], [-2.0])
    cg = solve_no_leakage(game, pay)
    assert cg.x[4] == pytest.approx(1.0)
    assert cg.value == pytest.approx(-2.0)


def test_symmetric_game_equalizes():
    from maxent_patrol.model import build_grid, full_moves
    game = build_grid(2, 3, full_moves(2, 3), 1)
    pay = Payoffs([3, 4, 5], [6.0] * 3, [-2.0] * 3)
    cg = solve_no_leakage(game, pay)
    u = pay.attacker_utilities(cg.x)
    np.testing.assert_allclose(u, u[0], atol=1e-9)


def test_equal_weights_max_coverage(board_game):
    gain, col = best_response_column(board_game, np.ones(board_game.n))
    assert gain == len(col.covered) == board_game.k * board_game.T


def test_concentrated_weight_is_covered(board_game):
    w = np.zeros(board_game.n)
    target = int(board_game.layer_targets(-1)[5])
    w[target] = 1.0
    _, col = best_response_column(board_game, w)
    assert target in col.covered


def test_uninformative_leak_equals_no_leakage(complete22):
    pay = Payoffs([0, 1, 2, 3], [3.0, 4.0, 5.0, 6.0], [-1.0] * 4)
    cg = solve_no_leakage(complete22, pay)
    _, value = rigoropt_mini(complete22, pay, LeakageModel.single(0))
    assert value == pytest.approx(cg.value, abs=1e-7)
