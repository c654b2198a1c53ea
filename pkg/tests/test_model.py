from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from maxent_patrol import count_fams
from maxent_patrol.errors import DisconnectedLayer, InfeasibleK, TooLarge
from maxent_patrol.model import (
    ExplicitStrategy,
    Payoffs,
    board_moves,
    build_fams,
    build_grid,
    enumerate_pure,
    figure1_demo,
    full_moves,
    instance_from_dict,
    instance_to_dict,
    load_instance,
    random_game,
    save_instance,
)

from conftest import random_small_fams, random_small_grid


class TestBuildGrid:
    def test_single_layer_needs_no_moves(self):
        g = build_grid(1, 4, [], 2)
        assert g.n == 4

    def test_king_moves_board(self):
        g = build_grid(3, 4, board_moves(3, 4), 2)
        assert g.n == 12
        assert g.adjacency.shape == (2, 4, 4)

    def test_empty_moves_is_disconnected(self):
        with pytest.raises(DisconnectedLayer):
            build_grid(2, 2, [], 1)

    def test_dead_end_is_disconnected(self):
        # layer 1 cell 0 has no continuation and nothing else reaches the end
        with pytest.raises(DisconnectedLayer):
            build_grid(3, 2, [(0, 0, 0), (1, 1, 1)], 1)

    def test_move_out_of_range(self):
        with pytest.raises(ValueError):
            build_grid(2, 2, [(0, 0, 5)], 1)

    def test_bad_sizes(self):
        with pytest.raises(ValueError):
            build_grid(0, 2, [], 1)


class TestBuildFams:
    def test_single_edge(self):
        inst = build_fams([{"arr": 10.0, "city": "X"}], [{"dep": 11.0, "city": "X"}], 0.5, 2.0, 1)
        assert inst.edges == ((0, 0),)

    def test_components_do_not_mix(self):
        A = [{"arr": 1.0, "city": "X"}, {"arr": 1.0, "city": "Y"}]
        B = [{"dep": 3.0, "city": "X"}, {"dep": 3.0, "city": "Y"}]
        inst = build_fams(A, B, 1.0, 5.0, 2)
        assert len(inst.components) == 2
        for i, j in inst.edges:
            assert inst.flights_A[i].city == inst.flights_B[j].city

    def test_inverted_window(self):
        with pytest.raises(ValueError):
            build_fams([{"arr": 0.0, "city": "X"}], [{"dep": 1.5, "city": "X"}], 2.0, 1.0, 1)

    def test_infeasible_k(self):
        with pytest.raises(InfeasibleK):
            build_fams([{"arr": 0.0, "city": "X"}], [{"dep": 1.5, "city": "X"}], 1.0, 2.0, 2)

    def test_sorted_within_components(self):
        rng = np.random.default_rng(0)
        inst = random_small_fams(rng, n_max=6)
        for c in inst.components:
            ta = [f.time for f in inst.flights_A[c.a_start:c.a_stop]]
            tb = [f.time for f in inst.flights_B[c.b_start:c.b_stop]]
            assert ta == sorted(ta) and tb == sorted(tb)

    def test_window_rule(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            inst = random_small_fams(rng)
            edges = set(inst.edges)
            for i, a in enumerate(inst.flights_A):
                for j, b in enumerate(inst.flights_B):
                    ok = a.city == b.city and inst.T1 <= b.time - a.time <= inst.T2
                    assert ((i, j) in edges) == ok


class TestEnumerate:
    def test_grid_pairs(self):
        pure = enumerate_pure(build_grid(1, 2, [], 2))
        assert len(pure) == 4
        assert {s.covered for s in pure} == {(0,), (1,), (0, 1)}

    def test_fams_complete_22(self, complete22):
        pure = enumerate_pure(complete22)
        assert [s.realization for s in pure] == [((0, 0), (1, 1))]

    def test_grid_paths(self):
        assert len(enumerate_pure(build_grid(2, 2, full_moves(2, 2), 1))) == 4

    def test_cap(self):
        with pytest.raises(TooLarge):
            enumerate_pure(build_grid(4, 4, full_moves(4, 4), 2), cap=1000)

    def test_deterministic_order(self):
        g = build_grid(2, 3, full_moves(2, 3), 2)
        assert [s.realization for s in enumerate_pure(g)] == [s.realization for s in enumerate_pure(g)]

    @given(st.integers(0, 10**6))
    def test_covered_sizes(self, seed):
        rng = np.random.default_rng(seed)
        g = random_small_grid(rng, N_max=3, T_max=3)
        for s in enumerate_pure(g):
            assert len(s.covered) <= g.k * g.T
            assert set(s.covered) == {g.target(t, c) for p in s.realization for t, c in enumerate(p)}
        f = random_small_fams(rng, n_max=4)
        for s in enumerate_pure(f):
            assert len(s.covered) == 2 * len(s.realization)

    @given(st.integers(0, 10**6))
    def test_fams_bijection(self, seed):
        inst = random_small_fams(np.random.default_rng(seed), n_max=5)
        pure = enumerate_pure(inst)
        assert len({s.covered for s in pure}) == len(pure)
        for s in pure:
            assert count_fams.is_ordered(s.realization)


class TestStrategies:
    def test_explicit_validates(self):
        g = build_grid(1, 2, [], 1)
        s = enumerate_pure(g)
        with pytest.raises(ValueError):
            ExplicitStrategy(tuple(s), np.array([0.5, 0.6]))
        mix = ExplicitStrategy(tuple(s), np.array([0.25, 0.75]))
        np.testing.assert_allclose(mix.marginals(2), [0.25, 0.75])
        assert mix.support_size == 2

    def test_merged_entropy(self):
        g = build_grid(1, 2, [], 2)
        pure = enumerate_pure(g)
        mix = ExplicitStrategy(tuple(pure), np.full(4, 0.25))
        merged = mix.merged()
        assert merged.support_size == 3
        assert np.isclose(mix.entropy(), -(2 * 0.25 * np.log(0.25) + 0.5 * np.log(0.5)))

    def test_payoff_order(self):
        with pytest.raises(ValueError):
            Payoffs([0], [1.0], [2.0])


class TestRandomGame:
    def test_deterministic(self):
        a, pa = random_game("grid", 1, N=9, T=9, k=2)
        b, pb = random_game("grid", 1, N=9, T=9, k=2)
        assert np.array_equal(a.adjacency, b.adjacency)
        assert np.array_equal(pa.u_unc, pb.u_unc) and np.array_equal(pa.u_cov, pb.u_cov)

    def test_fams_dts(self):
        inst, _ = random_game("fams", 7, n=60, dts=0.5)
        assert inst.k == 15 and inst.n == 60

    def test_utility_range(self):
        for seed in range(10):
            _, pay = random_game("fams", seed, n=20)
            assert (pay.u_unc > 0).all() and (pay.u_unc <= 10).all()
            assert (pay.u_cov < 0).all() and (pay.u_cov >= -10).all()

    def test_attack_layer_option(self):
        g, pay = random_game("grid", 0, N=4, T=3, k=1, attack="final")
        assert list(pay.attackable) == list(g.layer_targets(-1))
        g, pay = random_game("grid", 0, N=4, T=3, k=1)
        assert len(pay.attackable) == g.n

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            random_game("chess", 0)


class TestJson:
    def test_roundtrip(self, tmp_path):
        for kind, params in (("grid", {"N": 4, "T": 3, "k": 2}), ("fams", {"n": 20})):
            inst, pay = random_game(kind, 3, **params)
            path = tmp_path / f"{kind}.json"
            save_instance(path, inst, pay)
            back, pay2 = load_instance(path)
            assert instance_to_dict(back) == instance_to_dict(inst)
            assert np.allclose(pay2.u_unc, pay.u_unc)

    def test_spec_format(self):
        data = json.loads('{"kind": "grid", "T": 2, "N": 2, "k": 1, "moves": [[0, 0, 1], [0, 1, 0]]}')
        g = instance_from_dict(data)
        assert g.moves == [(0, 0, 1), (0, 1, 0)]


def test_figure1_demo_structure():
    game, strat, pay = figure1_demo()
    assert (game.T, game.N, game.k) == (3, 4, 2)
    assert len(strat.strategies) == 3
    assert np.isclose(strat.probs.sum(), 1.0)
