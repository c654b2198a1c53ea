from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from maxent_patrol.baseline import solve_no_leakage
from maxent_patrol.card import (
    Polytope,
    box_polytope,
    card_for,
    card_mixture,
    coverage_deviation,
    decompose,
    fams_polytope,
    grid_flow_point,
    lp_argmax,
    solve_lp,
)
from maxent_patrol.errors import Infeasible, NotInPolytope, Unbounded
from maxent_patrol.model import random_game

from polytopes import random_integer_polytope, random_polytope


def _check_decomposition(P, x, dec, atol=1e-8):
    assert len(dec) <= P.n + 1
    w = np.asarray(dec.weights, dtype=float)
    assert (w >= -1e-12).all()
    assert np.isclose(w.sum(), 1.0)
    np.testing.assert_allclose(dec.point(), x, atol=atol)
    for v in dec.vertices:
        v = np.asarray(v, dtype=float)
        assert P.contains(v, 1e-7)
        tight = P.b - P.A @ v <= 1e-7
        assert P.is_vertex(v, tight)


class TestSimplex:
    def test_small_lp(self):
        # max x + y s.t. x + 2y <= 4, 3x + y <= 6
        res = solve_lp([1, 1], [[1, 2], [3, 1]], [4, 6])
        np.testing.assert_allclose(res.x, [1.6, 1.2])
        assert np.isclose(res.value, 2.8)
        # strong duality
        assert np.isclose(res.y_ub @ [4, 6], res.value)

    def test_exact(self):
        res = solve_lp([1, 1], [[1, 2], [3, 1]], [4, 6], exact=True)
        assert list(res.x) == [Fraction(8, 5), Fraction(6, 5)]

    def test_equality_and_free(self):
        res = solve_lp([1, 0], [[0, -1]], [-2], [[1, 1]], [1], nonneg=[False, True])
        np.testing.assert_allclose(res.x, [-1, 2])

    def test_infeasible(self):
        with pytest.raises(Infeasible):
            solve_lp([1], [[1]], [-1])

    def test_unbounded(self):
        with pytest.raises(Unbounded):
            solve_lp([1, 0], [[0, 1]], [1])

    @given(st.integers(0, 10**6))
    def test_matches_scipy(self, seed):
        from scipy.optimize import linprog
        rng = np.random.default_rng(seed)
        P, _ = random_polytope(rng)
        c = rng.normal(size=P.n)
        res = solve_lp(c, P.A, P.b, P.M, P.c, nonneg=np.zeros(P.n, dtype=bool))
        ref = linprog(-c, A_ub=P.A, b_ub=P.b, A_eq=P.M if len(P.M) else None,
                      b_eq=P.c if len(P.c) else None, bounds=(None, None), method="highs")
        assert np.isclose(res.value, -ref.fun, atol=1e-7)

    def test_warm_start_same_answer(self):
        rng = np.random.default_rng(0)
        P, _ = random_polytope(rng, n=5, m=6)
        c = rng.normal(size=5)
        nn = np.zeros(5, dtype=bool)
        first = solve_lp(c, P.A, P.b, P.M, P.c, nn)
        again = solve_lp(c, P.A, P.b, P.M, P.c, nn, start_basis=first.basis)
        assert np.isclose(first.value, again.value)
        assert again.pivots <= first.pivots

    @pytest.mark.parametrize("seed", range(3))
    def test_degenerate_game_lp(self, seed):
        # zero right-hand sides on every inequality: a maximally degenerate start
        from scipy.optimize import linprog
        rng = np.random.default_rng(seed)
        m, a = 400, 40
        U = np.round(rng.uniform(-10, 10, size=(m, a)), 1)
        U[rng.random((m, a)) < 0.5] = 0.0
        c = np.r_[np.zeros(m), -1.0]
        A_ub = np.hstack([U.T, -np.ones((a, 1))])
        A_eq = np.r_[np.ones(m), 0.0][None, :]
        nonneg = np.r_[np.ones(m, dtype=bool), False]
        res = solve_lp(c, A_ub, np.zeros(a), A_eq, [1.0], nonneg, max_pivots=5000)
        ref = linprog(-c, A_ub=A_ub, b_ub=np.zeros(a), A_eq=A_eq, b_eq=[1.0],
                      bounds=[(0, None)] * m + [(None, None)], method="highs")
        assert np.isclose(res.value, -ref.fun, atol=1e-9)


class TestDecompose:
    def test_box_corner_weights(self):
        P = box_polytope([0, 0], [1, 1])
        dec = decompose(P, [0.25, 0.5], np.random.default_rng(0))
        _check_decomposition(P, [0.25, 0.5], dec)

    def test_vertex_input_is_itself(self):
        P = box_polytope([0, 0, 0], [1, 1, 1])
        dec = decompose(P, [1.0, 0.0, 1.0], np.random.default_rng(0))
        assert len(dec) == 1
        np.testing.assert_array_equal(dec.vertices[0], [1, 0, 1])

    def test_outside_point(self):
        with pytest.raises(NotInPolytope):
            decompose(box_polytope([0, 0], [1, 1]), [1.5, 0.5], np.random.default_rng(0))

    def test_wrong_shape(self):
        with pytest.raises(ValueError):
            decompose(box_polytope([0, 0], [1, 1]), [0.5], np.random.default_rng(0))

    @given(st.integers(0, 10**6))
    def test_random_polytopes(self, seed):
        rng = np.random.default_rng(seed)
        P, x = random_polytope(rng)
        _check_decomposition(P, x, decompose(P, x, rng))

    @given(st.integers(0, 10**6))
    @settings(max_examples=15)
    def test_exact_arithmetic(self, seed):
        rng = np.random.default_rng(seed)
        P, x = random_integer_polytope(rng)
        dec = decompose(P, x, rng, exact=True)
        assert sum(dec.weights) == 1
        assert all(w >= 0 for w in dec.weights)
        recon = [sum(w * v[j] for w, v in zip(dec.weights, dec.vertices)) for j in range(P.n)]
        assert recon == list(x)

    def test_same_seed_same_decomposition(self):
        P, x = random_polytope(np.random.default_rng(8), n=5)
        a = decompose(P, x, np.random.default_rng(1))
        b = decompose(P, x, np.random.default_rng(1))
        np.testing.assert_array_equal(a.vertices, b.vertices)

    def test_json_roundtrip(self):
        P, x = random_polytope(np.random.default_rng(3))
        Q = Polytope.from_json(P.to_json())
        np.testing.assert_array_equal(Q.A, P.A)
        assert Q.contains(x)

    def test_lp_argmax_box(self):
        v = lp_argmax(box_polytope([0, 0], [2, 3]), [1, -1])
        np.testing.assert_allclose(v, [2, 0])


class TestCardOnGames:
    def test_fams_polytope_vertices_decode(self):
        game, pay = random_game("fams", 0, n=30)
        cg = solve_no_leakage(game, pay)
        P, z, decode = card_for(game, cg.strategy)
        assert P is not None and len(z) == len(game.edges)
        assert np.isclose(z.sum(), game.k)
        mix = card_mixture(P, z, decode, np.random.default_rng(0), repeats=2)
        np.testing.assert_allclose(mix.marginals(game.n), cg.x, atol=1e-7)
        assert np.isclose(mix.probs.sum(), 1.0)

    def test_fams_polytope_rows(self, complete22):
        P = fams_polytope(complete22)
        assert P.n == 4 and P.zero_one

    def test_grid_flow_keeps_arc_flow(self):
        game, pay = random_game("grid", 1, N=4, T=3, k=2)
        cg = solve_no_leakage(game, pay)
        P, z, decode = card_for(game, cg.strategy)
        mix = card_mixture(P, z, decode, np.random.default_rng(0))
        for s in mix.strategies:
            for path in s.realization:
                for t in range(game.T - 1):
                    assert game.adjacency[t][path[t], path[t + 1]]
        # the mixture reproduces each patroller's arc flow exactly
        np.testing.assert_allclose(grid_flow_point(P, mix), z, atol=1e-7)

    def test_coverage_deviation(self):
        assert coverage_deviation([0.5, 0.5], [0.5, 0.2]) == pytest.approx(0.3)
        assert coverage_deviation([0.5], [0.9]) == 0.0


class TestSmallCases:
    def test_segment_halves(self):
        P = box_polytope([0.0], [1.0])
        for seed in range(10):
            dec = decompose(P, [0.5], np.random.default_rng(seed))
            assert sorted(float(v[0]) for v in dec.vertices) == [0.0, 1.0]
            np.testing.assert_allclose(dec.weights, 0.5)

    def test_zero_objective_still_vertex(self):
        P = box_polytope([0, 0], [1, 1])
        v = lp_argmax(P, [0.0, 0.0])
        assert set(v.tolist()) <= {0.0, 1.0}
        np.testing.assert_allclose(lp_argmax(P, [1, 1]), [1, 1])

    def test_flow_polytope_vertex_integral(self):
        from maxent_patrol.card import grid_flow_polytope
        from maxent_patrol.model import build_grid, full_moves
        P = grid_flow_polytope(build_grid(3, 3, full_moves(3, 3), 1))
        rng = np.random.default_rng(0)
        for _ in range(10):
            v = lp_argmax(P, rng.uniform(-1, 1, P.n))
            assert np.allclose(v, np.rint(v)) and P.contains(v)

    def test_three_cell_flow_has_several_decompositions(self):
        from maxent_patrol.card import card_sample, grid_decoder, grid_flow_polytope
        from maxent_patrol.model import build_grid, full_moves
        game = build_grid(2, 3, full_moves(2, 3), 1)
        P = grid_flow_polytope(game)
        z = np.r_[np.full(3, 1 / 3), np.full(9, 1 / 9)]
        seen = {card_sample(P, z, grid_decoder(P), np.random.default_rng(s)).covered for s in range(100)}
        assert len(seen) >= 2

    def test_vertex_gives_same_strategy(self, complete22):
        from maxent_patrol.card import card_sample, fams_decoder
        P = fams_polytope(complete22)
        z = np.array([1.0 if e in ((0, 0), (1, 1)) else 0.0 for e in complete22.edges])
        out = {card_sample(P, z, fams_decoder(complete22), np.random.default_rng(s)).covered for s in range(20)}
        assert out == {(0, 1, 2, 3)}

    def test_fams_sample_frequencies(self):
        game, pay = random_game("fams", 2, n=20)
        cg = solve_no_leakage(game, pay)
        P, z, decode = card_for(game, cg.strategy)
        rng = np.random.default_rng(0)
        # a draw picks a decomposition, then a vertex; pooling independent
        # decompositions gives the same law as fresh ones per draw
        mix = card_mixture(P, z, decode, rng, repeats=50)
        idx = rng.choice(len(mix.probs), size=10**5, p=mix.probs)
        freq = mix.indicator_matrix(game.n)[idx].mean(axis=0)
        np.testing.assert_allclose(freq, cg.x, atol=0.02)
