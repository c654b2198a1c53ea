"""Randomized Carathéodory decomposition (CARD) and the dense LP solver behind it.

A point ``x`` of a polytope ``P = {z : A z <= b, M z = c}`` is split as
``x = p1 v1 + p2 v2`` where ``v1`` maximizes a random objective over the
current face and ``v2`` is where the ray from ``v1`` through ``x`` leaves the
face.  ``v2`` lies on a strictly smaller face, so recursing on it ends at a
vertex after at most ``dim P`` rounds.

The LP solver is a dense two-phase tableau simplex.  It runs on floats or on
``Fraction`` object arrays; the latter gives exact decompositions for tests.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .errors import Infeasible, NonIntegralVertex, NotInPolytope, NumericalStall, Unbounded
from .model import ExplicitStrategy, FamsInstance, GridGame, PureStrategy, fams_strategy, grid_strategy

log = logging.getLogger(__name__)

TAU = 1e-9
FEAS_TOL = 1e-8


# --------------------------------------------------------------------------- #
# Dense two-phase simplex
# --------------------------------------------------------------------------- #


@dataclass
class LpResult:
    """Optimal basic solution of ``max c.x`` with duals for both row blocks."""

    x: np.ndarray
    value: float
    y_ub: np.ndarray
    y_eq: np.ndarray
    pivots: int = 0
    basis: np.ndarray | None = None


def _zeros(shape, exact: bool):
    if exact:
        out = np.empty(shape, dtype=object)
        out.fill(Fraction(0))
        return out
    return np.zeros(shape)


def _as_array(a, exact: bool):
    if exact:
        arr = np.asarray(a, dtype=object)
        return np.vectorize(Fraction, otypes=[object])(arr) if arr.size else _zeros(arr.shape, True)
    return np.asarray(a, dtype=float)


def _pivot(T: np.ndarray, r: int, c: int) -> None:
    T[r] = T[r] / T[r, c]
    col = T[:, c].copy()
    col[r] = 0
    nz = np.flatnonzero(col != 0)
    if nz.size:
        T[nz] -= np.outer(col[nz], T[r])


def _lex_leave(T, ties, col, binv):
    """Lexicographic tie-break: smallest row of ``[rhs, B^-1] / pivot``."""
    for j in binv:
        if len(ties) == 1:
            break
        vals = T[ties, j] / col[ties]
        lo = vals.min()
        ties = ties[np.asarray(vals <= lo + 1e-12 * (1 + abs(lo)) if not isinstance(lo, Fraction)
                               else vals == lo, dtype=bool)]
    return ties


def _run_simplex(T, basis, allowed, tol, max_pivots, binv, refresh=None, bland_after=1000,
                 refresh_every=50):
    """Maximize over tableau ``T``.

    The last row holds reduced costs ``c_j - c_B B^-1 A_j`` and, in its last
    cell, minus the objective value; columns ``binv`` hold ``B^-1``.  The
    entering column follows the steepest-edge rule in float mode and
    Dantzig's rule in exact mode.  Ratio ties go to the
    lexicographically smallest row of ``[rhs, B^-1] / pivot``, which rules out
    cycling; should the objective still stall for ``bland_after`` pivots,
    Bland's rule takes over.  Float mode prefers large pivots among
    near-minimal ratios (Harris) when the step is not degenerate, and
    ``refresh`` recomputes the tableau from the original data every
    ``refresh_every`` pivots.
    """
    m = T.shape[0] - 1
    pivots = 0
    stale = 0
    last = T[-1, -1]
    since = 0
    while True:
        rc = T[-1, :-1]
        cand = np.flatnonzero(allowed & (rc > tol).astype(bool))
        if cand.size == 0:
            if refresh is None or since == 0:
                return pivots
            refresh()
            since = 0
            continue
        bland = stale >= bland_after
        if bland:
            enter = int(cand[0])
        elif tol:
            # steepest edge: reduced cost per unit length of the edge direction
            norms = np.sqrt(1.0 + np.einsum("ij,ij->j", T[:m, cand], T[:m, cand]))
            enter = int(cand[np.argmax(rc[cand] / norms)])
        else:
            enter = int(cand[np.argmax(rc[cand])])
        col = T[:m, enter]
        # float mode never pivots on near-zero entries, which would leave B ill-conditioned
        rows = np.flatnonzero((col > (tol and max(tol, 1e-7))).astype(bool))
        if rows.size == 0:
            raise Unbounded("objective is unbounded on the feasible region")
        rhs = T[rows, -1]
        if tol:
            rhs = np.clip(rhs, 0.0, None)
        ratios = rhs / col[rows]
        lo = ratios.min()
        if bland:
            ties = rows[np.asarray(ratios == lo if tol == 0 else ratios <= lo + tol, dtype=bool)]
            leave = int(ties[np.argmin(basis[ties])])
        elif tol == 0 or lo <= tol:
            ties = rows[np.asarray(ratios == lo if tol == 0 else ratios <= lo + tol, dtype=bool)]
            leave = int(_lex_leave(T, ties, col, binv)[0])
        else:
            bound = ((rhs + tol) / col[rows]).min()
            ok = rows[ratios <= bound]
            piv = col[ok]
            ties = ok[piv >= piv.max() * (1 - 1e-12)]
            leave = int(ties[np.argmin(basis[ties])])
        _pivot(T, leave, enter)
        basis[leave] = enter
        if tol:
            np.clip(T[:m, -1], 0.0, None, out=T[:m, -1])
        pivots += 1
        since += 1
        if pivots > max_pivots:
            raise NumericalStall(f"simplex exceeded {max_pivots} pivots")
        # progress is measured against the best value so far: float round-off
        # can nudge the objective back and forth on a degenerate vertex
        moved = T[-1, -1] < last if tol == 0 else T[-1, -1] < last - tol * (1 + abs(last))
        stale = 0 if moved else stale + 1
        last = min(last, T[-1, -1])
        if refresh is not None and since >= refresh_every:
            refresh()
            since = 0


def solve_lp(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, nonneg=None, *, exact: bool = False,
             tol: float = 1e-9, max_pivots: int = 50000, start_basis=None) -> LpResult:
    """Maximize ``c @ x`` subject to ``A_ub x <= b_ub``, ``A_eq x = b_eq``.

    ``nonneg`` marks variables constrained to be ``>= 0`` (default: all); the
    rest are free and split into two nonnegative parts.  Returns a basic
    optimal solution with duals ``y_ub >= 0`` and ``y_eq``.

    Columns of the internal standard form are ordered ``x``, the negative
    parts of free variables, then one slack per ``A_ub`` row.  A feasible
    ``start_basis`` in that numbering (e.g. ``LpResult.basis`` of a related
    problem) skips phase 1; an unusable one is ignored.

    Raises:
        Infeasible: no feasible point.
        Unbounded: the objective is unbounded above.
    """
    if exact:
        tol = 0
    c = _as_array(c, exact)
    n = len(c)
    A_ub = _zeros((0, n), exact) if A_ub is None else _as_array(A_ub, exact).reshape(-1, n)
    b_ub = _zeros(0, exact) if b_ub is None else _as_array(b_ub, exact).reshape(-1)
    A_eq = _zeros((0, n), exact) if A_eq is None else _as_array(A_eq, exact).reshape(-1, n)
    b_eq = _zeros(0, exact) if b_eq is None else _as_array(b_eq, exact).reshape(-1)
    nonneg = np.ones(n, dtype=bool) if nonneg is None else np.asarray(nonneg, dtype=bool)
    free = np.flatnonzero(~nonneg)
    mu, me = A_ub.shape[0], A_eq.shape[0]
    m = mu + me

    # standard form columns: x (n), minus parts of free x, slacks (mu), artificials (m)
    nf = len(free)
    nv = n + nf + mu
    A = _zeros((m, nv + m), exact)
    A[:mu, :n] = A_ub
    A[mu:, :n] = A_eq
    if nf:
        A[:, n:n + nf] = -A[:, free]
    A[np.arange(mu), n + nf + np.arange(mu)] = 1
    rhs = np.concatenate([b_ub, b_eq]) if m else _zeros(0, exact)
    sign = np.where((rhs < 0).astype(bool), -1, 1)
    A = A * sign[:, None]
    rhs = rhs * sign
    A[np.arange(m), nv + np.arange(m)] = 1

    basis = np.array([n + nf + r if (r < mu and sign[r] > 0) else nv + r for r in range(m)], dtype=np.int64)
    allowed = np.r_[np.ones(nv, dtype=bool), np.zeros(m, dtype=bool)]
    binv = nv + np.arange(m)
    rows = np.arange(m)
    state = {"cost": None}

    def reduced_row(cost):
        cb = cost[basis]
        out = _zeros(nv + m + 1, exact)
        out[:-1] = cost - (cb @ T[:-1, :-1] if len(basis) else 0)
        out[-1] = -(cb @ T[:-1, -1]) if len(basis) else 0
        return out

    def refresh():
        B = A[rows][:, basis]
        T[:-1, :-1] = np.linalg.solve(B, A[rows])
        T[:-1, -1] = np.clip(np.linalg.solve(B, rhs[rows]), 0.0, None)
        T[-1] = reduced_row(state["cost"])

    T = _zeros((m + 1, nv + m + 1), exact)
    T[:m, :-1] = A
    T[:m, -1] = rhs
    pivots = 0
    if start_basis is not None and not exact and m:
        sb = np.asarray(start_basis, dtype=np.int64)
        if len(sb) == m and len(set(sb.tolist())) == m and (sb >= 0).all() and (sb < nv).all():
            B = A[:, sb]
            if np.linalg.cond(B) < 1e12:
                body = np.linalg.solve(B, np.concatenate([A, rhs[:, None]], axis=1))
                if (body[:, -1] >= -tol).all():
                    basis = sb.copy()
                    T[:m] = body
                    T[:m, -1] = np.clip(T[:m, -1], 0.0, None)
    if (basis >= nv).any():
        # phase 1: maximize minus the sum of artificials
        cost1 = _zeros(nv + m, exact)
        cost1[nv:] = -1
        state["cost"] = cost1
        T[-1] = reduced_row(cost1)
        pivots += _run_simplex(T, basis, allowed, tol, max_pivots, binv, None if exact else refresh)
        if T[-1, -1] > (tol * 1e3 if tol else 0):
            raise Infeasible(f"infeasible (phase-1 residual {float(T[-1, -1]):.3g})")
        # drive zero-level artificials out of the basis; rows left with none are redundant
        keep = np.ones(len(basis), dtype=bool)
        for r in range(len(basis)):
            if basis[r] >= nv:
                nz = np.flatnonzero((abs(T[r, :nv]) > tol * 1e3).astype(bool))
                if nz.size:
                    j = int(nz[np.argmax(abs(T[r, nz]).astype(float))])
                    _pivot(T, r, j)
                    basis[r] = j
                    pivots += 1
                else:
                    keep[r] = False
        if not keep.all():
            T = np.concatenate([T[:-1][keep], T[-1:]])
            basis = basis[keep]
            rows = rows[keep]

    cost = _zeros(nv + m, exact)
    cost[:n] = c
    if nf:
        cost[n:n + nf] = -c[free]
    state["cost"] = cost
    T[-1] = reduced_row(cost)
    pivots += _run_simplex(T, basis, allowed, tol, max_pivots, binv, None if exact else refresh)
    if not exact:
        refresh()

    mm = len(basis)
    sol = _zeros(nv + m, exact)
    sol[basis] = T[:mm, -1]
    x = sol[:n].copy()
    if nf:
        x[free] = x[free] - sol[n:n + nf]
    # duals of the sign-normalized rows: y' = c_B B^-1; redundant rows get 0
    y_std = _zeros(m, exact)
    if mm:
        if exact:
            y_std[rows] = cost[basis] @ T[:mm, nv + rows]
        else:
            y_std[rows] = np.linalg.solve(A[rows][:, basis].T, cost[basis])
    y = y_std * sign
    value = c @ x if n else 0
    return LpResult(x, value if exact else float(value), y[:mu], y[mu:], pivots, basis.copy())


def _rank(mat: np.ndarray, exact: bool) -> int:
    if mat.size == 0:
        return 0
    if not exact:
        return int(np.linalg.matrix_rank(mat.astype(float), tol=1e-9))
    R = mat.copy()
    rank, rows, cols = 0, R.shape[0], R.shape[1]
    for col in range(cols):
        piv = next((r for r in range(rank, rows) if R[r, col] != 0), None)
        if piv is None:
            continue
        R[[rank, piv]] = R[[piv, rank]]
        R[rank] = R[rank] / R[rank, col]
        for r in range(rows):
            if r != rank and R[r, col] != 0:
                R[r] = R[r] - R[r, col] * R[rank]
        rank += 1
        if rank == rows:
            break
    return rank


# --------------------------------------------------------------------------- #
# Polytopes
# --------------------------------------------------------------------------- #


@dataclass(frozen=True, eq=False)
class Polytope:
    """``{z : A z <= b, M z = c}``.

    Rows of ``A`` equal to ``-e_j`` with ``b = 0`` are recognized as sign
    bounds on ``z_j``.  ``zero_one`` declares the polytope a 0/1 polytope, so
    a point is a vertex exactly when it is integral.
    """

    A: np.ndarray
    b: np.ndarray
    M: np.ndarray
    c: np.ndarray
    zero_one: bool = False
    bound_var: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        n = A.shape[1]
        M = np.asarray(self.M, dtype=float).reshape(-1, n)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", np.asarray(self.b, dtype=float).reshape(-1))
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "c", np.asarray(self.c, dtype=float).reshape(-1))
        if len(self.b) != A.shape[0] or len(self.c) != M.shape[0]:
            raise ValueError("right-hand sides must match the constraint rows")
        bv = np.full(A.shape[0], -1, dtype=np.int64)
        single = (A != 0).sum(axis=1) == 1
        for r in np.flatnonzero(single & (self.b == 0)):
            j = int(np.flatnonzero(A[r])[0])
            if A[r, j] < 0:
                bv[r] = j
        object.__setattr__(self, "bound_var", bv)

    @property
    def n(self) -> int:
        return self.A.shape[1]

    def arrays(self, exact: bool):
        if not exact:
            return self.A, self.b, self.M, self.c
        return (_as_array(self.A, True), _as_array(self.b, True),
                _as_array(self.M, True), _as_array(self.c, True))

    def contains(self, z, tol: float = FEAS_TOL) -> bool:
        z = np.asarray(z, dtype=float)
        return bool((self.A @ z <= self.b + tol).all() and np.abs(self.M @ z - self.c).max(initial=0.0) <= tol)

    def _fixed(self, tight: np.ndarray) -> np.ndarray:
        fixed = np.zeros(self.n, dtype=bool)
        rows = tight & (self.bound_var >= 0)
        fixed[self.bound_var[rows]] = True
        return fixed

    def is_vertex(self, z, tight: np.ndarray, exact: bool = False) -> bool:
        if self.zero_one:
            if exact:
                return all(v == 0 or v == 1 for v in z)
            zf = np.asarray(z, dtype=float)
            return bool(np.all(np.minimum(np.abs(zf), np.abs(zf - 1)) <= 1e-9))
        A, _, M, _ = self.arrays(exact)
        fixed = self._fixed(tight)
        gen = tight & (self.bound_var < 0)
        rows = np.concatenate([M, A[gen]])[:, ~fixed]
        return int(fixed.sum()) + _rank(rows, exact) == self.n

    def face_argmax(self, objective, tight: np.ndarray, exact: bool = False) -> np.ndarray:
        """Basic optimal solution of ``max objective.z`` over the face where ``tight`` rows hold with equality."""
        A, b, M, c = self.arrays(exact)
        fixed = self._fixed(tight)
        F = ~fixed
        has_bound = np.zeros(self.n, dtype=bool)
        has_bound[self.bound_var[self.bound_var >= 0]] = True
        gen = self.bound_var < 0
        A_eq = np.concatenate([M, A[gen & tight]])[:, F]
        b_eq = np.concatenate([c, b[gen & tight]])
        res = solve_lp(_as_array(objective, exact)[F], A[gen & ~tight][:, F], b[gen & ~tight],
                       A_eq, b_eq, has_bound[F], exact=exact)
        z = _zeros(self.n, exact)
        z[F] = res.x
        return z

    def to_dict(self) -> dict:
        return {"A": self.A.tolist(), "b": self.b.tolist(), "M": self.M.tolist(),
                "c": self.c.tolist(), "zero_one": self.zero_one}

    @classmethod
    def from_dict(cls, data: dict) -> "Polytope":
        A = np.asarray(data["A"], dtype=float)
        M = np.asarray(data.get("M", []), dtype=float).reshape(-1, A.shape[1])
        return cls(A, data["b"], M, data.get("c", []), bool(data.get("zero_one", False)))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "Polytope":
        return cls.from_dict(json.loads(text))


def lp_argmax(polytope: Polytope, objective, *, exact: bool = False) -> np.ndarray:
    """A vertex of ``polytope`` maximizing ``objective``."""
    return polytope.face_argmax(objective, np.zeros(polytope.A.shape[0], dtype=bool), exact)


def box_polytope(lo, hi) -> Polytope:
    """Axis-aligned box ``lo <= z <= hi``."""
    lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
    n = len(lo)
    I = np.eye(n)
    return Polytope(np.vstack([I, -I]), np.concatenate([hi, -lo]), np.zeros((0, n)), np.zeros(0))


# --------------------------------------------------------------------------- #
# Decomposition
# --------------------------------------------------------------------------- #


@dataclass(frozen=True, eq=False)
class Decomposition:
    """``x = sum_i weights[i] * vertices[i]``."""

    vertices: np.ndarray
    weights: np.ndarray

    def __len__(self) -> int:
        return len(self.weights)

    def point(self) -> np.ndarray:
        return self.weights @ self.vertices

    def draw(self, rng: np.random.Generator) -> np.ndarray:
        w = np.asarray(self.weights, dtype=float)
        return self.vertices[rng.choice(len(w), p=w / w.sum())]


def decompose(polytope: Polytope, x, rng: np.random.Generator, *, exact: bool = False,
              tau: float = TAU, tol: float = FEAS_TOL) -> Decomposition:
    """Random convex decomposition of ``x`` into at most ``n + 1`` vertices.

    Each round maximizes a uniform objective from ``[-1, 1]^n`` over the
    minimal face containing the current point, takes the opposite exit point
    of the face, and continues from there.

    Raises:
        NotInPolytope: ``x`` violates a constraint by more than ``tol``.
        NumericalStall: no exit row is found although the point is not a vertex.
    """
    xf = np.asarray(x, dtype=float) if not exact else np.array([float(v) for v in x])
    if xf.shape != (polytope.n,):
        raise ValueError(f"x must have shape ({polytope.n},)")
    if not polytope.contains(xf, tol):
        raise NotInPolytope("point violates the polytope constraints")
    A, b, _, _ = polytope.arrays(exact)
    point = _as_array(x, exact).copy()
    one = Fraction(1) if exact else 1.0
    vertices, weights = [], []
    remaining = one
    for _ in range(polytope.n + 2):
        slack = b - A @ point
        tight = np.asarray(slack == 0 if exact else slack <= tol, dtype=bool)
        if polytope.is_vertex(point, tight, exact):
            vertices.append(point)
            weights.append(remaining)
            break
        a = rng.uniform(-1.0, 1.0, polytope.n)
        v1 = polytope.face_argmax(_as_array(a, exact), tight, exact)
        d = point - v1
        Ad = A @ d
        cand = np.flatnonzero(~tight & np.asarray(Ad > tau, dtype=bool))
        if cand.size == 0:
            raise NumericalStall("no exit row from the current face although the point is not a vertex")
        ratios = slack[cand] / Ad[cand]
        istar = int(cand[np.argmin(ratios)])  # first minimum: lowest row index
        t = ratios.min()
        v2 = point + t * d
        j = polytope.bound_var[istar]
        if j >= 0:
            v2[j] = 0
        vertices.append(v1)
        weights.append(remaining * t / (1 + t))
        remaining = remaining / (1 + t)
        point = v2
    else:
        raise NumericalStall("decomposition did not reach a vertex within n + 1 rounds")
    dtype = object if exact else float
    return Decomposition(np.array(vertices, dtype=dtype), np.array(weights, dtype=dtype))


def card_sample(polytope: Polytope, x, decode: Callable, rng: np.random.Generator, *,
                exact: bool = False) -> PureStrategy:
    """Decompose ``x`` with a fresh random objective, draw a vertex and decode it."""
    return decode(decompose(polytope, x, rng, exact=exact).draw(rng))


def card_mixture(polytope: Polytope, x, decode: Callable, rng: np.random.Generator,
                 repeats: int = 1) -> ExplicitStrategy:
    """Equal-weight mixture of ``repeats`` independent decompositions, decoded."""
    strategies, probs = [], []
    for _ in range(repeats):
        dec = decompose(polytope, x, rng)
        for v, w in zip(dec.vertices, dec.weights):
            strategies.append(decode(v))
            probs.append(float(w) / repeats)
    probs = np.array(probs)
    return ExplicitStrategy(tuple(strategies), probs / probs.sum())


def coverage_deviation(x, achieved) -> float:
    """Total coverage shortfall ``sum_v max(0, x_v - achieved_v)``."""
    return float(np.clip(np.asarray(x, dtype=float) - np.asarray(achieved, dtype=float), 0.0, None).sum())


def _check_integral(z) -> np.ndarray:
    zf = np.asarray(z, dtype=float)
    r = np.rint(zf)
    if np.abs(zf - r).max(initial=0.0) > 1e-6:
        raise NonIntegralVertex(f"vertex is not integral (max deviation {np.abs(zf - r).max():.3g})")
    return r.astype(np.int64)


# --------------------------------------------------------------------------- #
# FAMS: degree-constrained matching polytope
# --------------------------------------------------------------------------- #


def fams_polytope(instance: FamsInstance) -> Polytope:
    """Edge space: every flight in at most one chosen edge, exactly ``k`` edges."""
    E = len(instance.edges)
    rows = []
    for i in range(instance.n1):
        r = np.array([e[0] == i for e in instance.edges], dtype=float)
        if r.any():
            rows.append(r)
    for j in range(instance.n2):
        r = np.array([e[1] == j for e in instance.edges], dtype=float)
        if r.any():
            rows.append(r)
    deg = np.array(rows).reshape(-1, E)
    A = np.vstack([deg, -np.eye(E)])
    b = np.concatenate([np.ones(len(deg)), np.zeros(E)])
    return Polytope(A, b, np.ones((1, E)), [instance.k], zero_one=True)


def fams_point(instance: FamsInstance, strategy: ExplicitStrategy) -> np.ndarray:
    """Expected edge indicator of an explicit mixture of matchings."""
    index = {e: r for r, e in enumerate(instance.edges)}
    z = np.zeros(len(instance.edges))
    for s, p in zip(strategy.strategies, strategy.probs):
        for e in s.realization:
            z[index[tuple(e)]] += p
    return z


def fams_decoder(instance: FamsInstance) -> Callable:
    from .count_fams import canonicalize

    edges = np.array(instance.edges, dtype=np.int64).reshape(-1, 2)

    def decode(z) -> PureStrategy:
        chosen = edges[_check_integral(z) == 1]
        return fams_strategy(instance, canonicalize(instance, map(tuple, chosen)))

    return decode


# --------------------------------------------------------------------------- #
# Grid: product of per-patroller path-flow polytopes
# --------------------------------------------------------------------------- #


class PathFlowPolytope(Polytope):
    """``k`` independent unit flows through the time-expanded grid.

    Each patroller block holds ``N`` source arcs followed by one variable per
    move ``(t, i, j)`` in the game's move order.  Vertices are ordered tuples
    of paths, so face maximization is a longest-path recursion.
    """

    def __init__(self, game: GridGame):
        moves = np.array(game.moves, dtype=np.int64).reshape(-1, 3)
        N, T, k = game.N, game.T, game.k
        D = N + len(moves)
        M_block = []
        src = np.zeros(D)
        src[:N] = 1
        M_block.append(src)
        for t in range(T - 1):
            for i in range(N):
                row = np.zeros(D)
                if t == 0:
                    row[i] = 1
                else:
                    row[N + np.flatnonzero((moves[:, 0] == t - 1) & (moves[:, 2] == i))] = 1
                row[N + np.flatnonzero((moves[:, 0] == t) & (moves[:, 1] == i))] = -1
                M_block.append(row)
        M_block = np.array(M_block)
        n = k * D
        M = np.zeros((k * len(M_block), n))
        for p in range(k):
            M[p * len(M_block):(p + 1) * len(M_block), p * D:(p + 1) * D] = M_block
        c = np.tile(np.r_[1.0, np.zeros(len(M_block) - 1)], k)
        super().__init__(-np.eye(n), np.zeros(n), M, c, zero_one=True)
        object.__setattr__(self, "game", game)
        object.__setattr__(self, "moves", moves)
        object.__setattr__(self, "block", D)

    def face_argmax(self, objective, tight: np.ndarray, exact: bool = False) -> np.ndarray:
        game, moves, D = self.game, self.moves, self.block
        N, T = game.N, game.T
        a = np.array([float(v) for v in objective])
        allowed = ~self._fixed(tight)
        z = _zeros(self.n, exact)
        for p in range(game.k):
            w = np.where(allowed[p * D:(p + 1) * D], a[p * D:(p + 1) * D], -np.inf)
            best = np.zeros(N)
            choice = [None] * T
            for t in range(T - 2, -1, -1):
                idx = np.flatnonzero(moves[:, 0] == t)
                vals = w[N + idx] + best[moves[idx, 2]]
                nb = np.full(N, -np.inf)
                ch = np.full(N, -1)
                for i in range(N):
                    mine = np.flatnonzero(moves[idx, 1] == i)
                    if mine.size and np.isfinite(vals[mine]).any():
                        o = mine[np.argmax(vals[mine])]
                        nb[i], ch[i] = vals[o], idx[o]
                best, choice[t] = nb, ch
            start_vals = w[:N] + best
            if not np.isfinite(start_vals).any():
                raise Infeasible("face contains no path")
            i = int(np.argmax(start_vals))
            z[p * D + i] = 1
            for t in range(T - 1):
                e = int(choice[t][i])
                z[p * D + N + e] = 1
                i = int(moves[e, 2])
        return z

    def to_dict(self) -> dict:
        out = super().to_dict()
        out["zero_one"] = True
        return out


def grid_flow_polytope(game: GridGame) -> PathFlowPolytope:
    return PathFlowPolytope(game)


def grid_flow_point(polytope: PathFlowPolytope, strategy: ExplicitStrategy) -> np.ndarray:
    """Expected per-patroller arc usage of an explicit mixture of path tuples."""
    moves, D, N = polytope.moves, polytope.block, polytope.game.N
    index = {tuple(m): r for r, m in enumerate(moves.tolist())}
    z = np.zeros(polytope.n)
    for s, prob in zip(strategy.strategies, strategy.probs):
        for p, path in enumerate(s.realization):
            z[p * D + path[0]] += prob
            for t in range(len(path) - 1):
                z[p * D + N + index[(t, path[t], path[t + 1])]] += prob
    return z


def grid_decoder(polytope: PathFlowPolytope) -> Callable:
    game, moves, D, N = polytope.game, polytope.moves, polytope.block, polytope.game.N

    def decode(z) -> PureStrategy:
        zi = _check_integral(z)
        paths = []
        for p in range(game.k):
            blk = zi[p * D:(p + 1) * D]
            starts = np.flatnonzero(blk[:N] == 1)
            if len(starts) != 1:
                raise NonIntegralVertex("vertex does not route exactly one unit per patroller")
            path = [int(starts[0])]
            for t in range(game.T - 1):
                nxt = np.flatnonzero((blk[N:] == 1) & (moves[:, 0] == t) & (moves[:, 1] == path[-1]))
                if len(nxt) != 1:
                    raise NonIntegralVertex("vertex flow is not a path")
                path.append(int(moves[nxt[0], 2]))
            paths.append(path)
        return grid_strategy(game, paths)

    return decode


def card_for(instance, strategy: ExplicitStrategy):
    """``(polytope, point, decoder)`` implementing ``strategy``'s marginals in realization space."""
    if isinstance(instance, GridGame):
        P = grid_flow_polytope(instance)
        return P, grid_flow_point(P, strategy), grid_decoder(P)
    P = fams_polytope(instance)
    return P, fams_point(instance, strategy), fams_decoder(instance)
