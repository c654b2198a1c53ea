"""Game instances, pure and mixed strategies, payoffs and brute-force enumeration.

Target numbering
----------------
Grid games number node ``v_{t,i}`` (0-based layer ``t``, cell ``i``) as
``t * N + i``.  FAMS instances number outbound flights ``0 .. n1-1`` and return
flights ``n1 .. n1+n2-1``, both in the instance's canonical order (cities
sorted by name, then flights sorted by arrival / departure time inside a city).
"""
from __future__ import annotations

import itertools
import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence, Union

import numpy as np

from .errors import DisconnectedLayer, InfeasibleK, TooLarge

DEFAULT_ENUM_CAP = 10**7


# --------------------------------------------------------------------------- #
# Instances
# --------------------------------------------------------------------------- #


@dataclass(frozen=True, eq=False)
class GridGame:
    """Layered ``T x N`` patrol graph with ``k`` homogeneous patrollers.

    ``adjacency[t, i, j]`` is True when a patroller at cell ``i`` in layer ``t``
    may move to cell ``j`` in layer ``t + 1``.
    """

    T: int
    N: int
    k: int
    adjacency: np.ndarray

    kind = "grid"

    @property
    def n(self) -> int:
        return self.T * self.N

    @property
    def num_layers(self) -> int:
        return self.T

    def target(self, t: int, i: int) -> int:
        return t * self.N + i

    def node(self, target: int) -> tuple[int, int]:
        return divmod(int(target), self.N)

    def layer_targets(self, t: int) -> np.ndarray:
        if t < 0:
            t += self.T
        return np.arange(t * self.N, (t + 1) * self.N)

    def target_layer(self, target: int) -> int:
        return int(target) // self.N

    @property
    def moves(self) -> list[tuple[int, int, int]]:
        return [tuple(int(v) for v in m) for m in np.argwhere(self.adjacency)]

    def path_count(self) -> int:
        """Number of feasible single-patroller paths (exact integer)."""
        f = [1] * self.N
        for t in range(self.T - 1):
            adj = self.adjacency[t]
            f = [sum(f[i] for i in range(self.N) if adj[i, j]) for j in range(self.N)]
        return sum(f)


@dataclass(frozen=True)
class Flight:
    time: float
    city: str


@dataclass(frozen=True)
class Component:
    """One city's isolated bipartite block: contiguous index ranges in A and B."""

    city: str
    a_start: int
    a_stop: int
    b_start: int
    b_stop: int

    @property
    def n1(self) -> int:
        return self.a_stop - self.a_start

    @property
    def n2(self) -> int:
        return self.b_stop - self.b_start


@dataclass(frozen=True, eq=False)
class FamsInstance:
    """Round-trip flight graph; flights are stored in canonical sorted order."""

    flights_A: tuple[Flight, ...]
    flights_B: tuple[Flight, ...]
    T1: float
    T2: float
    k: int
    edges: tuple[tuple[int, int], ...]
    components: tuple[Component, ...]

    kind = "fams"

    @property
    def n1(self) -> int:
        return len(self.flights_A)

    @property
    def n2(self) -> int:
        return len(self.flights_B)

    @property
    def n(self) -> int:
        return self.n1 + self.n2

    @property
    def num_layers(self) -> int:
        return 2

    def layer_targets(self, t: int) -> np.ndarray:
        if t < 0:
            t += 2
        if t == 0:
            return np.arange(self.n1)
        return np.arange(self.n1, self.n)

    def target_layer(self, target: int) -> int:
        return 0 if target < self.n1 else 1

    def edge_targets(self, edge: tuple[int, int]) -> tuple[int, int]:
        i, j = edge
        return i, self.n1 + j

    def component_of_a(self, i: int) -> int:
        for c, comp in enumerate(self.components):
            if comp.a_start <= i < comp.a_stop:
                return c
        raise IndexError(i)


Instance = Union[GridGame, FamsInstance]


def build_grid(T: int, N: int, moves: Iterable[Sequence[int]], k: int) -> GridGame:
    """Validate and build a grid game from ``(t, i, j)`` move triples."""
    if T < 1 or N < 1 or k < 1:
        raise ValueError(f"T, N and k must be >= 1, got T={T}, N={N}, k={k}")
    adjacency = np.zeros((max(T - 1, 0), N, N), dtype=bool)
    for move in moves:
        t, i, j = (int(v) for v in move)
        if not (0 <= t < T - 1 and 0 <= i < N and 0 <= j < N):
            raise ValueError(f"move {tuple(move)} references a cell outside the T={T}, N={N} grid")
        adjacency[t, i, j] = True
    for t in range(T - 1):
        if not adjacency[t].any():
            raise DisconnectedLayer(f"layer {t} has no feasible continuation into layer {t + 1}")
    adjacency.setflags(write=False)
    game = GridGame(T=T, N=N, k=k, adjacency=adjacency)
    if game.path_count() == 0:
        raise DisconnectedLayer("no patrol path reaches the final layer")
    return game


def full_moves(T: int, N: int) -> list[tuple[int, int, int]]:
    return [(t, i, j) for t in range(T - 1) for i in range(N) for j in range(N)]


def board_moves(T: int, N: int, width: int | None = None) -> list[tuple[int, int, int]]:
    """King moves (including staying put) on a ``width``-wide board of ``N`` cells."""
    if width is None:
        width = math.ceil(math.sqrt(N))
    moves = []
    for t in range(T - 1):
        for i in range(N):
            ri, ci = divmod(i, width)
            for j in range(N):
                rj, cj = divmod(j, width)
                if max(abs(ri - rj), abs(ci - cj)) <= 1:
                    moves.append((t, i, j))
    return moves


def _max_matching(n1: int, n2: int, edges: Sequence[tuple[int, int]]) -> int:
    adj: dict[int, list[int]] = defaultdict(list)
    for i, j in edges:
        adj[i].append(j)
    match_b: dict[int, int] = {}

    def augment(i: int, seen: set[int]) -> bool:
        for j in adj[i]:
            if j in seen:
                continue
            seen.add(j)
            if j not in match_b or augment(match_b[j], seen):
                match_b[j] = i
                return True
        return False

    return sum(augment(i, set()) for i in range(n1))


def build_fams(
    flights_A: Sequence[Flight | dict | tuple],
    flights_B: Sequence[Flight | dict | tuple],
    T1: float,
    T2: float,
    k: int,
) -> FamsInstance:
    """Build a FAMS instance; edge ``(A_i, B_j)`` iff same city and
    ``T1 <= dep(B_j) - arr(A_i) <= T2``."""
    if not (0 < T1 < T2):
        raise ValueError(f"time window must satisfy 0 < T1 < T2, got ({T1}, {T2})")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    fa = [_as_flight(f, "arr") for f in flights_A]
    fb = [_as_flight(f, "dep") for f in flights_B]
    order_a = sorted(range(len(fa)), key=lambda i: (fa[i].city, fa[i].time, i))
    order_b = sorted(range(len(fb)), key=lambda j: (fb[j].city, fb[j].time, j))
    fa = [fa[i] for i in order_a]
    fb = [fb[j] for j in order_b]

    cities = sorted({f.city for f in fa} | {f.city for f in fb})
    components = []
    ia = ib = 0
    for city in cities:
        a0, b0 = ia, ib
        while ia < len(fa) and fa[ia].city == city:
            ia += 1
        while ib < len(fb) and fb[ib].city == city:
            ib += 1
        components.append(Component(city, a0, ia, b0, ib))

    edges = []
    for comp in components:
        for i in range(comp.a_start, comp.a_stop):
            for j in range(comp.b_start, comp.b_stop):
                gap = fb[j].time - fa[i].time
                if T1 <= gap <= T2:
                    edges.append((i, j))
    if _max_matching(len(fa), len(fb), edges) < k:
        raise InfeasibleK(f"no matching of size k={k} exists")
    return FamsInstance(
        flights_A=tuple(fa),
        flights_B=tuple(fb),
        T1=float(T1),
        T2=float(T2),
        k=int(k),
        edges=tuple(edges),
        components=tuple(components),
    )


def _as_flight(f: Flight | dict | tuple, time_key: str) -> Flight:
    if isinstance(f, Flight):
        return f
    if isinstance(f, dict):
        return Flight(float(f[time_key]), str(f["city"]))
    time, city = f
    return Flight(float(time), str(city))


# --------------------------------------------------------------------------- #
# Strategies and payoffs
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class PureStrategy:
    """A covered target set plus the labeled object realizing it.

    ``realization`` is a tuple of per-patroller cell paths for grid games and a
    tuple of ``(i, j)`` edges for FAMS instances.
    """

    covered: tuple[int, ...]
    realization: tuple = ()

    def indicator(self, n: int) -> np.ndarray:
        s = np.zeros(n, dtype=bool)
        s[list(self.covered)] = True
        return s


def grid_strategy(game: GridGame, paths: Sequence[Sequence[int]]) -> PureStrategy:
    covered = sorted({int(game.target(t, c)) for path in paths for t, c in enumerate(path)})
    return PureStrategy(tuple(covered), tuple(tuple(int(c) for c in p) for p in paths))


def fams_strategy(instance: FamsInstance, edges: Iterable[tuple[int, int]]) -> PureStrategy:
    edges = tuple(sorted((int(i), int(j)) for i, j in edges))
    covered = sorted(t for e in edges for t in instance.edge_targets(e))
    return PureStrategy(tuple(covered), edges)


@dataclass(frozen=True, eq=False)
class ExplicitStrategy:
    """Finite-support mixed strategy."""

    strategies: tuple[PureStrategy, ...]
    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        if probs.shape != (len(self.strategies),):
            raise ValueError("one probability per pure strategy required")
        if (probs < -1e-12).any() or abs(probs.sum() - 1.0) > 1e-9:
            raise ValueError(f"probabilities must be a distribution (sum={probs.sum():.12g})")
        probs = np.clip(probs, 0.0, None)
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)

    def indicator_matrix(self, n: int) -> np.ndarray:
        S = np.zeros((len(self.strategies), n), dtype=bool)
        for r, s in enumerate(self.strategies):
            S[r, list(s.covered)] = True
        return S

    def marginals(self, n: int) -> np.ndarray:
        return self.probs @ self.indicator_matrix(n)

    def merged(self) -> "ExplicitStrategy":
        """Merge entries with identical covered sets and drop zero mass."""
        mass: dict[tuple[int, ...], float] = {}
        first: dict[tuple[int, ...], PureStrategy] = {}
        for s, p in zip(self.strategies, self.probs):
            if p <= 0:
                continue
            mass[s.covered] = mass.get(s.covered, 0.0) + float(p)
            first.setdefault(s.covered, s)
        keys = list(mass)
        probs = np.array([mass[key] for key in keys])
        return ExplicitStrategy(tuple(first[key] for key in keys), probs / probs.sum())

    @property
    def support_size(self) -> int:
        return len({s.covered for s, p in zip(self.strategies, self.probs) if p > 0})

    def entropy(self) -> float:
        """Shannon entropy (nats) of the induced distribution over covered sets."""
        p = self.merged().probs
        p = p[p > 0]
        return float(-(p * np.log(p)).sum())


@dataclass(frozen=True, eq=False)
class ProductFormStrategy:
    """Distribution ``p_S ∝ exp(sum_{i in S} theta_i)`` realized by a counting oracle."""

    oracle: Any
    theta: np.ndarray

    def marginals(self, n: int | None = None) -> np.ndarray:
        return self.oracle.marginals(self.theta)


MixedStrategy = Union[ExplicitStrategy, ProductFormStrategy]


@dataclass(frozen=True, eq=False)
class Payoffs:
    """Zero-sum attacker payoffs on the attackable targets.

    ``u_unc[m]`` / ``u_cov[m]`` is the attacker's utility for attacking target
    ``attackable[m]`` when it is uncovered / covered.  The defender receives
    the negation.
    """

    attackable: np.ndarray
    u_unc: np.ndarray
    u_cov: np.ndarray
    zero_sum: bool = True

    def __post_init__(self):
        for name in ("attackable", "u_unc", "u_cov"):
            arr = np.array(getattr(self, name), dtype=int if name == "attackable" else float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not (len(self.attackable) == len(self.u_unc) == len(self.u_cov)):
            raise ValueError("payoff vectors must align with the attackable targets")
        if (self.u_unc <= self.u_cov).any():
            raise ValueError("need u_unc > u_cov for every attackable target")

    @property
    def delta(self) -> np.ndarray:
        return self.u_unc - self.u_cov

    def attacker_utilities(self, x: np.ndarray) -> np.ndarray:
        """Per-attackable-target attacker utility under marginal vector ``x``."""
        xa = np.asarray(x, dtype=float)[self.attackable]
        return xa * self.u_cov + (1.0 - xa) * self.u_unc

    def restrict(self, targets: Iterable[int]) -> "Payoffs":
        keep = np.isin(self.attackable, np.fromiter(targets, dtype=int))
        return Payoffs(self.attackable[keep], self.u_unc[keep], self.u_cov[keep], self.zero_sum)


def default_attackable(instance: Instance) -> np.ndarray:
    if isinstance(instance, GridGame):
        return instance.layer_targets(instance.T - 1)
    return np.arange(instance.n)


# --------------------------------------------------------------------------- #
# Enumeration
# --------------------------------------------------------------------------- #


def grid_paths(game: GridGame) -> list[tuple[int, ...]]:
    """All feasible single-patroller paths in lexicographic order."""
    paths: list[tuple[int, ...]] = [(i,) for i in range(game.N)]
    for t in range(game.T - 1):
        adj = game.adjacency[t]
        paths = [p + (j,) for p in paths for j in range(game.N) if adj[p[-1], j]]
    return paths


def enumerate_pure(instance: Instance, cap: int = DEFAULT_ENUM_CAP) -> list[PureStrategy]:
    """Every labeled realization: ordered ``k``-tuples of paths, or ordered ``k``-matchings."""
    if isinstance(instance, GridGame):
        if instance.path_count() ** instance.k > cap:
            raise TooLarge(f"{instance.path_count()}^{instance.k} path tuples exceed cap {cap}")
        paths = grid_paths(instance)
        return [grid_strategy(instance, tup) for tup in itertools.product(paths, repeat=instance.k)]
    return [fams_strategy(instance, m) for m in ordered_matchings(instance, instance.k, cap)]


def ordered_matchings(instance: FamsInstance, k: int, cap: int = DEFAULT_ENUM_CAP) -> list[tuple]:
    """All size-``k`` matchings whose edges strictly increase in both indices."""
    edges = sorted(instance.edges)
    out: list[tuple] = []

    def extend(start: int, last: tuple[int, int], chosen: list):
        if len(chosen) == k:
            out.append(tuple(chosen))
            if len(out) > cap:
                raise TooLarge(f"more than {cap} ordered matchings")
            return
        for idx in range(start, len(edges)):
            i, j = edges[idx]
            if i > last[0] and j > last[1]:
                chosen.append((i, j))
                extend(idx + 1, (i, j), chosen)
                chosen.pop()

    extend(0, (-1, -1), [])
    return out


def all_matchings(instance: FamsInstance, k: int, cap: int = DEFAULT_ENUM_CAP) -> list[tuple]:
    """All size-``k`` matchings (crossing allowed), edges listed in sorted order."""
    edges = sorted(instance.edges)
    out: list[tuple] = []

    def extend(start: int, used_a: set, used_b: set, chosen: list):
        if len(chosen) == k:
            out.append(tuple(chosen))
            if len(out) > cap:
                raise TooLarge(f"more than {cap} matchings")
            return
        for idx in range(start, len(edges)):
            i, j = edges[idx]
            if i in used_a or j in used_b:
                continue
            chosen.append((i, j))
            used_a.add(i)
            used_b.add(j)
            extend(idx + 1, used_a, used_b, chosen)
            used_a.discard(i)
            used_b.discard(j)
            chosen.pop()

    extend(0, set(), set(), [])
    return out


# --------------------------------------------------------------------------- #
# Random generation
# --------------------------------------------------------------------------- #


def random_payoffs(
    attackable: np.ndarray, rng: np.random.Generator, utility_range=(-10.0, 10.0)
) -> Payoffs:
    lo, hi = utility_range
    if not lo < 0 < hi:
        raise ValueError("utility range must straddle zero")
    m = len(attackable)
    u_unc = hi - rng.uniform(0.0, hi, size=m)  # (0, hi]
    u_cov = rng.uniform(lo, 0.0, size=m)  # [lo, 0)
    return Payoffs(np.asarray(attackable), u_unc, u_cov)


def random_grid(
    rng: np.random.Generator, N: int = 9, T: int = 9, k: int = 2, density: float = 0.8
) -> GridGame:
    """King-move board with each non-stay move kept independently with ``density``."""
    moves = []
    for t, i, j in board_moves(T, N):
        if i == j or rng.random() < density:
            moves.append((t, i, j))
    return build_grid(T, N, moves, k)


def random_fams(
    rng: np.random.Generator,
    n: int = 60,
    dts: float = 0.5,
    n_cities: int | None = None,
    window: tuple[float, float] = (1.0, 12.0),
) -> FamsInstance:
    """``n`` flights split into outbound and return legs; ``k = round(dts*n/2)``.

    Outbound arrivals are uniform over a day in uniformly drawn cities.  Every
    outbound flight gets a return flight from the same city departing a
    uniform ``[T1, T2]`` later (listed in random order), so a perfect pairing
    always exists; other compatible pairs arise from overlapping times.
    """
    k = max(1, int(round(dts * n / 2)))
    n1 = n // 2
    n2 = n - n1
    if n_cities is None:
        n_cities = max(1, n // 20)
    cities = [f"C{c:02d}" for c in range(n_cities)]
    ca = rng.integers(0, n_cities, size=n1)
    arr = np.round(rng.uniform(0.0, 24.0, size=n1), 4)
    pair = rng.permutation(n1)
    cb = ca[pair]
    gap = np.clip(np.round(rng.uniform(window[0], window[1], size=n1), 4), window[0], window[1])
    dep = arr[pair] + gap
    if n2 > n1:
        cb = np.r_[cb, rng.integers(0, n_cities, size=n2 - n1)]
        dep = np.r_[dep, np.round(rng.uniform(0.0, 24.0 + window[1], size=n2 - n1), 4)]
    fa = [Flight(float(t), cities[c]) for t, c in zip(arr, ca)]
    fb = [Flight(float(t), cities[c]) for t, c in zip(dep, cb)]
    return build_fams(fa, fb, window[0], window[1], k)


def random_game(kind: str, seed: int, utility_range=(-10.0, 10.0), attack: str = "all", **params):
    """Seeded ``(instance, payoffs)`` pair.

    ``attack="all"`` makes every target attackable (each grid node is a target);
    ``attack="final"`` restricts grid attacks to the last layer.
    """
    rng = np.random.default_rng(seed)
    if kind == "grid":
        instance = random_grid(rng, **params)
        attackable = np.arange(instance.n) if attack == "all" else default_attackable(instance)
    elif kind == "fams":
        instance = random_fams(rng, **params)
        attackable = np.arange(instance.n)
    else:
        raise ValueError(f"unknown game kind {kind!r}")
    return instance, random_payoffs(attackable, rng, utility_range)


# --------------------------------------------------------------------------- #
# JSON
# --------------------------------------------------------------------------- #


def instance_to_dict(instance: Instance) -> dict:
    if isinstance(instance, GridGame):
        return {
            "kind": "grid",
            "T": instance.T,
            "N": instance.N,
            "k": instance.k,
            "moves": [list(m) for m in instance.moves],
        }
    return {
        "kind": "fams",
        "flights_A": [{"arr": f.time, "city": f.city} for f in instance.flights_A],
        "flights_B": [{"dep": f.time, "city": f.city} for f in instance.flights_B],
        "T1": instance.T1,
        "T2": instance.T2,
        "k": instance.k,
    }


def instance_from_dict(data: dict) -> Instance:
    kind = data.get("kind", "fams" if "flights_A" in data else "grid")
    if kind == "grid":
        return build_grid(int(data["T"]), int(data["N"]), data.get("moves", []), int(data["k"]))
    if kind == "fams":
        return build_fams(data["flights_A"], data["flights_B"], data["T1"], data["T2"], int(data["k"]))
    raise ValueError(f"unknown instance kind {kind!r}")


def payoffs_to_dict(payoffs: Payoffs) -> dict:
    return {
        "attackable": payoffs.attackable.tolist(),
        "u_unc": payoffs.u_unc.tolist(),
        "u_cov": payoffs.u_cov.tolist(),
    }


def payoffs_from_dict(data: dict, instance: Instance) -> Payoffs:
    u_unc = data["u_unc"]
    if "attackable" in data:
        attackable = np.asarray(data["attackable"], dtype=int)
    elif len(u_unc) == instance.n:
        attackable = np.arange(instance.n)
    else:
        attackable = default_attackable(instance)
    return Payoffs(attackable, u_unc, data["u_cov"])


def load_instance(path: str | Path) -> tuple[Instance, Payoffs | None]:
    """Read an instance JSON file, with optional embedded ``"payoffs"``."""
    data = json.loads(Path(path).read_text())
    instance = instance_from_dict(data)
    payoffs = payoffs_from_dict(data["payoffs"], instance) if "payoffs" in data else None
    return instance, payoffs


def save_instance(path: str | Path, instance: Instance, payoffs: Payoffs | None = None) -> None:
    data = instance_to_dict(instance)
    if payoffs is not None:
        data["payoffs"] = payoffs_to_dict(payoffs)
    Path(path).write_text(json.dumps(data, indent=1))


# --------------------------------------------------------------------------- #
# Illustrative instance
# --------------------------------------------------------------------------- #


def figure1_demo() -> tuple[GridGame, ExplicitStrategy, Payoffs]:
    """Four cells, three time layers, two rangers, three-strategy mixture.

    Cells are laid out as a 2x2 board (0 top-left, 1 top-right, 2 bottom-left,
    3 bottom-right).  Observing cell 0 in the morning reveals an uncovered
    afternoon cell with certainty: strategy 3 is the only one covering it, and
    strategies 1 and 2 both leave the bottom-left afternoon cell empty.  The
    probabilities are illustrative choices.
    """
    game = build_grid(3, 4, full_moves(3, 4), 2)
    s1 = grid_strategy(game, [(1, 1, 1), (3, 3, 3)])
    s2 = grid_strategy(game, [(2, 0, 0), (3, 1, 1)])
    s3 = grid_strategy(game, [(0, 0, 2), (1, 3, 3)])
    strategy = ExplicitStrategy((s1, s2, s3), np.array([0.4, 0.3, 0.3]))
    payoffs = Payoffs(game.layer_targets(2), [5.0, 6.0, 7.0, 4.0], [-1.0, -1.0, -1.0, -1.0])
    return game, strategy, payoffs
