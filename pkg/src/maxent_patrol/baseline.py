"""No-leakage optimal strategies and a small exact leakage-aware LP.

Column generation solves the zero-sum game

    min_p max_i  sum_S p_S U(i, S),   U(i, S) = u_unc_i - s_i * delta_i

over an explicit but growing set of pure strategies.  The attacker's dual
prices ``y_i`` turn pricing into a max-weight coverage problem with weights
``y_i * delta_i``, answered exactly by the max-plus analogues of the counting
recursions.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .card import solve_lp
from .errors import OracleFailure
from .model import ExplicitStrategy, Payoffs, PureStrategy, enumerate_pure, DEFAULT_ENUM_CAP
from .maxent import make_oracle

log = logging.getLogger(__name__)


def _utility_matrix(S: np.ndarray, payoffs: Payoffs) -> np.ndarray:
    """``U[s, m]``: attacker utility of attackable target ``m`` against pure strategy ``s``."""
    cov = S[:, payoffs.attackable]
    return payoffs.u_unc[None, :] - cov * payoffs.delta[None, :]


def solve_explicit(S: np.ndarray, payoffs: Payoffs, start_basis=None):
    """Defender-optimal mixture over the rows of ``S``.

    Returns ``(p, value, y, sigma, basis)`` with ``y`` the attacker's optimal
    mixed strategy (dual prices), ``sigma`` the dual of ``sum p = 1`` and
    ``basis`` the optimal simplex basis for warm starts.
    """
    U = _utility_matrix(np.asarray(S, dtype=bool), payoffs)
    m, a = U.shape
    # variables (p_1..p_m, u); maximize -u
    c = np.r_[np.zeros(m), -1.0]
    A_ub = np.hstack([U.T, -np.ones((a, 1))])
    A_eq = np.r_[np.ones(m), 0.0][None, :]
    nonneg = np.r_[np.ones(m, dtype=bool), False]
    res = solve_lp(c, A_ub, np.zeros(a), A_eq, [1.0], nonneg, start_basis=start_basis)
    p = np.clip(res.x[:m], 0.0, None)
    return p / p.sum(), -res.value, res.y_ub, float(res.y_eq[0]), res.basis


@dataclass
class ColumnGeneration:
    """Result of column generation: mixture, marginals and game value."""

    strategy: ExplicitStrategy
    x: np.ndarray
    value: float
    iterations: int
    history: list = field(default_factory=list)
    columns: int = 0


def best_response_column(instance, weights, oracle=None) -> tuple[float, PureStrategy]:
    """Pure strategy maximizing the summed weight of its covered targets."""
    oracle = make_oracle(instance) if oracle is None else oracle
    w = np.asarray(weights, dtype=float)
    if (w < 0).any():
        raise ValueError("pricing weights must be nonnegative")
    return oracle.best_response(w)


def solve_no_leakage(instance, payoffs: Payoffs, *, oracle=None, tol: float = 1e-7,
                     max_iters: int = 1000) -> ColumnGeneration:
    """Column generation for the optimal strategy against a non-observing attacker.

    Stops when no column's reduced cost exceeds ``tol``.  The returned value
    is the attacker's utility at the optimum (the no-leakage baseline).

    Raises:
        OracleFailure: pricing returned a column already present yet claimed
            improvement, or the iteration budget ran out.
    """
    oracle = make_oracle(instance) if oracle is None else oracle
    n = instance.n
    w0 = np.zeros(n)
    w0[payoffs.attackable] = payoffs.delta
    _, first = oracle.best_response(w0)
    columns = [first]
    seen = {first.covered}
    history = []
    rows = [first.indicator(n)]
    basis = None
    for it in range(1, max_iters + 1):
        S = np.array(rows)
        p, value, y, sigma, basis = solve_explicit(S, payoffs, basis)
        if history and value > history[-1] + 1e-9:
            raise OracleFailure(f"master value increased ({history[-1]:.9g} -> {value:.9g})")
        history.append(value)
        w = np.zeros(n)
        w[payoffs.attackable] = np.clip(y, 0.0, None) * payoffs.delta
        gain, col = oracle.best_response(w)
        # reduced cost of the new column in the max(-u) master
        reduced = -(float(y @ payoffs.u_unc) - gain) - sigma
        if reduced <= tol:
            break
        if col.covered in seen:
            raise OracleFailure("pricing returned an existing column with positive reduced cost")
        seen.add(col.covered)
        columns.append(col)
        rows.append(col.indicator(n))
        # a new column shifts every later standard-form index by one
        m_old = len(columns) - 1
        basis = np.where(basis >= m_old, basis + 1, basis)
    else:
        raise OracleFailure(f"column generation did not converge in {max_iters} iterations")
    keep = p > 0
    strategy = ExplicitStrategy(tuple(s for s, k in zip(columns, keep) if k), p[keep] / p[keep].sum())
    log.debug("column generation: %d iterations, %d columns, value %.6f", it, len(columns), value)
    return ColumnGeneration(strategy, strategy.marginals(n), value, it, history, len(columns))


def solve_full_lp(instance, payoffs: Payoffs, cap: int = DEFAULT_ENUM_CAP) -> tuple[ExplicitStrategy, float]:
    """Optimal no-leakage mixture over every enumerated pure strategy (tiny games)."""
    pure = _distinct_sets(instance, cap)
    S = np.array([s.indicator(instance.n) for s in pure])
    p, value, _, _, _ = solve_explicit(S, payoffs)
    keep = p > 0
    return ExplicitStrategy(tuple(s for s, k in zip(pure, keep) if k), p[keep] / p[keep].sum()), value


def _distinct_sets(instance, cap: int) -> list[PureStrategy]:
    first: dict = {}
    for s in enumerate_pure(instance, cap):
        first.setdefault(s.covered, s)
    return list(first.values())


# --------------------------------------------------------------------------- #
# Leakage-aware optimum on enumerable games
# --------------------------------------------------------------------------- #


@dataclass(frozen=True, eq=False)
class LeakageModel:
    """Which single target's coverage bit leaks to the attacker.

    ``probabilistic``: target ``targets[r]`` leaks with probability ``mu[r]``.
    ``adversarial``: any of ``targets`` may leak; the defender guards the worst.
    """

    kind: str
    targets: tuple[int, ...]
    mu: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in ("probabilistic", "adversarial"):
            raise ValueError(f"unknown leakage kind {self.kind!r}")
        object.__setattr__(self, "targets", tuple(int(t) for t in self.targets))
        if self.kind == "probabilistic":
            mu = tuple(float(m) for m in self.mu)
            if len(mu) != len(self.targets) or min(mu, default=0) < 0 or abs(sum(mu) - 1) > 1e-9:
                raise ValueError("probabilistic leakage needs a distribution over the targets")
            object.__setattr__(self, "mu", mu)

    @classmethod
    def single(cls, target: int) -> "LeakageModel":
        return cls("probabilistic", (target,), (1.0,))


def _rigor_start_basis(U: np.ndarray, bits: np.ndarray, adversarial: bool, n_ub: int, nvar: int):
    """Feasible basis for the leak LP: a single pure strategy with tight ``u`` bounds.

    Every inequality row has right-hand side 0, so a cold phase 1 walks through
    long chains of degenerate pivots before ``sum p = 1`` becomes basic.
    """
    m, a = U.shape
    j0 = int(np.argmin(U.max(axis=1)))
    free0 = m  # free variables follow the p block; their negative parts follow all variables
    basis = list(nvar + (nvar - m) + np.arange(n_ub))  # slacks
    u_val = []
    for r in range(bits.shape[1]):
        for bit in (0, 1):
            lhs = U[j0] * float(bits[j0, r] == bit)
            i = int(np.argmax(lhs))
            row = (2 * r + bit) * a + i
            var = free0 + 2 * r + bit
            basis[row] = var if lhs[i] >= 0 else nvar + (var - free0)
            u_val.append(lhs[i])
    if adversarial:
        pair = np.add(u_val[0::2], u_val[1::2])
        r = int(np.argmax(pair))
        var = nvar - 1
        basis[len(u_val) * a + r] = var if pair[r] >= 0 else nvar + (var - free0)
    return np.array(basis + [j0], dtype=np.int64)


def rigoropt_mini(instance, payoffs: Payoffs, model: LeakageModel,
                  cap: int = 10**5) -> tuple[ExplicitStrategy, float]:
    """Exact defender optimum when one target's coverage bit leaks.

    Variables: ``p_S`` over distinct covered sets and ``u_{k,b}`` bounding the
    attacker's best joint utility ``max_i sum_{S: s_k = b} p_S U(i, S)`` after
    seeing bit ``b`` of leaking target ``k``.

    Raises:
        TooLarge: the game has more than ``cap`` realizations.
    """
    pure = _distinct_sets(instance, cap)
    S = np.array([s.indicator(instance.n) for s in pure])
    U = _utility_matrix(S, payoffs)  # (m, a)
    m, a = U.shape
    K = len(model.targets)
    adversarial = model.kind == "adversarial"
    nu = 2 * K
    nvar = m + nu + (1 if adversarial else 0)
    rows = []
    for r, k in enumerate(model.targets):
        for bit in (0, 1):
            sel = (S[:, k] == bit).astype(float)
            block = np.zeros((a, nvar))
            block[:, :m] = (U * sel[:, None]).T
            block[:, m + 2 * r + bit] = -1.0
            rows.append(block)
    A_ub = np.vstack(rows)
    b_ub = np.zeros(len(A_ub))
    if adversarial:
        extra = np.zeros((K, nvar))
        for r in range(K):
            extra[r, m + 2 * r: m + 2 * r + 2] = 1.0
            extra[r, -1] = -1.0
        A_ub = np.vstack([A_ub, extra])
        b_ub = np.r_[b_ub, np.zeros(K)]
        c = np.zeros(nvar)
        c[-1] = -1.0
    else:
        c = np.zeros(nvar)
        c[m:m + nu] = -np.repeat(model.mu, 2)
    A_eq = np.zeros((1, nvar))
    A_eq[0, :m] = 1.0
    nonneg = np.r_[np.ones(m, dtype=bool), np.zeros(nvar - m, dtype=bool)]
    start = _rigor_start_basis(U, S[:, list(model.targets)], adversarial, A_ub.shape[0], nvar)
    res = solve_lp(c, A_ub, b_ub, A_eq, [1.0], nonneg, start_basis=start)
    p = np.clip(res.x[:m], 0.0, None)
    keep = p > 1e-15
    strategy = ExplicitStrategy(tuple(s for s, k in zip(pure, keep) if k), p[keep] / p[keep].sum())
    return strategy, -res.value
