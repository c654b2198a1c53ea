"""Max-entropy implementations of marginal coverage vectors.

The max-entropy distribution with marginals ``x`` has product form
``p_S ∝ exp(sum_{i in S} theta_i)``.  ``theta`` minimizes the convex dual

    f(theta) = log C(exp(theta)) - <x, theta>

whose gradient is ``marginals(theta) - x``, so every step needs one counting
pass.  At the optimum the entropy is ``log C - <x, theta>``.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import count_fams, count_grid
from .errors import NotImplementable, OracleFailure
from .model import FamsInstance, GridGame, PureStrategy, fams_strategy, grid_strategy

log = logging.getLogger(__name__)

EPS = 1e-6


# --------------------------------------------------------------------------- #
# Counting oracles
# --------------------------------------------------------------------------- #


class GridOracle:
    """Counting/sampling oracle over ordered ``k``-tuples of grid patrol paths."""

    kind = "grid"
    conditionable = True

    def __init__(self, game: GridGame):
        count_grid.check_feasible(game)
        self.instance = game
        self.n = game.n

    def log_count(self, theta) -> float:
        return float(count_grid.count(self.instance, theta, log_weights=True))

    def exact_count(self, alpha) -> Fraction:
        return count_grid.count(self.instance, alpha, exact=True)

    def log_count_and_marginals(self, theta) -> tuple[float, np.ndarray]:
        return count_grid.log_count_and_marginals(self.instance, theta)

    def marginals(self, theta) -> np.ndarray:
        return self.log_count_and_marginals(theta)[1]

    def chain(self, theta):
        return count_grid.sampling_chain(self.instance, theta)

    def sample(self, theta, rng: np.random.Generator, size: int, chain=None) -> np.ndarray:
        """Raw realizations, shape ``(size, k, T)``."""
        return count_grid.sample_paths(self.instance, theta, rng, size, chain=chain)

    def covered(self, realizations: np.ndarray) -> np.ndarray:
        return count_grid.covered_matrix(self.instance, realizations)

    def strategy(self, realization) -> PureStrategy:
        return grid_strategy(self.instance, realization)

    def realization_probability(self, theta, realization, chain=None) -> float:
        return count_grid.realization_probability(self.instance, theta, realization,
                                                  log_weights=True, chain=chain)

    def best_response(self, weights) -> tuple[float, PureStrategy]:
        value, paths = count_grid.best_tuple(self.instance, weights)
        return value, self.strategy(paths)


class FamsOracle:
    """Counting/sampling oracle over ordered ``k``-matchings of a FAMS instance."""

    kind = "fams"
    conditionable = True

    def __init__(self, instance: FamsInstance):
        count_fams.check_feasible(instance)
        self.instance = instance
        self.n = instance.n

    def log_count(self, theta) -> float:
        return float(count_fams.count(self.instance, theta, log_weights=True))

    def exact_count(self, alpha) -> Fraction:
        return count_fams.count(self.instance, alpha, exact=True)

    def log_count_and_marginals(self, theta) -> tuple[float, np.ndarray]:
        return count_fams.log_count_and_marginals(self.instance, theta)

    def marginals(self, theta) -> np.ndarray:
        return self.log_count_and_marginals(theta)[1]

    def chain(self, theta):
        return count_fams.sampling_chain(self.instance, theta)

    def sample(self, theta, rng: np.random.Generator, size: int, chain=None) -> np.ndarray:
        """Raw realizations, shape ``(size, k, 2)`` of sorted ``(i, j)`` edges."""
        return count_fams.sample_matchings(self.instance, theta, rng, size, chain=chain)

    def covered(self, realizations: np.ndarray) -> np.ndarray:
        return count_fams.covered_matrix(self.instance, realizations)

    def strategy(self, realization) -> PureStrategy:
        return fams_strategy(self.instance, map(tuple, realization))

    def realization_probability(self, theta, realization, chain=None) -> float:
        return count_fams.realization_probability(self.instance, theta, realization, chain=chain)

    def best_response(self, weights) -> tuple[float, PureStrategy]:
        value, edges = count_fams.best_matching(self.instance, weights)
        return value, self.strategy(edges)


def make_oracle(instance):
    if isinstance(instance, GridGame):
        return GridOracle(instance)
    if isinstance(instance, FamsInstance):
        return FamsOracle(instance)
    raise TypeError(f"no counting oracle for {type(instance).__name__}")


# --------------------------------------------------------------------------- #
# Dual fitting
# --------------------------------------------------------------------------- #


@dataclass(frozen=True, eq=False)
class FittedWeights:
    """Product-form weights ``lambda = exp(theta)`` implementing a marginal vector.

    ``theta`` is ``-inf`` on targets fixed at zero coverage.  ``clamped`` lists
    targets whose requested marginal was 0 or 1.  ``residual`` is the achieved
    ``max_i |marginal_i - x_i|`` over the constrained targets.
    """

    theta: np.ndarray
    residual: float
    clamped: tuple[int, ...] = ()
    iterations: int = 0
    mask: np.ndarray | None = field(default=None, repr=False)

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.theta)

    def to_json(self) -> str:
        theta = [None if not np.isfinite(t) else float(t) for t in self.theta]
        return json.dumps({"theta": theta, "residual": float(self.residual),
                           "clamped": [int(i) for i in self.clamped]})

    @classmethod
    def from_json(cls, text: str) -> "FittedWeights":
        data = json.loads(text)
        theta = np.array([-np.inf if t is None else t for t in data["theta"]], dtype=float)
        return cls(theta, float(data["residual"]), tuple(data.get("clamped", ())))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path: str | Path) -> "FittedWeights":
        return cls.from_json(Path(path).read_text())


def _dual(oracle, theta, x, free):
    try:
        log_c, m = oracle.log_count_and_marginals(theta)
    except Exception as exc:  # pragma: no cover - oracle bugs surface here
        if isinstance(exc, (NotImplementable, OracleFailure)):
            raise
        raise OracleFailure(f"counting oracle failed: {exc}") from exc
    if not np.isfinite(log_c):
        raise OracleFailure("counting oracle returned a zero count")
    f = log_c - float(x[free] @ theta[free])
    g = np.zeros_like(theta)
    g[free] = m[free] - x[free]
    return f, g, m


def fit(oracle, x, tol: float = 1e-4, max_iters: int = 5000, mask=None, eps: float = EPS,
        theta_cap: float = 50.0, plateau_window: int = 50, plateau_rtol: float = 1e-10) -> FittedWeights:
    """Fit product-form weights whose marginals match ``x`` within ``tol``.

    Gradient descent on the dual with Barzilai-Borwein trial steps and Armijo
    backtracking, so the objective never increases.  ``mask`` restricts the
    constraints to a subset of targets (others keep weight 1).  Targets asked
    for coverage 0 or 1 are clamped to ``eps`` / ``1 - eps`` (``eps`` shrinks to
    ``tol / 10`` when needed so the clamp itself stays within ``tol``); ones the oracle
    already covers never (always) get weight 0 (1) and are left out of the fit.

    Raises:
        NotImplementable: the residual stalls above ``tol``, ``|theta|``
            exceeds ``theta_cap``, or the iteration budget runs out.
    """
    x_req = np.asarray(x, dtype=float)
    n = oracle.n
    if x_req.shape != (n,):
        raise ValueError(f"x must have shape ({n},)")
    if (x_req < -1e-12).any() or (x_req > 1 + 1e-12).any():
        raise NotImplementable("marginals must lie in [0, 1]", residual=float(np.abs(np.clip(x_req, 0, 1) - x_req).max()))
    x_req = np.clip(x_req, 0.0, 1.0)
    mask = np.ones(n, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)

    theta = np.zeros(n)
    _, m0 = oracle.log_count_and_marginals(theta)
    dead = mask & (x_req <= 0) & (m0 <= 0)
    forced = mask & (x_req >= 1) & (m0 >= 1)
    theta[dead] = -np.inf
    free = mask & ~dead & ~forced
    clamped = tuple(int(i) for i in np.flatnonzero(mask & ((x_req <= 0) | (x_req >= 1))))
    eps = min(eps, 0.1 * tol)
    x_fit = np.clip(x_req, eps, 1.0 - eps)

    def residual(m):
        return float(np.abs(m[mask] - x_req[mask]).max()) if mask.any() else 0.0

    f, g, m = _dual(oracle, theta, x_fit, free)
    history = [f]
    res_history = [residual(m)]
    step = 1.0
    prev_theta = prev_g = None
    for it in range(max_iters + 1):
        res = residual(m)
        if res <= tol:
            log.debug("fit converged in %d iterations, residual %.3g", it, res)
            return FittedWeights(theta, res, clamped, it, mask)
        if it == max_iters:
            break
        if prev_theta is not None:
            s = theta[free] - prev_theta[free]
            y = g[free] - prev_g[free]
            sy = float(s @ y)
            if sy > 0:
                # alternate the long and short BB steps
                step = float(s @ s) / sy if it % 2 else sy / float(y @ y)
        gg = float(g[free] @ g[free])
        t = step
        while True:
            trial = theta.copy()
            trial[free] = theta[free] - t * g[free]
            f_new, g_new, m_new = _dual(oracle, trial, x_fit, free)
            if f_new <= f - 1e-4 * t * gg:
                break
            t *= 0.5
            if t * np.sqrt(gg) < 1e-14:
                raise NotImplementable(f"line search stalled with residual {res:.3g}", residual=res)
        assert f_new <= f + 1e-12 * max(1.0, abs(f)), "dual objective increased"
        prev_theta, prev_g = theta, g
        theta, f, g, m = trial, f_new, g_new, m_new
        step = t
        history.append(f)
        res_history.append(residual(m))
        if np.abs(theta[free]).max(initial=0.0) > theta_cap:
            raise NotImplementable(f"weights diverge (|theta| > {theta_cap}); residual {residual(m):.3g}",
                                   residual=residual(m))
        if len(history) > plateau_window:
            old = history[-plateau_window - 1]
            # near the optimum the objective moves by ~residual^2, so a flat
            # objective only counts as a plateau if the residual is flat too
            stuck = min(res_history[-plateau_window:]) > 0.9 * res_history[-plateau_window - 1]
            if (old - f) <= plateau_rtol * max(1.0, abs(f)) and stuck:
                raise NotImplementable(f"dual objective plateaued with residual {residual(m):.3g}",
                                       residual=residual(m))
    raise NotImplementable(f"no convergence in {max_iters} iterations; residual {residual(m):.3g}",
                           residual=residual(m))


# --------------------------------------------------------------------------- #
# Sampling and entropy
# --------------------------------------------------------------------------- #


def sample_maxent(oracle, fitted: FittedWeights, rng: np.random.Generator, count: int) -> list[PureStrategy]:
    """``count`` independent draws from the fitted product-form distribution."""
    if count == 0:
        return []
    return [oracle.strategy(r) for r in oracle.sample(fitted.theta, rng, count)]


def entropy(oracle, fitted: FittedWeights | np.ndarray) -> float:
    """Entropy in nats of the product-form distribution over realizations."""
    theta = fitted.theta if isinstance(fitted, FittedWeights) else np.asarray(fitted, dtype=float)
    log_c, m = oracle.log_count_and_marginals(theta)
    finite = np.isfinite(theta)
    return max(0.0, float(log_c - m[finite] @ theta[finite]))
