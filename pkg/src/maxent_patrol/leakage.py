"""Attacker partial observation, conditional-entropy diagnostics and experiment sweeps.

The attacker sees the coverage bits of a few monitored targets, forms the
posterior over realizations and attacks the target with the largest
posterior expected utility.  For product-form strategies the posterior comes
from counting with observed-uncovered targets zeroed; observed-covered
targets are handled by inclusion-exclusion over zeroed subsets, so the cost
is ``2^|monitored|`` counting passes.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import entr

from .baseline import LeakageModel, rigoropt_mini, solve_no_leakage
from .card import card_for, card_mixture
from .errors import PatrolError, UnconditionableStrategy
from .maxent import entropy as maxent_entropy
from .maxent import fit, make_oracle
from .model import ExplicitStrategy, Payoffs, ProductFormStrategy, random_game

log = logging.getLogger(__name__)

EXPLICIT_EXACT_LIMIT = 10**4


# --------------------------------------------------------------------------- #
# Scenario and evaluation
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class ObservationScenario:
    """What the attacker sees and where it may strike.

    ``monitored`` targets are observed before the attack; ``attack`` restricts
    the attacker's choice (``None`` means every attackable target).  ``mode``
    is ``"exact"``, ``"mc"`` or ``"auto"``; auto switches explicit strategies
    with more than ``EXPLICIT_EXACT_LIMIT`` support entries to Monte-Carlo.
    """

    monitored: tuple[int, ...] = ()
    attack: tuple[int, ...] | None = None
    mode: str = "auto"
    samples: int = 10**5
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "monitored", tuple(int(t) for t in self.monitored))
        if self.attack is not None:
            object.__setattr__(self, "attack", tuple(int(t) for t in self.attack))
        if len(set(self.monitored)) != len(self.monitored):
            raise ValueError("monitored targets must be distinct")
        if self.mode not in ("auto", "exact", "mc"):
            raise ValueError(f"unknown evaluation mode {self.mode!r}")

    @classmethod
    def first_to_last(cls, instance, monitored, **kw) -> "ObservationScenario":
        """Monitor targets of the first layer, attack the last layer."""
        first = set(instance.layer_targets(0).tolist())
        if not set(int(t) for t in monitored) <= first:
            raise ValueError("monitored targets must lie in the first layer")
        return cls(tuple(monitored), tuple(instance.layer_targets(-1).tolist()), **kw)


def _attack_payoffs(payoffs: Payoffs, scenario: ObservationScenario) -> Payoffs:
    if scenario.attack is None:
        return payoffs
    sub = payoffs.restrict(scenario.attack)
    if len(sub.attackable) == 0:
        raise ValueError("no attackable target in the scenario's attack set")
    return sub


def _pattern_codes(bits: np.ndarray) -> np.ndarray:
    return bits.astype(np.int64) @ (1 << np.arange(bits.shape[1], dtype=np.int64))


def _explicit_value(S: np.ndarray, p: np.ndarray, payoffs: Payoffs, monitored) -> float:
    cov = S[:, payoffs.attackable]
    U = payoffs.u_unc[None, :] - cov * payoffs.delta[None, :]
    codes = _pattern_codes(S[:, list(monitored)])
    uniq, inv = np.unique(codes, return_inverse=True)
    joint = np.zeros((len(uniq), U.shape[1]))
    np.add.at(joint, inv, p[:, None] * U)
    return float(joint.max(axis=1).sum())


def _conditional_table(oracle, theta, monitored):
    """``(prob, cov)``: per observation pattern, its probability and the joint
    probability of each target being covered together with it.

    Pattern bit ``r`` is the coverage of ``monitored[r]``.
    """
    W = len(monitored)
    theta = np.asarray(theta, dtype=float)
    log_c0, m0 = oracle.log_count_and_marginals(theta)
    r = np.zeros(1 << W)
    M = np.zeros((1 << W, len(theta)))
    for z in range(1 << W):
        if z == 0:
            r[0], M[0] = 1.0, m0
            continue
        th = theta.copy()
        th[[monitored[b] for b in range(W) if z >> b & 1]] = -np.inf
        with np.errstate(all="ignore"):
            try:
                log_c, m = oracle.log_count_and_marginals(th)
            except PatrolError:
                continue  # nothing survives the zeroing
        if not np.isfinite(log_c):
            continue
        r[z] = math.exp(log_c - log_c0)
        M[z] = r[z] * np.nan_to_num(m)
    full = (1 << W) - 1
    prob = np.zeros(1 << W)
    cov = np.zeros((1 << W, len(theta)))
    for b in range(1 << W):
        zeros = full & ~b
        # inclusion-exclusion over which covered-observed targets are zeroed
        a = b
        while True:
            sign = -1.0 if bin(a).count("1") % 2 else 1.0
            prob[b] += sign * r[zeros | a]
            cov[b] += sign * M[zeros | a]
            if a == 0:
                break
            a = (a - 1) & b
    return np.clip(prob, 0.0, None), np.clip(cov, 0.0, None)


def evaluate(strategy, payoffs: Payoffs, scenario: ObservationScenario | None = None) -> float:
    """Attacker's expected utility when it best-responds to each observation.

    Ties between targets go to the lowest index; the value does not depend
    on the choice.

    Raises:
        UnconditionableStrategy: a product-form strategy whose oracle cannot
            be conditioned.
    """
    scenario = ObservationScenario() if scenario is None else scenario
    pay = _attack_payoffs(payoffs, scenario)
    if isinstance(strategy, ProductFormStrategy):
        if not getattr(strategy.oracle, "conditionable", False):
            raise UnconditionableStrategy("oracle does not support conditioned counting")
        prob, cov = _conditional_table(strategy.oracle, strategy.theta, scenario.monitored)
        ca = cov[:, pay.attackable]
        joint = prob[:, None] * pay.u_unc[None, :] - ca * pay.delta[None, :]
        return float(joint.max(axis=1).sum())
    if not isinstance(strategy, ExplicitStrategy):
        raise TypeError(f"cannot evaluate {type(strategy).__name__}")
    n = max((max(s.covered, default=-1) for s in strategy.strategies), default=-1) + 1
    n = max(n, int(pay.attackable.max()) + 1, max(scenario.monitored, default=-1) + 1)
    mc = scenario.mode == "mc" or (scenario.mode == "auto" and len(strategy.strategies) > EXPLICIT_EXACT_LIMIT)
    S = strategy.indicator_matrix(n)
    if not mc:
        return _explicit_value(S, np.asarray(strategy.probs), pay, scenario.monitored)
    rng = np.random.default_rng(scenario.seed)
    draws = rng.choice(len(strategy.strategies), size=scenario.samples, p=strategy.probs)
    counts = np.bincount(draws, minlength=len(strategy.strategies))
    keep = counts > 0
    return _explicit_value(S[keep], counts[keep] / scenario.samples, pay, scenario.monitored)


def no_leakage_utility(x, payoffs: Payoffs, attack=None) -> float:
    """``max_i x_i U_cov(i) + (1 - x_i) U_unc(i)`` over the attack set."""
    pay = payoffs if attack is None else payoffs.restrict(attack)
    return float(pay.attacker_utilities(x).max())


def evaluate_model(strategy, payoffs: Payoffs, model: LeakageModel | None, attack=None, **kw) -> float:
    """Attacker utility under a one-target leakage model.

    ``None`` means nothing leaks.  Probabilistic models average over the
    leaking target; adversarial ones take the worst candidate.
    """
    if model is None:
        return evaluate(strategy, payoffs, ObservationScenario((), attack, **kw))
    vals = [evaluate(strategy, payoffs, ObservationScenario((k,), attack, **kw)) for k in model.targets]
    if model.kind == "adversarial":
        return max(vals)
    return float(np.dot(model.mu, vals))


# --------------------------------------------------------------------------- #
# Conditional-entropy diagnostic
# --------------------------------------------------------------------------- #


def binary_entropy(p) -> np.ndarray:
    p = np.clip(np.asarray(p, dtype=float), 0.0, 1.0)
    return entr(p) + entr(1.0 - p)


@dataclass
class EntropyReport:
    """Per-target coverage entropies and what observing one target removes.

    ``conditional[r, i]`` is ``E_{X_k}[H(X_i | X_k)]`` for ``k = candidates[r]``
    (zero at ``i = k``); ``gap[r]`` is the drop of the summed entropy over
    ``i != k``.  Entropies are in nats.
    """

    x: np.ndarray
    H: np.ndarray
    candidates: tuple[int, ...]
    conditional: np.ndarray
    conditional_sum: np.ndarray
    unconditional_sum: np.ndarray
    gap: np.ndarray
    trivial: np.ndarray

    def concavity_holds(self, slack: float = 1e-12) -> bool:
        """``E[H(X_i | X_k)] <= H(X_i)`` for every candidate and target."""
        return bool((self.conditional <= self.H[None, :] + slack).all())


def _pair_covered(strategy, n: int, k: int) -> np.ndarray:
    """``Pr(X_i = 1, X_k = 1)`` for every ``i``."""
    if isinstance(strategy, ProductFormStrategy):
        prob, cov = _conditional_table(strategy.oracle, strategy.theta, (k,))
        return cov[1]
    S = strategy.indicator_matrix(n)
    return np.asarray(strategy.probs) @ (S & S[:, [k]])


def entropy_report(strategy, candidates, n: int | None = None, trivial_tol: float = 1e-12) -> EntropyReport:
    """Conditional-entropy report for each candidate observed target."""
    if isinstance(strategy, ProductFormStrategy):
        x = strategy.marginals()
    else:
        n = n if n is not None else max(max(s.covered, default=-1) for s in strategy.strategies) + 1
        x = strategy.marginals(n)
    n = len(x)
    H = binary_entropy(x)
    cands = tuple(int(k) for k in candidates)
    cond = np.zeros((len(cands), n))
    trivial = np.zeros(len(cands), dtype=bool)
    for r, k in enumerate(cands):
        xk = float(x[k])
        if xk <= trivial_tol or xk >= 1 - trivial_tol:
            trivial[r] = True
            cond[r] = H
        else:
            both = _pair_covered(strategy, n, k)
            x1 = np.clip(both / xk, 0.0, 1.0)
            x0 = np.clip((x - both) / (1.0 - xk), 0.0, 1.0)
            cond[r] = xk * binary_entropy(x1) + (1.0 - xk) * binary_entropy(x0)
        cond[r, k] = 0.0
    mask = np.ones((len(cands), n), dtype=bool)
    mask[np.arange(len(cands)), list(cands)] = False
    uncond_sum = np.where(mask, H[None, :], 0.0).sum(axis=1)
    cond_sum = np.where(mask, cond, 0.0).sum(axis=1)
    gap = np.where(trivial, 0.0, uncond_sum - cond_sum)
    return EntropyReport(x, H, cands, cond, cond_sum, uncond_sum, gap, trivial)


# --------------------------------------------------------------------------- #
# Experiment sweeps
# --------------------------------------------------------------------------- #

ALGORITHMS = ("ColG", "MaxEn", "CARD")
CSV_COLUMNS = ("sweep_param", "seed", "algorithm", "attacker_utility", "baseline", "support_size", "entropy")


@dataclass(frozen=True)
class SuiteConfig:
    """One sweep: a game family, a swept parameter and its values.

    ``sweep`` is ``"T"``, ``"mot"`` (number of monitored targets) or ``"dts"``;
    ``base`` holds the remaining generator parameters.
    """

    family: str
    sweep: str
    values: tuple
    seeds: tuple[int, ...] = tuple(range(20))
    base: dict = field(default_factory=dict)
    n_monitored: int = 2
    algorithms: tuple[str, ...] = ALGORITHMS
    tol: float = 1e-4
    max_iters: int = 5000
    support_samples: int = 10**4
    card_repeats: int = 1
    parallel: int = 1

    def __post_init__(self):
        if self.sweep not in ("T", "mot", "dts"):
            raise ValueError(f"unknown sweep parameter {self.sweep!r}")
        if self.family not in ("grid", "fams"):
            raise ValueError(f"unknown game family {self.family!r}")
        if not self.values:
            raise ValueError("empty sweep")
        bad = set(self.algorithms) - set(ALGORITHMS)
        if bad:
            raise ValueError(f"unknown algorithms {sorted(bad)}")


@dataclass
class SuiteResult:
    rows: list[dict]
    failures: list[tuple] = field(default_factory=list)


def _sampled_support(oracle, theta, rng, size: int) -> int:
    if size <= 0:
        return 0
    cov = oracle.covered(oracle.sample(theta, rng, size))
    return len(np.unique(np.packbits(cov, axis=1), axis=0))


def _pipeline(instance, payoffs, seed: int, cfg: SuiteConfig) -> dict:
    """ColG, then MaxEn and CARD on the same marginals; returns strategies and stats."""
    cg = solve_no_leakage(instance, payoffs)
    out = {"x": cg.x, "ColG": (cg.strategy, cg.strategy.support_size, cg.strategy.entropy())}
    if "MaxEn" in cfg.algorithms:
        oracle = make_oracle(instance)
        fitted = fit(oracle, cg.x, tol=cfg.tol, max_iters=cfg.max_iters)
        if fitted.residual > cfg.tol:
            raise PatrolError(f"fit residual {fitted.residual:.3g} above tolerance")
        support = _sampled_support(oracle, fitted.theta, np.random.default_rng((seed, 3)), cfg.support_samples)
        out["MaxEn"] = (ProductFormStrategy(oracle, fitted.theta), support, maxent_entropy(oracle, fitted))
    if "CARD" in cfg.algorithms:
        P, point, decode = card_for(instance, cg.strategy)
        mix = card_mixture(P, point, decode, np.random.default_rng((seed, 2)), repeats=cfg.card_repeats)
        out["CARD"] = (mix, mix.support_size, mix.entropy())
    return out


def _game_params(cfg: SuiteConfig, value) -> dict:
    params = dict(cfg.base)
    if cfg.sweep == "T":
        params["T"] = int(value)
    elif cfg.sweep == "dts":
        params["dts"] = float(value)
    return params


def _run_seed(cfg: SuiteConfig, values: tuple, seed: int) -> list[dict]:
    """Rows for one seed over ``values``; the game is shared when only #MoT varies."""
    rows = []
    cache = None
    for value in values:
        params = _game_params(cfg, value)
        if cache is None or cfg.sweep != "mot":
            kw = {"attack": "all"} if cfg.family == "grid" else {}
            instance, payoffs = random_game(cfg.family, seed, **kw, **params)
            cache = (instance, payoffs, _pipeline(instance, payoffs, seed, cfg))
        instance, payoffs, algs = cache
        first = instance.layer_targets(0)
        mot = int(value) if cfg.sweep == "mot" else cfg.n_monitored
        if mot > len(first):
            raise ValueError(f"cannot monitor {mot} of {len(first)} first-layer targets")
        # nested monitored sets across the #MoT sweep
        order = np.random.default_rng((seed, 1)).permutation(first)
        scenario = ObservationScenario.first_to_last(instance, sorted(order[:mot].tolist()))
        baseline = no_leakage_utility(algs["x"], payoffs, scenario.attack)
        for name in cfg.algorithms:
            strategy, support, ent = algs[name]
            rows.append({
                "sweep_param": value, "seed": seed, "algorithm": name,
                "attacker_utility": evaluate(strategy, payoffs, scenario),
                "baseline": baseline, "support_size": int(support), "entropy": float(ent),
            })
    return rows


def _task(args):
    cfg, values, seed = args
    try:
        return seed, values, _run_seed(cfg, values, seed), None
    except Exception as exc:  # one bad seed must not sink the sweep
        return seed, values, [], f"{type(exc).__name__}: {exc}"


def scenario_suite(cfg: SuiteConfig) -> SuiteResult:
    """Run the sweep; rows are ordered by sweep value, then seed, then algorithm."""
    if cfg.sweep == "mot":
        tasks = [(cfg, tuple(cfg.values), s) for s in cfg.seeds]
    else:
        tasks = [(cfg, (v,), s) for v in cfg.values for s in cfg.seeds]
    if cfg.parallel > 1:
        with ProcessPoolExecutor(max_workers=cfg.parallel) as pool:
            results = list(pool.map(_task, tasks))
    else:
        results = [_task(t) for t in tasks]
    rows, failures = [], []
    for seed, values, r, err in results:
        if err is not None:
            log.warning("seed %d at %s failed: %s", seed, values, err)
            failures.append((seed, values, err))
        rows.extend(r)
    index = {v: i for i, v in enumerate(cfg.values)}
    order = {a: i for i, a in enumerate(cfg.algorithms)}
    rows.sort(key=lambda row: (index[row["sweep_param"]], row["seed"], order[row["algorithm"]]))
    return SuiteResult(rows, failures)


def summarize(rows: list[dict]) -> list[dict]:
    """Mean and standard error of attacker utility per (sweep value, algorithm)."""
    groups: dict = {}
    for row in rows:
        groups.setdefault((row["sweep_param"], row["algorithm"]), []).append(row)
    out = []
    for (value, alg), rs in groups.items():
        u = np.array([r["attacker_utility"] for r in rs])
        b = np.array([r["baseline"] for r in rs])
        se = float(u.std(ddof=1) / np.sqrt(len(u))) if len(u) > 1 else 0.0
        out.append({
            "sweep_param": value, "algorithm": alg, "count": len(rs),
            "mean": float(u.mean()), "stderr": se, "baseline": float(b.mean()),
            "gap": float((u - b).mean()),
            "support_size": float(np.mean([r["support_size"] for r in rs])),
        })
    return out


# --------------------------------------------------------------------------- #
# Tiny-game robustness against a leakage-aware optimum
# --------------------------------------------------------------------------- #

SCENARIOS = ("accurate", "inaccurate", "manipulation")


@dataclass(frozen=True)
class RobustnessConfig:
    """Tiny games where the leakage-aware optimum is computable by enumeration."""

    kind: str = "probabilistic"
    seeds: tuple[int, ...] = tuple(range(20))
    base: dict = field(default_factory=lambda: {"N": 4, "T": 3, "k": 2})
    family: str = "grid"
    tol: float = 1e-4
    support_samples: int = 10**4
    card_repeats: int = 1
    parallel: int = 1

    def __post_init__(self):
        if self.kind not in ("probabilistic", "adversarial"):
            raise ValueError(f"unknown leakage kind {self.kind!r}")


def _believed_models(cfg: RobustnessConfig, candidates, rng):
    """``(true, believed)`` leakage models per scenario; ``None`` is no leakage."""
    cands = tuple(int(c) for c in candidates)
    if cfg.kind == "probabilistic":
        leak = int(rng.choice(cands))
        others = tuple(c for c in cands if c != leak)
        true = LeakageModel.single(leak)
        wrong = LeakageModel("probabilistic", (leak,) + others,
                             (0.5,) + tuple(0.5 / len(others) for _ in others)) if others else true
        return {"accurate": (true, true), "inaccurate": (true, wrong),
                "manipulation": (None, [LeakageModel.single(c) for c in cands])}
    true = LeakageModel("adversarial", cands)
    half = tuple(sorted(rng.choice(cands, size=max(1, len(cands) // 2), replace=False).tolist()))
    return {"accurate": (true, true), "inaccurate": (true, LeakageModel("adversarial", half)),
            "manipulation": (None, [true])}


def _robust_seed(cfg: RobustnessConfig, seed: int) -> list[dict]:
    kw = {"attack": "all"} if cfg.family == "grid" else {}
    instance, payoffs = random_game(cfg.family, seed, **kw, **cfg.base)
    cg = solve_no_leakage(instance, payoffs)
    oracle = make_oracle(instance)
    fitted = fit(oracle, cg.x, tol=cfg.tol)
    P, point, decode = card_for(instance, cg.strategy)
    card = card_mixture(P, point, decode, np.random.default_rng((seed, 2)), repeats=cfg.card_repeats)
    fixed = {
        "ColG": cg.strategy,
        "MaxEn": ProductFormStrategy(oracle, fitted.theta),
        "CARD": card,
    }
    models = _believed_models(cfg, instance.layer_targets(0), np.random.default_rng((seed, 1)))
    baseline = cg.value
    rows = []
    for scen in SCENARIOS:
        true, believed = models[scen]
        if scen == "manipulation":
            # the attacker claims whichever leak hurts the misled defender most
            best = None
            for m in believed:
                strat, _ = rigoropt_mini(instance, payoffs, m)
                u = evaluate_model(strat, payoffs, None)
                if best is None or u > best[1]:
                    best = (strat, u)
            rigor = best[0]
        else:
            rigor, _ = rigoropt_mini(instance, payoffs, believed)
        for name, strat in (("RigorOPT", rigor),) + tuple(fixed.items()):
            if isinstance(strat, ProductFormStrategy):
                support = _sampled_support(oracle, strat.theta, np.random.default_rng((seed, 3)),
                                           cfg.support_samples)
                ent = maxent_entropy(oracle, strat.theta)
            else:
                support, ent = strat.support_size, strat.entropy()
            rows.append({
                "sweep_param": scen, "seed": seed, "algorithm": name,
                "attacker_utility": evaluate_model(strat, payoffs, true),
                "baseline": baseline, "support_size": int(support), "entropy": float(ent),
            })
    return rows


def _robust_task(args):
    cfg, seed = args
    try:
        return seed, _robust_seed(cfg, seed), None
    except Exception as exc:
        return seed, [], f"{type(exc).__name__}: {exc}"


def robustness_suite(cfg: RobustnessConfig) -> SuiteResult:
    """Accurate, inaccurate and manipulated leakage beliefs on tiny games."""
    tasks = [(cfg, s) for s in cfg.seeds]
    if cfg.parallel > 1:
        with ProcessPoolExecutor(max_workers=cfg.parallel) as pool:
            results = list(pool.map(_robust_task, tasks))
    else:
        results = [_robust_task(t) for t in tasks]
    rows, failures = [], []
    for seed, r, err in results:
        if err is not None:
            log.warning("seed %d failed: %s", seed, err)
            failures.append((seed, None, err))
        rows.extend(r)
    index = {s: i for i, s in enumerate(SCENARIOS)}
    order = {a: i for i, a in enumerate(("RigorOPT",) + ALGORITHMS)}
    rows.sort(key=lambda row: (index[row["sweep_param"]], row["seed"], order[row["algorithm"]]))
    return SuiteResult(rows, failures)
