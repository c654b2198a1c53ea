"""Brute-force reference implementations for testing.

Everything here enumerates pure strategies explicitly and shares no code
with the counting recursions, so agreement between the two is evidence for
both.
"""
from __future__ import annotations

from fractions import Fraction

import numpy as np
from scipy.optimize import linprog
from scipy.special import logsumexp, softmax

from .errors import NotImplementable
from .model import DEFAULT_ENUM_CAP, PureStrategy, enumerate_pure


def brute_count(instance, alpha=None, cap: int = 10**6) -> Fraction:
    """``sum_S prod_{i in S} alpha_i`` over labeled realizations, in exact rationals."""
    a = [Fraction(1)] * instance.n if alpha is None else [Fraction(v) for v in np.ravel(np.asarray(alpha, dtype=object))]
    total = Fraction(0)
    for s in enumerate_pure(instance, cap):
        prod = Fraction(1)
        for i in s.covered:
            prod *= a[i]
        total += prod
    return total


def realization_matrix(instance, cap: int = DEFAULT_ENUM_CAP, level: str = "realization"):
    """``(pure, S)``: enumerated pure strategies and their 0/1 coverage rows.

    ``level="set"`` keeps one representative per distinct covered set.
    """
    pure = enumerate_pure(instance, cap)
    if level == "set":
        first: dict = {}
        for s in pure:
            first.setdefault(s.covered, s)
        pure = list(first.values())
    elif level != "realization":
        raise ValueError(f"unknown level {level!r}")
    S = np.zeros((len(pure), instance.n))
    for r, s in enumerate(pure):
        S[r, list(s.covered)] = 1.0
    return pure, S


def _support_rows(S: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Rows that some implementation of ``x`` can use with positive probability.

    A row is usable iff the LP maximizing its probability has a positive
    optimum; checking one LP per row is fine at test scale.
    """
    m = len(S)
    A_eq = np.vstack([S.T, np.ones(m)])
    b_eq = np.r_[x, 1.0]
    usable = np.zeros(m, dtype=bool)
    for r in range(m):
        if usable[r]:
            continue
        c = np.zeros(m)
        c[r] = -1.0
        res = linprog(c, A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs")
        if res.status != 0:
            raise NotImplementable("marginal-matching LP is infeasible")
        # an optimal vertex may make further rows positive too
        usable |= res.x > 1e-9
        usable[r] |= -res.fun > 1e-9
    return usable


def brute_maxent(instance, x, *, level: str = "realization", cap: int = 10**4, tol: float = 1e-10,
                 max_iters: int = 200):
    """Max-entropy distribution over enumerated pure strategies with marginals ``x``.

    Solves the concave program directly: rows that no implementation can use
    are dropped, then damped Newton steps on the dual of the reduced problem
    run until the marginal residual is below ``tol``.

    Returns:
        ``(pure, p)`` with ``p`` aligned to ``pure``.

    Raises:
        TooLarge: more than ``cap`` pure strategies.
        NotImplementable: ``x`` is outside the convex hull.
    """
    x = np.asarray(x, dtype=float)
    pure, S = realization_matrix(instance, cap, level)
    usable = _support_rows(S, x)
    Su = S[usable]
    # constraints that stay informative on the usable rows
    var = Su.max(axis=0) > Su.min(axis=0)
    A = Su[:, var]
    b = x[var]
    # drop constraints implied by the others and the normalization
    keep, cols = [], [np.ones(len(A))]
    for j in range(A.shape[1]):
        if np.linalg.matrix_rank(np.column_stack(cols + [A[:, j]])) > len(cols):
            cols.append(A[:, j])
            keep.append(j)
    A, b = A[:, keep], b[keep]
    theta = np.zeros(A.shape[1])
    for _ in range(max_iters):
        p = softmax(A @ theta)
        g = A.T @ p - b
        if np.abs(g).max(initial=0.0) <= tol:
            break
        Ap = A * p[:, None]
        H = A.T @ Ap - np.outer(A.T @ p, A.T @ p)
        step = np.linalg.solve(H + 1e-14 * np.eye(len(H)), g)
        f0 = logsumexp(A @ theta) - b @ theta
        t = 1.0
        while t > 1e-12:
            trial = theta - t * step
            if logsumexp(A @ trial) - b @ trial <= f0 - 1e-4 * t * (g @ step):
                break
            t *= 0.5
        theta = trial
    p = softmax(A @ theta)
    if np.abs(A.T @ p - b).max(initial=0.0) > max(tol, 1e-8):
        raise NotImplementable("Newton iteration did not reach the marginals")
    full = np.zeros(len(pure))
    full[usable] = p
    return pure, full


def distribution_entropy(p) -> float:
    p = np.asarray(p, dtype=float)
    p = p[p > 0]
    return float(-(p * np.log(p)).sum())


def set_distribution(pure: list[PureStrategy], p) -> dict:
    """Aggregate realization probabilities by covered set."""
    out: dict = {}
    for s, q in zip(pure, p):
        out[s.covered] = out.get(s.covered, 0.0) + float(q)
    return out


def total_variation(a: dict, b: dict) -> float:
    keys = set(a) | set(b)
    return 0.5 * sum(abs(a.get(k, 0.0) - b.get(k, 0.0)) for k in keys)
