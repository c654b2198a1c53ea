"""Time the compiled kernels against the numpy fallback.

Usage::

    python benchmarks/bench_kernels.py [--repeat 5]

Prints one line per kernel with the best-of-``repeat`` wall time for each
backend and the speedup.  Exits quietly when the extension is not built.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from maxent_patrol import _backend
from maxent_patrol.count_fams import sampling_chain as fams_chain
from maxent_patrol.count_grid import sampling_chain as grid_chain
from maxent_patrol.model import random_game


def _best(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def _cases(rng):
    game, _ = random_game("grid", 1, N=9, T=9, k=2)
    chain = grid_chain(game, rng.normal(size=game.n) * 0.3)
    M = 10**5
    u = rng.random((M, game.T))
    start = np.zeros(M, dtype=np.int64)
    yield "walk_chains grid 9x9 k=2, 1e5 walks", 0, (chain.cum, chain.nxt, chain.nopt, start, u)

    inst, _ = random_game("fams", 1, n=100)
    fc = fams_chain(inst, rng.normal(size=inst.n) * 0.3)
    cc = max(fc.components, key=lambda c: c.cum.shape[0])
    L = min(cc.shape[0], cc.shape[1])
    starts = np.full(M, ((cc.shape[0] - 1) * cc.shape[1] + cc.shape[1] - 1) * cc.shape[2], dtype=np.int64)
    yield "walk_chains fams component, 1e5 walks", 0, (cc.cum, cc.nxt, cc.nopt, starts, rng.random((M, L)))

    logw = rng.normal(size=(40, 30, 30))
    logw[:, rng.random((30, 30)) > 0.4] = -np.inf
    yield "fams_log_dp 40 variants 30x30 k=15", 1, (np.ascontiguousarray(logw), 15)

    w = rng.random((60, 60))
    w[rng.random((60, 60)) > 0.4] = -np.inf
    yield "fams_max_dp 60x60 k=25", 2, (w, 25)


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    try:
        compiled = _backend.get_kernels("cython")
    except ImportError:
        print("compiled kernels not built; nothing to compare")
        return
    fallback = _backend.get_kernels("python")
    rng = np.random.default_rng(0)
    print(f"{'kernel':42s} {'cython s':>10s} {'python s':>10s} {'speedup':>8s}")
    for name, idx, call_args in _cases(rng):
        tc = _best(lambda: compiled[idx](*call_args), args.repeat)
        tp = _best(lambda: fallback[idx](*call_args), args.repeat)
        print(f"{name:42s} {tc:10.4f} {tp:10.4f} {tp / tc:8.1f}x")


if __name__ == "__main__":
    main()
