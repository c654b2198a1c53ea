"""Command-line interface: counting, sampling, solving and experiment sweeps.

Examples::

    maxent-patrol count game.json
    maxent-patrol generate grid --seed 3 -p N=9 -p T=9 -p k=2 --out game.json
    maxent-patrol solve game.json --out solution.json
    maxent-patrol sample game.json --solve --samples 1000 --seed 0 --out draws.jsonl
    maxent-patrol experiment fig5a --seed 0 --out results/
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from fractions import Fraction
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__, count_fams, count_grid
from .baseline import solve_no_leakage
from .errors import NotImplementable, PatrolError
from .leakage import (CSV_COLUMNS, RobustnessConfig, SuiteConfig, robustness_suite, scenario_suite,
                      summarize)
from .maxent import entropy, fit, make_oracle
from .model import GridGame, instance_to_dict, load_instance, payoffs_to_dict, random_game, save_instance

log = logging.getLogger("maxent_patrol")

CSV_VERSION = 1
PRESETS = ("fig4b", "fig4c", "fig5a", "fig5b", "fig5c", "support")
EXIT_USAGE = 2
EXIT_INFEASIBLE = 3
EXIT_FAILED = 4


class UsageError(Exception):
    pass


def _configure_logging() -> None:
    level = os.environ.get("MAXENT_PATROL_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def _load(path: str):
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"instance file not found: {path}")
    try:
        return load_instance(p)
    except (json.JSONDecodeError, KeyError) as exc:
        raise UsageError(f"cannot parse instance {path}: {exc}") from exc


def _read_vector(spec: str | None, n: int, exact: bool = False):
    """Comma-separated values or a JSON file holding a list (or ``{"x": [...]}``)."""
    if spec is None:
        return None
    if Path(spec).is_file():
        data = json.loads(Path(spec).read_text())
        values = data["x"] if isinstance(data, dict) else data
    else:
        values = [v.strip() for v in spec.split(",") if v.strip()]
    if len(values) != n:
        raise UsageError(f"expected {n} values, got {len(values)}")
    if exact:
        return [Fraction(str(v)) for v in values]
    return np.array([float(v) for v in values])


def _fmt(v) -> str:
    if isinstance(v, float):
        return format(v, ".10g")
    return str(v)


# --------------------------------------------------------------------------- #
# Subcommands
# --------------------------------------------------------------------------- #


def cmd_count(args) -> int:
    instance, _ = _load(args.instance)
    alpha = _read_vector(args.weights, instance.n, exact=args.exact)
    module = count_grid if isinstance(instance, GridGame) else count_fams
    if args.exact:
        c = module.count(instance, alpha, exact=True)
        print(f"count={c}")
        log_c = float(np.log(float(c))) if c > 0 else float("-inf")
    else:
        log_c = float(module.count(instance, alpha, log_weights=args.log_weights))
    if not np.isfinite(log_c):
        print("log_count=-inf")
        print("error: no feasible pure strategy has positive weight", file=sys.stderr)
        return EXIT_INFEASIBLE
    print(f"log_count={log_c:.6f}")
    return 0


def _solve(instance, payoffs):
    if payoffs is None:
        raise UsageError("instance file carries no payoffs; add a \"payoffs\" entry")
    return solve_no_leakage(instance, payoffs)


def cmd_solve(args) -> int:
    instance, payoffs = _load(args.instance)
    cg = _solve(instance, payoffs)
    out = {
        "value": cg.value,
        "iterations": cg.iterations,
        "marginals": cg.x.tolist(),
        "mixture": [
            {"prob": float(p), "covered": list(s.covered), "realization": [list(r) for r in s.realization]}
            for s, p in zip(cg.strategy.strategies, cg.strategy.probs)
        ],
    }
    _write_text(args.out, json.dumps(out, indent=1) + "\n")
    print(f"value={cg.value:.6f} support={cg.strategy.support_size}", file=sys.stderr)
    return 0


def cmd_sample(args) -> int:
    instance, payoffs = _load(args.instance)
    if args.x is not None:
        x = _read_vector(args.x, instance.n)
    elif args.solve:
        x = _solve(instance, payoffs).x
    else:
        raise UsageError("give a marginal vector with --x or compute one with --solve")
    oracle = make_oracle(instance)
    try:
        fitted = fit(oracle, x, tol=args.tol, max_iters=args.max_iters)
    except NotImplementable as exc:
        res = "nan" if exc.residual is None else f"{exc.residual:.3g}"
        print(f"error: marginals not implementable (residual {res}): {exc}", file=sys.stderr)
        return EXIT_FAILED
    rng = np.random.default_rng(args.seed)
    raw = oracle.sample(fitted.theta, rng, args.samples)
    lines = []
    distinct = set()
    for r in raw:
        s = oracle.strategy(r)
        distinct.add(s.covered)
        lines.append(json.dumps({"covered": list(s.covered), "realization": [list(v) for v in s.realization]}))
    _write_text(args.out, "".join(line + "\n" for line in lines))
    if args.weights_out:
        fitted.save(args.weights_out)
    print(f"residual={fitted.residual:.3g} entropy={entropy(oracle, fitted):.6f} "
          f"samples={args.samples} distinct={len(distinct)}", file=sys.stderr)
    return 0


def cmd_generate(args) -> int:
    params = {}
    for item in args.param:
        key, _, value = item.partition("=")
        if not value:
            raise UsageError(f"parameter must look like key=value, got {item!r}")
        params[key] = float(value) if "." in value else int(value)
    kw = {"attack": args.attack} if args.kind == "grid" else {}
    instance, payoffs = random_game(args.kind, args.seed, **kw, **params)
    if args.out:
        save_instance(args.out, instance, payoffs)
    else:
        data = instance_to_dict(instance)
        data["payoffs"] = payoffs_to_dict(payoffs)
        print(json.dumps(data, indent=1))
    return 0


def _preset(name: str) -> dict:
    if Path(name).is_file():
        return json.loads(Path(name).read_text())
    if name not in PRESETS:
        raise UsageError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)} or give a JSON file")
    return json.loads(resources.files("maxent_patrol").joinpath("presets", f"{name}.json").read_text())


def _experiment_config(args, data: dict):
    n_seeds = args.n_seeds if args.n_seeds is not None else int(data.get("n_seeds", 20))
    seeds = tuple(range(args.seed, args.seed + n_seeds))
    common = {"seeds": seeds, "tol": args.tol, "parallel": args.parallel}
    if args.samples is not None:
        common["support_samples"] = args.samples
    if data.get("suite", "sweep") == "robustness":
        keys = ("kind", "family", "base", "card_repeats", "support_samples")
        kw = {k: data[k] for k in keys if k in data}
        kw.update(common)
        return RobustnessConfig(**kw)
    values = data.get("values", [])
    if args.values is not None:
        values = [float(v) if "." in v else int(v) for v in args.values.split(",") if v.strip()]
    if not values:
        raise UsageError("empty sweep")
    keys = ("family", "sweep", "base", "n_monitored", "algorithms", "card_repeats", "support_samples")
    kw = {k: (tuple(data[k]) if k == "algorithms" else data[k]) for k in keys if k in data}
    kw.update(common)
    return SuiteConfig(values=tuple(values), max_iters=args.max_iters, **kw)


def _write_csv(path: Path, columns, rows, comment: str) -> None:
    with path.open("w", newline="") as fh:
        fh.write(f"# {comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in columns])


def _write_dat(path: Path, summary) -> None:
    """Plain whitespace columns: sweep value, then mean and stderr per algorithm."""
    algs = list(dict.fromkeys(s["algorithm"] for s in summary))
    values = list(dict.fromkeys(s["sweep_param"] for s in summary))
    table = {(s["sweep_param"], s["algorithm"]): s for s in summary}
    lines = ["# sweep_param baseline " + " ".join(f"{a}_mean {a}_stderr" for a in algs)]
    for i, v in enumerate(values):
        first = table[(v, algs[0])]
        cells = [str(v) if not isinstance(v, str) else str(i), _fmt(first["baseline"])]
        for a in algs:
            s = table.get((v, a))
            cells += [_fmt(s["mean"]), _fmt(s["stderr"])] if s else ["nan", "nan"]
        lines.append(" ".join(cells))
    path.write_text("\n".join(lines) + "\n")


def cmd_experiment(args) -> int:
    data = _preset(args.preset)
    cfg = _experiment_config(args, data)
    name = Path(args.preset).stem
    if isinstance(cfg, RobustnessConfig):
        result = robustness_suite(cfg)
    else:
        result = scenario_suite(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    header = f"maxent-patrol results v{CSV_VERSION}; preset={name}"
    _write_csv(out / f"{name}.csv", CSV_COLUMNS, result.rows, header)
    summary = summarize(result.rows)
    cols = ("sweep_param", "algorithm", "count", "mean", "stderr", "baseline", "gap", "support_size")
    _write_csv(out / f"{name}_summary.csv", cols, summary, f"maxent-patrol summary v{CSV_VERSION}; preset={name}")
    if args.gnuplot:
        _write_dat(out / f"{name}.dat", summary)
    for s in summary:
        print(f"{s['sweep_param']}\t{s['algorithm']}\tmean={s['mean']:.4f}\tstderr={s['stderr']:.4f}"
              f"\tgap={s['gap']:.4f}")
    for seed, values, err in result.failures:
        print(f"failed seed {seed} ({values}): {err}", file=sys.stderr)
    return 0 if result.rows else EXIT_FAILED


def _write_text(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


# --------------------------------------------------------------------------- #
# Parser
# --------------------------------------------------------------------------- #


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="maxent-patrol", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("count", help="log of the weighted pure-strategy count")
    p.add_argument("instance")
    p.add_argument("--weights", help="per-target weights: comma list or JSON file (default all ones)")
    p.add_argument("--log-weights", action="store_true", help="weights are log-weights")
    p.add_argument("--exact", action="store_true", help="rational arithmetic; also prints the exact count")
    p.set_defaults(func=cmd_count)

    p = sub.add_parser("sample", help="fit max-entropy weights and draw pure strategies")
    p.add_argument("instance")
    p.add_argument("--x", help="marginal vector: comma list or JSON file")
    p.add_argument("--solve", action="store_true", help="use the no-leakage optimal marginals")
    p.add_argument("--samples", "-n", type=int, default=10)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--max-iters", type=int, default=5000)
    p.add_argument("--out", help="JSON-lines output (default stdout)")
    p.add_argument("--weights-out", help="also save the fitted weights as JSON")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("solve", help="no-leakage optimum by column generation")
    p.add_argument("instance")
    p.add_argument("--out", help="JSON output (default stdout)")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("generate", help="write a seeded random game")
    p.add_argument("kind", choices=("grid", "fams"))
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("-p", "--param", action="append", default=[], help="generator parameter key=value")
    p.add_argument("--attack", choices=("all", "final"), default="all")
    p.add_argument("--out")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("experiment", help="run a preset or JSON-configured sweep")
    p.add_argument("preset", help=f"one of {', '.join(PRESETS)} or a JSON config file")
    p.add_argument("--seed", type=int, default=0, help="first seed")
    p.add_argument("--n-seeds", type=int)
    p.add_argument("--values", help="comma list overriding the sweep values")
    p.add_argument("--samples", type=int, help="draws used to count MaxEn's distinct strategies")
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--max-iters", type=int, default=5000)
    p.add_argument("--parallel", type=int, default=1)
    p.add_argument("--out", default=".")
    p.add_argument("--gnuplot", action="store_true", help="also write plain-column .dat files")
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    _configure_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PatrolError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
