"""Command-line entry points for training, evaluation and the exact solvers.

Exit codes: 0 success, 2 configuration error, 3 usage error, 4 domain
error, 5 I/O error, 6 convergence failure, 1 anything else.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import pathlib
import sys
import time

from . import tables
from .config import RunConfig, SELECTORS, parse_config
from .errors import (ConfigurationError, ConvergenceError, DomainError,
                     FairleadError, UsageError)
from .fairness import make_measure
from .harness import (build_game, emit_outputs, evaluate,
                      reproduce_endgame_experiment, train)
from .models import build_matrix_model
from .solver import enumeration_oracle, sequential_jamvi, verify_mpe

EXIT_CODES = (
    (ConfigurationError, 2),
    (UsageError, 3),
    (DomainError, 4),
    (OSError, 5),
    (ConvergenceError, 6),
)


def _add_common(parser):
    parser.add_argument("--config", type=pathlib.Path, default=None)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--seeds", type=int, default=None)
    parser.add_argument("--out", type=pathlib.Path, default=None)
    parser.add_argument("--selector", choices=SELECTORS, default=None)
    parser.add_argument("--episodes", type=int, default=None)
    parser.add_argument("--parallel", type=int, default=1)
    parser.add_argument("--env", default=None)
    parser.add_argument("--agents", type=int, default=None)


def _config_from_args(args, **extra):
    overrides = dict(
        seed=args.seed, seeds=args.seeds, selector=args.selector,
        episodes=args.episodes, env=args.env, agents=args.agents)
    overrides.update(extra)
    if args.out is not None:
        overrides["out"] = str(args.out)
    return parse_config(args.config, **overrides)


def _seed_list(config):
    return list(range(config.seed, config.seed + config.seeds))


def _run_one(payload):
    config_items, seed = payload
    config = RunConfig(**dict(config_items)).validate()
    return seed, train(config, seed, keep_logs=True)


def _train_runs(config, selectors, parallel):
    """Train each (selector, seed) pair, optionally across processes."""
    jobs = []
    for selector in selectors:
        run_config = config.replace(selector=selector)
        for seed in _seed_list(config):
            jobs.append((selector, run_config, seed))
    results = {}
    if parallel > 1:
        with concurrent.futures.ProcessPoolExecutor(parallel) as pool:
            futures = {
                pool.submit(_run_one,
                            (tuple(cfg.canonical_items()), seed)): (sel, seed)
                for sel, cfg, seed in jobs
            }
            for future in concurrent.futures.as_completed(futures):
                sel, seed = futures[future]
                results[(sel, seed)] = future.result()[1]
    else:
        for sel, cfg, seed in jobs:
            results[(sel, seed)] = train(cfg, seed, keep_logs=True)
    return results


def _emit(results, config, started):
    logs = {(seed, sel): result.records
            for (sel, seed), result in results.items()}
    eval_points = [(seed, sel, result.eval_points)
                   for (sel, seed), result in results.items()]
    out_dir = config.out or "runs"
    emit_outputs(logs, out_dir, config,
                 wall_clock=time.perf_counter() - started,
                 eval_points=eval_points)
    for (sel, seed), result in sorted(results.items()):
        ckpt_dir = pathlib.Path(out_dir) / f"checkpoint-{sel}-seed{seed}"
        save_checkpoint(result.checkpoint, ckpt_dir)
    return out_dir


def save_checkpoint(checkpoint, ckpt_dir):
    ckpt_dir = pathlib.Path(ckpt_dir)
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    with open(ckpt_dir / "meta.json", "w") as fh:
        json.dump(checkpoint["meta"], fh, indent=2, sort_keys=True)
        fh.write("\n")
    for i, table in enumerate(checkpoint["agents"]):
        tables.save_table(ckpt_dir / f"agent_{i}.tsv", table)
    if "mediator" in checkpoint:
        tables.save_table(ckpt_dir / "mediator.tsv", checkpoint["mediator"])
    if "voters" in checkpoint:
        for i, table in enumerate(checkpoint["voters"]):
            tables.save_table(ckpt_dir / f"voter_{i}.tsv", table)


def load_checkpoint(ckpt_dir):
    ckpt_dir = pathlib.Path(ckpt_dir)
    with open(ckpt_dir / "meta.json") as fh:
        meta = json.load(fh)
    out = {"meta": meta, "agents": []}
    i = 0
    while (ckpt_dir / f"agent_{i}.tsv").exists():
        out["agents"].append(tables.load_table(ckpt_dir / f"agent_{i}.tsv"))
        i += 1
    if (ckpt_dir / "mediator.tsv").exists():
        mediator = tables.load_table(ckpt_dir / "mediator.tsv")
        out["mediator"] = mediator
    voters = []
    i = 0
    while (ckpt_dir / f"voter_{i}.tsv").exists():
        voters.append(tables.load_table(ckpt_dir / f"voter_{i}.tsv"))
        i += 1
    if voters:
        out["voters"] = voters
    return out


def cmd_train(args):
    started = time.perf_counter()
    config = _config_from_args(args)
    results = _train_runs(config, [config.selector], args.parallel)
    out_dir = _emit(results, config, started)
    for (sel, seed), result in sorted(results.items()):
        final = result.final_eval
        print(f"{sel} seed {seed}: final greedy min welfare "
              f"{final.mean_min_welfare:.3f} +/- {final.std_min_welfare:.3f}")
    print(f"outputs written to {out_dir}")
    return 0


def cmd_sweep(args):
    started = time.perf_counter()
    config = _config_from_args(args)
    selectors = args.sweep_selectors.split(",") if args.sweep_selectors \
        else ["jamql", "jamql-prefinal", "jamql-naive", "alternating",
              "fixed", "vote"]
    for selector in selectors:
        if selector not in SELECTORS:
            raise ConfigurationError(f"unknown selector {selector!r}")
    results = _train_runs(config, selectors, args.parallel)
    out_dir = _emit(results, config, started)
    for selector in selectors:
        finals = [results[(selector, seed)].final_eval.mean_min_welfare
                  for seed in _seed_list(config)]
        mean = sum(finals) / len(finals)
        print(f"{selector}: mean final greedy min welfare {mean:.3f}")
    print(f"outputs written to {out_dir}")
    return 0


def cmd_eval(args):
    config = _config_from_args(args)
    checkpoint = load_checkpoint(args.checkpoint)
    episodes = args.episodes if args.episodes is not None else 100
    summary = evaluate(checkpoint, config, episodes,
                       seed=config.seed)
    print(f"min welfare {summary.mean_min_welfare:.3f} "
          f"+/- {summary.std_min_welfare:.3f} over {episodes} episodes")
    print("mean returns: "
          + ", ".join(f"{r:.3f}" for r in summary.mean_returns))
    return 0


def cmd_solve(args):
    config = _config_from_args(args)
    if config.env not in ("pd", "chicken", "bos"):
        raise ConfigurationError("solve supports the matrix games only")
    game = build_game(config)
    phi = make_measure(config.phi, config.agents)
    model = build_matrix_model(game, use_history=True,
                               use_endgame=not args.no_endgame, phi=phi)
    result = sequential_jamvi(model, phi, gamma_agents=args.gamma,
                              gamma_mediator=args.gamma, rounds=args.rounds)
    for turn, value in result.trace:
        print(f"{turn:12s} mediator value {value:.6f}")
    print(f"final fairness value {result.final_value:.6f} "
          f"(converged={result.converged})")
    ok, gap, _ = verify_mpe(model, result.agent_policies,
                            result.mediator_policy, args.gamma)
    print(f"markov perfect equilibrium: {ok} (worst deviation gap {gap:.2e})")
    return 0


def cmd_oracle(args):
    config = _config_from_args(args)
    if config.env not in ("pd", "chicken", "bos"):
        raise ConfigurationError("oracle supports the matrix games only")
    game = build_game(config)
    phi = make_measure(config.phi, config.agents)
    model = build_matrix_model(game, use_history=False)
    result = enumeration_oracle(model, phi, gamma=args.gamma)
    print(f"optimal fairness value {result.value:.6f}")
    print("leader sequence: " + " ".join(map(str, result.leaders)))
    print("action sequence: "
          + " ".join(game.action_name(l, a)
                     for l, a in zip(result.leaders, result.actions)))
    print("returns: " + ", ".join(f"{r:.3f}" for r in result.returns))
    return 0


def cmd_endgame(args):
    config = _config_from_args(args, env="chicken",
                               episodes=args.episodes or 50000)
    freqs = reproduce_endgame_experiment(config, seed=config.seed)
    game = build_game(config)
    names = [game.action_name(0, a) for a in game.agent_actions(0)]
    for use_endgame, table in freqs.items():
        label = "with" if use_endgame else "without"
        print(f"{label} end-of-game stage:")
        for step, row in enumerate(table, start=1):
            cells = " ".join(f"{name}={f:.3f}"
                             for name, f in zip(names, row))
            print(f"  step {step}: {cells}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="fairlead",
        description="Mediated Stackelberg games with dynamic leader selection")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train one selector")
    _add_common(p_train)
    p_train.set_defaults(func=cmd_train)

    p_sweep = sub.add_parser("sweep", help="train several selectors")
    _add_common(p_sweep)
    p_sweep.add_argument("--sweep-selectors", default=None,
                         help="comma-separated selector names")
    p_sweep.set_defaults(func=cmd_sweep)

    p_eval = sub.add_parser("eval", help="greedy-evaluate a checkpoint")
    _add_common(p_eval)
    p_eval.add_argument("checkpoint", type=pathlib.Path)
    p_eval.set_defaults(func=cmd_eval)

    p_solve = sub.add_parser("solve", help="full-information sequential solver")
    _add_common(p_solve)
    p_solve.add_argument("--gamma", type=float, default=1.0)
    p_solve.add_argument("--rounds", type=int, default=20)
    p_solve.add_argument("--no-endgame", action="store_true")
    p_solve.set_defaults(func=cmd_solve)

    p_oracle = sub.add_parser("oracle", help="exhaustive enumeration oracle")
    _add_common(p_oracle)
    p_oracle.add_argument("--gamma", type=float, default=1.0)
    p_oracle.set_defaults(func=cmd_oracle)

    p_end = sub.add_parser("endgame", help="terminal-step incentive experiment")
    _add_common(p_end)
    p_end.set_defaults(func=cmd_endgame)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FairleadError as exc:
        for cls, code in EXIT_CODES:
            if isinstance(exc, cls):
                print(f"error: {exc}", file=sys.stderr)
                return code
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 5


if __name__ == "__main__":
    sys.exit(main())
