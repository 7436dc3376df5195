"""Command line entry point: ``dagdqn <subcommand> ...``."""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np

from . import agent as A
from . import env as E
from . import harness as H
from . import qnet
from .dag import (
    DagError,
    count_isomorphic_to,
    count_terminal,
    iter_terminal,
    parse,
    random_target,
    serialize,
)

PRESETS = {
    "smoke": [dict(n=4, b=1, episodes=500, runs=3)],
    "paper-small": [dict(n=4, b=1, episodes=10_000, runs=20), dict(n=5, b=1, episodes=10_000, runs=20)],
}


def _load_target(text: str):
    path = Path(text)
    if path.is_file():
        text = path.read_text().strip().splitlines()[0]
    return parse(text)


def _target_from_args(args):
    if args.target:
        return _load_target(args.target)
    return random_target(args.n, args.b, np.random.default_rng(args.seed))


def _add_target_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--target", help="DAG text or path to a file holding one")
    p.add_argument("-n", type=int, default=4, help="node count of a random target")
    p.add_argument("-b", type=int, default=1, help="node type count of a random target")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode", choices=E.MODES, default=E.EDGE_SET)


def _add_dqn_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--gamma", type=float)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--target-sync-episodes", type=int)
    p.add_argument("--loss", choices=("squared", "absolute"))
    p.add_argument("--per-replays", type=int, dest="per_replays_per_step")


def _dqn_overrides(args) -> dict:
    keys = ("gamma", "learning_rate", "target_sync_episodes", "loss", "per_replays_per_step")
    return {k: getattr(args, k) for k in keys if getattr(args, k, None) is not None}


def _experiment_config(args, preset: dict | None = None) -> H.ExperimentConfig:
    overrides = dict(preset or {})
    for key in ("n", "b", "episodes", "runs", "seed", "workers"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    if getattr(args, "agents", None):
        overrides["agents"] = tuple(args.agents.split(","))
    if getattr(args, "mode", None):
        overrides["action_mode"] = args.mode
    if args.output:
        overrides["output_dir"] = args.output
    cfg = H.load_config(args.config, overrides) if args.config else dataclasses.replace(H.ExperimentConfig(), **overrides)
    dqn = _dqn_overrides(args)
    if dqn:
        cfg = dataclasses.replace(
            cfg, dqn=dataclasses.replace(cfg.dqn, **dqn), dqn_per=dataclasses.replace(cfg.dqn_per, **dqn)
        )
    return cfg


def _print_summaries(summaries) -> None:
    for s in summaries:
        curve = s.success_curve()
        tail = float(np.mean(curve[-min(1000, len(curve)):]))
        print(
            f"{s.agent:8s} {s.action_mode:8s} runs={len(s.runs)} mean_train_total={s.mean_train_total:.2f} "
            f"mean_greedy_total={s.mean_greedy_total:.2f} final_greedy_success={tail:.3f}"
        )


def cmd_count(args) -> int:
    print(count_terminal(args.n, args.b))
    return 0


def cmd_enumerate(args) -> int:
    out = open(args.out, "w") if args.out else None
    try:
        count = 0
        for d in iter_terminal(args.n, args.b, cap=args.cap):
            if out:
                out.write(serialize(d) + "\n")
            count += 1
    finally:
        if out:
            out.close()
    print(count)
    return 0


def cmd_census(args) -> int:
    target = _target_from_args(args)
    hits = count_isomorphic_to(target, cap=args.cap)
    total = count_terminal(target.n, target.b)
    print(f"target: {serialize(target)}")
    print(f"terminal states: {total}")
    print(f"isomorphic to target: {hits}")
    print(f"random-policy success probability: {hits / total:.6g}")
    return 0


def cmd_gradcheck(args) -> int:
    err = H.gradient_check(args.trials, args.seed)
    ok = err <= args.tolerance
    print(f"max relative error {err:.3e} over {args.trials} instances: {'PASS' if ok else 'FAIL'}")
    return 0 if ok else 1


def cmd_train(args) -> int:
    target = _target_from_args(args)
    env = E.EnvConfig(target, mode=args.mode)
    dqn = A.DqnConfig(per_enabled=args.per, **_dqn_overrides(args))
    rng = np.random.default_rng(args.seed + H.AGENT_SEED_OFFSET)
    agent = A.DqnAgent(env, dqn, rng)
    total, greedy = 0.0, []
    for ep in range(args.episodes):
        total += A.run_episode(env, A.TRAIN, rng, agent, dqn.epsilon(ep, args.episodes)).total_reward
        greedy.append(A.run_episode(env, A.GREEDY, rng, agent).success)
    tail = greedy[-min(len(greedy), 100):]
    print(f"target: {serialize(target)}")
    print(f"train total reward: {total:g}; greedy success over last {len(tail)}: {np.mean(tail):.3f}")
    if args.checkpoint:
        qnet.save_checkpoint(agent.policy, args.checkpoint)
        print(f"checkpoint written to {args.checkpoint}")
    return 0


def cmd_eval(args) -> int:
    target = _target_from_args(args)
    env = E.EnvConfig(target, mode=args.mode)
    params = qnet.load_checkpoint(args.checkpoint)
    state = E.reset(env)
    reward = 0.0
    while not E.is_terminal(state, env):
        action = A.select_action(state, params, env, 0.0, np.random.default_rng(0))
        out = E.step(state, action, env)
        state, reward = out.next_state, reward + out.reward
    print(f"target: {serialize(target)}")
    print(f"built:  {serialize(state)}")
    print(f"reward: {reward:g}")
    return 0


def cmd_experiment(args) -> int:
    presets = PRESETS[args.preset] if args.preset else [None]
    for preset in presets:
        cfg = _experiment_config(args, preset)
        if len(presets) > 1 and cfg.output_dir:
            cfg = dataclasses.replace(cfg, output_dir=str(Path(cfg.output_dir) / f"n{cfg.n}_b{cfg.b}"))
        print(f"# n={cfg.n} b={cfg.b} episodes={cfg.episodes} runs={cfg.runs} mode={cfg.action_mode}")
        _print_summaries(H.run_experiment(cfg))
    return 0


def cmd_compare(args) -> int:
    presets = PRESETS[args.preset] if args.preset else [None]
    for preset in presets:
        cfg = _experiment_config(args, preset)
        results = H.compare_action_modes(cfg, args.agent)
        _print_summaries(results.values())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dagdqn", description="Deep Q-learning for DAG generation")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("count", help="closed-form number of terminal states")
    p.add_argument("-n", type=int, required=True)
    p.add_argument("-b", type=int, default=1)
    p.set_defaults(func=cmd_count)

    p = sub.add_parser("enumerate", help="enumerate terminal states and print the count")
    p.add_argument("-n", type=int, required=True)
    p.add_argument("-b", type=int, default=1)
    p.add_argument("--out", help="write every DAG, one per line")
    p.add_argument("--cap", type=int, default=10**8)
    p.set_defaults(func=cmd_enumerate)

    p = sub.add_parser("census", help="count terminal states isomorphic to a target")
    _add_target_args(p)
    p.add_argument("--cap", type=int, default=10**8)
    p.set_defaults(func=cmd_census)

    p = sub.add_parser("gradcheck", help="finite-difference check of network gradients")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("train", help="train one agent on one target")
    _add_target_args(p)
    _add_dqn_args(p)
    p.add_argument("--episodes", type=int, default=2000)
    p.add_argument("--per", action="store_true", help="enable prioritized replay")
    p.add_argument("--checkpoint", help="write the trained policy network here")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="greedy rollout from a checkpoint")
    _add_target_args(p)
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=cmd_eval)

    for name, func in (("experiment", cmd_experiment), ("compare-actions", cmd_compare)):
        p = sub.add_parser(name)
        p.add_argument("--config", help="key=value config file")
        p.add_argument("--preset", choices=sorted(PRESETS))
        p.add_argument("-n", type=int)
        p.add_argument("-b", type=int)
        p.add_argument("--episodes", type=int)
        p.add_argument("--runs", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--workers", type=int)
        p.add_argument("--output", help=f"output directory (env {H.OUTPUT_ENV} takes precedence)")
        _add_dqn_args(p)
        if name == "experiment":
            p.add_argument("--agents", help="comma list of random,dqn,dqn-per")
            p.add_argument("--mode", choices=E.MODES)
        else:
            p.add_argument("--agent", default="dqn", choices=("dqn", "dqn-per"))
        p.set_defaults(func=func)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (DagError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
