"""Command-line harness: train, evaluate, baseline rollouts, sweeps, bound checks."""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from .config import RunConfig, desk_config, load_config
from .harness import (SWEEP_AXES, evaluate_checkpoint, sweep, train,
                      verify_bound_samples)


def _load_run_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else desk_config()
    if getattr(args, "policy", None):
        cfg = dataclasses.replace(cfg, policy=args.policy)
    if getattr(args, "episodes", None):
        cfg = dataclasses.replace(cfg, episodes=args.episodes)
    if getattr(args, "seed", None) is not None:
        scenario = dataclasses.replace(cfg.scenario, seed=args.seed)
        cfg = dataclasses.replace(cfg, scenario=scenario)
    return cfg


def _cmd_train(args) -> int:
    cfg = _load_run_config(args)
    result = train(cfg, out_dir=args.out, verify_bound=args.verify_bound)
    rewards = result.eval_rewards
    window = rewards[-min(50, len(rewards)):]
    print(f"policy={cfg.policy} episodes={cfg.episodes} "
          f"final-window mean eval reward={window.mean():.6g}")
    if args.verify_bound:
        viol = sum(r.bound_violations for r in result.train_records + result.eval_records)
        chk = sum(r.bound_checks for r in result.train_records + result.eval_records)
        print(f"bound checks={chk} violations={viol}")
        if viol:
            return 1
    print(f"outputs in {args.out}")
    return 0


def _cmd_evaluate(args) -> int:
    records = evaluate_checkpoint(args.checkpoint, episodes=args.episodes)
    rewards = np.array([r.mean_reward for r in records])
    print(f"episodes={len(records)} mean reward={rewards.mean():.6g} "
          f"min={rewards.min():.6g} max={rewards.max():.6g}")
    return 0


def _cmd_baseline(args) -> int:
    cfg = _load_run_config(args)
    if cfg.policy not in ("greedy", "genetic"):
        print("baseline requires --policy greedy or genetic", file=sys.stderr)
        return 2
    result = train(cfg, out_dir=args.out, verify_bound=args.verify_bound)
    print(f"policy={cfg.policy} mean eval reward={result.eval_rewards.mean():.6g}")
    return 0


def _cmd_sweep(args) -> int:
    cfg = _load_run_config(args)
    values = [float(v) for v in args.values.split(",")]
    points = sweep(cfg, args.axis, values, out_dir=args.out)
    for p in points:
        print(f"{p.axis}={p.value:g} reward={p.mean_final_reward:.6g} "
              f"delay={p.mean_total_delay:.6g} backlog={p.mean_queue_backlog:.6g}")
    return 0


def _cmd_verify_bound(args) -> int:
    checks, violations, worst = verify_bound_samples(args.samples, seed=args.seed or 0)
    print(f"checks={checks} violations={violations} worst_slack={worst:.6g}")
    return 0 if violations == 0 else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vec-sched",
                                     description="Vehicular edge DNN scheduling experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, with_policy=None):
        p.add_argument("--config", type=Path, default=None, help="JSON run config")
        p.add_argument("--seed", type=int, default=None, help="override scenario seed")
        p.add_argument("--episodes", type=int, default=None)
        p.add_argument("--out", type=Path, default=Path("out"))
        p.add_argument("--verify-bound", action="store_true",
                       help="check the drift bound on sampled slots")
        if with_policy:
            p.add_argument("--policy", choices=with_policy, default=None)

    p_train = sub.add_parser("train", help="train a learned policy")
    common(p_train, with_policy=("mad2rl", "pqmix"))
    p_train.set_defaults(func=_cmd_train)

    p_eval = sub.add_parser("evaluate", help="evaluate a saved checkpoint")
    p_eval.add_argument("--checkpoint", type=Path, required=True)
    p_eval.add_argument("--episodes", type=int, default=10)
    p_eval.set_defaults(func=_cmd_evaluate)

    p_base = sub.add_parser("baseline", help="roll out a rule-based policy")
    common(p_base, with_policy=("greedy", "genetic"))
    p_base.set_defaults(func=_cmd_baseline)

    p_sweep = sub.add_parser("sweep", help="repeat training over one axis")
    common(p_sweep, with_policy=("mad2rl", "pqmix", "greedy", "genetic"))
    p_sweep.add_argument("--axis", choices=SWEEP_AXES, required=True)
    p_sweep.add_argument("--values", required=True, help="comma-separated values")
    p_sweep.set_defaults(func=_cmd_sweep)

    p_verify = sub.add_parser("verify-bound", help="drift bound spot checks")
    p_verify.add_argument("--samples", type=int, default=1000)
    p_verify.add_argument("--seed", type=int, default=0)
    p_verify.set_defaults(func=_cmd_verify_bound)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
