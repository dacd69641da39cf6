"""Command-line front end: run, pretrain, verify, sweep."""

from __future__ import annotations

import argparse
import copy
import json
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .envs import make_env
from .harness import run_experiment, verify_stream
from .learner import save_checkpoint
from .rng import derive_seed
from .targets import pretrain_qstar


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    report = run_experiment(cfg, out_dir=args.out)
    summary = report.summary
    print(f"mode={summary['mode']} attacker={summary['attacker']} objective={summary['objective']}")
    print(f"final_return={summary['final_return']:.4f}" if summary["final_return"] is not None else "final_return=n/a")
    if summary["final_success_rate"] is not None:
        print(f"final_success_rate={summary['final_success_rate']:.4f}")
    if args.out:
        print(f"wrote {Path(args.out) / 'metrics.csv'}")
    return 0


def _cmd_pretrain(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    net = pretrain_qstar(cfg.env, cfg.qstar_budget_steps, derive_seed(cfg.seed, "qstar"))
    env = make_env(cfg.env)
    hyper = {
        "gamma": cfg.env.gamma,
        "env": cfg.env.name,
        "input_dim": env.input_dim,
        "action_count": env.action_count,
    }
    save_checkpoint(args.out, net, hyper)
    print(f"wrote checkpoint {args.out}")
    return 0


def _cmd_verify(args) -> int:
    report = verify_stream(args.trace, args.mode, args.delta)
    print(json.dumps(report))
    bad = report["order_violations"] if args.mode == "shift" else report["delay_violations"]
    return 1 if bad else 0


def _apply_override(cfg, dotted: str, value) -> None:
    """Set a dotted config field; frozen sub-configs are rebuilt via replace."""
    import dataclasses

    *head, leaf = dotted.split(".")
    parents = [cfg]
    for part in head:
        if not hasattr(parents[-1], part):
            raise ConfigError(f"--param names unknown field {dotted!r}")
        parents.append(getattr(parents[-1], part))
    target = parents[-1]
    if not hasattr(target, leaf):
        raise ConfigError(f"--param names unknown field {dotted!r}")
    while True:
        try:
            setattr(target, leaf, value)
            return
        except dataclasses.FrozenInstanceError:
            value = dataclasses.replace(target, **{leaf: value})
            parents.pop()
            target = parents[-1]
            leaf = head.pop()


def _cmd_sweep(args) -> int:
    base = load_config(args.config)
    seeds = [int(s) for s in args.seeds.split(",")]
    variants: list[tuple[str, dict]] = [("", {})]
    if args.param:
        key, _, raw = args.param.partition("=")
        if not raw:
            raise ConfigError(f"--param expects key=v1,v2,..., got {args.param!r}")
        values = [json.loads(v) for v in raw.split(",")]
        variants = [(f"{key.replace('.', '_')}{v}", {key: v}) for v in values]
    out_root = Path(args.out)
    for label, overrides in variants:
        for seed in seeds:
            cfg = copy.deepcopy(base)
            cfg.seed = seed
            for dotted, value in overrides.items():
                _apply_override(cfg, dotted, value)
            cfg.validate()
            run_dir = out_root / (f"{label}_seed{seed}" if label else f"seed{seed}")
            report = run_experiment(cfg, out_dir=run_dir)
            final = report.summary["final_return"]
            print(f"{run_dir}: final_return={final:.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="attack", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one configured experiment")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--out", default=None)
    p_run.set_defaults(fn=_cmd_run)

    p_pre = sub.add_parser("pretrain", help="train a clean near-optimal network and checkpoint it")
    p_pre.add_argument("--config", required=True)
    p_pre.add_argument("--seed", type=int, default=None)
    p_pre.add_argument("--out", required=True)
    p_pre.set_defaults(fn=_cmd_pretrain)

    p_ver = sub.add_parser("verify", help="audit a trace log for timing violations")
    p_ver.add_argument("--trace", required=True)
    p_ver.add_argument("--mode", required=True, choices=["delay", "shift"])
    p_ver.add_argument("--delta", required=True, type=int)
    p_ver.set_defaults(fn=_cmd_verify)

    p_sw = sub.add_parser("sweep", help="run a config across seeds and one parameter grid")
    p_sw.add_argument("--config", required=True)
    p_sw.add_argument("--seeds", required=True, help="comma-separated seed list")
    p_sw.add_argument("--param", default=None, help="dotted.key=v1,v2 overrides")
    p_sw.add_argument("--out", required=True)
    p_sw.set_defaults(fn=_cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, FileNotFoundError, ValueError, RuntimeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
