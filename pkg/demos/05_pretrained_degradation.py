#!/usr/bin/env python3
"""Attacking an already-trained network: competence decays under the attack.

Start from a checkpoint that evaluates at >= 90% of optimal, keep training
with low exploration, and watch the delay attack unlearn it while the
unattacked control holds steady.
"""

import tempfile
from pathlib import Path

import desyncq as dq
from desyncq.config import LearnerConfig
from desyncq.rng import derive_seed

ENV = dq.EnvSpec("gridworld", 5, 8)


def main():
    print("pretraining a clean network...")
    net = dq.pretrain_qstar(ENV, budget=30_000, seed=derive_seed(0, "qstar"))
    ckpt = Path(tempfile.mkdtemp(prefix="pretrained_demo_")) / "start.json"
    dq.save_checkpoint(ckpt, net, {})

    continuation = LearnerConfig(epsilon_start=0.05, epsilon_min=0.05)
    for label, mode, attacker in (("under attack", "delay", "learned"), ("control", "none", "learned")):
        cfg = dq.ExperimentConfig(
            env=ENV, mode=mode, attacker=attacker, episodes=150, eval_every=15,
            seed=0, pretrained_start=str(ckpt), learner=continuation,
        )
        report = dq.run_pretrained_attack(cfg)
        start = report.summary["start_return"]
        curve = " ".join(f"{row.eval_return:+.2f}" for row in report.rows)
        print(f"\n{label}: start {start:.3f}")
        print(f"  return curve: {curve}")


if __name__ == "__main__":
    main()
