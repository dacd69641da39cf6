#!/usr/bin/env python3
"""Targeted attacks: make the learner stand still on a slippery cliff ledge.

A clean near-optimal network defines the target states (everywhere its
greedy action is not "stay"); the attacker wants the learned policy to
pick "stay" there. The attack environment is slippery so that falls keep
feeding -1 rewards into the attacker's disk: the rule-based attack
publishes the best stored reward while the learner complies and the worst
while it defies, and the learned attacker discovers the same trick from
sign-valued proxy rewards. The random publisher is the baseline.

Success rate = fraction of target-state visits, in greedy evaluation,
where the policy picks a target action. Expect the steering attackers
near 1.0 and the baseline near 0. Budgets are trimmed for demo speed;
expect a few minutes.
"""

import tempfile
from pathlib import Path

import desyncq as dq
from desyncq.config import AttackerConfig, LearnerConfig
from desyncq.rng import derive_seed

CLEAN_ENV = dq.EnvSpec("cliff_chain", 8, include_noop=True)
ATTACK_ENV = dq.EnvSpec("cliff_chain", 8, horizon=25, slip_probability=0.1, include_noop=True)
SEED = 1


def main():
    print("pretraining the clean reference network on the deterministic twin...")
    qstar = dq.pretrain_qstar(CLEAN_ENV, budget=20_000, seed=derive_seed(SEED, "qstar"))
    ckpt = Path(tempfile.mkdtemp(prefix="targeted_demo_")) / "qstar.json"
    dq.save_checkpoint(ckpt, qstar, {})

    learner = LearnerConfig(
        replay_capacity=50_000, learning_rate=0.02, batch_size=64,
        epsilon_min=0.02, epsilon_decay_fraction=0.3,
    )
    attacker = AttackerConfig(
        gamma=0.0, replay_capacity=50_000, batch_size=64, learning_rate=0.05,
        epsilon_start=0.2, epsilon_decay_fraction=0.2, epsilon_min=0.05,
    )
    runs = [
        ("rule-based", dict(objective="rule", attacker="learned")),
        ("learned targeted", dict(objective="targeted", attacker="learned")),
        ("random baseline", dict(objective="targeted", attacker="random")),
    ]
    print(f"\n{'attacker':>17} {'final success rate':>19}")
    for label, overrides in runs:
        cfg = dq.ExperimentConfig(
            env=ATTACK_ENV, mode="delay", disk_size=6, drop_index_max=4,
            episodes=600, eval_every=25, seed=SEED,
            qstar_checkpoint=str(ckpt), learner=learner, attacker_params=attacker,
            **overrides,
        )
        report = dq.run_experiment(cfg)
        print(f"{label:>17} {report.summary['final_success_rate']:>19.2f}")


if __name__ == "__main__":
    main()
