#!/usr/bin/env python3
"""Untargeted reward-delay attacks versus the clean baseline.

Every attacker here can only reschedule rewards inside an 8-step window,
never change their values, yet each one collapses training. The learned
attacker trains its own dueling DQN over disk slots with the proxy reward
-<softmax(preview Q), current Q>; the baselines need no learning at all.
"""

import desyncq as dq

ENV = dq.EnvSpec("gridworld", 5, 8)
EPISODES = 200

RUNS = [
    ("no attack", dict(mode="none")),
    ("learned delay", dict(mode="delay", attacker="learned")),
    ("random delay", dict(mode="delay", attacker="random")),
    ("fixed delay", dict(mode="delay", attacker="fixed_delay", disk_size=9)),
]


def main():
    optimal = dq.optimal_return(ENV)
    print(f"optimal return: {optimal:.3f}\n")
    print(f"{'run':>14} {'final return':>13} {'% of optimal':>13} {'mean delay':>11}")
    for label, overrides in RUNS:
        cfg = dq.ExperimentConfig(env=ENV, episodes=EPISODES, eval_every=EPISODES // 4, seed=0, **overrides)
        report = dq.run_experiment(cfg)
        final = report.summary["final_return"]
        delay = report.rows[-1].mean_delay
        delay_str = f"{delay:.2f}" if delay is not None else "-"
        print(f"{label:>14} {final:>13.3f} {final / optimal:>12.0%} {delay_str:>11}")


if __name__ == "__main__":
    main()
