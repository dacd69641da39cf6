#!/usr/bin/env python3
"""Baseline sanity: an unattacked learner on the 5x8 gridworld.

The dueling double-DQN should walk the 8-move path to the goal, earning
the dynamic-programming optimum of 0.93 (seven -0.01 step penalties, then
+1 on the goal step). Budgets here are small; expect a couple of minutes.
"""

import desyncq as dq

ENV = dq.EnvSpec("gridworld", 5, 8)


def main():
    print(f"optimal return for this layout: {dq.optimal_return(ENV):.3f}")
    cfg = dq.ExperimentConfig(env=ENV, mode="none", episodes=250, eval_every=25, seed=0)
    report = dq.run_experiment(cfg)
    print(f"{'episode':>8} {'eval return':>12}")
    for row in report.rows:
        print(f"{row.episode:>8} {row.eval_return:>12.3f}")
    frac = report.summary["final_return"] / dq.optimal_return(ENV)
    print(f"\nfinal return reaches {frac:.0%} of optimal")


if __name__ == "__main__":
    main()
