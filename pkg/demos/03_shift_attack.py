#!/usr/bin/env python3
"""Order-preserving reward shifting: the attack that survives timestamp checks.

The attacker waits until its 8-slot disk is full, picks a drop index i <= 4,
discards the oldest i+1 rewards and releases the rest in order. A secure
timestamp checker sees a monotone stream (the trace audit below proves it),
yet training still collapses.
"""

import tempfile
from pathlib import Path

import desyncq as dq

ENV = dq.EnvSpec("gridworld", 5, 8)


def main():
    optimal = dq.optimal_return(ENV)
    out = Path(tempfile.mkdtemp(prefix="shift_demo_"))
    for attacker in ("learned", "random_shift"):
        cfg = dq.ExperimentConfig(env=ENV, mode="shift", attacker=attacker, episodes=200, eval_every=50, seed=0)
        trace = out / f"{attacker}.log"
        report = dq.run_experiment(cfg, trace_path=trace)
        audit = dq.verify_stream(trace, "shift", cfg.max_delay)
        final = report.summary["final_return"]
        print(f"{attacker:>13}: final return {final:.3f} ({final / optimal:.0%} of optimal)")
        print(f"{'':>13}  audit: {audit['items']} published items, "
              f"{audit['order_violations']} order violations, "
              f"{audit['delay_violations']} delay violations")
        t = report.summary["totals"]
        print(f"{'':>13}  accounting: {t['generated']} generated = {t['published']} published "
              f"+ {t['drops_shift']} shift-dropped + {t['drops_residual']} residual\n")


if __name__ == "__main__":
    main()
