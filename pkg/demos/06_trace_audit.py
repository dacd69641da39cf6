#!/usr/bin/env python3
"""The defender's view: auditing reward streams with timestamps.

Run the same budget under both threat models and audit the traces. The
general delay attack is caught immediately by an order check; the shifting
attack is invisible to it, which is the whole point of that threat model.
"""

import tempfile
from pathlib import Path

import desyncq as dq

ENV = dq.EnvSpec("gridworld", 5, 8)


def main():
    out = Path(tempfile.mkdtemp(prefix="audit_demo_"))
    for mode, attacker in (("delay", "random"), ("shift", "random_shift")):
        cfg = dq.ExperimentConfig(env=ENV, mode=mode, attacker=attacker, episodes=60, eval_every=60, seed=0)
        trace = out / f"{mode}.log"
        dq.run_experiment(cfg, trace_path=trace)
        audit = dq.verify_stream(trace, mode, cfg.max_delay)
        flagged = "FLAGGED" if audit["order_violations"] else "passes order check"
        print(f"{mode:>6} attack: {audit['items']:5d} items, "
              f"{audit['order_violations']:4d} out-of-order, "
              f"{audit['delay_violations']} over the delay bound -> {flagged}")
    print("\nboth attacks stay inside the delay bound; only shifting stays ordered")


if __name__ == "__main__":
    main()
