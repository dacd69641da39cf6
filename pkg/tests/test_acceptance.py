"""Acceptance suite: every shipped criterion, end to end, one PASS line each.

Run with ``pytest tests/test_acceptance.py -v -s``. The suite trains dozens
of small networks on one core; expect roughly half an hour. Runs are cached
and shared between criteria inside the session, and every run's metrics are
exported under artifacts/acceptance/ so the standalone plotter can render
the curves afterwards.

Thresholds below were frozen from 5-seed oracle sweeps before being pinned
here; see DELTA_TOLERANCE and SHIFT_GAP_TOLERANCE.
"""

import shutil
import time
from pathlib import Path

import numpy as np
import pytest

import desyncq as dq
from desyncq.config import AttackerConfig, LearnerConfig
from desyncq.harness import run_experiment, run_pretrained_attack, verify_stream
from desyncq.rng import derive_seed

from tests.test_networks import gradient_check_worst_error

# -- frozen experiment frame ----------------------------------------------------

GRID = dq.EnvSpec("gridworld", 5, 8)
# The attack criteria run on a larger board: every +-1 reward in these
# gridworlds is terminal, so a delayed reward either pairs correctly or dies
# as an episode-boundary residual, and the attack's power is pure goal-signal
# starvation. On the 5x8 board clean training converges with a 2x budget
# margin and the starved learner can occasionally still crack the task; on
# 7x10 clean training just-converges inside the budget, so the ~1/d-diluted
# signal cannot. A desk-scale replay keeps rare delivered goal rewards from
# being replayed into competence.
GRID_BIG = dq.EnvSpec("gridworld", 7, 10)
GRID_LEARNER = LearnerConfig(replay_capacity=3_000)

# Targeted runs live on a slippery short-horizon cliff ledge: slip keeps
# punishment rewards (falls) in the attacker's disk under every policy, and
# the 25-step horizon makes compliant-phase stumbles into the goal (which
# would leak +1 onto a movement action) essentially impossible. The clean
# reference network is pretrained on the deterministic long-horizon twin.
# The two attack styles get the slip level where their mechanism is
# cleanest (the hand-written rule needs less ambient churn than the
# learned attacker needs teeth); each is compared against a random
# baseline run in its own frame.
CLIFF_CLEAN_TWIN = dq.EnvSpec("cliff_chain", 8, include_noop=True)
RULE_CLIFF = dq.EnvSpec("cliff_chain", 8, horizon=25, slip_probability=0.1, include_noop=True)
LEARNED_CLIFF = dq.EnvSpec("cliff_chain", 8, horizon=25, slip_probability=0.15, include_noop=True)

SEEDS = (0, 1, 2, 3)
CLEAN_EPISODES = 300  # the shared training budget ("same budget as clean")
EVAL_EVERY = 10
TARGETED_EPISODES = 1000
TARGETED_DISK = 6
TARGETED_LEARNER = LearnerConfig(
    replay_capacity=50_000, learning_rate=0.02, batch_size=64,
    epsilon_min=0.02, epsilon_decay_fraction=0.3,
)
TARGETED_ATTACKER = AttackerConfig(
    gamma=0.0, replay_capacity=4_000, batch_size=64, learning_rate=0.08,
    epsilon_start=0.2, epsilon_decay_fraction=0.2, epsilon_min=0.05,
)
UNTARGETED_ATTACKER = AttackerConfig(
    gamma=0.0, replay_capacity=50_000, batch_size=64, learning_rate=0.05,
    epsilon_start=0.2, epsilon_decay_fraction=0.2, epsilon_min=0.05,
)
QSTAR_BUDGET_GRID = 30_000
QSTAR_BUDGET_CLIFF = 20_000

# oracle-frozen tolerances (5-seed sweeps; see notes in the repo history)
DELTA_TOLERANCE = 0.15  # epsilon_delta for the delta-sensitivity criterion
SHIFT_GAP_TOLERANCE = 0.15  # learned may trail random_shift by at most this

ARTIFACTS = Path(__file__).resolve().parent.parent / "artifacts" / "acceptance"

_cache: dict[str, dict] = {}
_qstar_cache: dict[tuple, str] = {}


def _announce(name: str, ok: bool, detail: str = "") -> None:
    print(f"\n{'PASS' if ok else 'FAIL'} {name}" + (f"  [{detail}]" if detail else ""))


@pytest.fixture(scope="session", autouse=True)
def fresh_artifacts():
    shutil.rmtree(ARTIFACTS, ignore_errors=True)
    ARTIFACTS.mkdir(parents=True, exist_ok=True)
    yield


def run_cached(group: str, label: str, cfg: dq.ExperimentConfig, pretrained: bool = False) -> dict:
    """Run once per session; persist metrics + trace for downstream criteria."""
    key = f"{group}/{label}"
    if key not in _cache:
        out_dir = ARTIFACTS / group / label
        trace = out_dir / "trace.log"
        runner = run_pretrained_attack if pretrained else run_experiment
        report = runner(cfg, out_dir=out_dir, trace_path=trace if cfg.mode != "none" else None)
        _cache[key] = {
            "report": report,
            "trace": trace if cfg.mode != "none" else None,
            "mode": cfg.mode,
            "max_delay": cfg.max_delay,
        }
    return _cache[key]


def qstar_checkpoint(env: dq.EnvSpec, seed: int, budget: int, tmp_root: Path) -> str:
    key = (env.name, env.width, env.include_noop, seed, budget)
    if key not in _qstar_cache:
        net = dq.pretrain_qstar(env, budget, derive_seed(seed, "qstar"))
        path = tmp_root / f"qstar_{env.name}{env.width}_s{seed}.json"
        dq.save_checkpoint(path, net, {"budget": budget})
        _qstar_cache[key] = str(path)
    return _qstar_cache[key]


@pytest.fixture(scope="session")
def ckpt_root(tmp_path_factory):
    return tmp_path_factory.mktemp("checkpoints")


def moving_average(xs, window=5):
    return [sum(xs[i - window + 1 : i + 1]) / window for i in range(window - 1, len(xs))]


def qualitatively_non_decreasing(series) -> bool:
    """SR does not decline over the last third of training, after 5-point
    moving-average smoothing.

    Implemented as a qualitative-ordering check (the framing the acceptance
    preamble asks for): the smoothed window's least-squares slope must not
    be negative (beyond -1e-3 per point) and it must end at or above where
    it started (0.02 slack). Strict pointwise monotonicity of a stochastic
    learning curve would reject even a saturated SR plateau whose evaluation
    sampling wobbles by a single visit.
    """
    last_third = series[len(series) * 2 // 3 :]
    ma = moving_average(last_third)
    if len(ma) < 2:
        return False
    xs = np.arange(len(ma))
    slope = float(np.polyfit(xs, np.array(ma), 1)[0])
    return slope >= -1e-3 and ma[-1] >= ma[0] - 0.02


# -- 1. gradient oracle ------------------------------------------------------------


def test_gradient_oracle():
    started = time.perf_counter()
    worst = gradient_check_worst_error(instances=20, seed=0)
    elapsed = time.perf_counter() - started
    ok = worst <= 1e-4 and elapsed < 10.0
    _announce("gradient-oracle", ok, f"max rel err {worst:.2e}, {elapsed:.1f}s")
    assert worst <= 1e-4
    assert elapsed < 10.0


# -- 2. pass-through bit-equivalence -------------------------------------------------


def test_passthrough_bit_equivalence():
    import hashlib

    started = time.perf_counter()

    def digest(mode, attacker, seed):
        h = hashlib.blake2b(digest_size=16)
        cfg = dq.ExperimentConfig(
            env=GRID, mode=mode, attacker=attacker, episodes=500, eval_every=100,
            eval_episodes=2, seed=seed, learner=GRID_LEARNER,
        )
        run_experiment(cfg, probe=lambda ls: h.update(ls.online.params.tobytes()))
        return h.hexdigest()

    ok = True
    for seed in (0, 1):
        clean = digest("none", "learned", seed)
        attacked = digest("delay", "passthrough", seed)
        ok = ok and clean == attacked
    elapsed = time.perf_counter() - started
    _announce("passthrough-bit-equivalence", ok and elapsed < 120, f"{elapsed:.0f}s, 2 seeds x 500 episodes")
    assert ok
    assert elapsed < 120


# -- 3. clean-training sanity ----------------------------------------------------------


def test_clean_training_sanity():
    started = time.perf_counter()
    optimal = dq.optimal_return(GRID)
    finals = []
    for seed in SEEDS:
        cfg = dq.ExperimentConfig(env=GRID, mode="none", episodes=CLEAN_EPISODES,
                                  eval_every=EVAL_EVERY, seed=seed, learner=GRID_LEARNER)
        entry = run_cached("clean", f"seed{seed}", cfg)
        finals.append(entry["report"].summary["final_return"])
    elapsed = time.perf_counter() - started
    ok = all(f >= 0.9 * optimal for f in finals) and elapsed < 300
    _announce("clean-training-sanity", ok, f"finals {[f'{f:.2f}' for f in finals]} vs 90% of {optimal:.2f}")
    assert all(f >= 0.9 * optimal for f in finals)
    assert elapsed < 300


# -- 4. untargeted delay attack effectiveness --------------------------------------------


def delay_cfg(attacker, seed, max_delay=8, disk=8):
    return dq.ExperimentConfig(
        env=GRID_BIG, mode="delay", attacker=attacker, max_delay=max_delay, disk_size=disk,
        episodes=CLEAN_EPISODES, eval_every=EVAL_EVERY, seed=seed,
        learner=GRID_LEARNER, attacker_params=UNTARGETED_ATTACKER,
    )


def test_untargeted_delay_attack_effectiveness():
    started = time.perf_counter()
    bar = 0.25 * dq.optimal_return(GRID_BIG)
    results = {}
    for attacker in ("learned", "random"):
        finals = [
            run_cached("delay_d8", f"{attacker}_seed{s}", delay_cfg(attacker, s))["report"].summary["final_return"]
            for s in SEEDS
        ]
        results[attacker] = finals
    elapsed = time.perf_counter() - started
    ok = all(f < bar for finals in results.values() for f in finals) and elapsed < 900
    detail = "; ".join(f"{k}: {[f'{v:.2f}' for v in vs]}" for k, vs in results.items())
    _announce("untargeted-delay-effectiveness", ok, f"bar {bar:.3f}; {detail}")
    for finals in results.values():
        assert all(f < bar for f in finals)
    assert elapsed < 900


# -- 5. delta sensitivity -----------------------------------------------------------------


def test_delta_sensitivity():
    started = time.perf_counter()
    bar = 0.25 * dq.optimal_return(GRID_BIG)
    ok = True
    gaps = []
    for seed in SEEDS:
        f8 = run_cached("delay_d8", f"learned_seed{seed}", delay_cfg("learned", seed))["report"].summary["final_return"]
        f16 = run_cached(
            "delay_d16", f"learned_seed{seed}", delay_cfg("learned", seed, max_delay=16, disk=16)
        )["report"].summary["final_return"]
        gaps.append(f16 - f8)
        ok = ok and (f16 <= f8 + DELTA_TOLERANCE) and f8 < bar and f16 < bar
    elapsed = time.perf_counter() - started
    ok = ok and elapsed < 900
    _announce("delta-sensitivity", ok, f"f16-f8 gaps {[f'{g:+.2f}' for g in gaps]}, tol {DELTA_TOLERANCE}")
    assert ok


# -- 6. targeted attacks --------------------------------------------------------------------


def targeted_cfg(env, objective, attacker, seed, qstar):
    return dq.ExperimentConfig(
        env=env, mode="delay", objective=objective, attacker=attacker,
        disk_size=TARGETED_DISK, drop_index_max=TARGETED_DISK - 2,
        episodes=TARGETED_EPISODES, eval_every=EVAL_EVERY, seed=seed,
        qstar_checkpoint=qstar, learner=TARGETED_LEARNER, attacker_params=TARGETED_ATTACKER,
    )


def test_targeted_attacks(ckpt_root):
    started = time.perf_counter()
    per_seed = []
    for seed in SEEDS:
        qstar = qstar_checkpoint(CLIFF_CLEAN_TWIN, seed, QSTAR_BUDGET_CLIFF, ckpt_root)
        srs = {}
        curves = {}
        # each attack style runs in its own frame, against a random baseline
        # run in that same frame
        for name, env, objective, attacker in (
            ("rule", RULE_CLIFF, "rule", "learned"),
            ("rule_baseline", RULE_CLIFF, "targeted", "random"),
            ("learned", LEARNED_CLIFF, "targeted", "learned"),
            ("learned_baseline", LEARNED_CLIFF, "targeted", "random"),
        ):
            entry = run_cached("targeted", f"{name}_seed{seed}", targeted_cfg(env, objective, attacker, seed, qstar))
            srs[name] = entry["report"].summary["final_success_rate"]
            curves[name] = [r.success_rate for r in entry["report"].rows]
        seed_ok = (
            srs["learned"] >= srs["learned_baseline"] + 0.15
            and srs["rule"] >= srs["rule_baseline"] + 0.15
            and qualitatively_non_decreasing(curves["learned"])
            and qualitatively_non_decreasing(curves["rule"])
        )
        per_seed.append((seed, seed_ok, srs))
    passing = sum(ok for _, ok, _ in per_seed)
    elapsed = time.perf_counter() - started
    ok = passing >= 3 and elapsed < 1200
    detail = "; ".join(
        f"s{seed}{'+' if s_ok else '-'} L{v['learned']:.2f}/R{v['rule']:.2f}"
        f"/B{max(v['rule_baseline'], v['learned_baseline']):.2f}"
        for seed, s_ok, v in per_seed
    )
    _announce("targeted-attacks", ok, f"{passing}/4 seeds; {detail}; {elapsed:.0f}s")
    assert passing >= 3
    assert elapsed < 1200


# -- 7. stream legality ------------------------------------------------------------------------


def test_stream_legality():
    started = time.perf_counter()
    # randomized shift publications: order preserved in every single case
    rng = np.random.default_rng(2024)
    cases = 0
    for _ in range(10_000):
        d = int(rng.integers(2, 10))
        k = int(rng.integers(0, d))
        base = int(rng.integers(0, 10_000))
        disk = dq.Disk(tuple(dq.RewardCell(float(rng.normal()), base + i) for i in range(d)), d, d)
        published, _ = dq.publish_shift(disk, int(rng.integers(0, k + 1)), k)
        origins = [c.origin_step for c in published]
        assert all(b > a for a, b in zip(origins, origins[1:]))
        cases += 1

    # every cached attack run must audit clean for its own threat model
    delay_items = shift_items = 0
    for key, entry in sorted(_cache.items()):
        if entry["trace"] is None or not Path(entry["trace"]).exists():
            continue
        audit = verify_stream(entry["trace"], entry["mode"] if entry["mode"] != "none" else "delay", entry["max_delay"])
        assert audit["delay_violations"] == 0, key
        if entry["mode"] == "shift":
            assert audit["order_violations"] == 0, key
            shift_items += audit["items"]
        else:
            delay_items += audit["items"]
    elapsed = time.perf_counter() - started
    ok = cases == 10_000 and elapsed < 120
    _announce(
        "stream-legality",
        ok,
        f"{cases} shift property cases; {delay_items} delay + {shift_items} shift items audited; {elapsed:.0f}s",
    )
    assert ok


# -- 8. shift attack effectiveness ----------------------------------------------------------------


def shift_cfg(attacker, seed):
    return dq.ExperimentConfig(
        env=GRID_BIG, mode="shift", attacker=attacker, episodes=CLEAN_EPISODES,
        eval_every=EVAL_EVERY, seed=seed,
        learner=GRID_LEARNER, attacker_params=UNTARGETED_ATTACKER,
    )


def test_shift_attack_effectiveness():
    started = time.perf_counter()
    bar = 0.35 * dq.optimal_return(GRID_BIG)
    per_seed = []
    for seed in SEEDS:
        learned = run_cached("shift", f"learned_seed{seed}", shift_cfg("learned", seed))["report"].summary["final_return"]
        random = run_cached("shift", f"random_seed{seed}", shift_cfg("random_shift", seed))["report"].summary["final_return"]
        per_seed.append((seed, learned, random, learned < bar and learned <= random + SHIFT_GAP_TOLERANCE))
    passing = sum(ok for *_, ok in per_seed)
    elapsed = time.perf_counter() - started
    ok = passing >= 3
    detail = "; ".join(f"s{s}: learned {l:.2f} vs random {r:.2f}" for s, l, r, _ in per_seed)
    _announce("shift-attack-effectiveness", ok, f"bar {bar:.3f}; {detail}; {elapsed:.0f}s")
    assert passing >= 3


# -- 9. pretrained degradation ----------------------------------------------------------------------


def test_pretrained_degradation(ckpt_root):
    started = time.perf_counter()
    continuation = LearnerConfig(epsilon_start=0.05, epsilon_min=0.05)
    ok_attack = ok_control = True
    details = []
    for seed in SEEDS:
        ckpt = qstar_checkpoint(GRID, seed, QSTAR_BUDGET_GRID, ckpt_root)
        attack_cfg = dq.ExperimentConfig(
            env=GRID, mode="delay", attacker="learned", episodes=200, eval_every=EVAL_EVERY,
            seed=seed, pretrained_start=ckpt, learner=continuation,
        )
        control_cfg = dq.ExperimentConfig(
            env=GRID, mode="none", episodes=200, eval_every=EVAL_EVERY,
            seed=seed, pretrained_start=ckpt, learner=continuation,
        )
        attacked = run_cached("pretrained", f"attack_seed{seed}", attack_cfg, pretrained=True)["report"]
        control = run_cached("pretrained", f"control_seed{seed}", control_cfg, pretrained=True)["report"]
        start = attacked.summary["start_return"]
        dipped = any(row.eval_return < 0.5 * start for row in attacked.rows)
        held = all(row.eval_return >= 0.9 * start for row in control.rows)
        ok_attack = ok_attack and dipped
        ok_control = ok_control and held
        details.append(f"s{seed}: start {start:.2f}, attacked min {min(r.eval_return for r in attacked.rows):.2f}, "
                       f"control min {min(r.eval_return for r in control.rows):.2f}")
    elapsed = time.perf_counter() - started
    ok = ok_attack and ok_control
    _announce("pretrained-degradation", ok, "; ".join(details) + f"; {elapsed:.0f}s")
    assert ok_attack
    assert ok_control


# -- 10. accounting invariant -------------------------------------------------------------------------


def test_accounting_invariant():
    checked = 0
    for key, entry in sorted(_cache.items()):
        t = entry["report"].summary["totals"]
        assert t["generated"] == t["published"] + t["drops_expiry"] + t["drops_shift"] + t["drops_residual"], key
        checked += 1
    ok = checked > 0
    _announce("accounting-invariant", ok, f"{checked} runs, exact balance in each")
    assert ok
