"""End-to-end orchestration of the attack loops.

One run owns one seed and five named random substreams (environment,
learner exploration, learner replay sampling, attacker exploration,
attacker replay sampling), so configurations that differ only in the
attacker consume identical draws everywhere else. That is what lets a
pass-through attacker reproduce unattacked training bit for bit.

Per-episode reward accounting is enforced here: every generated reward is
exactly one of published, expired, shift-dropped, or residual at episode
end.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .attacker import (
    AttackerAgent,
    AttackerTransition,
    attacker_update,
    baseline_fixed_delay,
    baseline_random,
    baseline_random_shift,
    choose_action,
    make_attacker,
    observation_dim,
    observe,
    proxy_q_next,
    rule_based_choice,
    targeted_proxy_reward,
    untargeted_proxy_reward,
)
from .config import AttackerConfig, ExperimentConfig, LearnerConfig
from .disk import RewardCell, StreamItem, TraceWriter, empty_disk, evict_expired, publish_delay, publish_shift, push, read_trace
from .envs import make_env, optimal_return
from .learner import (
    LearnerState,
    TransitionTuple,
    double_dqn_update,
    greedy_rollouts,
    load_checkpoint,
    make_learner,
    save_checkpoint,
    select_action,
)
from .networks import clone, forward
from .rng import derive_seed, substream
from .targets import TargetPolicy, f_hat, measure_policy, pretrain_qstar, success_rate

METRICS_HEADER = "episode,eval_return,success_rate,drops_expiry,drops_shift,drops_residual,mean_delay"


class CheckpointError(RuntimeError):
    pass


@dataclass(frozen=True)
class MetricsRow:
    episode: int
    eval_return: float
    success_rate: float | None
    drops_expiry: int
    drops_shift: int
    drops_residual: int
    mean_delay: float | None


@dataclass
class RunReport:
    rows: list[MetricsRow]
    summary: dict

    def deterministic_summary(self) -> dict:
        """Summary without wall time, for run-to-run equality checks."""
        return {k: v for k, v in self.summary.items() if k != "wall_time_s"}


@dataclass
class _Window:
    """Counters accumulated between consecutive metric rows."""

    expiry: int = 0
    shift: int = 0
    residual: int = 0
    delay_sum: int = 0
    delay_n: int = 0

    def mean_delay(self) -> float | None:
        return self.delay_sum / self.delay_n if self.delay_n else None

    def reset(self) -> None:
        self.expiry = self.shift = self.residual = self.delay_sum = self.delay_n = 0


class _Runner:
    def __init__(self, cfg: ExperimentConfig, trace_path: str | Path | None, probe=None):
        cfg.validate()
        self.cfg = cfg
        self.env = make_env(cfg.env)
        self.probe = probe
        seed = cfg.seed

        self.env_rng = substream(seed, "env")
        self.explore_rng = substream(seed, "learner-explore")
        self.sample_rng = substream(seed, "learner-sample")
        self.att_explore_rng = substream(seed, "attacker-explore")
        self.att_sample_rng = substream(seed, "attacker-sample")

        lc: LearnerConfig = cfg.learner
        horizon = cfg.env.horizon
        self.learner = make_learner(
            self.env.input_dim,
            self.env.action_count,
            seed,
            hidden_layers=lc.hidden_layers,
            dueling=lc.dueling,
            gamma=cfg.env.gamma,
            learning_rate=lc.learning_rate,
            batch_size=lc.batch_size,
            replay_capacity=lc.replay_capacity,
            target_sync_period=lc.target_sync_period,
            epsilon_start=lc.epsilon_start,
            epsilon_min=lc.epsilon_min,
            epsilon_decay_steps=max(1, int(lc.epsilon_decay_fraction * cfg.episodes * horizon)),
        )

        self.start_return: float | None = None
        if cfg.pretrained_start is not None:
            self._load_pretrained(cfg.pretrained_start)

        self.target: TargetPolicy | None = None
        if cfg.objective in ("targeted", "rule"):
            self.target = self._build_target_policy()

        self.agent: AttackerAgent | None = None
        if cfg.mode != "none" and cfg.attacker == "learned" and cfg.objective != "rule":
            ac: AttackerConfig = cfg.attacker_params
            action_count = cfg.disk_size if cfg.mode == "delay" else cfg.drop_index_max + 1
            decisions = cfg.episodes * horizon if cfg.mode == "delay" else cfg.episodes * horizon // cfg.disk_size
            self.agent = make_attacker(
                observation_dim(self.env.input_dim, self.env.action_count, cfg.disk_size),
                action_count,
                seed,
                hidden_layers=ac.hidden_layers,
                dueling=ac.dueling,
                gamma=ac.gamma,
                learning_rate=ac.learning_rate,
                batch_size=ac.batch_size,
                replay_capacity=ac.replay_capacity,
                target_sync_period=ac.target_sync_period,
                epsilon_start=ac.epsilon_start,
                epsilon_min=ac.epsilon_min,
                epsilon_decay_steps=max(1, int(ac.epsilon_decay_fraction * decisions)),
            )

        self.trace = TraceWriter(trace_path) if trace_path is not None else None
        self.window = _Window()
        self.totals = {"generated": 0, "published": 0, "drops_expiry": 0, "drops_shift": 0, "drops_residual": 0}
        self.rows: list[MetricsRow] = []
        self.fill_target = min(cfg.disk_size, cfg.max_delay + 1)
        self.pending: tuple[np.ndarray, int, float] | None = None

    def _load_pretrained(self, path: str) -> None:
        net, _header = load_checkpoint(path)
        if net.spec.input_dim != self.env.input_dim or net.spec.action_count != self.env.action_count:
            raise CheckpointError(
                f"checkpoint network ({net.spec.input_dim} in, {net.spec.action_count} actions) "
                f"does not fit the configured environment"
            )
        achieved = greedy_rollouts(net, self.cfg.env, self.cfg.eval_episodes, derive_seed(self.cfg.seed, "ckpt-gate"))
        needed = 0.9 * optimal_return(self.cfg.env)
        if achieved < needed:
            raise CheckpointError(
                f"checkpoint evaluates to {achieved:.3f}, below the 90%-of-optimal gate ({needed:.3f})"
            )
        self.start_return = achieved
        self.learner.online = clone(net)
        self.learner.target = clone(net)

    def _build_target_policy(self) -> TargetPolicy:
        cfg = self.cfg
        if cfg.qstar_checkpoint is not None:
            qstar, _ = load_checkpoint(cfg.qstar_checkpoint)
            if qstar.spec.input_dim != self.env.input_dim or qstar.spec.action_count != self.env.action_count:
                raise CheckpointError("target-policy checkpoint does not fit the configured environment")
        else:
            qstar = pretrain_qstar(cfg.env, cfg.qstar_budget_steps, derive_seed(cfg.seed, "qstar"))
        if cfg.target_actions is not None:
            actions = frozenset(int(a) for a in cfg.target_actions)
        else:
            actions = frozenset({self.env.noop_action})
        return TargetPolicy(actions, qstar, self.env.action_count)

    # -- shared bookkeeping ---------------------------------------------------

    def _publish_bookkeeping(self, items: list[StreamItem]) -> None:
        for it in items:
            self.totals["published"] += 1
            self.window.delay_sum += it.publish_step - it.origin_step
            self.window.delay_n += 1
        self.ep_published += len(items)

    def _maybe_learner_update(self) -> None:
        ls = self.learner
        if len(ls.replay) >= ls.batch_size:
            double_dqn_update(ls, ls.replay.sample(self.sample_rng, ls.batch_size))

    def _attacker_learn(self, obs_vec: np.ndarray, action: int, reward: float) -> None:
        """Finalize the previous decision's transition and queue this one."""
        agent = self.agent
        if self.pending is not None:
            p_obs, p_act, p_rew = self.pending
            agent.replay.push(AttackerTransition(p_obs, p_act, p_rew, obs_vec, False))
        self.pending = (obs_vec, action, reward)
        agent.decision_count += 1
        if len(agent.replay) >= agent.batch_size:
            attacker_update(agent, agent.replay.sample(self.att_sample_rng, agent.batch_size))

    def _close_pending(self) -> None:
        if self.pending is not None:
            p_obs, p_act, p_rew = self.pending
            terminal_obs = np.zeros_like(p_obs)
            self.agent.replay.push(AttackerTransition(p_obs, p_act, p_rew, terminal_obs, True))
            self.pending = None

    def _proxy_reward(self, q_t: np.ndarray, q_tilde: np.ndarray, state: np.ndarray) -> float:
        if self.cfg.objective == "targeted":
            return targeted_proxy_reward(q_t, q_tilde, f_hat(state, self.target))
        return untargeted_proxy_reward(q_t, q_tilde)

    # -- episode loops ---------------------------------------------------------

    def run_none_episode(self, episode: int) -> None:
        env, ls = self.env, self.learner
        state = env.reset(self.cfg.seed)
        while not env.episode_over(state):
            t = ls.global_step
            action = select_action(ls, state.features, self.explore_rng)
            res = env.step(state, action, self.env_rng)
            self.totals["generated"] += 1
            self.ep_generated += 1
            ls.replay.push(
                TransitionTuple(state.features, action, res.reward, res.next_state.features, res.done, t)
            )
            self.totals["published"] += 1  # honest stream: delivered immediately
            self.ep_published += 1
            self.window.delay_n += 1
            self._maybe_learner_update()
            if self.probe is not None:
                self.probe(ls)
            ls.global_step += 1
            state = res.next_state

    def run_delay_episode(self, episode: int) -> None:
        cfg, env, ls = self.cfg, self.env, self.learner
        disk = empty_disk(cfg.disk_size, cfg.max_delay)
        state = env.reset(cfg.seed)
        attack_active = cfg.attacker == "passthrough"
        fixed_buffer: dict[int, tuple[np.ndarray, int, np.ndarray, bool]] = {}

        while not env.episode_over(state):
            t = ls.global_step
            action = select_action(ls, state.features, self.explore_rng)
            res = env.step(state, action, self.env_rng)
            self.totals["generated"] += 1
            self.ep_generated += 1

            disk = push(disk, RewardCell(res.reward, t), t)
            disk, expired = evict_expired(disk, t)
            self.totals["drops_expiry"] += len(expired)
            self.window.expiry += len(expired)
            self.ep_expired += len(expired)

            idx: int | None = None
            obs = None
            q_t = None
            if cfg.attacker == "passthrough":
                idx = len(disk.cells) - 1
            elif cfg.attacker == "fixed_delay":
                fixed_buffer[t] = (state.features, action, res.next_state.features, res.done)
                idx = baseline_fixed_delay(disk, t, cfg.max_delay)
            else:
                if not attack_active and len(disk.cells) >= self.fill_target:
                    attack_active = True
                if attack_active:
                    if cfg.objective == "rule":
                        q_t = forward(ls.online, state.features)
                        idx = rule_based_choice(disk, state.features, q_t, self.target, self.att_explore_rng)
                    elif cfg.attacker == "learned":
                        obs = observe(ls, state.features, action, res.reward, disk, t)
                        q_t = obs.learner_q_values
                        mask = np.arange(cfg.disk_size) < len(disk.cells)
                        idx = choose_action(self.agent, obs, mask, self.att_explore_rng)
                    else:  # random baseline
                        idx = baseline_random(disk, self.att_explore_rng)

            published: list[StreamItem] = []
            stored: TransitionTuple | None = None
            if idx is not None:
                origin = disk.cells[idx].origin_step
                value, disk = publish_delay(disk, idx, t)
                published.append(StreamItem(value, origin, t))
                self._publish_bookkeeping(published)
                if cfg.attacker == "fixed_delay":
                    bs, ba, bs2, bdone = fixed_buffer.pop(origin)
                    stored = TransitionTuple(bs, ba, value, bs2, bdone, origin)
                else:
                    stored = TransitionTuple(
                        state.features, action, value, res.next_state.features, res.done, origin
                    )
                ls.replay.push(stored)

            if obs is not None:
                # proxy preview must see the pre-update learner
                q_tilde = proxy_q_next(ls, stored, state.features)
                reward_att = self._proxy_reward(q_t, q_tilde, state.features)
                self._attacker_learn(obs.vector(), idx, reward_att)

            self._maybe_learner_update()

            if self.trace is not None and (published or expired):
                self.trace.step(t, episode, idx, published, len(expired), 0)

            if self.probe is not None:
                self.probe(ls)
            ls.global_step += 1
            state = res.next_state

        residual = len(disk.cells)
        self.totals["drops_residual"] += residual
        self.window.residual += residual
        self.ep_residual += residual
        self._close_pending()

    def run_shift_episode(self, episode: int) -> None:
        cfg, env, ls = self.cfg, self.env, self.learner
        disk = empty_disk(cfg.disk_size, cfg.max_delay)
        state = env.reset(cfg.seed)
        buffer: list[tuple[np.ndarray, int, np.ndarray, bool]] = []

        while not env.episode_over(state):
            t = ls.global_step
            action = select_action(ls, state.features, self.explore_rng)
            res = env.step(state, action, self.env_rng)
            self.totals["generated"] += 1
            self.ep_generated += 1

            disk = push(disk, RewardCell(res.reward, t), t)
            buffer.append((state.features, action, res.next_state.features, res.done))

            if disk.full:
                obs = None
                q_t = None
                if cfg.attacker == "learned":
                    obs = observe(ls, state.features, action, res.reward, disk, t)
                    q_t = obs.learner_q_values
                    mask = np.ones(cfg.drop_index_max + 1, dtype=bool)
                    drop = choose_action(self.agent, obs, mask, self.att_explore_rng)
                else:
                    drop = baseline_random_shift(cfg.drop_index_max, self.att_explore_rng)

                cells, disk = publish_shift(disk, drop, cfg.drop_index_max)
                self.totals["drops_shift"] += drop + 1
                self.window.shift += drop + 1
                self.ep_shift_dropped += drop + 1

                # arrival-order pairing: the m released rewards meet the m
                # oldest pending transitions; the rest of the buffer is spent
                published = [StreamItem(c.value, c.origin_step, t) for c in cells]
                self._publish_bookkeeping(published)
                stored_batch = []
                for j, cell in enumerate(cells):
                    bs, ba, bs2, bdone = buffer[j]
                    tt = TransitionTuple(bs, ba, cell.value, bs2, bdone, cell.origin_step)
                    ls.replay.push(tt)
                    stored_batch.append(tt)

                if obs is not None:
                    q_tilde = proxy_q_next(ls, stored_batch, state.features)
                    reward_att = self._proxy_reward(q_t, q_tilde, state.features)
                    self._attacker_learn(obs.vector(), drop, reward_att)

                for _ in range(len(stored_batch)):
                    self._maybe_learner_update()

                if self.trace is not None:
                    self.trace.step(t, episode, drop, published, 0, drop + 1)
                buffer.clear()

            if self.probe is not None:
                self.probe(ls)
            ls.global_step += 1
            state = res.next_state

        residual = len(disk.cells)
        self.totals["drops_residual"] += residual
        self.window.residual += residual
        self.ep_residual += residual
        self._close_pending()

    # -- top level ---------------------------------------------------------

    def run(self) -> RunReport:
        cfg = self.cfg
        started = time.perf_counter()
        episode_fn = {
            "none": self.run_none_episode,
            "delay": self.run_delay_episode,
            "shift": self.run_shift_episode,
        }[cfg.mode]

        for episode in range(cfg.episodes):
            self.ep_generated = self.ep_published = 0
            self.ep_expired = self.ep_shift_dropped = self.ep_residual = 0
            episode_fn(episode)

            accounted = self.ep_published + self.ep_expired + self.ep_shift_dropped + self.ep_residual
            if cfg.mode != "none" and accounted != self.ep_generated:
                raise AssertionError(
                    f"episode {episode}: reward accounting broke "
                    f"({self.ep_generated} generated vs {accounted} accounted)"
                )
            if self.trace is not None:
                self.trace.episode_end(
                    episode, self.ep_generated, self.ep_published, self.ep_expired,
                    self.ep_shift_dropped, self.ep_residual,
                )

            if (episode + 1) % cfg.eval_every == 0:
                mean_return, counter = measure_policy(
                    self.learner, cfg.env, cfg.eval_episodes,
                    derive_seed(cfg.seed, f"eval-{episode}"), self.target,
                )
                self.rows.append(
                    MetricsRow(
                        episode=episode,
                        eval_return=mean_return,
                        success_rate=success_rate(counter) if counter is not None else None,
                        drops_expiry=self.window.expiry,
                        drops_shift=self.window.shift,
                        drops_residual=self.window.residual,
                        mean_delay=self.window.mean_delay(),
                    )
                )
                self.window.reset()

        if self.trace is not None:
            self.trace.close()

        final = self.rows[-1] if self.rows else None
        summary = {
            "mode": cfg.mode,
            "objective": cfg.objective,
            "attacker": cfg.attacker,
            "episodes": cfg.episodes,
            "final_return": final.eval_return if final else None,
            "final_success_rate": final.success_rate if final else None,
            "start_return": self.start_return,
            "totals": dict(self.totals),
            "wall_time_s": time.perf_counter() - started,
        }
        return RunReport(rows=self.rows, summary=summary)


def run_experiment(
    cfg: ExperimentConfig,
    out_dir: str | Path | None = None,
    trace_path: str | Path | None = None,
    probe=None,
) -> RunReport:
    """Execute one configured run; optionally persist metrics, summary and trace.

    ``probe(learner)`` is invoked after every training step; tests use it to
    fingerprint parameter trajectories.
    """
    if trace_path is None and cfg.trace:
        if out_dir is None:
            raise ValueError("cfg.trace requires an output directory or explicit trace_path")
        trace_path = Path(out_dir) / "trace.log"
    runner = _Runner(cfg, trace_path, probe=probe)
    report = runner.run()
    if out_dir is not None:
        write_outputs(report, cfg, out_dir)
        # the end-of-training Q-network, for offline inspection
        save_checkpoint(
            Path(out_dir) / "learner_final.json",
            runner.learner.online,
            {"learning_rate": cfg.learner.learning_rate, "gamma": cfg.env.gamma},
            extra={"final_return": report.summary["final_return"]},
        )
    return report


def run_pretrained_attack(cfg: ExperimentConfig, out_dir: str | Path | None = None,
                          trace_path: str | Path | None = None) -> RunReport:
    """Continue training a checkpointed near-optimal learner under the
    configured attack; the checkpoint must pass the 90%-of-optimal gate."""
    if cfg.pretrained_start is None:
        raise ValueError("run_pretrained_attack requires cfg.pretrained_start")
    return run_experiment(cfg, out_dir=out_dir, trace_path=trace_path)


def write_outputs(report: RunReport, cfg: ExperimentConfig, out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with (out / "metrics.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_HEADER.split(","))
        for row in report.rows:
            writer.writerow(
                [
                    row.episode,
                    f"{row.eval_return:.6f}",
                    "" if row.success_rate is None else f"{row.success_rate:.6f}",
                    row.drops_expiry,
                    row.drops_shift,
                    row.drops_residual,
                    "" if row.mean_delay is None else f"{row.mean_delay:.6f}",
                ]
            )
    payload = dict(report.summary)
    payload["config"] = cfg.to_dict()
    (out / "summary.json").write_text(json.dumps(payload, indent=2))


def verify_stream(trace_path: str | Path, mode: str, delta: int) -> dict:
    """Audit a trace: delay-bound violations and origin-order violations.

    A secure time-stamp checker corresponds to the order count: an
    order-preserving (shift) attack must produce zero.
    """
    if mode not in ("delay", "shift"):
        raise ValueError(f"mode must be 'delay' or 'shift', got {mode!r}")
    items = 0
    delay_violations = 0
    order_violations = 0
    last_origin: int | None = None
    for rec in read_trace(trace_path):
        if rec["type"] != "step":
            continue
        for value, origin, published_at in rec["published"]:
            del value
            items += 1
            lag = published_at - origin
            if lag < 0 or lag > delta:
                delay_violations += 1
            if last_origin is not None and origin <= last_origin:
                order_violations += 1
            last_origin = origin
    return {
        "items": items,
        "delay_violations": delay_violations,
        "order_violations": order_violations,
    }
