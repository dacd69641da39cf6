"""The adversary: a dueling double-DQN over disk actions, plus the rule-based
attack and the non-learning baselines.

The learned attacker never sees the learner's parameters, only the pieces
its objectives consume: the current transition, the disk contents, and the
learner's Q-values at the current state. Its per-step training signal is a
proxy for the unobservable end-of-training objective: either the negative
expected Q under the learner's one-step-lookahead policy (untargeted), or
the sign of the cross-entropy improvement toward a target policy.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .disk import Disk
from .learner import LearnerState, RingReplay, TransitionTuple, double_targets
from .networks import NetworkSpec, QNetwork, TrainTarget, clone, forward, grad_step, init_network
from .rng import derive_seed
from .targets import TargetPolicy


@dataclass(frozen=True)
class AttackerObservation:
    """Featurized attacker state: fixed total dimension for a given config."""

    state_features: np.ndarray
    action_onehot: np.ndarray
    current_reward: float
    disk_features: np.ndarray  # (capacity, 2): value and age/max_delay, zero-padded
    learner_q_values: np.ndarray

    def vector(self) -> np.ndarray:
        return np.concatenate(
            [
                self.state_features,
                self.action_onehot,
                np.array([self.current_reward]),
                self.disk_features.ravel(),
                self.learner_q_values,
            ]
        )


def observation_dim(input_dim: int, action_count: int, disk_capacity: int) -> int:
    return input_dim + action_count + 1 + 2 * disk_capacity + action_count


def observe(
    learner: LearnerState,
    state: np.ndarray,
    action: int,
    reward: float,
    disk: Disk,
    now: int,
) -> AttackerObservation:
    """Deterministic featurization of what the adversary can read at one step.

    Empty slots encode as (0, 0); occupied slots carry (value, age/max_delay),
    so presence rides on the value position.
    """
    action_count = learner.online.spec.action_count
    onehot = np.zeros(action_count, dtype=np.float64)
    onehot[action] = 1.0
    feats = np.zeros((disk.capacity, 2), dtype=np.float64)
    for i, cell in enumerate(disk.cells):
        feats[i, 0] = cell.value
        feats[i, 1] = (now - cell.origin_step) / disk.max_delay
    return AttackerObservation(
        state_features=np.asarray(state, dtype=np.float64),
        action_onehot=onehot,
        current_reward=float(reward),
        disk_features=feats,
        learner_q_values=forward(learner.online, state),
    )


@dataclass
class AttackerAgent:
    """Dueling double-DQN over disk indices (delay) or drop indices (shift)."""

    online: QNetwork
    target: QNetwork
    replay: RingReplay
    gamma: float
    learning_rate: float
    batch_size: int
    target_sync_period: int
    epsilon_start: float
    epsilon_min: float
    epsilon_decay_steps: int
    decision_count: int = 0
    update_count: int = 0

    @property
    def epsilon(self) -> float:
        if self.epsilon_decay_steps <= 0:
            return self.epsilon_min
        frac = min(1.0, self.decision_count / self.epsilon_decay_steps)
        return self.epsilon_start + frac * (self.epsilon_min - self.epsilon_start)


@dataclass(frozen=True)
class AttackerTransition:
    obs: np.ndarray
    action: int
    reward: float
    next_obs: np.ndarray
    done: bool


def make_attacker(
    obs_dim: int,
    action_count: int,
    seed: int,
    hidden_layers: tuple[int, ...] = (64, 64),
    dueling: bool = True,
    gamma: float = 0.9,
    learning_rate: float = 0.05,
    batch_size: int = 32,
    replay_capacity: int = 10_000,
    target_sync_period: int = 200,
    epsilon_start: float = 1.0,
    epsilon_min: float = 0.05,
    epsilon_decay_steps: int = 5_000,
) -> AttackerAgent:
    spec = NetworkSpec(obs_dim, tuple(hidden_layers), action_count, dueling)
    online = init_network(spec, derive_seed(seed, "attacker-net"))
    return AttackerAgent(
        online=online,
        target=clone(online),
        replay=RingReplay(replay_capacity),
        gamma=gamma,
        learning_rate=learning_rate,
        batch_size=batch_size,
        target_sync_period=target_sync_period,
        epsilon_start=epsilon_start,
        epsilon_min=epsilon_min,
        epsilon_decay_steps=epsilon_decay_steps,
    )


def choose_action(
    agent: AttackerAgent,
    obs: AttackerObservation | np.ndarray,
    valid_mask: np.ndarray,
    rng: np.random.Generator,
) -> int:
    """Masked epsilon-greedy; greedy ties go to the lowest valid index."""
    valid_mask = np.asarray(valid_mask, dtype=bool)
    valid = np.flatnonzero(valid_mask)
    if valid.size == 0:
        raise ValueError("no valid attacker action")
    vec = obs.vector() if isinstance(obs, AttackerObservation) else np.asarray(obs)
    if rng.random() < agent.epsilon:
        return int(valid[rng.integers(valid.size)])
    q = forward(agent.online, vec)
    q = np.where(valid_mask, q, -np.inf)
    return int(np.argmax(q))


def proxy_q_next(
    learner: LearnerState,
    published: TransitionTuple | list[TransitionTuple],
    state: np.ndarray,
) -> np.ndarray:
    """Learner Q-values at ``state`` after a preview update on the published
    transitions only. The learner itself is never touched."""
    batch = [published] if isinstance(published, TransitionTuple) else list(published)
    preview = clone(learner.online)
    if batch:
        targets = double_targets(preview, learner.target, batch, learner.gamma)
        preview = grad_step(preview, targets, learner.learning_rate)
    return forward(preview, state)


def softmax(q: np.ndarray) -> np.ndarray:
    z = q - np.max(q)
    e = np.exp(z)
    return e / e.sum()


def log_softmax(q: np.ndarray) -> np.ndarray:
    z = q - np.max(q)
    return z - np.log(np.exp(z).sum())


def untargeted_proxy_reward(q_t: np.ndarray, q_tilde: np.ndarray) -> float:
    """Negative expected current Q under the previewed next-step policy.

    Drives the learner's probable next policy toward its currently
    low-valued actions; bounded by [-max(q_t), -min(q_t)].
    """
    q_t = np.asarray(q_t, dtype=np.float64)
    q_tilde = np.asarray(q_tilde, dtype=np.float64)
    if q_t.shape != q_tilde.shape:
        raise ValueError("q_t and q_tilde must have equal length")
    return float(-np.dot(softmax(q_tilde), q_t))


def targeted_proxy_reward(q_t: np.ndarray, q_tilde: np.ndarray, target_vec: np.ndarray) -> float:
    """Sign of the cross-entropy decrease toward the (multi-hot) target policy.

    The target vector is normalized to a distribution, so the loss stays a
    proper cross-entropy when several actions are acceptable.
    """
    target_vec = np.asarray(target_vec, dtype=np.float64)
    total = target_vec.sum()
    if total <= 0:
        raise ValueError("target vector must have at least one set bit")
    p = target_vec / total
    ce_now = -float(np.dot(p, log_softmax(np.asarray(q_t, dtype=np.float64))))
    ce_next = -float(np.dot(p, log_softmax(np.asarray(q_tilde, dtype=np.float64))))
    return float(np.sign(ce_now - ce_next))


def rule_based_choice(
    disk: Disk,
    state: np.ndarray,
    q_t: np.ndarray,
    target: TargetPolicy,
    rng: np.random.Generator,
) -> int:
    """Hand-written targeted attack: reward compliance in target states.

    Target state and the learner currently greedy on a target action: feed
    the best stored reward. Target state and greedy elsewhere: feed the
    worst. Anywhere else: indifferent, pick uniformly. Ties go to the
    oldest cell.
    """
    if not disk.cells:
        raise ValueError("cannot choose from an empty disk")
    if not target.is_target(state):
        return int(rng.integers(len(disk.cells)))
    values = np.array([c.value for c in disk.cells])
    greedy = int(np.argmax(q_t))
    if greedy in target.target_actions:
        return int(np.argmax(values))
    return int(np.argmin(values))


def baseline_random(disk: Disk, rng: np.random.Generator) -> int:
    if not disk.cells:
        raise ValueError("cannot choose from an empty disk")
    return int(rng.integers(len(disk.cells)))


def baseline_fixed_delay(disk: Disk, now: int, delta: int) -> int | None:
    """Index of the cell generated exactly ``delta`` steps ago, if present."""
    for i, cell in enumerate(disk.cells):
        if now - cell.origin_step == delta:
            return i
    return None


def baseline_random_shift(k_max: int, rng: np.random.Generator) -> int:
    return int(rng.integers(k_max + 1))


def attacker_update(agent: AttackerAgent, batch: list[AttackerTransition]) -> AttackerAgent:
    """Double-DQN step on the attacker's own network, mirroring the learner."""
    if not batch:
        raise ValueError("batch must be nonempty")
    as_tuples = [
        TransitionTuple(t.obs, t.action, t.reward, t.next_obs, t.done, origin_step=0)
        for t in batch
    ]
    targets = double_targets(agent.online, agent.target, as_tuples, agent.gamma)
    agent.online = grad_step(agent.online, targets, agent.learning_rate)
    agent.update_count += 1
    if agent.update_count % agent.target_sync_period == 0:
        agent.target = clone(agent.online)
    return agent
