"""The victim: dueling double-DQN with replay and epsilon-greedy exploration.

The learner consumes whatever reward stream it is handed; nothing in here
knows whether that stream is honest. Update targets follow the double
estimator: the online network selects the bootstrap action, the target
network values it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .envs import EnvSpec, make_env
from .networks import NetworkSpec, QNetwork, TrainTarget, clone, forward, grad_step, init_network
from .rng import derive_seed, substream


@dataclass(frozen=True)
class TransitionTuple:
    """One learner experience as stored; origin_step is the global step at
    which the reward it carries was generated (equals the experience step
    for an honest stream)."""

    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    done: bool
    origin_step: int


class RingReplay:
    """Bounded FIFO replay with O(1) random access."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self._items: list[TransitionTuple] = []
        self._next = 0

    def push(self, item: TransitionTuple) -> None:
        if len(self._items) < self.capacity:
            self._items.append(item)
        else:
            self._items[self._next] = item
            self._next = (self._next + 1) % self.capacity

    def __len__(self) -> int:
        return len(self._items)

    def sample(self, rng: np.random.Generator, k: int) -> list[TransitionTuple]:
        """Uniform without replacement within the batch."""
        if k > len(self._items):
            raise ValueError(f"cannot sample {k} from {len(self._items)} items")
        idx = rng.choice(len(self._items), size=k, replace=False)
        return [self._items[i] for i in idx]

    def items(self) -> list[TransitionTuple]:
        """Stored transitions, oldest first."""
        return self._items[self._next :] + self._items[: self._next]


@dataclass
class LearnerState:
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
    global_step: int = 0
    update_count: int = 0

    @property
    def epsilon(self) -> float:
        """Linear decay from epsilon_start to epsilon_min over decay_steps."""
        if self.epsilon_decay_steps <= 0 or self.global_step >= self.epsilon_decay_steps:
            return self.epsilon_min
        frac = self.global_step / self.epsilon_decay_steps
        return self.epsilon_start + frac * (self.epsilon_min - self.epsilon_start)


def make_learner(
    input_dim: int,
    action_count: int,
    seed: int,
    hidden_layers: tuple[int, ...] = (32, 32),
    dueling: bool = True,
    gamma: float = 0.95,
    learning_rate: float = 0.08,
    batch_size: int = 32,
    replay_capacity: int = 10_000,
    target_sync_period: int = 100,
    epsilon_start: float = 1.0,
    epsilon_min: float = 0.05,
    epsilon_decay_steps: int = 10_000,
) -> LearnerState:
    spec = NetworkSpec(input_dim, tuple(hidden_layers), action_count, dueling)
    online = init_network(spec, derive_seed(seed, "learner-net"))
    return LearnerState(
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


def select_action(ls: LearnerState, state: np.ndarray, rng: np.random.Generator) -> int:
    """Epsilon-greedy over online Q-values; greedy ties go to the lowest index."""
    if rng.random() < ls.epsilon:
        return int(rng.integers(ls.online.spec.action_count))
    return int(np.argmax(forward(ls.online, state)))


def double_targets(
    online: QNetwork,
    target: QNetwork,
    batch: list[TransitionTuple],
    gamma: float,
) -> list[TrainTarget]:
    """Regression targets y = r (terminal) or r + gamma * target(s')[argmax online(s')]."""
    s2 = np.stack([t.next_state for t in batch])
    q_online = forward(online, s2)
    q_target = forward(target, s2)
    picks = np.argmax(q_online, axis=1)
    boot = q_target[np.arange(len(batch)), picks]
    out = []
    for i, t in enumerate(batch):
        y = t.reward if t.done else t.reward + gamma * float(boot[i])
        out.append(TrainTarget(t.state, t.action, y))
    return out


def double_dqn_update(ls: LearnerState, batch: list[TransitionTuple]) -> LearnerState:
    """One gradient step on the double-DQN targets; periodic hard target sync."""
    if not batch:
        raise ValueError("batch must be nonempty")
    targets = double_targets(ls.online, ls.target, batch, ls.gamma)
    ls.online = grad_step(ls.online, targets, ls.learning_rate)
    ls.update_count += 1
    if ls.update_count % ls.target_sync_period == 0:
        ls.target = clone(ls.online)
    return ls


def greedy_rollouts(
    net: QNetwork,
    spec: EnvSpec,
    episodes: int,
    seed: int,
    on_step=None,
) -> float:
    """Mean undiscounted return of the greedy policy on the true environment.

    ``on_step(state_features, action)`` is invoked before each transition,
    which is how success-rate counters observe evaluation behavior.
    """
    if episodes < 1:
        raise ValueError(f"episodes must be >= 1, got {episodes}")
    env = make_env(spec)
    rng = substream(seed, "eval")
    total = 0.0
    for ep in range(episodes):
        state = env.reset(seed)
        while not env.episode_over(state):
            action = int(np.argmax(forward(net, state.features)))
            if on_step is not None:
                on_step(state.features, action)
            res = env.step(state, action, rng)
            total += res.reward
            state = res.next_state
    return total / episodes


def evaluate_policy(ls: LearnerState, spec: EnvSpec, episodes: int, seed: int) -> float:
    return greedy_rollouts(ls.online, spec, episodes, seed)


# -- checkpoints: JSON header + raw float64 little-endian sidecar ------------


def save_checkpoint(path: str | Path, net: QNetwork, hyperparameters: dict, extra: dict | None = None) -> None:
    path = Path(path)
    sidecar = path.with_suffix(".bin")
    header = {
        "format": "qnet-checkpoint-v1",
        "dtype": "float64",
        "byte_order": "little",
        "param_count": net.param_count,
        "network": {
            "input_dim": net.spec.input_dim,
            "hidden_layers": list(net.spec.hidden_layers),
            "action_count": net.spec.action_count,
            "dueling": net.spec.dueling,
        },
        "hyperparameters": hyperparameters,
        "sidecar": sidecar.name,
    }
    if extra:
        header.update(extra)
    path.parent.mkdir(parents=True, exist_ok=True)
    sidecar.write_bytes(net.params.astype("<f8").tobytes())
    path.write_text(json.dumps(header, indent=2))


def load_checkpoint(path: str | Path) -> tuple[QNetwork, dict]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    header = json.loads(path.read_text())
    if header.get("format") != "qnet-checkpoint-v1":
        raise ValueError(f"unrecognized checkpoint format in {path}")
    spec = NetworkSpec(
        input_dim=header["network"]["input_dim"],
        hidden_layers=tuple(header["network"]["hidden_layers"]),
        action_count=header["network"]["action_count"],
        dueling=header["network"]["dueling"],
    )
    raw = (path.parent / header["sidecar"]).read_bytes()
    params = np.frombuffer(raw, dtype="<f8").astype(np.float64)
    if params.size != header["param_count"] or params.size != spec.param_count():
        raise ValueError("checkpoint parameter count does not match its network spec")
    return QNetwork(spec=spec, params=params), header
