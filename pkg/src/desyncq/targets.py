"""Target policies: what a targeted attacker wants, and how success is scored.

A target policy is generated from a clean, near-optimal Q-network: a state
counts as a target state when that network's greedy action falls outside
the attacker's preferred action set, i.e. wherever compliance would be a
behavior change. Success rate is the fraction of target-state visits, during
greedy evaluation, where the learned policy picks a preferred action.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .envs import EnvSpec, make_env, optimal_return
from .learner import LearnerState, TransitionTuple, double_dqn_update, greedy_rollouts, make_learner, select_action
from .networks import QNetwork, forward
from .rng import substream


class PretrainError(RuntimeError):
    """Clean pretraining failed to reach the required evaluation threshold."""


def is_target_state(qstar: QNetwork, state: np.ndarray, target_actions: frozenset[int]) -> bool:
    """True iff the clean-optimal greedy action at ``state`` is outside the set."""
    greedy = int(np.argmax(forward(qstar, state)))
    return greedy not in target_actions


@dataclass(frozen=True)
class TargetPolicy:
    target_actions: frozenset[int]
    qstar: QNetwork
    action_count: int

    def __post_init__(self) -> None:
        if not self.target_actions:
            raise ValueError("target action set must be nonempty")
        if not self.target_actions < set(range(self.action_count)):
            raise ValueError("target action set must be a proper subset of the action space")

    def is_target(self, state: np.ndarray) -> bool:
        return is_target_state(self.qstar, state, self.target_actions)

    def f_hat(self, state: np.ndarray) -> np.ndarray:
        return f_hat(state, self)


def f_hat(state: np.ndarray, target: TargetPolicy) -> np.ndarray:
    """Preferred-action indicator on target states; all-ones elsewhere
    (the attacker is indifferent outside its target states)."""
    if target.is_target(state):
        vec = np.zeros(target.action_count, dtype=np.float64)
        vec[sorted(target.target_actions)] = 1.0
        return vec
    return np.ones(target.action_count, dtype=np.float64)


@dataclass
class SuccessCounter:
    hits: int = 0
    visits: int = 0

    def record(self, compliant: bool) -> None:
        self.visits += 1
        if compliant:
            self.hits += 1


def success_rate(counter: SuccessCounter) -> float | None:
    """hits/visits; None when no target state was ever visited."""
    if counter.hits > counter.visits:
        raise ValueError("hits cannot exceed visits")
    if counter.visits == 0:
        return None
    return counter.hits / counter.visits


def measure_policy(
    ls: LearnerState,
    spec: EnvSpec,
    episodes: int,
    seed: int,
    target: TargetPolicy | None = None,
) -> tuple[float, SuccessCounter | None]:
    """Greedy evaluation return, plus target-compliance counts when a target
    policy is given."""
    counter = SuccessCounter() if target is not None else None

    def on_step(state, action):
        if counter is not None and target.is_target(state):
            counter.record(action in target.target_actions)

    mean_return = greedy_rollouts(ls.online, spec, episodes, seed, on_step=on_step)
    return mean_return, counter


def pretrain_qstar(
    spec: EnvSpec,
    budget: int,
    seed: int,
    eval_episodes: int = 10,
    threshold_fraction: float = 0.9,
    **learner_kwargs,
) -> QNetwork:
    """Train a clean double-DQN for ``budget`` environment steps and return
    its online network, frozen.

    Raises PretrainError if the greedy policy ends below
    ``threshold_fraction`` of the optimal return.
    """
    if budget < 1:
        raise ValueError(f"budget must be >= 1, got {budget}")
    env = make_env(spec)
    ls = make_learner(env.input_dim, env.action_count, seed, gamma=spec.gamma, **learner_kwargs)
    if "epsilon_decay_steps" not in learner_kwargs:
        ls.epsilon_decay_steps = max(1, budget // 2)
    env_rng = substream(seed, "env")
    explore_rng = substream(seed, "learner-explore")
    sample_rng = substream(seed, "learner-sample")
    steps = 0
    while steps < budget:
        state = env.reset(seed)
        while not env.episode_over(state) and steps < budget:
            action = select_action(ls, state.features, explore_rng)
            res = env.step(state, action, env_rng)
            ls.replay.push(
                TransitionTuple(state.features, action, res.reward, res.next_state.features, res.done, steps)
            )
            if len(ls.replay) >= ls.batch_size:
                double_dqn_update(ls, ls.replay.sample(sample_rng, ls.batch_size))
            state = res.next_state
            steps += 1
            ls.global_step = steps
    achieved = greedy_rollouts(ls.online, spec, eval_episodes, seed)
    needed = threshold_fraction * optimal_return(spec)
    if achieved < needed:
        raise PretrainError(
            f"clean pretraining reached {achieved:.3f} after {budget} steps, "
            f"below {threshold_fraction:.0%} of optimal ({needed:.3f})"
        )
    return ls.online
