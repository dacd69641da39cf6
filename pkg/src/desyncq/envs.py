"""Desk-scale deterministic MDPs with one-hot state features.

Two environments:

* ``gridworld``: width x height cells. The agent starts in a corner and is
  rewarded +1 for entering the goal (terminal), -1 for entering the pit
  (terminal) and -0.01 for every other step, walls bounce. The step
  penalty makes the reward stream dense, so every step gives an attacker
  something to reschedule.
* ``cliff_chain``: cells 0..L-1 along a ledge. ``right`` walks toward the
  goal at the far end (+1, terminal), ``down`` falls off the ledge (-1,
  back to the start, episode continues), everything else pays 0. Falls
  put recurrent -1 rewards inside episodes, which is what value-selective
  attacks need to work with.

Both environments optionally grow a trailing ``stay`` action so that a
"do not move" target policy can be expressed.

Transitions are pure functions of (state, action, generator), and the full
state space is small enough to enumerate, so exact dynamic-programming
oracles are cheap.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

STEP_PENALTY = -0.01


@dataclass(frozen=True)
class EnvSpec:
    name: str  # "gridworld" | "cliff_chain"
    width: int
    height: int = 1
    horizon: int = 100
    gamma: float = 0.95
    slip_probability: float = 0.0
    include_noop: bool = False

    def __post_init__(self) -> None:
        if self.name not in ("gridworld", "cliff_chain"):
            raise ValueError(f"unknown environment {self.name!r}")
        if self.width < 2 or (self.name == "gridworld" and self.height < 2):
            raise ValueError("environment too small")
        if self.horizon < 0:
            raise ValueError(f"horizon must be >= 0, got {self.horizon}")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must be in [0, 1), got {self.gamma}")
        if not 0.0 <= self.slip_probability <= 1.0:
            raise ValueError(f"slip_probability must be in [0, 1], got {self.slip_probability}")


@dataclass(frozen=True)
class EnvState:
    features: np.ndarray
    cell: int
    step_index: int
    terminal: bool


@dataclass(frozen=True)
class StepResult:
    next_state: EnvState
    reward: float
    done: bool


class _Env:
    """Shared mechanics; subclasses define cells and the move rule."""

    spec: EnvSpec
    input_dim: int
    action_count: int
    noop_action: int | None

    def _features(self, cell: int) -> np.ndarray:
        f = np.zeros(self.input_dim, dtype=np.float64)
        f[cell] = 1.0
        return f

    def _state(self, cell: int, step_index: int, terminal: bool) -> EnvState:
        return EnvState(self._features(cell), cell, step_index, terminal)

    def reset(self, seed: int) -> EnvState:
        # Start distribution is a point mass; the seed is accepted for
        # interface symmetry but cannot change the outcome.
        del seed
        return self._state(self.start_cell, 0, False)

    def step(self, state: EnvState, action: int, rng: np.random.Generator) -> StepResult:
        if state.terminal:
            raise ValueError("step on terminal state")
        if state.step_index >= self.spec.horizon:
            raise ValueError("episode horizon exhausted")
        if not 0 <= action < self.action_count:
            raise ValueError(f"invalid action {action}")
        p = self.spec.slip_probability
        if p > 0.0 and rng.random() < p:
            action = int(rng.integers(self.action_count))
        cell, reward, terminal = self._move(state.cell, action)
        return StepResult(self._state(cell, state.step_index + 1, terminal), reward, terminal)

    def _move(self, cell: int, action: int) -> tuple[int, float, bool]:
        raise NotImplementedError

    def episode_over(self, state: EnvState) -> bool:
        return state.terminal or state.step_index >= self.spec.horizon

    def enumerate_cells(self) -> range:
        return range(self.input_dim)

    def optimal_return(self) -> float:
        """Exact optimal undiscounted episodic return by backward induction.

        Only defined for deterministic dynamics; raises if the goal cannot
        be reached from the start within the horizon.
        """
        if self.spec.slip_probability != 0.0:
            raise ValueError("optimal_return requires slip_probability = 0")
        n = self.input_dim
        nxt = np.zeros((n, self.action_count), dtype=np.int64)
        rew = np.zeros((n, self.action_count), dtype=np.float64)
        term = np.zeros((n, self.action_count), dtype=bool)
        for c in self.enumerate_cells():
            for a in range(self.action_count):
                nxt[c, a], rew[c, a], term[c, a] = self._move(c, a)
        if not self._goal_reachable(nxt, rew, term):
            raise ValueError("goal is unreachable from the start within the horizon")
        v = np.zeros(n, dtype=np.float64)
        for _ in range(self.spec.horizon):
            cont = np.where(term, 0.0, v[nxt])
            v = np.max(rew + cont, axis=1)
        return float(v[self.start_cell])

    def _goal_reachable(self, nxt: np.ndarray, rew: np.ndarray, term: np.ndarray) -> bool:
        # BFS over non-terminal moves; a goal entry is a terminal move paying +1
        goal_moves = term & np.isclose(rew, 1.0)
        frontier = [self.start_cell]
        seen = {self.start_cell}
        for depth in range(self.spec.horizon):
            if any(goal_moves[c].any() for c in frontier):
                return True
            nxt_frontier = []
            for c in frontier:
                for a in range(self.action_count):
                    nc = int(nxt[c, a])
                    if not term[c, a] and nc not in seen:
                        seen.add(nc)
                        nxt_frontier.append(nc)
            frontier = nxt_frontier
            if not frontier:
                break
        return False


class GridWorld(_Env):
    # actions: 0 up, 1 down, 2 left, 3 right, optional 4 stay
    UP, DOWN, LEFT, RIGHT = 0, 1, 2, 3

    def __init__(self, spec: EnvSpec):
        self.spec = spec
        self.input_dim = spec.width * spec.height
        self.action_count = 5 if spec.include_noop else 4
        self.noop_action = 4 if spec.include_noop else None
        self.start_cell = self._index(0, 0)
        # Goal sits half way up the far column: 5x8 puts it 8 moves out,
        # so the optimal return is 1 - 7 * 0.01 = 0.93.
        self.goal_cell = self._index(spec.width - 1, spec.height // 2)
        self.pit_cell = self._index(spec.width // 2, spec.height // 4)
        if len({self.start_cell, self.goal_cell, self.pit_cell}) != 3:
            raise ValueError("degenerate layout: start, goal and pit must be distinct")

    def _index(self, x: int, y: int) -> int:
        return y * self.spec.width + x

    def _move(self, cell: int, action: int) -> tuple[int, float, bool]:
        w, h = self.spec.width, self.spec.height
        x, y = cell % w, cell // w
        if action == self.UP:
            y = min(h - 1, y + 1)
        elif action == self.DOWN:
            y = max(0, y - 1)
        elif action == self.LEFT:
            x = max(0, x - 1)
        elif action == self.RIGHT:
            x = min(w - 1, x + 1)
        # noop: stay in place
        nxt = self._index(x, y)
        if nxt == self.goal_cell:
            return nxt, 1.0, True
        if nxt == self.pit_cell:
            return nxt, -1.0, True
        return nxt, STEP_PENALTY, False


class CliffChain(_Env):
    # actions: 0 left, 1 right, 2 down (fall off the ledge), optional 3 stay
    LEFT, RIGHT, DOWN = 0, 1, 2

    def __init__(self, spec: EnvSpec):
        self.spec = spec
        self.input_dim = spec.width
        self.action_count = 4 if spec.include_noop else 3
        self.noop_action = 3 if spec.include_noop else None
        self.start_cell = 0
        self.goal_cell = spec.width - 1

    def _move(self, cell: int, action: int) -> tuple[int, float, bool]:
        if action == self.DOWN:
            return self.start_cell, -1.0, False  # fall, climb back up, walk on
        if action == self.LEFT:
            nxt = max(0, cell - 1)
        elif action == self.RIGHT:
            nxt = min(self.goal_cell, cell + 1)
        else:
            nxt = cell
        if nxt == self.goal_cell:
            return nxt, 1.0, True
        return nxt, 0.0, False


def make_env(spec: EnvSpec) -> _Env:
    if spec.name == "gridworld":
        return GridWorld(spec)
    return CliffChain(spec)


def reset(spec: EnvSpec, seed: int) -> EnvState:
    return make_env(spec).reset(seed)


def step(spec: EnvSpec, state: EnvState, action: int, rng: np.random.Generator) -> StepResult:
    return make_env(spec).step(state, action, rng)


def optimal_return(spec: EnvSpec) -> float:
    return make_env(spec).optimal_return()
