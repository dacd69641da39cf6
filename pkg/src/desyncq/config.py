"""Experiment configuration: a strict, JSON-loadable key/value tree.

Unknown keys are errors, as are combinations the run loops cannot honor.
The schema is documented field by field in README.md.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

from .envs import EnvSpec

MODES = ("none", "delay", "shift")
OBJECTIVES = ("untargeted", "targeted", "rule")
ATTACKERS = ("learned", "random", "fixed_delay", "random_shift", "passthrough")
DELAY_ATTACKERS = ("learned", "random", "fixed_delay", "passthrough")
SHIFT_ATTACKERS = ("learned", "random_shift")


class ConfigError(ValueError):
    pass


@dataclass
class LearnerConfig:
    hidden_layers: tuple[int, ...] = (32, 32)
    dueling: bool = True
    learning_rate: float = 0.08
    batch_size: int = 32
    replay_capacity: int = 10_000
    target_sync_period: int = 100
    epsilon_start: float = 1.0
    epsilon_min: float = 0.05
    epsilon_decay_fraction: float = 0.5


@dataclass
class AttackerConfig:
    hidden_layers: tuple[int, ...] = (64, 64)
    dueling: bool = True
    gamma: float = 0.9
    learning_rate: float = 0.05
    batch_size: int = 32
    replay_capacity: int = 10_000
    target_sync_period: int = 200
    epsilon_start: float = 1.0
    epsilon_min: float = 0.05
    epsilon_decay_fraction: float = 0.5


@dataclass
class ExperimentConfig:
    env: EnvSpec
    mode: str = "none"
    objective: str = "untargeted"
    attacker: str = "learned"
    max_delay: int = 8  # delta: upper bound on publish - origin
    disk_size: int = 8  # d: disk capacity
    drop_index_max: int = 4  # K: largest shift-mode drop index
    episodes: int = 300
    eval_every: int = 1
    eval_episodes: int = 10
    seed: int = 0
    learner: LearnerConfig = field(default_factory=LearnerConfig)
    attacker_params: AttackerConfig = field(default_factory=AttackerConfig)
    pretrained_start: str | None = None
    qstar_checkpoint: str | None = None
    qstar_budget_steps: int = 40_000
    target_actions: tuple[int, ...] | None = None  # None: the env's stay action
    trace: bool = False

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.objective not in OBJECTIVES:
            raise ConfigError(f"objective must be one of {OBJECTIVES}, got {self.objective!r}")
        if self.attacker not in ATTACKERS:
            raise ConfigError(f"attacker must be one of {ATTACKERS}, got {self.attacker!r}")
        if self.max_delay < 1:
            raise ConfigError(f"max_delay must be >= 1, got {self.max_delay}")
        if self.disk_size < 1:
            raise ConfigError(f"disk_size must be >= 1, got {self.disk_size}")
        if self.drop_index_max >= self.disk_size:
            raise ConfigError(
                f"drop_index_max ({self.drop_index_max}) must be < disk_size ({self.disk_size})"
            )
        if self.drop_index_max < 0:
            raise ConfigError(f"drop_index_max must be >= 0, got {self.drop_index_max}")
        if self.mode == "delay" and self.attacker not in DELAY_ATTACKERS:
            raise ConfigError(f"delay mode supports attackers {DELAY_ATTACKERS}, got {self.attacker!r}")
        if self.mode == "delay" and self.attacker == "fixed_delay" and self.disk_size < self.max_delay + 1:
            raise ConfigError(
                "fixed_delay holds every reward to age max_delay, which needs "
                "disk_size >= max_delay + 1"
            )
        if self.mode == "shift":
            if self.attacker not in SHIFT_ATTACKERS:
                raise ConfigError(f"shift mode supports attackers {SHIFT_ATTACKERS}, got {self.attacker!r}")
            if self.disk_size > self.max_delay + 1:
                raise ConfigError(
                    "shift mode needs disk_size <= max_delay + 1, otherwise the disk can never fill"
                )
        if self.objective in ("targeted", "rule"):
            if self.mode == "none":
                raise ConfigError(f"objective {self.objective!r} requires an attack mode")
            if self.target_actions is None and not self.env.include_noop:
                raise ConfigError(
                    "targeted objectives default to the stay action: set env.include_noop "
                    "or name target_actions explicitly"
                )
        if self.objective == "rule":
            if self.mode != "delay":
                raise ConfigError("the rule-based attack is a delay-mode strategy")
            if self.attacker != "learned":
                raise ConfigError("objective 'rule' replaces the learned attack policy; set attacker='learned'")
        if self.episodes < 1:
            raise ConfigError(f"episodes must be >= 1, got {self.episodes}")
        if self.eval_every < 1:
            raise ConfigError(f"eval_every must be >= 1, got {self.eval_every}")
        if self.eval_episodes < 1:
            raise ConfigError(f"eval_episodes must be >= 1, got {self.eval_episodes}")
        for name in ("learning_rate",):
            if getattr(self.learner, name) <= 0 or getattr(self.attacker_params, name) <= 0:
                raise ConfigError(f"{name} must be > 0")

    def to_dict(self) -> dict:
        return asdict(self)


def _build(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a table, got {type(data).__name__}")
    known = {f.name: f for f in fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    kwargs: dict[str, Any] = {}
    for key, value in data.items():
        if key == "env":
            kwargs[key] = _build(EnvSpec, value, f"{where}.env")
        elif key == "learner":
            kwargs[key] = _build(LearnerConfig, value, f"{where}.learner")
        elif key == "attacker_params":
            kwargs[key] = _build(AttackerConfig, value, f"{where}.attacker_params")
        elif key in ("hidden_layers", "target_actions") and value is not None:
            kwargs[key] = tuple(value)
        else:
            kwargs[key] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"{where}: {err}") from err


def config_from_dict(data: dict) -> ExperimentConfig:
    if "env" not in data:
        raise ConfigError("config requires an 'env' table")
    cfg = _build(ExperimentConfig, data, "config")
    cfg.validate()
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}: not valid JSON: {err}") from err
    return config_from_dict(data)
