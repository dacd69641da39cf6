"""desyncq: reward-stream timing attacks on desk-scale deep Q-learning.

A learner DQN trains on small deterministic environments while an attacker
reorders or shifts its reward stream through a bounded buffer. The library
exposes each piece (networks, environments, learner, disk mechanics,
attacker policies, target policies) plus a harness that wires them into
reproducible experiments.
"""

from .attacker import (
    AttackerAgent,
    AttackerObservation,
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
    softmax,
    targeted_proxy_reward,
    untargeted_proxy_reward,
)
from .config import (
    AttackerConfig,
    ConfigError,
    ExperimentConfig,
    LearnerConfig,
    config_from_dict,
    load_config,
)
from .disk import (
    Disk,
    RewardCell,
    StreamItem,
    empty_disk,
    evict_expired,
    publish_delay,
    publish_shift,
    push,
    read_trace,
)
from .envs import EnvSpec, EnvState, StepResult, make_env, optimal_return
from .harness import (
    CheckpointError,
    MetricsRow,
    RunReport,
    run_experiment,
    run_pretrained_attack,
    verify_stream,
    write_outputs,
)
from .learner import (
    LearnerState,
    RingReplay,
    TransitionTuple,
    double_dqn_update,
    evaluate_policy,
    load_checkpoint,
    make_learner,
    save_checkpoint,
    select_action,
)
from .networks import (
    NetworkSpec,
    QNetwork,
    TrainTarget,
    clone,
    forward,
    grad_step,
    init_network,
)
from .rng import derive_seed, substream
from .targets import (
    PretrainError,
    SuccessCounter,
    TargetPolicy,
    f_hat,
    is_target_state,
    measure_policy,
    pretrain_qstar,
    success_rate,
)

__version__ = "0.1.0"
