"""k-nearest-neighbor contextual bandits with nonparametric rewards."""

from .baselines import RankDeficientError, RidgeModel, linucb_decide, linucb_scores, ridge_fit
from .core import (
    ArmHistory,
    BanditConfig,
    ExperimentTrace,
    Observation,
    ValidationError,
    append_observation,
    derive_rng,
)
from .environments import (
    ClassificationEnv,
    Curve,
    FunctionEnvironment,
    JointEnvironment,
    OutOfSupportError,
    Scenario,
    linear_environment,
    load_idx_dataset,
    mean_reward,
    quadratic_joint,
    sample_step,
)
from .experiment import ExperimentConfig, compare, run
from .knn import InsufficientDataError, KnnEstimate, SpatialIndex, default_k, knn_radius, knn_regress
from .metrics import (
    RegretCurve,
    cumulative_regret,
    epsilon_optimality_gap,
    regret_exponent,
    top_arm_error,
)
from .policy import (
    ActionSpace,
    KnnPolicy,
    PolicyState,
    RidgePolicy,
    WarmupIncompleteError,
    infinite_ucb_step,
    infinite_uniform_run,
    knn_ucb_step,
    run_infinite_ucb,
    run_knn_ucb,
    run_linucb,
    simulate_knn_ucb,
    simulate_linucb,
    ucb_width,
    uniform_sampling_run,
)
from .topology import (
    EpsilonGraph,
    RegionEstimate,
    connected_components,
    hausdorff_distance,
    match_components,
    recover_regions,
)

__version__ = "0.1.0"
