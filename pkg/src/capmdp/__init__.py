"""Capability-parameterized cooperative MDPs with certified transfer bounds.

Build finite team tasks whose rewards and transitions are linear in an
influence-weighted capability mixture, solve them exactly, and certify
closed-form bounds on how optimal value shifts when the team, its weights, or
the dynamics change. Includes two gridworld environments and a tabular
Q-learning harness for the empirical side.
"""

from .bounds import (
    BOUND_TOLERANCE,
    BoundReport,
    SolveSettings,
    TaskDistribution,
    bound_approx_dynamics,
    bound_capability_estimation,
    bound_lipschitz,
    bound_out_of_distribution,
    bound_policy_transfer,
    bound_polynomial_deviation,
    bound_population_change,
    bound_team_generalization,
    d_a_metric,
    d_a_set_distance,
    gamma_factor,
    oracle_policy_select,
    psi,
    psi_with_permutation,
    s_max,
    v_mid,
)
from .harness import (
    ConfigError,
    ExperimentConfig,
    GeneratorRanges,
    certify_instance,
    default_config,
    determinism_hash,
    emit_results,
    generate_linear_instance,
    generate_linear_pair,
    polynomial_deviation_report,
    replay_violations,
    run_experiment,
    run_output_dir,
    sample_polynomial_spec,
    write_run_artifacts,
)
from .linear import (
    CapabilityVector,
    InfluenceWeights,
    LinearMMDPSpec,
    LipschitzRewardSpec,
    PolynomialRewardSpec,
    RewardKernel,
    TeamComposition,
    TransitionKernel,
    assemble_linear_mmdp,
    assemble_lipschitz_mmdp,
    perturb_dynamics,
    polynomial_reward,
    reward_deviation_exact,
    transition_deviation_exact,
)
from .mdp import (
    JointPolicy,
    SolverConvergenceError,
    StateSpace,
    SuccessorFeatures,
    TabularMMDP,
    ValueTable,
    check_distribution,
    policy_evaluation,
    successor_features,
    value_iteration,
)
from .qlearning import (
    MMDPEnvironment,
    QTable,
    TrainSchedule,
    evaluate_policy_empirical,
    extract_joint_policy,
    generalization_gap,
    q_learning_train,
    run_greedy_episode,
)

__version__ = "0.1.0"

__all__ = [
    "BOUND_TOLERANCE",
    "BoundReport",
    "CapabilityVector",
    "ConfigError",
    "ExperimentConfig",
    "GeneratorRanges",
    "InfluenceWeights",
    "JointPolicy",
    "LinearMMDPSpec",
    "LipschitzRewardSpec",
    "MMDPEnvironment",
    "PolynomialRewardSpec",
    "QTable",
    "RewardKernel",
    "SolveSettings",
    "SolverConvergenceError",
    "StateSpace",
    "SuccessorFeatures",
    "TabularMMDP",
    "TaskDistribution",
    "TeamComposition",
    "TrainSchedule",
    "TransitionKernel",
    "ValueTable",
    "assemble_linear_mmdp",
    "assemble_lipschitz_mmdp",
    "bound_approx_dynamics",
    "bound_capability_estimation",
    "bound_lipschitz",
    "bound_out_of_distribution",
    "bound_policy_transfer",
    "bound_polynomial_deviation",
    "bound_population_change",
    "bound_team_generalization",
    "certify_instance",
    "check_distribution",
    "d_a_metric",
    "d_a_set_distance",
    "default_config",
    "determinism_hash",
    "emit_results",
    "evaluate_policy_empirical",
    "extract_joint_policy",
    "gamma_factor",
    "generalization_gap",
    "generate_linear_instance",
    "generate_linear_pair",
    "oracle_policy_select",
    "perturb_dynamics",
    "policy_evaluation",
    "polynomial_deviation_report",
    "polynomial_reward",
    "psi",
    "psi_with_permutation",
    "q_learning_train",
    "replay_violations",
    "reward_deviation_exact",
    "run_experiment",
    "run_greedy_episode",
    "run_output_dir",
    "s_max",
    "sample_polynomial_spec",
    "successor_features",
    "transition_deviation_exact",
    "v_mid",
    "value_iteration",
    "write_run_artifacts",
]
