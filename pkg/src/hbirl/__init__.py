"""Reward learning from noisy multi-source observations of an expert.

Maximum causal entropy IRL wrapped in hidden-data EM, with a
Metropolis-within-Gibbs sampler over latent trajectories and observation
source labels.
"""
from .em import EmOptions, EmResult, OccludedDemo, latent_feature_expectations, run_em
from .errors import ConfigurationError, InconsistentDemoError, InconsistentLatticeError, InvalidInputError
from .maxent import (
    FeatureExpectations,
    FitOptions,
    causal_entropy,
    dual_objective,
    empirical_feature_expectations,
    expected_feature_counts,
    fit_weights,
)
from .mdp import (
    FiniteMdp,
    Policy,
    RewardModel,
    Trajectory,
    evaluate_policy,
    ile,
    soft_value_iteration,
    solve_optimal,
)
from .obsmodel import (
    DirichletObsModel,
    ObservationLog,
    ObservationVocabulary,
    TrajectoryObservations,
    blend_alpha,
    dirichlet_mean,
    fit_alpha,
    scale_alpha,
)
from .sampler import (
    InferenceOptions,
    TrajectoryPosterior,
    accumulate_alpha_dot,
    estimate_posteriors,
    observation_feature_expectations,
    run_inference,
)

__version__ = "0.1.0"
