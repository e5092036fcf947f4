"""Bayesian adaptive mastery assessment with a discounted optimal-stopping policy."""

from .errors import BamaError, ConfigError, InfeasibleError, SolverError
from .inference import (
    Observation,
    PosteriorState,
    ScoreSummary,
    StudentProfile,
    expected_z,
    prob_correct,
    profile_z_moments,
    update_posterior,
    z_score,
)
from .policy import (
    Action,
    BaselineConfig,
    Decision,
    History,
    LinearValueWeights,
    MasteryClass,
    PolicyConfig,
    Reason,
    baseline_stability_decide,
    bellman_value,
    classify,
    decide,
    failure_rule,
    linear_value,
)
from .simulator import Transcript, classify_profile, run_assessment, sample_response

__all__ = [
    "Action",
    "BamaError",
    "BaselineConfig",
    "ConfigError",
    "Decision",
    "History",
    "InfeasibleError",
    "LinearValueWeights",
    "MasteryClass",
    "Observation",
    "PolicyConfig",
    "PosteriorState",
    "Reason",
    "ScoreSummary",
    "SolverError",
    "StudentProfile",
    "Transcript",
    "baseline_stability_decide",
    "bellman_value",
    "classify",
    "classify_profile",
    "decide",
    "expected_z",
    "failure_rule",
    "linear_value",
    "prob_correct",
    "profile_z_moments",
    "run_assessment",
    "sample_response",
    "update_posterior",
    "z_score",
]
