"""Estimator consistency laboratory for discrete Bayesian estimation problems."""

from .core import (
    NO_MAXIMIZER,
    DiscreteDistribution,
    EstimationProblem,
    InvalidInput,
    LabError,
    Neighborhood,
    NoMaximizer,
    ParamId,
    PosteriorState,
    Trajectory,
    UncertifiedError,
    UnreachableObservation,
    likelihood_ratio_profile,
    make_rng,
    marginal_log_likelihood,
    posterior,
    sample_joint,
    sample_trajectory,
)
from .zoo import make_problem, problem_from_config

__version__ = "0.1.0"
