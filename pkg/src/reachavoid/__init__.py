"""Maximal reach-avoid probabilities for semi-Markov decision processes whose
obstacle set changes from one decision epoch to the next."""
from .augment import (AugmentedModel, InvalidModel, MarkovPolicy, StationaryAugmentedPolicy,
                      build_augmented, lift_policy, project_policy)
from .io import ModelFileError, bundled_model_path, load_model, load_policy
from .model import (EventuallyConstant, Explicit, Exponential, Fixed, Model, NotSeparated,
                    Periodic, PiecewiseLinearCDF, PointMass, Row, SeparationConstants,
                    TransitionLaw, UniformRamp, find_separation, kernel_mass, obstacle_at,
                    validate_model)
from .simulate import Estimate, EpisodeOutcome, estimate_augmented, estimate_reach_avoid, run_episode
from .solve import (SolveResult, SolverPreconditionError, TimeGrid, ValueLayer, bellman_apply,
                    convergence_params, extract_policy, monotonicity_check, solve_improved,
                    value_iterate)

__all__ = [
    "AugmentedModel", "InvalidModel", "MarkovPolicy", "StationaryAugmentedPolicy",
    "build_augmented", "lift_policy", "project_policy",
    "ModelFileError", "bundled_model_path", "load_model", "load_policy",
    "EventuallyConstant", "Explicit", "Exponential", "Fixed", "Model", "NotSeparated",
    "Periodic", "PiecewiseLinearCDF", "PointMass", "Row", "SeparationConstants",
    "TransitionLaw", "UniformRamp", "find_separation", "kernel_mass", "obstacle_at",
    "validate_model",
    "Estimate", "EpisodeOutcome", "estimate_augmented", "estimate_reach_avoid", "run_episode",
    "SolveResult", "SolverPreconditionError", "TimeGrid", "ValueLayer", "bellman_apply",
    "convergence_params", "extract_policy", "monotonicity_check", "solve_improved",
    "value_iterate",
]

__version__ = "0.1.0"
