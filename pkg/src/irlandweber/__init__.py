"""Iteratively regularized Landweber iteration in Banach spaces, with
verification tooling for its convergence-rate theory."""

from .constants import (
    InfeasibleError,
    ProblemConstants,
    RateConstants,
    beta_admissible_max,
    kappa_p,
    mu_max,
    mu_max_eps0,
    rate_constants,
    rho_squared,
)
from .geometry import SpaceGeometry, estimate_convexity_constants
from .solver import BetaSchedule, IterationTrace, SolverConfig, solve, step, step_variant_b

__all__ = [
    "BetaSchedule",
    "InfeasibleError",
    "IterationTrace",
    "ProblemConstants",
    "RateConstants",
    "SolverConfig",
    "SpaceGeometry",
    "beta_admissible_max",
    "estimate_convexity_constants",
    "kappa_p",
    "mu_max",
    "mu_max_eps0",
    "rate_constants",
    "rho_squared",
    "solve",
    "step",
    "step_variant_b",
]

__version__ = "0.1.0"
