"""Stochastic model, bounds and Monte Carlo harness for a stagnated PSO agent."""

from .errors import (
    DegenerateDistributionError,
    DegenerateError,
    NotApplicableError,
    PreconditionError,
    PsoEscapeError,
    ValidationError,
)
from .model import AgentState, GoalRegion, SwarmParams, Trajectory, clamp, run_trajectory, sample_step, step

__version__ = "0.1.0"
