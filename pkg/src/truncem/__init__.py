"""Truncated Euler-Maruyama simulation of a mean-reverting stochastic delay
equation with superlinear drift, plus a backward Euler comparator,
convergence diagnostics and Monte Carlo pricing."""

__version__ = "0.1.0"

from .model import AssumptionViolation, InitialSegment, ModelParams, constant_initial, validate_params
from .truncation import PolicyViolation, TruncationPolicy, clamp_bound, make_policy
from .solver import Ensemble, SolverGrid, simulate, solve_bem, solve_tem
from .pricing import MCEstimate, bond_price, lookback_put

__all__ = [
    "AssumptionViolation", "InitialSegment", "ModelParams", "constant_initial", "validate_params",
    "PolicyViolation", "TruncationPolicy", "clamp_bound", "make_policy",
    "Ensemble", "SolverGrid", "simulate", "solve_bem", "solve_tem",
    "MCEstimate", "bond_price", "lookback_put",
]
