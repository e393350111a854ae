"""Steady 2-D impinging jets under gravity by discrete free-boundary minimization."""
from . import errors
from .errors import *  # noqa: F401,F403
from .flux_algebra import (AsymptoticState, DownstreamState, JetParameters, asymptotic_states,
                           heights_from_params, lambda_from_height, lambda_min, q1_from_heights,
                           validate_params)
from .geometry import build_grid, build_nozzle, canonical_wall, truncate
from .minimizer import Cascade, CascadeConfig, SolveConfig, StreamField, init_field, solve
from .freeboundary import barrier_check, extract_boundaries, gradient_residual, monotonicity_check
from .fitter import FitProblem, FitResult, detachment, fit, sweep_map
from .fields import VerifyConfig, flow_fields, interface, verify_all

__version__ = "0.1.0"

__all__ = errors.__all__ + [
    "AsymptoticState", "DownstreamState", "JetParameters", "asymptotic_states",
    "heights_from_params", "lambda_from_height", "lambda_min", "q1_from_heights", "validate_params",
    "build_grid", "build_nozzle", "canonical_wall", "truncate",
    "Cascade", "CascadeConfig", "SolveConfig", "StreamField", "init_field", "solve",
    "barrier_check", "extract_boundaries", "gradient_residual", "monotonicity_check",
    "FitProblem", "FitResult", "detachment", "fit", "sweep_map",
    "VerifyConfig", "flow_fields", "interface", "verify_all",
]
