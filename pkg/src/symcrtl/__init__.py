"""Symbolic models and robust controller synthesis for control systems with disturbances."""
from .sysmodel import (Box, KLBound, LinearSystem, NonlinearSystem, ValidationError, dc_motor,
                       validate_parameters, validate_system)
from .numerics import linear_flow, mat_exp, rk4_trajectory
from .lattice import Lattice, hausdorff, lattice_cover, quantize
from .reach import Zonotope, input_reach
from .tsys import (TransitionSystem, check_alt_bisim, check_approx_bisim, max_alt_bisim,
                   max_approx_bisim)
from .abstraction import (AbstractionParams, ParameterConditionError, SymbolicModel,
                          abstract_linear, abstract_nonlinear_sampled, sampled_system)
from .game import (Strategy, closed_loop_simulate, cpre, monte_carlo, refine_control,
                   solve_reach, solve_safe)

__version__ = "0.1.0"

__all__ = [
    "Box", "KLBound", "LinearSystem", "NonlinearSystem", "ValidationError", "dc_motor",
    "validate_parameters", "validate_system", "linear_flow", "mat_exp", "rk4_trajectory",
    "Lattice", "hausdorff", "lattice_cover", "quantize", "Zonotope", "input_reach",
    "TransitionSystem", "check_alt_bisim", "check_approx_bisim", "max_alt_bisim",
    "max_approx_bisim", "AbstractionParams", "ParameterConditionError", "SymbolicModel",
    "abstract_linear", "abstract_nonlinear_sampled", "sampled_system", "Strategy",
    "closed_loop_simulate", "cpre", "monte_carlo", "refine_control", "solve_reach", "solve_safe",
]
