"""CPT portfolio optimization by ADMM with exact chain-subproblem solvers."""

from .admm import AdmmConfig, AdmmReport, Box, Simplex, YSolver, run, simplex_project, x_step, y_step
from .dp import solve_dp
from .model import (TK1992, TK1995, CPTWeights, ExponentialUtility, Prelec, PowerUtility,
                    adjust_weights_monotone, build_weights, cpt_objective_x, cpt_objective_y)
from .pav import pav_solve
from .scalar import Zeta, decompose, global_min, local_minimizers, root_find
from .subproblem import SubproblemInstance, stationarity_certificate

__all__ = [
    "AdmmConfig", "AdmmReport", "Box", "Simplex", "YSolver", "run", "simplex_project", "x_step",
    "y_step", "solve_dp", "TK1992", "TK1995", "CPTWeights", "ExponentialUtility", "Prelec",
    "PowerUtility", "adjust_weights_monotone", "build_weights", "cpt_objective_x",
    "cpt_objective_y", "pav_solve", "Zeta", "decompose", "global_min", "local_minimizers",
    "root_find", "SubproblemInstance", "stationarity_certificate",
]
