from .bnb import SolverOptions, solve_lp, solve_milp
from .lpformat import export_lp_format
from .model import (BINARY, CONTINUOUS, EQ, GE, INFEASIBLE, LE, OPTIMAL, TIME_LIMIT, UNBOUNDED,
                    Constraint, MilpModel, ModelError, Solution, Variable)
from .simplex import SimplexError

__all__ = [
    "BINARY", "CONTINUOUS", "EQ", "GE", "LE", "INFEASIBLE", "OPTIMAL", "TIME_LIMIT", "UNBOUNDED",
    "Constraint", "MilpModel", "ModelError", "SimplexError", "Solution", "SolverOptions", "Variable",
    "export_lp_format", "solve_lp", "solve_milp",
]
