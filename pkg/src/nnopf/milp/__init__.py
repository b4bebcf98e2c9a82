"""Linear and mixed-binary programs: model, simplex, branch and bound, oracle."""

from .bnb import MilpSolution, relative_gap, solve_milp
from .lpformat import format_lp, load_lp, parse_lp, save_lp
from .model import EQ, FEAS_TOL, GE, INT_TOL, LE, MilpInstance, VarId
from .oracle import OracleResult, enumerate_patterns
from .simplex import Basis, LpEngine, LpSolution, solve_lp

__all__ = [
    "EQ", "GE", "LE", "FEAS_TOL", "INT_TOL",
    "Basis", "LpEngine", "LpSolution", "MilpInstance", "MilpSolution", "OracleResult", "VarId",
    "enumerate_patterns", "format_lp", "load_lp", "parse_lp", "relative_gap", "save_lp",
    "solve_lp", "solve_milp",
]
