"""LP/MILP solver: bounded revised simplex and best-first branch-and-bound."""
from .bnb import (LpSolution, LpStatus, MilpSolution, MilpStatus, SolverConfig, relative_gap,
                  solve_lp, solve_milp, warm_start)
from .kernels import COMPILED

__all__ = ["LpSolution", "LpStatus", "MilpSolution", "MilpStatus", "SolverConfig",
           "relative_gap", "solve_lp", "solve_milp", "warm_start", "COMPILED"]
