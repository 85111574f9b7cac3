"""Distributed allocation solvers: ratio-consensus, primal-dual and DANA."""

from derreg.solvers.dana import DanaState, dana_init, dana_retarget, dana_step
from derreg.solvers.pd import PdState, pd_init, pd_step
from derreg.solvers.rc import RcState, rc_allocation, rc_extract, rc_init, rc_step
from derreg.solvers.runner import ALGORITHMS, SolverConfig, SolverRun, SolverSession, run_solver

__all__ = [
    "ALGORITHMS",
    "DanaState",
    "PdState",
    "RcState",
    "SolverConfig",
    "SolverRun",
    "SolverSession",
    "dana_init",
    "dana_retarget",
    "dana_step",
    "pd_init",
    "pd_step",
    "rc_allocation",
    "rc_extract",
    "rc_init",
    "rc_step",
    "run_solver",
]
