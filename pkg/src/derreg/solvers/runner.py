"""
Run a distributed solver for a fixed number of synchronous rounds.

The 1 s real-time window of each instance is modelled as a round budget so
runs do not depend on the host's speed.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from derreg.graph import CommGraph
from derreg.problem import Allocation, AllocationProblem, InfeasibleProblemError, check_feasible
from derreg.solvers import dana as _dana
from derreg.solvers import kernels
from derreg.solvers import pd as _pd
from derreg.solvers import rc as _rc

ALGORITHMS = ("rc", "pd", "dana")
DEFAULT_BUDGET = 500


@dataclass
class SolverConfig:
    budget: int = DEFAULT_BUDGET
    pd_step: float = _pd.DEFAULT_STEP
    dana_step: float = _dana.DEFAULT_STEP
    dana_depth: int = _dana.DEFAULT_DEPTH
    informed: tuple | None = None  # default: the last node

    def informed_for(self, n: int) -> tuple:
        return tuple(self.informed) if self.informed else (n - 1,)


@dataclass
class SolverRun:
    algorithm: str
    rounds: int
    allocation: Allocation
    residuals: np.ndarray
    state: Any = field(repr=False, default=None)

    def write_residuals(self, path) -> None:
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(["round", "residual"])
            for k, r in enumerate(self.residuals):
                out.writerow([k, repr(float(r))])


def run_solver(
    algorithm: str,
    problem: AllocationProblem,
    graph: CommGraph,
    round_budget: int = DEFAULT_BUDGET,
    h: float | None = None,
    *,
    warm: Any = None,
    informed: Sequence[int] | None = None,
    depth: int = _dana.DEFAULT_DEPTH,
    dtil: np.ndarray | None = None,
) -> SolverRun:
    """Execute exactly ``round_budget`` rounds of ``algorithm`` on ``problem``.

    ``warm`` is the terminal state of a previous run (PD and DANA only);
    ratio-consensus always restarts because its initial values encode
    ``p_ref``.
    """
    algorithm = algorithm.lower()
    if algorithm not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algorithm!r}; expected one of {ALGORITHMS}")
    if graph.n != problem.n:
        raise ValueError(f"graph has {graph.n} nodes but problem has {problem.n} agents")
    if not check_feasible(problem):
        raise InfeasibleProblemError(f"p_ref={problem.p_ref:g} outside the fleet range")
    informed = tuple(informed) if informed else (problem.n - 1,)
    rounds = int(round_budget)
    resid = np.empty(rounds)

    if algorithm == "rc":
        state = _rc.rc_init(problem, informed)
        indptr, indices, w = graph.metropolis_csr
        kernels.rc_rounds(
            state.y, state.z, problem.lower, problem.upper - problem.lower, problem.p_ref,
            indptr, indices, w, rounds, resid,
        )
        p = _rc.rc_allocation(state, problem)
    elif algorithm == "pd":
        state = warm.copy() if isinstance(warm, _pd.PdState) else _pd.pd_init(problem)
        np.clip(state.p, problem.lower, problem.upper, out=state.p)
        state = _pd.pd_step(state, graph, problem, h or _pd.DEFAULT_STEP, rounds, resid)
        p = state.p.copy()
    else:
        if isinstance(warm, _dana.DanaState):
            state = _dana.dana_retarget(warm, problem, informed)
        else:
            state = _dana.dana_init(problem, informed)
        state = _dana.dana_step(
            state, graph, problem, h or _dana.DEFAULT_STEP, depth, rounds, resid, dtil=dtil
        )
        p = state.p.copy()
    return SolverRun(algorithm, rounds, Allocation(p), resid, state)


class SolverSession:
    """Solves a sequence of instances, warm-starting each from the last.

    Costs are assumed fixed for the session (they are in the scheduler), so
    DANA's Hessian diagonal is computed once.
    """

    def __init__(self, algorithm: str, graph: CommGraph, config: SolverConfig | None = None):
        self.algorithm = algorithm.lower()
        self.graph = graph
        self.config = config or SolverConfig()
        self.state = None
        self._dtil = None
        self._dtil_key = None

    def reset(self) -> None:
        self.state = None

    def solve(self, problem: AllocationProblem) -> SolverRun:
        cfg = self.config
        dtil = None
        if self.algorithm == "dana":
            key = problem.a.tobytes()
            if key != self._dtil_key:
                self._dtil = _dana.hessian_diagonal(self.graph, 2.0 * problem.a)
                self._dtil_key = key
            dtil = self._dtil
        h = {"pd": cfg.pd_step, "dana": cfg.dana_step}.get(self.algorithm)
        run = run_solver(
            self.algorithm, problem, self.graph, cfg.budget, h,
            warm=self.state, informed=cfg.informed_for(problem.n), depth=cfg.dana_depth, dtil=dtil,
        )
        self.state = run.state
        return run
