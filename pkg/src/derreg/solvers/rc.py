"""Ratio-consensus: equal fractional loading reached by two averaging runs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from derreg.graph import CommGraph
from derreg.problem import AllocationProblem
from derreg.solvers import kernels


@dataclass
class RcState:
    """Running numerator ``y`` and denominator ``z`` of every node (kW)."""

    y: np.ndarray
    z: np.ndarray

    def copy(self) -> "RcState":
        return RcState(self.y.copy(), self.z.copy())


def rc_init(problem: AllocationProblem, informed) -> RcState:
    informed = sorted(set(int(i) for i in informed))
    if not informed:
        raise ValueError("at least one node must know p_ref")
    if informed[0] < 0 or informed[-1] >= problem.n:
        raise IndexError("informed node outside the problem")
    y = -problem.lower.copy()
    y[informed] += problem.p_ref / len(informed)
    return RcState(y, problem.upper - problem.lower)


def rc_step(state: RcState, graph: CommGraph, rounds: int = 1) -> RcState:
    """Average ``y`` and ``z`` over closed neighbourhoods (Metropolis weights)."""
    indptr, indices, w = graph.metropolis_csr
    out = state.copy()
    resid = np.empty(rounds)
    zeros = np.zeros_like(out.y)
    kernels.rc_rounds(out.y, out.z, zeros, zeros, 0.0, indptr, indices, w, rounds, resid)
    return out


def rc_extract(y_i: float, z_i: float, lower_i: float, upper_i: float) -> float:
    if z_i <= 0.0:
        raise ZeroDivisionError("rc_extract needs z_i > 0")
    return lower_i + (y_i / z_i) * (upper_i - lower_i)


def rc_allocation(state: RcState, problem: AllocationProblem) -> np.ndarray:
    if np.any(state.z <= 0.0):
        raise ZeroDivisionError("rc_extract needs z_i > 0 at every node")
    return problem.lower + (state.y / state.z) * (problem.upper - problem.lower)
