"""Projected primal-dual dynamics on the Laplacian-augmented Lagrangian.

The equality ``sum(p) = p_ref`` is rewritten as ``p + L y = (p_ref / n) 1``
(possible because the range of ``L`` is the zero-sum subspace). Each
forward-Euler step moves

* ``p`` down the gradient ``f'(p) + lam + (p + L y - p_ref/n)``, then
  projects it onto the local box,
* ``y`` down ``L (lam + p - p_ref/n) + L^2 y``,
* ``lam`` up the constraint residual ``p + L y - p_ref/n``.

``L^2 y`` needs two-hop data, obtained by a second neighbour exchange.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from derreg.graph import CommGraph
from derreg.problem import AllocationProblem
from derreg.solvers import kernels

DEFAULT_STEP = 0.1


@dataclass
class PdState:
    p: np.ndarray
    y: np.ndarray
    lam: np.ndarray

    def copy(self) -> "PdState":
        return PdState(self.p.copy(), self.y.copy(), self.lam.copy())


def pd_init(problem: AllocationProblem) -> PdState:
    n = problem.n
    return PdState(np.clip(np.zeros(n), problem.lower, problem.upper), np.zeros(n), np.zeros(n))


def pd_step(
    state: PdState,
    graph: CommGraph,
    problem: AllocationProblem,
    h: float = DEFAULT_STEP,
    rounds: int = 1,
    resid: np.ndarray | None = None,
) -> PdState:
    if h <= 0:
        raise ValueError("step size must be positive")
    if not problem.is_quadratic:
        raise ValueError("primal-dual needs quadratic costs")
    indptr, indices, lv = graph.laplacian_csr
    out = state.copy()
    if resid is None:
        resid = np.empty(rounds)
    kernels.pd_rounds(
        out.p, out.y, out.lam, 2.0 * problem.a, problem.b, problem.lower, problem.upper,
        problem.p_ref / problem.n, float(h), indptr, indices, lv, rounds, resid,
    )
    return out
