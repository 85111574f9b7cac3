"""Distributed approximate Newton on the reallocation variable ``z``.

Power is parametrized as ``p = p0 + L z`` with ``sum(p0) = p_ref``; since
``1^T L = 0`` every iterate meets the equality constraint. Box limits enter
through nonnegative multipliers ``mu_lo`` (for ``lower - p <= 0``) and
``mu_hi`` (for ``p - upper <= 0``). The primal direction is the Lagrangian
gradient ``L (f'(p) - mu_lo + mu_hi)`` scaled by ``A_q``, a truncated
Neumann approximation of the inverse of the reduced Hessian
``M = L H L`` (``H = diag(2 a)``)::

    A_q = sum_{k=0..q} (D^-1 B)^k D^-1,   M = D - B,   D_ii = sum_j |M_ij|

With the Gershgorin diagonal ``D`` the spectrum of ``D^-1 M`` lies in
``[0, 2)``, so ``A_q`` is positive definite for every depth ``q``. Applying
``A_q`` costs ``2 q`` neighbour exchanges; ``D`` itself needs two-hop cost
data, exchanged once at setup.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from derreg.graph import CommGraph, laplacian
from derreg.problem import AllocationProblem
from derreg.solvers import kernels

DEFAULT_STEP = 1.0
DEFAULT_DEPTH = 8


@dataclass
class DanaState:
    z: np.ndarray
    mu_lo: np.ndarray
    mu_hi: np.ndarray
    p0: np.ndarray
    p: np.ndarray
    p_ref: float

    def copy(self) -> "DanaState":
        return DanaState(self.z.copy(), self.mu_lo.copy(), self.mu_hi.copy(), self.p0.copy(), self.p.copy(), self.p_ref)


def hessian_diagonal(graph: CommGraph, a2: np.ndarray) -> np.ndarray:
    """Gershgorin row sums ``D_ii = sum_j |(L diag(a2) L)_ij|``."""
    L = laplacian(graph).astype(float)
    return np.abs(L @ (a2[:, None] * L)).sum(axis=1)


def weighting_matrix(graph: CommGraph, a2: np.ndarray, depth: int) -> np.ndarray:
    """Dense ``A_q`` (for analysis and tests; the kernel never forms it)."""
    L = laplacian(graph).astype(float)
    M = L @ (a2[:, None] * L)
    d = hessian_diagonal(graph, a2)
    Dinv = np.diag(1.0 / d)
    B = np.diag(d) - M
    term = Dinv.copy()
    A = Dinv.copy()
    for _ in range(depth):
        term = Dinv @ B @ term
        A += term
    return A


def dana_init(problem: AllocationProblem, informed) -> DanaState:
    informed = sorted(set(int(i) for i in informed))
    if not informed:
        raise ValueError("at least one node must know p_ref")
    n = problem.n
    p0 = np.zeros(n)
    p0[informed] = problem.p_ref / len(informed)
    return DanaState(np.zeros(n), np.zeros(n), np.zeros(n), p0, p0.copy(), problem.p_ref)


def dana_retarget(state: DanaState, problem: AllocationProblem, informed) -> DanaState:
    """Warm start for a new instance: keep ``p`` and the multipliers.

    The last iterate becomes the new ``p0`` and the informed nodes absorb
    the change in ``p_ref``, so ``sum(p0)`` equals the new reference.
    """
    informed = sorted(set(int(i) for i in informed))
    p0 = state.p.copy()
    p0[informed] += (problem.p_ref - state.p_ref) / len(informed)
    return DanaState(np.zeros_like(state.z), state.mu_lo.copy(), state.mu_hi.copy(), p0, p0.copy(), problem.p_ref)


def dana_step(
    state: DanaState,
    graph: CommGraph,
    problem: AllocationProblem,
    h: float = DEFAULT_STEP,
    depth: int = DEFAULT_DEPTH,
    rounds: int = 1,
    resid: np.ndarray | None = None,
    dtil: np.ndarray | None = None,
) -> DanaState:
    if h <= 0:
        raise ValueError("step size must be positive")
    if not problem.is_quadratic:
        raise ValueError("DANA needs quadratic costs")
    a2 = 2.0 * problem.a
    if dtil is None:
        dtil = hessian_diagonal(graph, a2)
    indptr, indices, lv = graph.laplacian_csr
    out = state.copy()
    if resid is None:
        resid = np.empty(rounds)
    kernels.dana_rounds(
        out.p, out.z, out.p0, out.mu_lo, out.mu_hi, a2, problem.b, problem.lower, problem.upper,
        dtil, float(h), int(depth), indptr, indices, lv, rounds, resid,
    )
    return out
