"""
Per-instant allocation problem and its centralized reference solutions.

Every second a fleet must split a reference power ``p_ref`` among ``n``
agents, each confined to a box ``[lower_i, upper_i]`` and carrying a
separable cost ``f_i``::

    min  sum_i f_i(p_i)
    s.t. sum_i p_i = p_ref,   lower_i <= p_i <= upper_i

Two centralized answers are provided: :func:`oracle_solve` (exact KKT
solution for strictly convex quadratic costs) and :func:`rc_closed_form`
(equal fractional loading, the canonical answer for constant costs).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Sequence

import numpy as np

__all__ = [
    "CostFunction",
    "AllocationProblem",
    "Allocation",
    "InfeasibleProblemError",
    "check_feasible",
    "oracle_solve",
    "rc_closed_form",
    "solve_reference",
    "brute_force_solve",
    "random_problem",
]


class InfeasibleProblemError(ValueError):
    """The feasible set of an allocation problem is empty."""


@dataclass(frozen=True)
class CostFunction:
    """Cost of one agent: ``a*p**2 + b*p`` (quadratic) or a constant."""

    kind: str = "quadratic"
    a: float = 1.0
    b: float = 0.0

    def __post_init__(self):
        if self.kind not in ("constant", "quadratic"):
            raise ValueError(f"unknown cost kind {self.kind!r}")
        if self.kind == "quadratic" and not self.a > 0:
            raise ValueError("quadratic cost needs a > 0")

    @classmethod
    def constant(cls) -> "CostFunction":
        return cls("constant", 0.0, 0.0)

    def __call__(self, p):
        if self.kind == "constant":
            return np.zeros_like(np.asarray(p, dtype=float))
        return self.a * np.square(p) + self.b * np.asarray(p)

    def derivative(self, p):
        if self.kind == "constant":
            return np.zeros_like(np.asarray(p, dtype=float))
        return 2.0 * self.a * np.asarray(p) + self.b


@dataclass(frozen=True)
class AllocationProblem:
    """One instance of the box-constrained allocation problem."""

    lower: np.ndarray
    upper: np.ndarray
    p_ref: float
    costs: tuple = field(default=())

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=float).ravel()
        upper = np.asarray(self.upper, dtype=float).ravel()
        if lower.shape != upper.shape or lower.size < 1:
            raise ValueError("lower and upper must be nonempty and the same length")
        if np.any(lower > upper):
            raise ValueError("every agent needs lower <= upper")
        costs = tuple(self.costs) if self.costs else (CostFunction.constant(),) * lower.size
        if len(costs) != lower.size:
            raise ValueError(f"expected {lower.size} costs, got {len(costs)}")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "p_ref", float(self.p_ref))
        object.__setattr__(self, "costs", costs)

    @classmethod
    def quadratic(cls, a, b, lower, upper, p_ref) -> "AllocationProblem":
        a = np.broadcast_to(np.asarray(a, dtype=float), np.shape(lower))
        b = np.broadcast_to(np.asarray(b, dtype=float), np.shape(lower))
        costs = tuple(CostFunction("quadratic", float(ai), float(bi)) for ai, bi in zip(a, b))
        return cls(lower, upper, p_ref, costs)

    @property
    def n(self) -> int:
        return self.lower.size

    @cached_property
    def a(self) -> np.ndarray:
        return np.array([c.a if c.kind == "quadratic" else 0.0 for c in self.costs])

    @cached_property
    def b(self) -> np.ndarray:
        return np.array([c.b if c.kind == "quadratic" else 0.0 for c in self.costs])

    @cached_property
    def is_quadratic(self) -> bool:
        return all(c.kind == "quadratic" for c in self.costs)

    @property
    def capacity(self) -> float:
        """Total adjustable range ``sum(upper - lower)``."""
        return float(np.sum(self.upper - self.lower))

    def objective(self, p) -> float:
        p = np.asarray(p, dtype=float)
        return float(sum(c(pi) for c, pi in zip(self.costs, p)))

    def with_p_ref(self, p_ref: float) -> "AllocationProblem":
        return replace(self, p_ref=float(p_ref))

    def with_bounds(self, lower, upper) -> "AllocationProblem":
        return replace(self, lower=lower, upper=upper)


@dataclass(frozen=True)
class Allocation:
    """Power setpoint per agent (kW)."""

    p: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "p", np.asarray(self.p, dtype=float).ravel())

    @property
    def total(self) -> float:
        return float(np.sum(self.p))

    def within(self, problem: AllocationProblem) -> bool:
        return bool(np.all(self.p >= problem.lower) and np.all(self.p <= problem.upper))


def check_feasible(problem: AllocationProblem) -> bool:
    """True iff ``sum(lower) <= p_ref <= sum(upper)``."""
    return float(np.sum(problem.lower)) <= problem.p_ref <= float(np.sum(problem.upper))


def _require_feasible(problem: AllocationProblem) -> None:
    if not check_feasible(problem):
        raise InfeasibleProblemError(
            f"p_ref={problem.p_ref:g} outside [{np.sum(problem.lower):g}, {np.sum(problem.upper):g}]"
        )


def oracle_solve(problem: AllocationProblem, max_iter: int = 400) -> Allocation:
    """Exact minimizer for strictly convex quadratic costs.

    Bisection on the multiplier ``lam`` of the equality constraint. For a
    given ``lam`` each agent's best response is
    ``clip((-lam - b_i) / (2 a_i), lower_i, upper_i)``, which is
    nonincreasing in ``lam``; the root of ``sum_i p_i(lam) = p_ref`` is
    bracketed by ``[-max_i(2 a_i upper_i + b_i), -min_i(2 a_i lower_i + b_i)]``.
    """
    _require_feasible(problem)
    if not problem.is_quadratic:
        raise ValueError("oracle_solve needs quadratic costs; use rc_closed_form for constant costs")
    a2 = 2.0 * problem.a
    b = problem.b
    lo, hi = problem.lower, problem.upper
    target = problem.p_ref
    tol = 1e-9 * max(1.0, abs(target))

    def response(lam):
        return np.clip((-lam - b) / a2, lo, hi)

    lam_lo = -float(np.max(a2 * hi + b))
    lam_hi = -float(np.min(a2 * lo + b))
    p = response(0.5 * (lam_lo + lam_hi))
    for _ in range(max_iter):
        lam = 0.5 * (lam_lo + lam_hi)
        p = response(lam)
        gap = float(np.sum(p)) - target
        if abs(gap) <= tol:
            break
        if gap > 0:
            lam_lo = lam
        else:
            lam_hi = lam
        if lam_hi - lam_lo <= 1e-15 * max(1.0, abs(lam)):
            break
    # spread the bisection leftover over agents that are not pinned at a bound
    gap = target - float(np.sum(p))
    free = (p > lo) & (p < hi)
    if gap != 0.0 and np.any(free):
        p = p.copy()
        p[free] = np.clip(p[free] + gap / np.count_nonzero(free), lo[free], hi[free])
    return Allocation(p)


def rc_closed_form(problem: AllocationProblem) -> Allocation:
    """Equal fractional loading of every agent's range.

    ``p_i = lower_i + r * (upper_i - lower_i)`` with the common ratio
    ``r = (p_ref - sum(lower)) / sum(upper - lower)``.
    """
    span = problem.upper - problem.lower
    total = float(np.sum(span))
    if total <= 0.0:
        raise ValueError("rc_closed_form needs positive total capacity")
    _require_feasible(problem)
    ratio = (problem.p_ref - float(np.sum(problem.lower))) / total
    return Allocation(problem.lower + ratio * span)


def solve_reference(problem: AllocationProblem) -> Allocation:
    """Centralized answer matching the problem's cost class."""
    if problem.is_quadratic:
        return oracle_solve(problem)
    return rc_closed_form(problem)


def brute_force_solve(problem: AllocationProblem, resolution: float = 1e-3) -> Allocation:
    """Grid minimization over the feasible set (test oracle, ``n <= 4``).

    The first ``n - 1`` agents range over a grid and the last one is fixed
    by the equality constraint. The grid is refined around the incumbent
    until its spacing reaches ``resolution``; the objective is convex, so
    zooming never discards the global grid minimizer's neighbourhood.
    """
    n = problem.n
    if n > 4:
        raise ValueError("brute force is limited to n <= 4")
    _require_feasible(problem)
    if n == 1:
        return Allocation([problem.p_ref])
    a, b = problem.a, problem.b
    lo_box, hi_box = problem.lower[:-1], problem.upper[:-1]
    lo, hi = lo_box.copy(), hi_box.copy()
    step = max(float(np.max(hi - lo)) / 40.0, resolution)
    best = None
    while True:
        axes = [np.arange(l, h + step / 2, step) for l, h in zip(lo, hi)]
        grids = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([g.ravel() for g in grids], axis=1)
        last = problem.p_ref - pts.sum(axis=1)
        ok = (last >= problem.lower[-1] - 1e-12) & (last <= problem.upper[-1] + 1e-12)
        if np.any(ok):
            full = np.column_stack([pts[ok], np.clip(last[ok], problem.lower[-1], problem.upper[-1])])
            vals = (a * full**2 + b * full).sum(axis=1)
            cand = full[int(np.argmin(vals))]
            if best is None or problem.objective(cand) <= problem.objective(best):
                best = cand
        if step <= resolution:
            break
        if best is None:
            step = max(step / 2, resolution)
            continue
        centre = best[:-1]
        lo = np.maximum(lo_box, centre - 4 * step)
        hi = np.minimum(hi_box, centre + 4 * step)
        step = max(step / 8, resolution)
        # keep grid points aligned to multiples of the final resolution
        lo = np.floor(lo / resolution) * resolution
        lo = np.maximum(lo, lo_box)
    if best is None:
        raise InfeasibleProblemError("no grid point satisfies the constraints")
    return Allocation(best)


def random_problem(
    rng: np.random.Generator,
    n: int,
    half_widths: Sequence[float] = (1.0, 1.65, 5.0, 3.0),
    load: float = 0.75,
) -> AllocationProblem:
    """Random feasible quadratic instance with testbed-like boxes."""
    a = rng.uniform(0.5, 2.0, n)
    b = rng.uniform(-1.0, 1.0, n)
    w = rng.choice(np.asarray(half_widths, dtype=float), n)
    p_ref = rng.uniform(-load, load) * float(np.sum(w))
    return AllocationProblem.quadratic(a, b, -w, w, p_ref)
