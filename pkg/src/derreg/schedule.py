"""
Per-second setpoint scheduling across computing nodes.

Each computing node owns a group of devices. A device only takes a new
setpoint at its update instants (``k = offset (mod update_period)``, plus
``k = 0``); in between it holds the last one. At every second the
allocation problem is rebuilt with one agent per node: a device that is due
contributes its full box, a held device contributes its held setpoint as a
degenerate box. The solution therefore always sums to the target, with the
fast devices absorbing the changes the slow ones cannot follow. Seconds
where the target lies outside the achievable range are clamped and logged.

Discrete devices (on/off AHUs, whole-kW chargers) are rounded after the
solve; their nodes are then pinned at the rounded totals and the remaining
nodes re-solve so the fleet total still matches.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from derreg.fleet import Fleet, ahu_discretize, integer_setpoints
from derreg.graph import CommGraph
from derreg.problem import AllocationProblem, CostFunction, solve_reference
from derreg.signal import SignalTrace
from derreg.solvers.runner import SolverConfig, SolverSession

log = logging.getLogger(__name__)

DISPATCH_PERIOD = 60


@dataclass
class ClampEvent:
    k: int
    requested: float
    applied: float


@dataclass
class ScheduleResult:
    commanded: np.ndarray  # (T, devices) setpoint deviations, kW
    node_alloc: np.ndarray  # (T, nodes) distributed solution of the last solve each second
    node_ref: np.ndarray  # (T, nodes) centralized solution of the same problem
    solved: np.ndarray  # (T,) bool, a solver ran at this second
    algorithm: list  # (T,) solver tag per second
    p_ref: np.ndarray  # (T,) target after clamping
    events: list = field(default_factory=list)
    dispatches: list = field(default_factory=list)  # (k, node) batches sent to devices
    solves: list = field(default_factory=list)  # (k, algorithm, distributed p, reference p)

    @property
    def total(self) -> np.ndarray:
        return self.commanded.sum(axis=1)


def algorithm_plan(choice: str, T: int) -> list:
    """Solver per second; ``all`` runs rc, pd, dana over consecutive thirds."""
    choice = choice.lower()
    if choice != "all":
        return [choice] * T
    parts = np.array_split(np.arange(T), 3)
    plan = []
    for name, part in zip(("rc", "pd", "dana"), parts):
        plan.extend([name] * part.size)
    return plan


def node_costs(fleet: Fleet, costs: dict) -> list:
    """Quadratic cost per node from per-type ``(a, b)`` coefficients."""
    out = []
    for t in fleet.node_types:
        if t not in costs:
            raise KeyError(f"no cost coefficients for node type {t!r}")
        a, b = costs[t]
        out.append(CostFunction("quadratic", float(a), float(b)))
    return out


def schedule(
    fleet: Fleet,
    target: SignalTrace,
    graph: CommGraph,
    costs: Sequence[CostFunction],
    solver: str = "all",
    config: SolverConfig | None = None,
    active: np.ndarray | None = None,
    upscale: float = 1.0,
    initial: np.ndarray | None = None,
) -> ScheduleResult:
    """Commanded setpoint of every device for every second of ``target``.

    ``active`` masks the devices taking part (inactive ones are pinned at
    zero); ``upscale`` widens the boxes of fast devices (V2G, BESS) seen by
    the solver.
    """
    config = config or SolverConfig()
    if graph.n != fleet.n_nodes:
        raise ValueError(f"graph has {graph.n} nodes, fleet uses {fleet.n_nodes}")
    if len(costs) != fleet.n_nodes:
        raise ValueError("one cost function per computing node")
    T = len(target)
    D = len(fleet)
    lo, hi = fleet.bounds()
    fast = np.array([d.fast for d in fleet.devices])
    if upscale != 1.0:
        if upscale < 1:
            raise ValueError("upscaling factor must be at least 1")
        lo = np.where(fast, lo * upscale, lo)
        hi = np.where(fast, hi * upscale, hi)
    active = np.ones(D, dtype=bool) if active is None else np.asarray(active, dtype=bool)
    node_of = np.array([d.node for d in fleet.devices])
    periods = np.array([d.update_period for d in fleet.devices])
    offsets = np.array([d.offset for d in fleet.devices])
    ahu = np.array([d.der_type == "AHU" for d in fleet.devices]) & active
    intkw = np.array([d.integer_kw for d in fleet.devices]) & active
    quantized = ahu | intkw
    base = fleet.baselines()
    constant = [CostFunction.constant()] * fleet.n_nodes
    plan = algorithm_plan(solver, T)

    held = np.zeros(D) if initial is None else np.asarray(initial, dtype=float).copy()
    held[~active] = 0.0
    ahu_state = (held > 0) & ahu
    commanded = np.zeros((T, D))
    node_alloc = np.zeros((T, fleet.n_nodes))
    node_ref = np.zeros((T, fleet.n_nodes))
    solved = np.zeros(T, dtype=bool)
    p_used = np.zeros(T)
    result = ScheduleResult(commanded, node_alloc, node_ref, solved, plan, p_used)

    sessions = {}
    nodes = np.arange(fleet.n_nodes)

    def node_box(free):
        f_lo = np.where(free, lo, held)
        f_hi = np.where(free, hi, held)
        return np.bincount(node_of, f_lo, fleet.n_nodes), np.bincount(node_of, f_hi, fleet.n_nodes)

    def solve(k, free, p_target):
        n_lo, n_hi = node_box(free)
        s_lo, s_hi = float(n_lo.sum()), float(n_hi.sum())
        p = min(max(p_target, s_lo), s_hi)
        if p != p_target:
            result.events.append(ClampEvent(k, float(p_target), p))
        if s_hi - s_lo <= 0.0:
            return n_lo.copy(), n_lo.copy(), p
        alg = plan[k]
        prob = AllocationProblem(n_lo, n_hi, p, constant if alg == "rc" else costs)
        if alg not in sessions:
            sessions.clear()  # a new segment starts cold
            sessions[alg] = SolverSession(alg, graph, config)
        run = sessions[alg].solve(prob)
        ref = solve_reference(prob).p
        result.solves.append((k, alg, run.allocation.p.copy(), ref.copy()))
        solved[k] = True
        return run.allocation.p, ref, p

    for k in range(T):
        due = active & ((k == 0) | ((k >= offsets) & ((k - offsets) % periods == 0)))
        alloc, ref, p = solve(k, due, float(target.values[k]))
        new = _split(alloc, held, lo, hi, due, node_of, fleet.n_nodes)
        qdue = due & quantized
        if np.any(qdue):
            rounded = _quantize(new, qdue, ahu, intkw, lo, hi, base, node_of, ahu_state)
            if not np.allclose(rounded[qdue], new[qdue], rtol=0, atol=1e-12):
                held[qdue] = rounded[qdue]
                free = due & ~qdue
                alloc, ref, p = solve(k, free, float(target.values[k]))
                new = _split(alloc, held, lo, hi, free, node_of, fleet.n_nodes)
                new[qdue] = rounded[qdue]
            ahu_state = np.where(qdue & ahu, rounded > 0, ahu_state)
        held = np.where(due, new, held)
        commanded[k] = held
        node_alloc[k] = alloc
        node_ref[k] = ref
        p_used[k] = p
        if k % DISPATCH_PERIOD == 0:
            result.dispatches.extend((k, int(i)) for i in nodes)
    if result.events:
        log.info("%d of %d seconds clamped to the achievable range", len(result.events), T)
    return result


def _split(alloc, held, lo, hi, free, node_of, n_nodes):
    """Spread each node's allocation over its free devices, equal fraction of range."""
    held_sum = np.bincount(node_of, np.where(free, 0.0, held), n_nodes)
    lo_sum = np.bincount(node_of, np.where(free, lo, 0.0), n_nodes)
    span = np.where(free, hi - lo, 0.0)
    span_sum = np.bincount(node_of, span, n_nodes)
    ratio = np.divide(alloc - held_sum - lo_sum, span_sum, out=np.zeros(n_nodes), where=span_sum > 0)
    ratio = np.clip(ratio, 0.0, 1.0)
    return np.where(free, lo + ratio[node_of] * span, held)


def _quantize(setpoints, qdue, ahu, intkw, lo, hi, base, node_of, ahu_state):
    out = setpoints.copy()
    for node in np.unique(node_of[qdue]):
        group = np.flatnonzero(qdue & ahu & (node_of == node))
        if group.size:
            half = float(hi[group[0]])
            on = ahu_discretize(setpoints[group], half, ahu_state[group])
            out[group] = np.where(on, half, -half)
        group = np.flatnonzero(qdue & intkw & (node_of == node))
        if group.size:
            k0 = group[0]
            out[group] = integer_setpoints(setpoints[group], base[k0], lo[k0], hi[k0])
    return out
