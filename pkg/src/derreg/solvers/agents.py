"""
Node-level reference implementation with explicit message passing.

Each agent only ever sees its own state plus an :class:`Inbox` holding the
messages of its closed neighbourhood; reading any other sender raises
:class:`LocalityError`. Rounds are split into phases (neighbour exchanges)
separated by a barrier, so the network can run agents sequentially or on a
thread pool with bit-identical results.

The arithmetic mirrors the ``loop_*`` kernels operation for operation, which
lets tests check the fast kernels against this harness exactly.
"""

from __future__ import annotations

from collections.abc import Mapping
from concurrent.futures import Executor
from typing import Sequence

import numpy as np

from derreg.graph import CommGraph, laplacian


class LocalityError(LookupError):
    """An agent asked for a message from a node that is not its neighbour."""


class Inbox(Mapping):
    def __init__(self, owner: int, messages: dict):
        self._owner = owner
        self._messages = messages

    def __getitem__(self, j):
        try:
            return self._messages[j]
        except KeyError:
            raise LocalityError(f"node {self._owner} cannot read messages from node {j}") from None

    def __iter__(self):
        return iter(sorted(self._messages))

    def __len__(self):
        return len(self._messages)


class Agent:
    """Base class: one send/receive pair per phase."""

    phases = 1

    def __init__(self, node: int, closed: Sequence[int]):
        self.node = node
        self.closed = tuple(closed)

    def send(self, phase: int):
        raise NotImplementedError

    def receive(self, phase: int, inbox: Inbox) -> None:
        raise NotImplementedError


class SynchronousNetwork:
    def __init__(self, graph: CommGraph, agents: Sequence[Agent], executor: Executor | None = None):
        if len(agents) != graph.n:
            raise ValueError("one agent per node")
        self.graph = graph
        self.agents = list(agents)
        self.executor = executor
        self.closed = [tuple(sorted((i,) + graph.neighbor_lists[i])) for i in range(graph.n)]
        self.messages_sent = 0

    def _map(self, fn, items):
        if self.executor is None:
            return [fn(x) for x in items]
        return list(self.executor.map(fn, items))

    def exchange(self, phase: int) -> None:
        outbox = self._map(lambda ag: ag.send(phase), self.agents)
        self.messages_sent += sum(len(c) - 1 for c in self.closed)

        def deliver(i):
            inbox = Inbox(i, {j: outbox[j] for j in self.closed[i]})
            self.agents[i].receive(phase, inbox)

        # barrier: every send finished before any receive starts
        self._map(deliver, range(len(self.agents)))

    def run(self, rounds: int) -> None:
        phases = self.agents[0].phases
        for _ in range(rounds):
            for ph in range(phases):
                self.exchange(ph)


def _weighted_sum(weights, closed, inbox, pick=None):
    acc = 0.0
    for w, j in zip(weights, closed):
        msg = inbox[j]
        acc += w * (msg if pick is None else msg[pick])
    return acc


class RcAgent(Agent):
    def __init__(self, node, closed, weights, y0, z0):
        super().__init__(node, closed)
        self.weights = tuple(weights)
        self.y = float(y0)
        self.z = float(z0)

    def send(self, phase):
        return (self.y, self.z)

    def receive(self, phase, inbox):
        self.y = _weighted_sum(self.weights, self.closed, inbox, 0)
        self.z = _weighted_sum(self.weights, self.closed, inbox, 1)


class PdAgent(Agent):
    phases = 2

    def __init__(self, node, closed, lrow, a2, b, lower, upper, c, h, p, y, lam):
        super().__init__(node, closed)
        self.lrow = tuple(lrow)
        self.a2, self.b, self.lower, self.upper = a2, b, lower, upper
        self.c, self.h = c, h
        self.p, self.y, self.lam = float(p), float(y), float(lam)

    def send(self, phase):
        if phase == 0:
            return (self.y, self.lam + self.p - self.c)
        return self.ly

    def receive(self, phase, inbox):
        if phase == 0:
            self.ly = _weighted_sum(self.lrow, self.closed, inbox, 0)
            self.lq = _weighted_sum(self.lrow, self.closed, inbox, 1)
            return
        l2y = _weighted_sum(self.lrow, self.closed, inbox)
        res = self.p + self.ly - self.c
        pi = self.p - self.h * (self.a2 * self.p + self.b + self.lam + res)
        if pi < self.lower:
            pi = self.lower
        elif pi > self.upper:
            pi = self.upper
        self.y = self.y - self.h * (self.lq + l2y)
        self.lam = self.lam + self.h * res
        self.p = pi


class DanaAgent(Agent):
    def __init__(self, node, closed, lrow, a2, b, lower, upper, h, depth, p0, dtil=None):
        super().__init__(node, closed)
        self.lrow = tuple(lrow)
        self.a2, self.b, self.lower, self.upper = a2, b, lower, upper
        self.h, self.depth = h, depth
        self.p0 = float(p0)
        self.p = float(p0)
        self.z = 0.0
        self.mu_lo = 0.0
        self.mu_hi = 0.0
        self.dtil = dtil
        self.phases = 2 + 2 * depth

    def setup_message(self):
        return (self.a2, dict(zip(self.closed, self.lrow)))

    def setup(self, inbox: Inbox) -> None:
        """Gershgorin diagonal of ``L H L`` from neighbours' rows of ``L``."""
        row = {}
        for lik, k in zip(self.lrow, self.closed):
            a2k, lk = inbox[k]
            for j, lkj in lk.items():
                row[j] = row.get(j, 0.0) + lik * a2k * lkj
        self.dtil = sum(abs(row[j]) for j in sorted(row))

    def send(self, phase):
        if phase == 0:
            return self.a2 * self.p + self.b - self.mu_lo + self.mu_hi
        if phase == self.phases - 1:
            return self.z
        if phase % 2 == 1:
            return self.v
        return self.a2 * self.w

    def receive(self, phase, inbox):
        if phase == 0:
            self.u = _weighted_sum(self.lrow, self.closed, inbox)
            self.v = self.u / self.dtil
        elif phase == self.phases - 1:
            lz = _weighted_sum(self.lrow, self.closed, inbox)
            self.p = self.p0 + lz
            m = self.mu_lo + self.h * self.a2 * (self.lower - self.p)
            self.mu_lo = m if m > 0.0 else 0.0
            m = self.mu_hi + self.h * self.a2 * (self.p - self.upper)
            self.mu_hi = m if m > 0.0 else 0.0
            return
        elif phase % 2 == 1:
            self.w = _weighted_sum(self.lrow, self.closed, inbox)
        else:
            t = _weighted_sum(self.lrow, self.closed, inbox)
            self.v = (self.u + self.dtil * self.v - t) / self.dtil
        if phase == self.phases - 2:
            self.z = self.z - self.h * self.v


def _closed(graph):
    indptr, indices = graph.closed_csr
    return [indices[indptr[i]:indptr[i + 1]].tolist() for i in range(graph.n)]


def _lrows(graph):
    L = laplacian(graph).astype(float)
    return [[L[i, j] for j in c] for i, c in enumerate(_closed(graph))]


def rc_network(graph, problem, informed, executor=None) -> SynchronousNetwork:
    from derreg.solvers.rc import rc_init

    st = rc_init(problem, informed)
    indptr, _, w = graph.metropolis_csr
    agents = [
        RcAgent(i, c, w[indptr[i]:indptr[i + 1]].tolist(), st.y[i], st.z[i])
        for i, c in enumerate(_closed(graph))
    ]
    return SynchronousNetwork(graph, agents, executor)


def pd_network(graph, problem, h, state=None, executor=None) -> SynchronousNetwork:
    from derreg.solvers.pd import pd_init

    st = state or pd_init(problem)
    a2, b = 2.0 * problem.a, problem.b
    c = problem.p_ref / problem.n
    agents = [
        PdAgent(i, cl, lr, a2[i], b[i], problem.lower[i], problem.upper[i], c, h, st.p[i], st.y[i], st.lam[i])
        for i, (cl, lr) in enumerate(zip(_closed(graph), _lrows(graph)))
    ]
    return SynchronousNetwork(graph, agents, executor)


def dana_network(graph, problem, h, depth, informed, executor=None) -> SynchronousNetwork:
    from derreg.solvers.dana import dana_init

    st = dana_init(problem, informed)
    a2, b = 2.0 * problem.a, problem.b
    agents = [
        DanaAgent(i, cl, lr, a2[i], b[i], problem.lower[i], problem.upper[i], h, depth, st.p0[i])
        for i, (cl, lr) in enumerate(zip(_closed(graph), _lrows(graph)))
    ]
    net = SynchronousNetwork(graph, agents, executor)
    msgs = [ag.setup_message() for ag in agents]
    for i, ag in enumerate(agents):
        ag.setup(Inbox(i, {j: msgs[j] for j in net.closed[i]}))
    return net


def collect(net: SynchronousNetwork, attr: str) -> np.ndarray:
    return np.array([getattr(ag, attr) for ag in net.agents])
