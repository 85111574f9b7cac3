"""
Static undirected communication graphs between computing nodes.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable

import numpy as np

__all__ = [
    "CommGraph",
    "ring",
    "path",
    "complete",
    "from_edges",
    "laplacian",
    "neighbors",
    "parse_topology",
]


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class CommGraph:
    """Undirected, connected graph on nodes ``0..n-1``.

    Edges are stored once as ``(i, j)`` with ``i < j``; self-loops are
    rejected and duplicates collapse.
    """

    n: int
    edges: tuple

    def __post_init__(self):
        if self.n < 1:
            raise GraphError("graph needs at least one node")
        clean = set()
        for i, j in self.edges:
            i, j = int(i), int(j)
            if i == j:
                raise GraphError(f"self-loop at node {i}")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise GraphError(f"edge ({i}, {j}) outside 0..{self.n - 1}")
            clean.add((min(i, j), max(i, j)))
        object.__setattr__(self, "edges", tuple(sorted(clean)))
        if self.n > 1 and self.algebraic_connectivity <= 1e-9:
            raise GraphError("graph is not connected")

    @cached_property
    def adjacency(self) -> np.ndarray:
        A = np.zeros((self.n, self.n), dtype=np.int64)
        for i, j in self.edges:
            A[i, j] = A[j, i] = 1
        return A

    @cached_property
    def degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1)

    @cached_property
    def neighbor_lists(self) -> tuple:
        return tuple(tuple(int(j) for j in np.flatnonzero(row)) for row in self.adjacency)

    @cached_property
    def algebraic_connectivity(self) -> float:
        if self.n == 1:
            return 0.0
        return float(np.linalg.eigvalsh(laplacian(self).astype(float))[1])

    @cached_property
    def closed_csr(self) -> tuple:
        """``(indptr, indices)`` of each node's closed neighbourhood, ascending."""
        indptr = np.zeros(self.n + 1, dtype=np.int64)
        indices = []
        for i, nbrs in enumerate(self.neighbor_lists):
            row = sorted((i,) + nbrs)
            indices.extend(row)
            indptr[i + 1] = len(indices)
        return indptr, np.asarray(indices, dtype=np.int64)

    @cached_property
    def laplacian_csr(self) -> tuple:
        """``(indptr, indices, values)`` of ``L`` over closed neighbourhoods."""
        indptr, indices = self.closed_csr
        L = laplacian(self)
        rows = np.repeat(np.arange(self.n), np.diff(indptr))
        return indptr, indices, L[rows, indices].astype(float)

    @cached_property
    def metropolis_csr(self) -> tuple:
        """``(indptr, indices, weights)`` of the Metropolis averaging matrix.

        ``w_ij = 1 / (1 + max(d_i, d_j))`` on edges and the remainder on the
        diagonal. The matrix is symmetric and doubly stochastic for any
        graph; on a ring every weight is 1/3.
        """
        indptr, indices = self.closed_csr
        d = self.degrees
        w = np.empty(indices.size)
        for i in range(self.n):
            lo, hi = indptr[i], indptr[i + 1]
            off = 0.0
            for k in range(lo, hi):
                j = indices[k]
                if j != i:
                    w[k] = 1.0 / (1.0 + max(d[i], d[j]))
                    off += w[k]
            for k in range(lo, hi):
                if indices[k] == i:
                    w[k] = 1.0 - off
        return indptr, indices, w

    def metropolis_matrix(self) -> np.ndarray:
        indptr, indices, w = self.metropolis_csr
        W = np.zeros((self.n, self.n))
        rows = np.repeat(np.arange(self.n), np.diff(indptr))
        W[rows, indices] = w
        return W


def ring(n: int) -> CommGraph:
    """Cycle ``0-1-...-(n-1)-0``."""
    if n < 3:
        raise GraphError("a ring needs n >= 3")
    return CommGraph(n, tuple((i, (i + 1) % n) for i in range(n)))


def path(n: int) -> CommGraph:
    if n < 2:
        raise GraphError("a path needs n >= 2")
    return CommGraph(n, tuple((i, i + 1) for i in range(n - 1)))


def complete(n: int) -> CommGraph:
    return CommGraph(n, tuple((i, j) for i in range(n) for j in range(i + 1, n)))


def from_edges(n: int, edges: Iterable) -> CommGraph:
    return CommGraph(n, tuple(tuple(e) for e in edges))


def laplacian(g: CommGraph) -> np.ndarray:
    """Integer Laplacian ``D - A``."""
    A = g.adjacency
    return np.diag(A.sum(axis=1)) - A


def neighbors(g: CommGraph, i: int) -> tuple:
    """Open neighbourhood of ``i`` in ascending order."""
    if not 0 <= i < g.n:
        raise IndexError(f"node {i} outside 0..{g.n - 1}")
    return g.neighbor_lists[i]


def parse_topology(spec: str, n: int) -> CommGraph:
    """Build a graph from a config value.

    ``ring``, ``path`` and ``complete`` name a family; anything else is read
    as comma-separated ``i-j`` edges, e.g. ``0-1, 1-2, 2-0``.
    """
    text = spec.strip().lower()
    if text in ("ring", "path", "complete"):
        return {"ring": ring, "path": path, "complete": complete}[text](n)
    edges = []
    for item in spec.split(","):
        item = item.strip()
        if not item:
            continue
        try:
            i, j = (int(v) for v in item.split("-"))
        except ValueError:
            raise GraphError(f"cannot read edge {item!r}; expected 'i-j'") from None
        edges.append((i, j))
    return from_edges(n, edges)
