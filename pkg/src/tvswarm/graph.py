"""Fixed undirected communication graphs."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np


@dataclass(frozen=True)
class Graph:
    """Unweighted undirected graph on nodes ``0..n-1``.

    Edges are stored once each as ``(min, max)`` pairs in sorted order, which
    also fixes the incidence orientation: edge ``k`` leaves ``edges[k][0]``
    and enters ``edges[k][1]``.
    """

    n: int
    edges: tuple[tuple[int, int], ...] = field(default=())

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"graph needs at least one node, got n={self.n}")
        for i, j in self.edges:
            if i == j:
                raise ValueError(f"self-loop at node {i}")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise ValueError(f"edge ({i}, {j}) out of range for n={self.n}")
            if i > j:
                raise ValueError("edges must be (min, max) ordered; use Graph.from_edge_list")

    @classmethod
    def from_edge_list(cls, n, edges, one_based=False):
        """Build a graph from unordered pairs, collapsing duplicates."""
        shift = 1 if one_based else 0
        canon = set()
        for pair in edges:
            if len(pair) != 2:
                raise ValueError(f"edge {pair!r} is not a pair")
            i, j = (int(v) - shift for v in pair)
            if i == j:
                raise ValueError(f"self-loop at node {i + shift}")
            if not (0 <= i < n and 0 <= j < n):
                raise ValueError(f"edge {tuple(pair)} out of range for n={n}")
            canon.add((min(i, j), max(i, j)))
        return cls(int(n), tuple(sorted(canon)))

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n, self.n))
        for i, j in self.edges:
            a[i, j] = a[j, i] = 1.0
        return a

    @cached_property
    def laplacian(self) -> np.ndarray:
        a = self.adjacency
        return np.diag(a.sum(axis=1)) - a

    @cached_property
    def incidence(self) -> np.ndarray:
        """Node-by-edge matrix: -1 where the edge leaves, +1 where it enters."""
        d = np.zeros((self.n, self.n_edges))
        for k, (i, j) in enumerate(self.edges):
            d[i, k] = -1.0
            d[j, k] = 1.0
        return d

    @cached_property
    def edge_index(self) -> tuple[np.ndarray, np.ndarray]:
        if not self.edges:
            return np.zeros(0, dtype=int), np.zeros(0, dtype=int)
        tail, head = zip(*self.edges)
        return np.array(tail), np.array(head)

    @cached_property
    def _neighbor_sets(self) -> tuple[frozenset, ...]:
        nbrs = [set() for _ in range(self.n)]
        for i, j in self.edges:
            nbrs[i].add(j)
            nbrs[j].add(i)
        return tuple(frozenset(s) for s in nbrs)

    def neighbors(self, i: int) -> frozenset:
        if not 0 <= i < self.n:
            raise IndexError(f"node {i} out of range for n={self.n}")
        return self._neighbor_sets[i]

    def degree(self) -> np.ndarray:
        return np.array([len(s) for s in self._neighbor_sets])

    def is_connected(self) -> bool:
        seen = {0}
        queue = deque([0])
        while queue:
            i = queue.popleft()
            for j in self._neighbor_sets[i]:
                if j not in seen:
                    seen.add(j)
                    queue.append(j)
        return len(seen) == self.n


# 12-agent benchmark topology, 1-based node labels.
PAPER_EDGES = (
    (1, 2), (2, 3), (1, 8), (5, 12), (3, 4), (4, 5), (3, 6),
    (3, 7), (6, 10), (7, 10), (8, 9), (9, 10), (10, 11), (11, 12),
)


def paper_graph() -> Graph:
    return Graph.from_edge_list(12, PAPER_EDGES, one_based=True)
