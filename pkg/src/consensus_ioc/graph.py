"""Directed interaction graph and its incidence / in-Laplacian operators.

Edges are given as 1-based ``(j, i)`` pairs meaning "agent j influences
agent i". The position of an edge in the list is its index everywhere
downstream (incidence columns, weight vectors, output file columns).
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class Graph:
    num_nodes: int
    edges: tuple[tuple[int, int], ...]
    state_dim: int = 1

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def dim(self) -> int:
        """Length of the stacked ensemble state, d*N."""
        return self.num_nodes * self.state_dim

    @cached_property
    def tails(self) -> np.ndarray:
        # 0-based index j of the influencing agent for each edge
        return np.array([j - 1 for j, _ in self.edges], dtype=np.intp)

    @cached_property
    def heads(self) -> np.ndarray:
        # 0-based index i of the influenced agent for each edge
        return np.array([i - 1 for _, i in self.edges], dtype=np.intp)

    @cached_property
    def head_matrix(self) -> np.ndarray:
        """The in-degree matrix D_in, cached for the hot simulation loop."""
        return incidence(self).D_in

    @cached_property
    def tail_matrix(self) -> np.ndarray:
        return incidence(self).D_out


@dataclass(frozen=True)
class IncidenceSet:
    D: np.ndarray
    D_in: np.ndarray
    D_out: np.ndarray


def build_graph(num_nodes: int, edges: Iterable[Sequence[int]], state_dim: int = 1) -> Graph:
    """Validate and freeze a graph description.

    Raises GraphError on out-of-range nodes, self-loops or duplicate edges.
    """
    if int(num_nodes) != num_nodes or num_nodes < 1:
        raise GraphError(f"num_nodes must be a positive integer, got {num_nodes!r}")
    if int(state_dim) != state_dim or state_dim < 1:
        raise GraphError(f"state_dim must be a positive integer, got {state_dim!r}")
    seen = set()
    clean = []
    for pos, edge in enumerate(edges):
        if len(edge) != 2:
            raise GraphError(f"edge #{pos + 1} is not a (j, i) pair: {edge!r}")
        j, i = (int(v) for v in edge)
        if (j, i) != tuple(edge):
            raise GraphError(f"edge #{pos + 1} has non-integer endpoints: {edge!r}")
        for v in (j, i):
            if not 1 <= v <= num_nodes:
                raise GraphError(f"edge #{pos + 1} {edge!r}: node {v} outside 1..{num_nodes}")
        if j == i:
            raise GraphError(f"edge #{pos + 1} {edge!r} is a self-loop")
        if (j, i) in seen:
            raise GraphError(f"edge #{pos + 1} {edge!r} is a duplicate")
        seen.add((j, i))
        clean.append((j, i))
    return Graph(int(num_nodes), tuple(clean), int(state_dim))


def incidence(g: Graph) -> IncidenceSet:
    m = g.num_edges
    cols = np.arange(m)
    D_in = np.zeros((g.num_nodes, m))
    D_out = np.zeros((g.num_nodes, m))
    D_in[g.heads, cols] = 1.0
    D_out[g.tails, cols] = 1.0
    return IncidenceSet(D=D_in - D_out, D_in=D_in, D_out=D_out)


def in_laplacian(g: Graph, w: np.ndarray) -> np.ndarray:
    """Weighted in-Laplacian ``D_in @ diag(w) @ D.T`` (N x N)."""
    w = np.asarray(w, dtype=float)
    if w.shape != (g.num_edges,):
        raise GraphError(f"weight vector has shape {w.shape}, expected ({g.num_edges},)")
    inc = incidence(g)
    return (inc.D_in * w) @ inc.D.T


def apply_in_laplacian(g: Graph, w: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Compute ``(L_in(w) kron I_d) x`` blockwise, without forming either matrix.

    ``x`` is the stacked state of length d*N; the result has the same shape.
    """
    X = np.reshape(x, (g.num_nodes, g.state_dim))
    if not g.num_edges:
        return np.zeros(g.dim)
    diff = X[g.heads] - X[g.tails]
    return (g.head_matrix @ (w[:, None] * diff)).reshape(-1)
