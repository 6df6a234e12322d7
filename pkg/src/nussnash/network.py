"""Communication graphs among players.

Adjacency convention: ``a[i, j] > 0`` means node ``i`` receives information
from node ``j``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse.csgraph import connected_components


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class CommGraph:
    adjacency: np.ndarray
    directed: bool = False

    def __post_init__(self):
        a = np.array(self.adjacency, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise GraphError(f"adjacency must be square, got shape {a.shape}")
        if not np.all(np.isfinite(a)) or np.any(a < 0):
            raise GraphError("adjacency weights must be finite and nonnegative")
        bad = np.flatnonzero(np.diag(a))
        if bad.size:
            raise GraphError(f"self-loop on node {bad[0]}")
        if not self.directed and not np.array_equal(a, a.T):
            raise GraphError("undirected graph needs a symmetric adjacency")
        a.setflags(write=False)
        object.__setattr__(self, "adjacency", a)

    @property
    def n_nodes(self) -> int:
        return self.adjacency.shape[0]

    @classmethod
    def from_edges(cls, n_nodes: int, edges: Iterable[Sequence], directed: bool = False) -> "CommGraph":
        """Build from ``(i, j)`` or ``(i, j, weight)`` tuples (0-based).

        A directed edge ``(i, j)`` lets ``j`` receive from ``i``.
        """
        a = np.zeros((n_nodes, n_nodes))
        for edge in edges:
            if len(edge) not in (2, 3):
                raise GraphError(f"edge {edge!r} must be (i, j) or (i, j, weight)")
            i, j = int(edge[0]), int(edge[1])
            w = float(edge[2]) if len(edge) == 3 else 1.0
            if not (0 <= i < n_nodes and 0 <= j < n_nodes):
                raise GraphError(f"edge ({i}, {j}) references a node outside 0..{n_nodes - 1}")
            if i == j:
                raise GraphError(f"edge ({i}, {j}) is a self-loop")
            if not np.isfinite(w) or w <= 0:
                raise GraphError(f"edge ({i}, {j}) has non-positive weight {w}")
            a[j, i] = w
            if not directed:
                a[i, j] = w
        return cls(a, directed=directed)

    @classmethod
    def cycle(cls, n_nodes: int, weight: float = 1.0, directed: bool = False) -> "CommGraph":
        return cls.from_edges(n_nodes, [(i, (i + 1) % n_nodes, weight) for i in range(n_nodes)], directed)

    @classmethod
    def path(cls, n_nodes: int, weight: float = 1.0, directed: bool = False) -> "CommGraph":
        return cls.from_edges(n_nodes, [(i, i + 1, weight) for i in range(n_nodes - 1)], directed)


def laplacian(g: CommGraph) -> np.ndarray:
    a = g.adjacency
    return np.diag(a.sum(axis=1)) - a


def is_connected(g: CommGraph) -> bool:
    """Connected (undirected) or strongly connected (directed)."""
    if g.n_nodes == 1:
        return True
    n_comp, _ = connected_components(g.adjacency, directed=g.directed, connection="strong")
    return n_comp == 1


def coupling_matrix(g: CommGraph, action_dims: Sequence[int]) -> tuple[np.ndarray, float]:
    """Estimator error matrix ``M = L (x) I + A0`` and its smallest eigenvalue.

    Rows follow the stacked estimate ordering (estimating player, target
    coordinate).  ``A0`` holds ``a[i, owner(col)]`` on its diagonal.  For a
    directed graph the smallest real part of the spectrum is returned.
    """
    if not is_connected(g):
        raise GraphError("coupling matrix requires a connected graph")
    dims = np.asarray(action_dims, dtype=int)
    if dims.shape != (g.n_nodes,):
        raise GraphError(f"need one action dimension per node, got {dims.shape}")
    total = int(dims.sum())
    owner = np.repeat(np.arange(g.n_nodes), dims)
    M = np.kron(laplacian(g), np.eye(total)) + np.diag(g.adjacency[:, owner].ravel())
    if g.directed:
        lam = float(np.min(np.linalg.eigvals(M).real))
    else:
        lam = float(np.linalg.eigvalsh(M)[0])
    return M, lam
