"""Communication graph construction and structural centrality attributes."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels


@dataclass
class NeighborGraph:
    """Undirected proximity graph in CSR form over the original node ids.

    `ids` maps compact index -> node id (ascending); neighbor lists are
    sorted ascending. Edge rule: Euclidean distance <= comm_range, no
    self-loops.
    """

    ids: np.ndarray
    indptr: np.ndarray
    indices: np.ndarray

    @property
    def n(self) -> int:
        return len(self.ids)

    def compact_index(self, node_id: int) -> int:
        pos = int(np.searchsorted(self.ids, node_id))
        if pos >= len(self.ids) or self.ids[pos] != node_id:
            raise KeyError(f"node {node_id} not in graph")
        return pos

    def neighbors(self, node_id: int) -> list[int]:
        c = self.compact_index(node_id)
        return [int(self.ids[j]) for j in self.indices[self.indptr[c]:self.indptr[c + 1]]]


def adjacency_from_xy(xy: np.ndarray, comm_range: float) -> tuple[np.ndarray, np.ndarray]:
    """CSR adjacency (indptr, indices) for points within comm_range of each other."""
    n = xy.shape[0]
    if n == 0:
        return np.zeros(1, dtype=np.int64), np.zeros(0, dtype=np.int64)
    diff = xy[:, None, :] - xy[None, :, :]
    within = (diff * diff).sum(axis=2) <= comm_range * comm_range
    np.fill_diagonal(within, False)
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(within.sum(axis=1), out=indptr[1:])
    indices = np.flatnonzero(within.ravel()).astype(np.int64) % n
    return indptr, indices


def build_graph(devices, comm_range: float) -> NeighborGraph:
    """Graph over non-Dead devices; edge iff distance <= comm_range."""
    from .model import DeviceState  # local import to avoid a cycle

    alive = [d for d in devices if d.state is not DeviceState.DEAD]
    alive.sort(key=lambda d: d.id)
    ids = np.array([d.id for d in alive], dtype=np.int64)
    if np.isnan([c for d in alive for c in d.position]).any():
        raise ValueError("device positions contain NaN")
    xy = np.array([d.position for d in alive], dtype=np.float64).reshape(len(alive), 2)
    indptr, indices = adjacency_from_xy(xy, comm_range)
    return NeighborGraph(ids=ids, indptr=indptr, indices=indices)


def degree_of(graph: NeighborGraph, node_id: int) -> int:
    c = graph.compact_index(node_id)
    return int(graph.indptr[c + 1] - graph.indptr[c])


def betweenness_normalized(indptr: np.ndarray, indices: np.ndarray) -> np.ndarray:
    """Normalized betweenness in [0,1] for a CSR graph (zeros when n < 3)."""
    n = len(indptr) - 1
    if n < 3:
        return np.zeros(n)
    cb = kernels.brandes_accumulate(
        np.ascontiguousarray(indptr, dtype=np.int64),
        np.ascontiguousarray(indices, dtype=np.int64),
    )
    # Brandes accumulates ordered pairs; (n-1)(n-2) halves them and divides
    # by the (n-1)(n-2)/2 unordered-pair maximum in one step.
    return cb / float((n - 1) * (n - 2))


def betweenness_all(graph: NeighborGraph) -> dict[int, float]:
    values = betweenness_normalized(graph.indptr, graph.indices)
    return {int(node_id): float(v) for node_id, v in zip(graph.ids, values)}
