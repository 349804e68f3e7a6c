"""Graph-based over-segmentation of a point cloud into superpoints."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from . import kernels
from .scene import PointCloud


class DegenerateCloudError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class KnnGraph:
    """Undirected point graph; ``edges[:, 0] < edges[:, 1]``, one row per pair."""

    n_points: int
    edges: np.ndarray
    weights: np.ndarray


@dataclass(frozen=True, eq=False)
class Superpoint:
    superpoint_id: int
    point_indices: np.ndarray
    centroid: np.ndarray

    @property
    def point_count(self) -> int:
        return len(self.point_indices)


@dataclass(frozen=True, eq=False)
class SuperpointSet:
    """A partition of the cloud. ``labels[p]`` is the superpoint holding point ``p``."""

    labels: np.ndarray
    centroids: np.ndarray
    counts: np.ndarray

    def __len__(self) -> int:
        return len(self.counts)

    @classmethod
    def from_labels(cls, labels: np.ndarray, positions: np.ndarray) -> "SuperpointSet":
        """Densify arbitrary labels, numbering superpoints by their smallest point index."""
        labels = np.asarray(labels, dtype=np.int64)
        _, first, inverse = np.unique(labels, return_index=True, return_inverse=True)
        rank = np.empty(len(first), dtype=np.int64)
        rank[np.argsort(first, kind="stable")] = np.arange(len(first))
        dense = rank[inverse]
        counts = np.bincount(dense, minlength=len(first))
        centroids = np.zeros((len(first), 3))
        for axis in range(3):
            centroids[:, axis] = np.bincount(dense, weights=positions[:, axis], minlength=len(first))
        centroids /= counts[:, None]
        return cls(dense, centroids, counts)

    def members(self) -> list[np.ndarray]:
        order = np.argsort(self.labels, kind="stable")
        return np.split(order, np.cumsum(self.counts)[:-1])

    def superpoints(self) -> list[Superpoint]:
        return [Superpoint(i, idx, self.centroids[i]) for i, idx in enumerate(self.members())]


@dataclass(frozen=True, eq=False)
class SuperpointAdjacency:
    """Symmetric superpoint neighbourhood; ``pairs[:, 0] < pairs[:, 1]``, sorted."""

    n_superpoints: int
    pairs: np.ndarray

    def __post_init__(self):
        neighbors: list[list[int]] = [[] for _ in range(self.n_superpoints)]
        for a, b in self.pairs.tolist():
            neighbors[a].append(b)
            neighbors[b].append(a)
        object.__setattr__(self, "_neighbors", [tuple(sorted(n)) for n in neighbors])

    def neighbors(self, i: int) -> tuple[int, ...]:
        return self._neighbors[i]

    def __contains__(self, pair) -> bool:
        a, b = pair
        return a != b and max(a, b) in self._neighbors[min(a, b)]


def edge_dissimilarity(cloud: PointCloud, src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Euclidean length, stretched up to 2x between points with diverging normals."""
    pos = cloud.positions
    dist = np.linalg.norm(pos[src] - pos[dst], axis=1)
    if cloud.normals is None:
        return dist
    cos = np.einsum("ij,ij->i", cloud.normals[src], cloud.normals[dst])
    return dist * (1.5 - 0.5 * cos)


def build_knn_graph(cloud: PointCloud, k: int) -> KnnGraph:
    n = len(cloud)
    if n < 2:
        raise DegenerateCloudError("degenerate cloud: need at least 2 points")
    if not 1 <= k < n:
        raise ValueError(f"k must satisfy 1 <= k < {n}, got {k}")
    tree = cKDTree(cloud.positions)
    _, idx = tree.query(cloud.positions, k=k + 1)
    src = np.repeat(np.arange(n), k + 1)
    dst = idx.ravel()
    keep = src != dst
    # a duplicate point may displace the query point from slot 0; keep k per row
    rows = np.flatnonzero(keep).reshape(-1)
    src, dst = src[rows], dst[rows]
    per_row = np.bincount(src, minlength=n)
    if (per_row > k).any():
        rank = np.arange(src.size) - np.repeat(np.cumsum(per_row) - per_row, per_row)
        src, dst = src[rank < k], dst[rank < k]
    pairs = np.stack([np.minimum(src, dst), np.maximum(src, dst)], axis=1)
    pairs = np.unique(pairs, axis=0)
    weights = edge_dissimilarity(cloud, pairs[:, 0], pairs[:, 1])
    return KnnGraph(n, pairs, weights)


def felzenszwalb_segment(graph: KnnGraph, weight_scale: float, min_size: int, positions: np.ndarray) -> SuperpointSet:
    """Felzenszwalb-Huttenlocher merging on ``graph``, then small-component absorption.

    Edges are visited by ascending weight, ties broken by ascending
    ``(min_id, max_id)``, so the result does not depend on input edge order.
    """
    if graph.edges.size:
        order = np.lexsort((graph.edges[:, 1], graph.edges[:, 0], graph.weights))
        src = np.ascontiguousarray(graph.edges[order, 0], dtype=np.int64)
        dst = np.ascontiguousarray(graph.edges[order, 1], dtype=np.int64)
        w = np.ascontiguousarray(graph.weights[order], dtype=np.float64)
    else:
        src = dst = np.zeros(0, dtype=np.int64)
        w = np.zeros(0)
    roots = kernels.felzenszwalb_components(graph.n_points, src, dst, w, float(weight_scale), int(min_size))
    return SuperpointSet.from_labels(roots, positions)


def compute_adjacency(superpoints: SuperpointSet, graph: KnnGraph) -> SuperpointAdjacency:
    if graph.edges.size == 0:
        return SuperpointAdjacency(len(superpoints), np.zeros((0, 2), dtype=np.int64))
    a = superpoints.labels[graph.edges[:, 0]]
    b = superpoints.labels[graph.edges[:, 1]]
    cross = a != b
    pairs = np.stack([np.minimum(a[cross], b[cross]), np.maximum(a[cross], b[cross])], axis=1)
    pairs = np.unique(pairs, axis=0) if len(pairs) else np.zeros((0, 2), dtype=np.int64)
    return SuperpointAdjacency(len(superpoints), pairs.astype(np.int64))


def oversegment(cloud: PointCloud, k: int = 12, weight_scale: float = 0.05, min_size: int = 20):
    """Convenience wrapper returning ``(superpoints, adjacency, graph)``."""
    graph = build_knn_graph(cloud, min(k, len(cloud) - 1))
    superpoints = felzenszwalb_segment(graph, weight_scale, min_size, cloud.positions)
    return superpoints, compute_adjacency(superpoints, graph), graph
