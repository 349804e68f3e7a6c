"""Threshold-gated region growing over the superpoint affinity graph."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Callable, Iterable, Optional

import numpy as np

from .affinity import AffinityGraph
from .superpoints import SuperpointAdjacency, SuperpointSet

UNASSIGNED = -1
EPS_DISTANCE = 1e-6

# (candidate, neighbour, superpoints) -> non-negative weight of that neighbour's vote
NeighborWeighting = Callable[[int, int, SuperpointSet], float]


def count_over_distance(candidate: int, neighbor: int, superpoints: SuperpointSet) -> float:
    """Closer and larger neighbours vote more."""
    dist = float(np.linalg.norm(superpoints.centroids[candidate] - superpoints.centroids[neighbor]))
    return float(superpoints.counts[neighbor]) / (EPS_DISTANCE + dist)


def uniform_weighting(candidate: int, neighbor: int, superpoints: SuperpointSet) -> float:
    return 1.0


@dataclass(frozen=True, eq=False)
class SegmentationState:
    """Assignment of superpoints to regions with dense region ids."""

    assignment: np.ndarray
    regions: tuple[tuple[int, ...], ...]

    @classmethod
    def from_assignment(cls, assignment) -> "SegmentationState":
        """Compact ids to ``0..R-1`` in order of each region's smallest member."""
        assignment = np.asarray(assignment, dtype=np.int64)
        if (assignment < 0).any():
            raise ValueError("every superpoint must be assigned")
        remap: dict[int, int] = {}
        dense = np.empty_like(assignment)
        for sp, region in enumerate(assignment.tolist()):
            dense[sp] = remap.setdefault(region, len(remap))
        members: list[list[int]] = [[] for _ in remap]
        for sp, region in enumerate(dense.tolist()):
            members[region].append(sp)
        return cls(dense, tuple(tuple(m) for m in members))

    @property
    def n_regions(self) -> int:
        return len(self.regions)

    def point_labels(self, superpoints: SuperpointSet) -> np.ndarray:
        return self.assignment[superpoints.labels]

    def region_point_counts(self, superpoints: SuperpointSet) -> np.ndarray:
        return np.bincount(self.assignment, weights=superpoints.counts, minlength=self.n_regions).astype(np.int64)

    def region_centroids(self, superpoints: SuperpointSet) -> np.ndarray:
        counts = self.region_point_counts(superpoints)
        out = np.zeros((self.n_regions, 3))
        for axis in range(3):
            out[:, axis] = np.bincount(self.assignment, weights=superpoints.centroids[:, axis] * superpoints.counts,
                                       minlength=self.n_regions)
        return out / counts[:, None]


def neighbor_weighted_affinity(candidate: int, members: Iterable[int], graph: AffinityGraph,
                               superpoints: SuperpointSet, adjacency: SuperpointAdjacency,
                               weighting: NeighborWeighting = count_over_distance) -> Optional[float]:
    """Weighted mean affinity between ``candidate`` and the adjacent ``members``.

    Only members that are spatial neighbours with a defined affinity vote.
    Returns ``None`` when no member qualifies.
    """
    if not isinstance(members, (set, frozenset, dict)):
        members = set(members)
    num = den = 0.0
    lo, hi = 1.0, 0.0
    for n in adjacency.neighbors(candidate):
        if n not in members:
            continue
        a = graph.get(candidate, n)
        if a is None:
            continue
        w = weighting(candidate, n, superpoints)
        num += w * a
        den += w
        lo, hi = min(lo, a), max(hi, a)
    if den <= 0:
        return None
    # w * a / w can round past a; a weighted mean never leaves the vote range
    return min(max(num / den, lo), hi)


def grow(superpoints: SuperpointSet, adjacency: SuperpointAdjacency, graph: AffinityGraph, tau_merge: float,
         weighting: NeighborWeighting = count_over_distance) -> SegmentationState:
    """Seeded breadth-first region growing.

    Seeds are taken largest-first (ties by id). A frontier superpoint joins
    the region when its weighted affinity to the region's adjacent members
    exceeds ``tau_merge``.
    """
    n = len(superpoints)
    assignment = np.full(n, UNASSIGNED, dtype=np.int64)
    seeds = sorted(range(n), key=lambda i: (-int(superpoints.counts[i]), i))
    region = 0
    for seed in seeds:
        if assignment[seed] != UNASSIGNED:
            continue
        assignment[seed] = region
        members = {seed}
        queue = deque([seed])
        while queue:
            current = queue.popleft()
            for nb in adjacency.neighbors(current):
                if assignment[nb] != UNASSIGNED:
                    continue
                score = neighbor_weighted_affinity(nb, members, graph, superpoints, adjacency, weighting)
                if score is not None and score > tau_merge:
                    assignment[nb] = region
                    members.add(nb)
                    queue.append(nb)
        region += 1
    return SegmentationState.from_assignment(assignment)
