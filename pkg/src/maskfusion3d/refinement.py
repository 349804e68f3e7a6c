"""Boundary reassignment and region merging on the refined affinity graph."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .affinity import AffinityGraph
from .growing import (EPS_DISTANCE, NeighborWeighting, SegmentationState, count_over_distance,
                      neighbor_weighted_affinity)
from .superpoints import SuperpointAdjacency, SuperpointSet


@dataclass
class RefinementTrace:
    """Moves per iteration as ``(superpoint, from_region, to_region)``, plus merges
    as ``(region_a, region_b, affinity)`` in the order they happened."""

    iterations: list[list[tuple[int, int, int]]] = field(default_factory=list)
    merges: list[tuple[int, int, float]] = field(default_factory=list)

    @property
    def move_counts(self) -> list[int]:
        return [len(moves) for moves in self.iterations]

    def to_json(self) -> dict:
        return {
            "merges": [[a, b, v] for a, b, v in self.merges],
            "iterations": [{"moves": len(m), "reassignments": [list(x) for x in m]} for m in self.iterations],
        }


def boundary_superpoints(state: SegmentationState, adjacency: SuperpointAdjacency) -> set[int]:
    a = state.assignment
    out = set()
    for i, j in adjacency.pairs.tolist():
        if a[i] != a[j]:
            out.add(i)
            out.add(j)
    return out


def merge_regions(state: SegmentationState, graph: AffinityGraph, superpoints: SuperpointSet,
                  adjacency: SuperpointAdjacency, tau_merge: float,
                  trace: RefinementTrace | None = None) -> SegmentationState:
    """Agglomerate adjacent regions whose cross-boundary affinity exceeds ``tau_merge``.

    The affinity of a region pair is the mean affinity over the superpoint
    edges crossing between them, each weighted by
    ``count_i * count_j / (eps + centroid distance)``. The highest pair is
    merged first (ties by lowest region ids) and pair scores are recomputed
    from the combined edge sums.
    """
    region_of = state.assignment.copy()
    num: dict[tuple[int, int], float] = {}
    den: dict[tuple[int, int], float] = {}
    counts, cents = superpoints.counts, superpoints.centroids
    for i, j, aff in graph.items():
        ri, rj = int(region_of[i]), int(region_of[j])
        if ri == rj:
            continue
        key = (ri, rj) if ri < rj else (rj, ri)
        w = float(counts[i]) * float(counts[j]) / (EPS_DISTANCE + float(np.linalg.norm(cents[i] - cents[j])))
        num[key] = num.get(key, 0.0) + w * aff
        den[key] = den.get(key, 0.0) + w
    while num:
        best_key, best = None, None
        for key in sorted(num):
            if den[key] <= 0:
                continue
            score = num[key] / den[key]
            if best is None or score > best:
                best_key, best = key, score
        if best is None or not best > tau_merge:
            break
        keep, gone = best_key
        if trace is not None:
            trace.merges.append((keep, gone, best))
        region_of[region_of == gone] = keep
        merged_num: dict[tuple[int, int], float] = {}
        merged_den: dict[tuple[int, int], float] = {}
        for (a, b), value in num.items():
            a2 = keep if a == gone else a
            b2 = keep if b == gone else b
            if a2 == b2:
                continue
            key = (a2, b2) if a2 < b2 else (b2, a2)
            merged_num[key] = merged_num.get(key, 0.0) + value
            merged_den[key] = merged_den.get(key, 0.0) + den[(a, b)]
        num, den = merged_num, merged_den
    return SegmentationState.from_assignment(region_of)


def refine(state: SegmentationState, refined_graph: AffinityGraph, adjacency: SuperpointAdjacency,
           superpoints: SuperpointSet, max_iters: int, tau_stay: float = 0.0,
           weighting: NeighborWeighting = count_over_distance) -> tuple[SegmentationState, RefinementTrace]:
    """Move boundary superpoints to the adjacent region they agree with most.

    Superpoints are visited in ascending id order and each move is visible
    to later evaluations in the same sweep. A move happens only when the best
    adjacent region strictly beats the current one. When no member of the
    current region can vote, the current score is ``tau_stay``: the
    superpoint leaves only for a region that region growing would have let
    it join. Stops after a sweep without moves or after ``max_iters`` sweeps.
    """
    assignment = state.assignment.copy()
    members: dict[int, set[int]] = {}
    for sp, r in enumerate(assignment.tolist()):
        members.setdefault(r, set()).add(sp)
    trace = RefinementTrace()
    for _ in range(max_iters):
        moves = []
        for sp in sorted(boundary_superpoints(SegmentationState(assignment, ()), adjacency)):
            current = int(assignment[sp])
            others = sorted({int(assignment[n]) for n in adjacency.neighbors(sp)} - {current})
            if not others:
                continue
            own = members[current] - {sp}
            here = neighbor_weighted_affinity(sp, own, refined_graph, superpoints, adjacency, weighting)
            here = tau_stay if here is None else here
            best_region, best = None, here
            for r in others:
                score = neighbor_weighted_affinity(sp, members[r], refined_graph, superpoints, adjacency, weighting)
                if score is not None and score > best:
                    best_region, best = r, score
            if best_region is None:
                continue
            members[current].discard(sp)
            members[best_region].add(sp)
            assignment[sp] = best_region
            moves.append((sp, current, best_region))
        trace.iterations.append(moves)
        if not moves:
            break
    return SegmentationState.from_assignment(assignment), trace


def refine_segmentation(state: SegmentationState, refined_graph: AffinityGraph, superpoints: SuperpointSet,
                        adjacency: SuperpointAdjacency, tau_merge: float,
                        max_iters: int) -> tuple[SegmentationState, RefinementTrace]:
    """Reassign boundary superpoints, then merge regions that still belong together."""
    moved, trace = refine(state, refined_graph, adjacency, superpoints, max_iters, tau_merge)
    final = merge_regions(moved, refined_graph, superpoints, adjacency, tau_merge, trace)
    return final, trace
