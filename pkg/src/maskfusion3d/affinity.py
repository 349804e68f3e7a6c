"""Superpoint affinity from co-occurrence in per-frame label maps.

Per frame, each superpoint gets a histogram of the labels its visible points
land on. Two superpoints' frame affinity is the cosine of their histograms;
frames are combined by a weighted mean whose weights multiply the two
superpoints' mean depth consistency and visible fraction in that frame.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .masks import SegmentationMap2D
from .projection import ProjectionTable
from .superpoints import SuperpointAdjacency, SuperpointSet


def histogram_vector(point_indices: np.ndarray, frame_row: int, table: ProjectionTable,
                     seg_map: SegmentationMap2D) -> dict[int, int]:
    """Label -> number of visible points of the superpoint landing on that label."""
    idx = np.asarray(point_indices)
    idx = idx[table.visible[frame_row, idx]]
    labels = seg_map.flat[table.pixel[frame_row, idx]]
    labels = labels[labels >= 0]
    values, counts = np.unique(labels, return_counts=True)
    return {int(v): int(c) for v, c in zip(values, counts)}


def frame_affinity(e_i: dict[int, float], e_j: dict[int, float]) -> Optional[float]:
    """Cosine similarity of two sparse histograms; ``None`` when either is empty."""
    if not e_i or not e_j:
        return None
    dot = sum(c * e_j.get(k, 0) for k, c in e_i.items())
    ni = np.sqrt(sum(c * c for c in e_i.values()))
    nj = np.sqrt(sum(c * c for c in e_j.values()))
    return float(dot / (ni * nj))


def superpoint_depth_weight(point_indices: np.ndarray, frame_row: int, table: ProjectionTable) -> Optional[float]:
    """Mean depth weight of the visible points, ``None`` if nothing is visible."""
    vis = table.visible[frame_row, point_indices]
    if not vis.any():
        return None
    return float(table.weight[frame_row, point_indices][vis].mean())


def superpoint_visibility_weight(point_indices: np.ndarray, frame_row: int, table: ProjectionTable) -> float:
    return float(np.count_nonzero(table.visible[frame_row, point_indices]) / len(point_indices))


def edge_weight(depth_i: float, depth_j: float, vis_i: float, vis_j: float) -> float:
    return depth_i * depth_j * vis_i * vis_j


def aggregate_affinity(per_frame: Iterable[tuple[Optional[float], float]]) -> Optional[float]:
    """Weighted mean of per-frame affinities; frames with undefined affinity are skipped."""
    num = den = 0.0
    for affinity, phi in per_frame:
        if affinity is None:
            continue
        num += phi * affinity
        den += phi
    if den <= 0:
        return None
    return num / den


@dataclass(frozen=True, eq=False)
class AffinityGraph:
    """Sparse symmetric affinities over adjacent superpoint pairs.

    ``affinity`` is NaN on pairs that were never co-observed; consumers treat
    those as absent edges.
    """

    n_superpoints: int
    pairs: np.ndarray
    numerator: np.ndarray
    denominator: np.ndarray

    def __post_init__(self):
        with np.errstate(invalid="ignore", divide="ignore"):
            aff = np.where(self.denominator > 0, self.numerator / self.denominator, np.nan)
        object.__setattr__(self, "affinity", aff)
        lookup = {}
        for (a, b), value in zip(self.pairs.tolist(), aff.tolist()):
            if value == value:
                lookup[(a, b)] = value
        object.__setattr__(self, "_lookup", lookup)

    def get(self, i: int, j: int) -> Optional[float]:
        return self._lookup.get((i, j) if i < j else (j, i))

    @property
    def defined(self) -> np.ndarray:
        return self.denominator > 0

    def items(self):
        """Yield ``(i, j, affinity)`` for every defined edge, sorted by pair."""
        for (a, b), value in sorted(self._lookup.items()):
            yield a, b, value

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.n_superpoints, self.n_superpoints))
        for a, b, value in self.items():
            out[a, b] = out[b, a] = value
        return out


def _frame_contribution(row: int, superpoints: SuperpointSet, pairs: np.ndarray,
                        table: ProjectionTable, seg_map: SegmentationMap2D):
    n_sp = len(superpoints)
    idx = np.flatnonzero(table.visible[row])
    sp = superpoints.labels[idx]
    n_vis = np.bincount(sp, minlength=n_sp).astype(np.float64)
    sum_w = np.bincount(sp, weights=table.weight[row, idx], minlength=n_sp)
    with np.errstate(invalid="ignore", divide="ignore"):
        depth_w = np.where(n_vis > 0, sum_w / n_vis, 0.0)
    vis_w = n_vis / superpoints.counts

    labels = seg_map.flat[table.pixel[row, idx]]
    on_mask = labels >= 0
    hist = np.zeros((n_sp, max(seg_map.n_labels, 1)))
    np.add.at(hist, (sp[on_mask], labels[on_mask]), 1.0)

    a, b = pairs[:, 0], pairs[:, 1]
    norms = np.sqrt(np.einsum("ij,ij->i", hist, hist))
    dots = np.einsum("ij,ij->i", hist[a], hist[b])
    defined = (norms[a] > 0) & (norms[b] > 0)
    affinity = np.zeros(len(pairs))
    affinity[defined] = dots[defined] / (norms[a][defined] * norms[b][defined])
    phi = np.where(defined, depth_w[a] * depth_w[b] * vis_w[a] * vis_w[b], 0.0)
    return phi * affinity, phi


def build_graph(superpoints: SuperpointSet, adjacency: SuperpointAdjacency, table: ProjectionTable,
                seg_maps: Sequence[SegmentationMap2D], threads: int = 1) -> AffinityGraph:
    """Affinity graph over ``adjacency`` pairs from one kind of label map.

    ``seg_maps`` are matched to table rows by frame id. Per-frame terms may be
    computed in parallel but are always summed in ascending frame-id order.
    """
    kinds = {m.kind for m in seg_maps}
    if len(kinds) > 1:
        raise ValueError(f"mixed segmentation map kinds: {sorted(kinds)}")
    pairs = adjacency.pairs
    by_frame = {m.frame_id: m for m in seg_maps}
    rows = sorted((fid, r) for r, fid in enumerate(table.frame_ids) if fid in by_frame)
    numerator = np.zeros(len(pairs))
    denominator = np.zeros(len(pairs))
    if len(pairs) == 0 or not rows:
        return AffinityGraph(len(superpoints), pairs, numerator, denominator)

    def work(item):
        fid, r = item
        return _frame_contribution(r, superpoints, pairs, table, by_frame[fid])

    if threads != 1 and len(rows) > 1:
        with ThreadPoolExecutor(max_workers=threads or None) as pool:
            parts = list(pool.map(work, rows))
    else:
        parts = [work(item) for item in rows]
    for num, den in parts:
        numerator += num
        denominator += den
    return AffinityGraph(len(superpoints), pairs, numerator, denominator)
