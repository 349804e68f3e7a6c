"""Multi-view mask matching guided by coarse 3D segments.

Each coarse segment is projected into every frame. Masks that contain almost
all of a well-observed segment's visible points become its candidates. Every
candidate mask is described by a coverage vector over segments; masks whose
coverage agrees with the other candidates of the same segment score high,
and the per-frame NMS on those scores keeps the view-consistent masks.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .masks import SegmentationMap2D, build_refined_map, nms
from .projection import ProjectionTable
from .scene import Frame, Mask2D, MaskId


def frame_visibility(segment_points: np.ndarray, frame_row: int, table: ProjectionTable) -> float:
    return float(np.count_nonzero(table.visible[frame_row, segment_points]) / len(segment_points))


def _visible_in_mask(segment_points: np.ndarray, frame_row: int, table: ProjectionTable, mask: Mask2D):
    vis_points = segment_points[table.visible[frame_row, segment_points]]
    inside = mask.flat[table.pixel[frame_row, vis_points]]
    return vis_points, inside


def mask_visibility(segment_points: np.ndarray, frame_row: int, mask: Mask2D, table: ProjectionTable) -> Optional[float]:
    """Share of the segment's visible points that fall inside ``mask``; ``None`` if none is visible."""
    vis_points, inside = _visible_in_mask(segment_points, frame_row, table, mask)
    if len(vis_points) == 0:
        return None
    return float(np.count_nonzero(inside) / len(vis_points))


def segment_mask_depth_weight(segment_points: np.ndarray, frame_row: int, mask: Mask2D,
                              table: ProjectionTable) -> Optional[float]:
    """Mean depth weight of the segment's visible points inside ``mask``."""
    vis_points, inside = _visible_in_mask(segment_points, frame_row, table, mask)
    if not inside.any():
        return None
    return float(table.weight[frame_row, vis_points[inside]].mean())


def coverage_entry(segment_points: np.ndarray, frame_row: int, mask: Mask2D, table: ProjectionTable) -> float:
    wbar = segment_mask_depth_weight(segment_points, frame_row, mask, table)
    if wbar is None:
        return 0.0
    return wbar * mask_visibility(segment_points, frame_row, mask, table)


def coverage_vector(mask: Mask2D, frame_row: int, segments: Sequence[np.ndarray], table: ProjectionTable) -> dict[int, float]:
    """Sparse coverage of ``mask`` over segments (segment id -> entry)."""
    out = {}
    for k, points in enumerate(segments):
        value = coverage_entry(points, frame_row, mask, table)
        if value > 0:
            out[k] = value
    return out


def is_candidate(frame_vis: float, mask_vis: Optional[float], tau_f: float, tau_m: float) -> bool:
    return mask_vis is not None and frame_vis > tau_f and mask_vis > tau_m


def candidate_set(segment_points: np.ndarray, frames: Sequence[Frame], masks: Mapping[int, Sequence[Mask2D]],
                  table: ProjectionTable, tau_f: float, tau_m: float) -> list[MaskId]:
    out = []
    for frame in frames:
        row = table.frame_ids.index(frame.frame_id)
        vf = frame_visibility(segment_points, row, table)
        if not vf > tau_f:
            continue
        for mask in masks.get(frame.frame_id, ()):
            if is_candidate(vf, mask_visibility(segment_points, row, mask, table), tau_f, tau_m):
                out.append(mask.mask_id)
    return out


def _cosine(a, b) -> float:
    if isinstance(a, dict):
        keys = set(a) | set(b)
        a = np.array([a.get(k, 0.0) for k in sorted(keys)])
        b = np.array([b.get(k, 0.0) for k in sorted(keys)])
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def consistency_score(members: Sequence[MaskId], vectors: Mapping[MaskId, object]) -> dict[MaskId, float]:
    """Mean cosine of each member's coverage vector to every other member's.

    A lone candidate has nothing to disagree with and scores 1.0.
    """
    if len(members) == 0:
        return {}
    if len(members) == 1:
        return {members[0]: 1.0}
    out = {}
    for m in members:
        total = sum(_cosine(vectors[m], vectors[o]) for o in members if o != m)
        out[m] = total / (len(members) - 1)
    return out


def final_mask_scores(per_segment_scores: Mapping[int, Mapping[MaskId, float]]) -> dict[MaskId, float]:
    """Average each mask's score over all segments that matched it."""
    sums: dict[MaskId, float] = {}
    hits: dict[MaskId, int] = {}
    for seg in sorted(per_segment_scores):
        for mask_id, score in per_segment_scores[seg].items():
            sums[mask_id] = sums.get(mask_id, 0.0) + score
            hits[mask_id] = hits.get(mask_id, 0) + 1
    return {m: sums[m] / hits[m] for m in sorted(sums)}


def consistency_nms_and_refine_maps(frames: Sequence[Frame], masks: Mapping[int, Sequence[Mask2D]],
                                    final_scores: Mapping[MaskId, float], nms_iou: float):
    """Per-frame NMS on consistency scores; returns ``(refined_maps, kept)``.

    Masks without a score never enter the refined maps.
    """
    maps, kept_by_frame = [], {}
    for frame in frames:
        scored = [m for m in masks.get(frame.frame_id, ()) if m.mask_id in final_scores]
        kept = nms(scored, nms_iou, lambda m: final_scores[m.mask_id])
        kept_by_frame[frame.frame_id] = kept
        maps.append(build_refined_map(frame, kept, final_scores))
    return maps, kept_by_frame


@dataclass(frozen=True, eq=False)
class MatchingResult:
    candidate_sets: dict[int, list[MaskId]]
    coverage: dict[MaskId, dict[int, float]]
    segment_scores: dict[int, dict[MaskId, float]]
    final_scores: dict[MaskId, float]
    refined_maps: list[SegmentationMap2D]
    kept: dict[int, list[Mask2D]] = field(default_factory=dict)

    def to_json(self) -> dict:
        key = lambda m: f"{m[0]}:{m[1]}"  # noqa: E731
        return {
            "candidate_sets": {str(s): [key(m) for m in ms] for s, ms in sorted(self.candidate_sets.items())},
            "coverage_vectors": {key(m): {str(k): v for k, v in sorted(vec.items())} for m, vec in sorted(self.coverage.items())},
            "segment_scores": {str(s): {key(m): v for m, v in sorted(sc.items())} for s, sc in sorted(self.segment_scores.items())},
            "final_scores": {key(m): v for m, v in sorted(self.final_scores.items())},
            "kept_masks": {str(f): [m.index for m in ms] for f, ms in sorted(self.kept.items())},
        }


def match_masks(point_segments: np.ndarray, n_segments: int, frames: Sequence[Frame],
                masks: Mapping[int, Sequence[Mask2D]], table: ProjectionTable, tau_f: float, tau_m: float,
                nms_iou: float) -> MatchingResult:
    """Run candidate selection, coverage, consistency scoring and refined-map construction.

    ``point_segments[p]`` is the coarse segment of point ``p``; ``masks`` maps
    frame id to that frame's NMS survivors.
    """
    seg_size = np.bincount(point_segments, minlength=n_segments).astype(np.float64)
    candidate_sets: dict[int, list[MaskId]] = {s: [] for s in range(n_segments)}
    coverage: dict[MaskId, dict[int, float]] = {}
    dense: dict[MaskId, np.ndarray] = {}
    for frame in sorted(frames, key=lambda f: f.frame_id):
        frame_masks = masks.get(frame.frame_id, ())
        if not frame_masks:
            continue
        row = table.frame_ids.index(frame.frame_id)
        idx = np.flatnonzero(table.visible[row])
        seg = point_segments[idx]
        weight = table.weight[row, idx]
        pixel = table.pixel[row, idx]
        n_vis = np.bincount(seg, minlength=n_segments).astype(np.float64)
        frame_vis = n_vis / seg_size
        observed = n_vis > 0
        for mask in sorted(frame_masks, key=lambda m: m.index):
            inside = mask.flat[pixel]
            n_in = np.bincount(seg[inside], minlength=n_segments)
            w_in = np.bincount(seg[inside], weights=weight[inside], minlength=n_segments)
            vec = np.zeros(n_segments)
            vec[observed] = w_in[observed] / n_vis[observed]
            mask_vis = np.zeros(n_segments)
            mask_vis[observed] = n_in[observed] / n_vis[observed]
            hits = np.flatnonzero(observed & (frame_vis > tau_f) & (mask_vis > tau_m))
            if hits.size == 0:
                continue
            dense[mask.mask_id] = vec
            coverage[mask.mask_id] = {int(k): float(vec[k]) for k in np.flatnonzero(vec)}
            for s in hits.tolist():
                candidate_sets[s].append(mask.mask_id)
    candidate_sets = {s: ms for s, ms in candidate_sets.items() if ms}
    unit = {m: v / np.linalg.norm(v) for m, v in dense.items()}
    segment_scores: dict[int, dict[MaskId, float]] = {}
    for s, members in candidate_sets.items():
        if len(members) == 1:
            segment_scores[s] = {members[0]: 1.0}
            continue
        mat = np.stack([unit[m] for m in members])
        cos = mat @ mat.T
        np.fill_diagonal(cos, 0.0)
        scores = cos.sum(axis=1) / (len(members) - 1)
        segment_scores[s] = {m: float(x) for m, x in zip(members, scores)}
    final = final_mask_scores(segment_scores)
    refined, kept = consistency_nms_and_refine_maps(frames, masks, final, nms_iou)
    return MatchingResult(candidate_sets, coverage, segment_scores, final, refined, kept)
