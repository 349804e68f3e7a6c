"""Per-frame mask handling: IoU, score-ordered NMS and flattening into label maps."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .scene import Frame, Mask2D, MaskId

BACKGROUND = -1


@dataclass(frozen=True, eq=False)
class SegmentationMap2D:
    """Pixel -> mask label image; ``labels[v, u] == k`` means ``label_to_mask[k]``."""

    frame_id: int
    labels: np.ndarray
    label_to_mask: tuple[MaskId, ...]
    kind: str

    @property
    def flat(self) -> np.ndarray:
        return self.labels.ravel()

    @property
    def n_labels(self) -> int:
        return len(self.label_to_mask)


def mask_iou(a: Mask2D, b: Mask2D) -> float:
    if a.rle.size != b.rle.size:
        raise ValueError(f"mask size mismatch: {a.rle.size} vs {b.rle.size}")
    inter = int(np.count_nonzero(a.flat & b.flat))
    union = a.area + b.area - inter
    return inter / union if union else 0.0


def nms(masks: Iterable[Mask2D], iou_threshold: float, score: Callable[[Mask2D], float]) -> list[Mask2D]:
    """Greedy NMS by descending ``score(mask)``, ties by ascending mask index."""
    ranked = sorted(masks, key=lambda m: (-score(m), m.index))
    kept: list[Mask2D] = []
    for mask in ranked:
        if all(mask_iou(mask, k) <= iou_threshold for k in kept):
            kept.append(mask)
    return kept


def nms_by_score(masks: Iterable[Mask2D], iou_threshold: float) -> list[Mask2D]:
    return nms(masks, iou_threshold, lambda m: m.score)


def _flatten(frame: Frame, masks: Sequence[Mask2D], priority: Mapping[MaskId, float], kind: str) -> SegmentationMap2D:
    labels = np.full(frame.shape, BACKGROUND, dtype=np.int32)
    masks = list(masks)
    # paint lowest priority first so the best mask ends on top
    order = sorted(range(len(masks)), key=lambda k: (priority[masks[k].mask_id], -masks[k].index))
    flat = labels.reshape(-1)
    for k in order:
        flat[masks[k].flat] = k
    return SegmentationMap2D(frame.frame_id, labels, tuple(m.mask_id for m in masks), kind)


def build_coarse_map(frame: Frame, masks: Sequence[Mask2D]) -> SegmentationMap2D:
    """Flatten NMS survivors; overlapping pixels go to the highest-scoring mask."""
    return _flatten(frame, masks, {m.mask_id: m.score for m in masks}, "coarse")


def build_refined_map(frame: Frame, masks: Sequence[Mask2D], consistency_scores: Mapping[MaskId, float]) -> SegmentationMap2D:
    """Like :func:`build_coarse_map`, but overlaps resolve by multi-view consistency."""
    masks = [m for m in masks if m.mask_id in consistency_scores]
    return _flatten(frame, masks, consistency_scores, "refined")


def coarse_maps(frames: Sequence[Frame], iou_threshold: float) -> tuple[list[SegmentationMap2D], dict[int, list[Mask2D]]]:
    """Coarse maps for every frame plus the per-frame NMS survivors."""
    maps, survivors = [], {}
    for frame in frames:
        kept = nms_by_score(frame.masks, iou_threshold)
        survivors[frame.frame_id] = kept
        maps.append(build_coarse_map(frame, kept))
    return maps, survivors
