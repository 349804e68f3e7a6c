"""Class-agnostic instance segmentation metrics (AP25, AP50, mAP over 0.50:0.95)."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

MAP_THRESHOLDS = tuple(round(0.5 + 0.05 * k, 2) for k in range(10))
IGNORE = -1


def instance_iou(pred, gt) -> float:
    pred, gt = set(pred), set(gt)
    if not pred and not gt:
        raise ValueError("IoU of two empty sets is undefined")
    return len(pred & gt) / len(pred | gt)


def instances_from_labels(labels: np.ndarray) -> tuple[list[int], list[np.ndarray]]:
    """Split a per-point label array into ``(ids, point index arrays)``; -1 is skipped."""
    labels = np.asarray(labels)
    order = np.argsort(labels, kind="stable")
    sorted_labels = labels[order]
    ids, starts = np.unique(sorted_labels, return_index=True)
    groups = np.split(order, starts[1:])
    out_ids, out_groups = [], []
    for i, g in zip(ids.tolist(), groups):
        if i != IGNORE:
            out_ids.append(int(i))
            out_groups.append(np.sort(g))
    return out_ids, out_groups


def iou_matrix(preds: Sequence[np.ndarray], gts: Sequence[np.ndarray]) -> np.ndarray:
    """Pairwise IoU between point-index sets, shape ``(len(preds), len(gts))``."""
    out = np.zeros((len(preds), len(gts)))
    if not preds or not gts:
        return out
    owner = {}
    for g, pts in enumerate(gts):
        for p in np.asarray(pts).tolist():
            owner[p] = g
    gt_sizes = np.array([len(np.unique(g)) for g in gts], dtype=np.float64)
    for k, pts in enumerate(preds):
        pts = np.unique(np.asarray(pts))
        hits = np.array([owner.get(p, -1) for p in pts.tolist()], dtype=np.int64)
        inter = np.bincount(hits[hits >= 0], minlength=len(gts)).astype(np.float64)
        out[k] = inter / (len(pts) + gt_sizes - inter)
    return out


def _rank(ious: np.ndarray, confidences: np.ndarray) -> list[int]:
    best = ious.max(axis=1) if ious.shape[1] else np.zeros(len(ious))
    return sorted(range(len(ious)), key=lambda k: (-confidences[k], -best[k], k))


def match_predictions(ious: np.ndarray, threshold: float, confidences: Optional[np.ndarray] = None) -> tuple[list[int], np.ndarray]:
    """Rank predictions and mark which ones become true positives.

    Predictions are ranked by confidence, then best IoU, then index. Each one
    in turn is matched if an augmenting path frees a ground-truth instance
    with IoU >= ``threshold`` for it, so earlier ranks are never displaced and
    the true-positive set is the rank-wise earliest maximum matching.

    Returns ``(order, gt_of)`` where ``gt_of[k]`` is the ground truth matched
    to prediction ``k`` or -1.
    """
    n_pred, n_gt = ious.shape
    conf = np.ones(n_pred) if confidences is None else np.asarray(confidences, dtype=np.float64)
    order = _rank(ious, conf)
    ok = ious >= threshold
    options = [sorted(np.flatnonzero(ok[k]).tolist(), key=lambda g: (-ious[k, g], g)) for k in range(n_pred)]
    pred_of = np.full(n_gt, -1, dtype=np.int64)
    gt_of = np.full(n_pred, -1, dtype=np.int64)

    def augment(k: int, seen: set) -> bool:
        for g in options[k]:
            if g in seen:
                continue
            seen.add(g)
            if pred_of[g] < 0 or augment(int(pred_of[g]), seen):
                pred_of[g] = k
                gt_of[k] = g
                return True
        return False

    for k in order:
        augment(k, set())
    return order, gt_of


def precision_recall(order: Sequence[int], gt_of: np.ndarray, n_gt: int) -> tuple[np.ndarray, np.ndarray]:
    tp = np.array([gt_of[k] >= 0 for k in order], dtype=np.float64)
    cum = np.cumsum(tp)
    precision = cum / np.arange(1, len(tp) + 1)
    recall = cum / n_gt
    return precision, recall


def area_under_pr(precision: np.ndarray, recall: np.ndarray) -> float:
    """Step integral of the precision envelope over recall."""
    if len(precision) == 0:
        return 0.0
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    steps = np.diff(np.concatenate([[0.0], recall]))
    return float(np.sum(steps * envelope))


def average_precision(preds: Sequence, gts: Sequence, iou_threshold: float,
                      confidences: Optional[Sequence[float]] = None, ious: Optional[np.ndarray] = None) -> float:
    if not 0 < iou_threshold <= 1:
        raise ValueError("IoU threshold must lie in (0, 1]")
    if len(gts) == 0:
        raise ValueError("no ground truth")
    if len(preds) == 0:
        return 0.0
    if ious is None:
        ious = iou_matrix([np.asarray(list(p)) for p in preds], [np.asarray(list(g)) for g in gts])
    order, gt_of = match_predictions(ious, iou_threshold, confidences)
    precision, recall = precision_recall(order, gt_of, len(gts))
    return area_under_pr(precision, recall)


@dataclass(frozen=True)
class ThresholdResult:
    threshold: float
    ap: float
    precision: tuple[float, ...]
    recall: tuple[float, ...]
    matches: tuple[tuple[int, int], ...]


@dataclass(frozen=True)
class EvaluationReport:
    mAP: float
    AP50: float
    AP25: float
    per_threshold: tuple[ThresholdResult, ...]

    def to_json(self) -> dict:
        return {
            "AP25": self.AP25,
            "AP50": self.AP50,
            "mAP": self.mAP,
            "thresholds": [
                {"iou": t.threshold, "ap": t.ap, "precision": list(t.precision), "recall": list(t.recall),
                 "matches": [list(m) for m in t.matches]}
                for t in self.per_threshold
            ],
        }


def evaluate(preds: Sequence, gts: Sequence, confidences: Optional[Sequence[float]] = None) -> EvaluationReport:
    """AP at 0.25, 0.50 and averaged over 0.50:0.05:0.95.

    ``preds`` and ``gts`` are point-index collections; ``matches`` in each
    threshold result pair prediction and ground-truth positions in these lists.
    """
    if len(gts) == 0:
        raise ValueError("no ground truth")
    preds = [np.asarray(list(p)) for p in preds]
    gts = [np.asarray(list(g)) for g in gts]
    return evaluate_ious(iou_matrix(preds, gts), confidences)


def evaluate_ious(ious: np.ndarray, confidences: Optional[Sequence[float]] = None) -> EvaluationReport:
    n_pred, n_gt = ious.shape
    if n_gt == 0:
        raise ValueError("no ground truth")
    results = []
    for thr in (0.25,) + MAP_THRESHOLDS:
        if n_pred:
            order, gt_of = match_predictions(ious, thr, confidences)
            precision, recall = precision_recall(order, gt_of, n_gt)
            ap = area_under_pr(precision, recall)
            matches = tuple((k, int(gt_of[k])) for k in order if gt_of[k] >= 0)
        else:
            precision = recall = np.zeros(0)
            ap, matches = 0.0, ()
        results.append(ThresholdResult(thr, ap, tuple(precision.tolist()), tuple(recall.tolist()), matches))
    by_thr = {r.threshold: r.ap for r in results}
    m_ap = float(np.mean([by_thr[t] for t in MAP_THRESHOLDS]))
    return EvaluationReport(m_ap, by_thr[0.5], by_thr[0.25], tuple(results))


def evaluate_labels(pred_labels: np.ndarray, gt_labels: np.ndarray, min_gt_points: int = 1) -> EvaluationReport:
    """Evaluate per-point label arrays.

    Points whose ground truth is -1 are removed before any IoU is taken;
    predictions left empty by that are discarded. Ground-truth instances
    with fewer than ``min_gt_points`` points are dropped.
    """
    pred_labels = np.asarray(pred_labels)
    gt_labels = np.asarray(gt_labels)
    if pred_labels.shape != gt_labels.shape:
        raise ValueError(f"label count mismatch: {len(pred_labels)} predictions vs {len(gt_labels)} ground truth")
    annotated = gt_labels != IGNORE
    pred_masked = np.where(annotated, pred_labels, IGNORE)
    gt_ids, gt_sizes = np.unique(gt_labels[annotated], return_counts=True)
    keep = gt_sizes >= min_gt_points
    gt_ids, gt_sizes = gt_ids[keep], gt_sizes[keep]
    if len(gt_ids) == 0:
        raise ValueError("no ground truth")
    pred_ids, pred_sizes = np.unique(pred_masked[pred_masked != IGNORE], return_counts=True)
    both = annotated & (pred_masked != IGNORE)
    gt_pos = np.searchsorted(gt_ids, gt_labels[both])
    in_kept = (gt_pos < len(gt_ids)) & (gt_ids[np.minimum(gt_pos, len(gt_ids) - 1)] == gt_labels[both])
    pred_pos = np.searchsorted(pred_ids, pred_masked[both])
    inter = np.zeros((len(pred_ids), len(gt_ids)))
    np.add.at(inter, (pred_pos[in_kept], gt_pos[in_kept]), 1.0)
    ious = inter / (pred_sizes[:, None] + gt_sizes[None, :] - inter)
    return evaluate_ious(ious)
