import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from maskfusion3d import evaluation as ev

from derived_cases import ap_matches_oracle, random_iou_trial


def test_iou_examples():
    assert ev.instance_iou({1, 2}, {1, 2}) == 1.0
    assert ev.instance_iou({1}, {2}) == 0.0
    assert ev.instance_iou(range(80), range(20, 120)) == 0.5
    with pytest.raises(ValueError):
        ev.instance_iou(set(), set())


def test_ap_edge_cases():
    gts = [np.arange(5), np.arange(5, 9)]
    assert ev.average_precision(gts, gts, 0.95) == 1.0
    assert ev.average_precision([], gts, 0.5) == 0.0
    with pytest.raises(ValueError, match="no ground truth"):
        ev.average_precision(gts, [], 0.5)
    with pytest.raises(ValueError):
        ev.average_precision(gts, gts, 0.0)
    report = ev.evaluate(gts, gts)
    assert (report.AP25, report.AP50, report.mAP) == (1.0, 1.0, 1.0)


def test_greedy_would_lose_a_match():
    # the top-ranked prediction prefers gt 0, which is the only option of the second
    ious = np.array([[0.9, 0.8], [0.7, 0.0]])
    assert ev.average_precision([None] * 2, [None] * 2, 0.5, ious=ious) == 1.0
    assert ap_matches_oracle(ious, 0.5)


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_matcher_agrees_with_exhaustive_search(seed):
    assert ap_matches_oracle(*random_iou_trial(np.random.default_rng(seed)))


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_ap_non_increasing_in_threshold(seed):
    ious, _ = random_iou_trial(np.random.default_rng(seed))
    aps = [ev.average_precision([None] * len(ious), [None] * ious.shape[1], t, ious=ious)
           for t in (0.25,) + ev.MAP_THRESHOLDS]
    assert all(0.0 <= a <= 1.0 for a in aps)
    assert all(a >= b for a, b in zip(aps, aps[1:]))


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_prediction_order_does_not_matter(seed):
    rng = np.random.default_rng(seed)
    n_pred, n_gt = int(rng.integers(1, 7)), int(rng.integers(1, 7))
    ious = rng.random((n_pred, n_gt))
    perm = rng.permutation(n_pred)
    a = ev.evaluate_ious(ious)
    b = ev.evaluate_ious(ious[perm])
    assert (a.AP25, a.AP50, a.mAP) == (b.AP25, b.AP50, b.mAP)


def test_labels_ignore_unannotated_points():
    gt = np.array([0, 0, 0, 1, 1, -1, -1])
    pred = np.array([5, 5, 5, 2, 2, 2, 9])
    report = ev.evaluate_labels(pred, gt)
    assert report.mAP == 1.0
    with pytest.raises(ValueError, match="mismatch"):
        ev.evaluate_labels(pred[:3], gt)


def test_min_gt_points_drops_small_instances():
    gt = np.array([0, 0, 0, 0, 1])
    pred = np.array([0, 0, 0, 0, -1])
    assert ev.evaluate_labels(pred, gt).mAP == 0.5
    assert ev.evaluate_labels(pred, gt, min_gt_points=2).mAP == 1.0


def test_labels_and_sets_agree():
    rng = np.random.default_rng(4)
    gt = rng.integers(-1, 5, 300)
    pred = np.where(rng.random(300) < 0.8, gt, rng.integers(0, 7, 300))
    by_labels = ev.evaluate_labels(pred, gt)
    annotated = gt != -1
    _, gts = ev.instances_from_labels(gt)
    _, preds = ev.instances_from_labels(np.where(annotated, pred, -1))
    by_sets = ev.evaluate(preds, gts)
    assert by_labels.to_json() == by_sets.to_json()


def test_report_json_shape():
    gts = [np.arange(3)]
    doc = ev.evaluate(gts, gts).to_json()
    assert set(doc) == {"AP25", "AP50", "mAP", "thresholds"}
    assert [t["iou"] for t in doc["thresholds"]] == [0.25] + list(ev.MAP_THRESHOLDS)
    assert doc["thresholds"][0]["matches"] == [[0, 0]]
