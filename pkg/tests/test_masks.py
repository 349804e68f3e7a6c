import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from maskfusion3d import masks as mk
from maskfusion3d.scene import RLE, Mask2D

from helpers import flat_frame, line_mask


def block(frame_id, index, rows, cols, score=1.0, shape=(4, 4)):
    bitmap = np.zeros(shape, dtype=bool)
    bitmap[rows, cols] = True
    return Mask2D.from_bitmap(frame_id, index, bitmap, score)


def test_iou_examples():
    a = block(0, 0, slice(0, 2), slice(0, 2))
    b = block(0, 1, slice(0, 2), slice(1, 3))
    c = block(0, 2, slice(2, 4), slice(2, 4))
    assert mk.mask_iou(a, a) == 1.0
    assert mk.mask_iou(a, c) == 0.0
    assert mk.mask_iou(a, b) == 2 / 6
    with pytest.raises(ValueError):
        mk.mask_iou(a, block(0, 3, 0, 0, shape=(2, 2)))


def test_nms_examples():
    a = block(0, 0, slice(0, 2), slice(0, 2), 0.9)
    a2 = block(0, 1, slice(0, 2), slice(0, 2), 0.8)
    c = block(0, 2, slice(2, 4), slice(2, 4), 0.5)
    assert [m.index for m in mk.nms_by_score([a2, a], 0.5)] == [0]
    assert [m.index for m in mk.nms_by_score([c, a], 0.5)] == [0, 2]


def test_nms_trace_with_given_overlaps(monkeypatch):
    # these overlaps cannot come from real pixel sets, so the IoU is injected
    a, b, c = (line_mask(0, i, [i], 4, s) for i, s in enumerate((0.9, 0.8, 0.7)))
    table = {(0, 1): 0.6, (1, 2): 0.7, (0, 2): 0.2}
    monkeypatch.setattr(mk, "mask_iou", lambda x, y: table[tuple(sorted((x.index, y.index)))])
    assert [m.index for m in mk.nms_by_score([c, b, a], 0.5)] == [0, 2]


def test_score_ties_break_by_index():
    a = block(0, 3, slice(0, 2), slice(0, 2), 0.5)
    b = block(0, 1, slice(0, 2), slice(0, 2), 0.5)
    assert [m.index for m in mk.nms_by_score([a, b], 0.5)] == [1]


random_masks = st.lists(
    st.tuples(st.integers(0, 2 ** 12 - 1), st.floats(0, 1)), min_size=0, max_size=8,
).map(lambda items: [Mask2D.from_bitmap(0, i, np.array([(bits >> k) & 1 for k in range(12)], dtype=bool).reshape(3, 4), s)
                     for i, (bits, s) in enumerate(items)])


@settings(max_examples=100, deadline=None)
@given(random_masks, st.floats(0, 1))
def test_nms_idempotent(masks, thr):
    once = mk.nms_by_score(masks, thr)
    assert mk.nms_by_score(once, thr) == once


@settings(max_examples=100, deadline=None)
@given(random_masks, st.floats(0, 1))
def test_nms_keeps_exactly_the_greedy_cover(masks, thr):
    kept = mk.nms_by_score(masks, thr)
    ids = {m.index for m in kept}
    for a in kept:
        assert all(mk.mask_iou(a, b) <= thr for b in kept if b is not a)
    rank = {m.index: (-m.score, m.index) for m in masks}
    for m in masks:
        if m.index not in ids:
            assert any(mk.mask_iou(m, k) > thr and rank[k.index] < rank[m.index] for k in kept)


def test_raising_threshold_can_drop_a_survivor():
    # 0 suppresses 1 at threshold 0, which frees 2; at 0.25, 1 survives and suppresses 2
    rle = [(0, 2, 8, 1, 1), (0, 1, 5, 1, 5), (6, 1, 5)]
    masks = [Mask2D(0, k, RLE((3, 4), counts), 0.0) for k, counts in enumerate(rle)]
    assert [m.index for m in mk.nms_by_score(masks, 0.0)] == [0, 2]
    assert [m.index for m in mk.nms_by_score(masks, 0.25)] == [0, 1]


@settings(max_examples=100, deadline=None)
@given(random_masks)
def test_flattened_map_traces_to_one_mask(masks):
    frame = flat_frame(width=4, height=3)
    m = mk.build_coarse_map(frame, masks)
    covered = np.zeros(12, dtype=bool)
    for mask in masks:
        covered |= mask.flat
    assert np.array_equal(m.flat >= 0, covered)
    for pixel in np.flatnonzero(covered):
        winner = masks[m.flat[pixel]]
        assert winner.flat[pixel]
        best = max((x for x in masks if x.flat[pixel]), key=lambda x: (x.score, -x.index))
        assert winner is best


def test_coarse_map_examples():
    frame = flat_frame(width=4, height=4)
    left = block(0, 0, slice(None), slice(0, 2), 0.7)
    m = mk.build_coarse_map(frame, [left])
    assert (m.labels[:, :2] == 0).all() and (m.labels[:, 2:] == -1).all()
    assert m.kind == "coarse" and m.label_to_mask == ((0, 0),)

    hi = block(0, 1, slice(0, 2), slice(0, 4), 0.9)
    lo = block(0, 2, slice(0, 4), slice(0, 2), 0.8)
    m = mk.build_coarse_map(frame, [lo, hi])
    assert (m.labels[:2, :] == 1).all()
    assert (m.labels[2:, :2] == 0).all()

    assert (mk.build_coarse_map(frame, []).labels == -1).all()


def test_refined_map_orders_by_consistency():
    frame = flat_frame(width=4, height=4)
    whole = block(0, 0, slice(None), slice(None), 0.6)
    fragment = block(0, 1, slice(0, 2), slice(None), 0.95)
    coarse = mk.build_coarse_map(frame, [whole, fragment])
    assert (coarse.labels[:2] == 1).all()
    refined = mk.build_refined_map(frame, [whole, fragment], {whole.mask_id: 0.9, fragment.mask_id: 0.4})
    assert refined.kind == "refined"
    assert (refined.labels == 0).all()
    assert (mk.build_refined_map(frame, [], {}).labels == -1).all()


def test_unscored_masks_are_dropped_from_refined_map():
    frame = flat_frame(width=4, height=4)
    a = block(0, 0, slice(0, 2), slice(None))
    b = block(0, 1, slice(2, 4), slice(None))
    m = mk.build_refined_map(frame, [a, b], {b.mask_id: 0.5})
    assert m.label_to_mask == (b.mask_id,)
    assert (m.labels[:2] == -1).all() and (m.labels[2:] == 0).all()


def test_coarse_maps_per_frame():
    frames = [flat_frame(0, masks=[block(0, 0, slice(0, 2), slice(0, 2), 0.9),
                                   block(0, 1, slice(0, 2), slice(0, 2), 0.8)]),
              flat_frame(1)]
    maps, survivors = mk.coarse_maps(frames, 0.5)
    assert [m.frame_id for m in maps] == [0, 1]
    assert [m.index for m in survivors[0]] == [0] and survivors[1] == []
