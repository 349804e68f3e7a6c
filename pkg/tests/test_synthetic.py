import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from maskfusion3d import io
from maskfusion3d import synthetic as syn
from maskfusion3d.projection import build_projection_table, project_points

from helpers import synthetic

TWO_BOXES = (syn.Primitive("box", (-0.3, 0.0, 0.15), (0.25, 0.25, 0.3)),
             syn.Primitive("box", (0.3, 0.0, 0.15), (0.25, 0.25, 0.3)))


def ring(count):
    return syn.CameraRing(count, 1.8, 1.0, (0.0, 0.0, 0.15))


def test_one_box_four_cameras():
    spec = syn.SceneSpec((TWO_BOXES[0],), ring(4), seed=1)
    bundle, gt = syn.generate(spec)
    assert len(bundle.frames) == 4
    assert all(len(f.masks) <= 1 for f in bundle.frames)
    assert set(gt.point_labels.tolist()) == {0}
    assert syn.corruption_report(bundle, gt).fragmentation_rate == 0.0


def test_two_boxes_disjoint_masks_and_exact_owner_depth():
    bundle, gt = syn.generate(syn.SceneSpec(TWO_BOXES, ring(8), seed=2))
    table = build_projection_table(bundle, 0.05)
    for row, (frame, labels) in enumerate(zip(bundle.frames, gt.label_images)):
        covered = np.zeros(frame.shape, dtype=int)
        for m in frame.masks:
            covered += m.bitmap
        assert covered.max() <= 1
        # a point that owns its own pixel was rendered at exactly its depth
        depth, owner, (px, py, z, ok) = syn.render(bundle.cloud.positions, frame.intrinsics, frame.pose)
        h, w = frame.shape
        inside = ok & (px >= 0) & (px < w) & (py >= 0) & (py < h)
        pts = np.flatnonzero(inside)
        own = pts[owner[py[pts], px[pts]] == pts]
        assert len(own) > 100
        assert np.array_equal(depth[py[own], px[own]], z[own])
        assert table.visible[row, own].all()
        assert np.all(table.weight[row, own] == 1.0)

def test_uncorrupted_masks_equal_owner_instances():
    bundle, gt = synthetic(("random", ("seed", 3)))
    for frame, labels in zip(bundle.frames, gt.label_images):
        expected = {int(i): labels == i for i in np.unique(labels[labels >= 0])}
        got = [m.bitmap for m in frame.masks]
        assert len(got) == len(expected)
        assert all(any(np.array_equal(g, e) for e in expected.values()) for g in got)


def test_axis_fragments_tile_their_mask():
    spec = syn.SceneSpec(TWO_BOXES, ring(4), corruption=syn.Corruption(fragment_prob=1.0), seed=5)
    bundle, gt = syn.generate(spec)
    for frame, labels in zip(bundle.frames, gt.label_images):
        wholes = [m for m in frame.masks if m.score == syn.WHOLE_SCORE]
        pieces = [m for m in frame.masks if m.score == syn.CORRUPT_SCORE]
        assert len(pieces) == 2 * len(wholes)
        for w in wholes:
            mine = [p.bitmap for p in pieces if (p.bitmap & w.bitmap).any()]
            assert len(mine) == 2
            assert np.array_equal(mine[0] | mine[1], w.bitmap)
            assert not (mine[0] & mine[1]).any()
    assert syn.corruption_report(bundle, gt).fragmentation_rate == 1.0


def test_parts_fragments_follow_primitives():
    key = ("random", ("seed", 0), ("n_objects", 2), ("stacked", True),
           ("corruption", (("fragment_prob", 1.0), ("fragment_mode", "parts"))))
    bundle, gt = synthetic(key)
    for frame in bundle.frames:
        wholes = [m for m in frame.masks if m.score == syn.WHOLE_SCORE]
        for w in wholes:
            mine = [m.bitmap for m in frame.masks if m.score == syn.CORRUPT_SCORE and (m.bitmap & w.bitmap).any()]
            if mine:
                assert np.array_equal(np.logical_or.reduce(mine), w.bitmap)
                assert 2 <= len(mine) <= syn.STACK_PARTS


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 12 - 1), st.integers(2, 4))
def test_split_mask_is_a_partition(bits, pieces):
    bitmap = np.array([(bits >> k) & 1 for k in range(12)], dtype=bool).reshape(3, 4)
    out = syn.split_mask(bitmap, pieces)
    if not out:
        return
    assert len(out) == pieces
    assert np.array_equal(np.sum(out, axis=0), bitmap.astype(int))


def test_drop_everything():
    spec = syn.SceneSpec(TWO_BOXES, ring(3), corruption=syn.Corruption(drop_prob=1.0))
    bundle, gt = syn.generate(spec)
    assert all(f.masks == () for f in bundle.frames)
    report = syn.corruption_report(bundle, gt)
    assert report.dropped == report.instance_masks > 0
    assert report.masks_per_frame == (0, 0, 0)


def test_same_seed_same_files(tmp_path):
    spec = syn.random_scene_spec(4, corruption=syn.SUITE_CORRUPTION, stacked=True)
    a, gt_a = syn.generate(spec)
    b, gt_b = syn.generate(syn.SceneSpec.from_dict(spec.to_dict()))
    io.save_bundle(a, tmp_path / "a")
    io.save_bundle(b, tmp_path / "b")
    for path in sorted((tmp_path / "a").rglob("*")):
        if path.is_file():
            assert path.read_bytes() == (tmp_path / "b" / path.relative_to(tmp_path / "a")).read_bytes()
    assert np.array_equal(gt_a.point_labels, gt_b.point_labels)
    assert syn.corruption_report(a, gt_a).to_json() == syn.corruption_report(b, gt_b).to_json()


def test_camera_inside_a_primitive():
    big = syn.Primitive("box", (0.0, 0.0, 0.0), (10.0, 10.0, 10.0))
    with pytest.raises(syn.DegenerateCameraError, match="degenerate camera"):
        syn.generate(syn.SceneSpec((big,), ring(2)))


def test_spec_validation():
    with pytest.raises(ValueError):
        syn.Corruption(fragment_prob=1.5)
    with pytest.raises(ValueError):
        syn.SceneSpec((), ring(1))
    with pytest.raises(ValueError):
        syn.Primitive("cone", (0, 0, 0), (1, 1, 1))


def test_suite_scenes_share_a_cloud_across_camera_counts():
    spec = syn.suite_specs([1])[0]
    a, _ = syn.generate(spec.with_cameras(2))
    b, _ = syn.generate(spec.with_cameras(8))
    assert np.array_equal(a.cloud.positions, b.cloud.positions)
    assert (len(a.frames), len(b.frames)) == (2, 8)
