import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from maskfusion3d import io
from maskfusion3d.config import PipelineConfig
from maskfusion3d.scene import CameraIntrinsics, CameraPose, Frame, Mask2D, PointCloud, SceneBundle

from helpers import synthetic


def quantized(bundle: SceneBundle) -> SceneBundle:
    """The same bundle snapped onto what the file formats can hold."""
    cloud = bundle.cloud
    normals = None if cloud.normals is None else cloud.normals.astype(np.float32).astype(np.float64)
    cloud = PointCloud(cloud.positions.astype(np.float32).astype(np.float64), cloud.colors, normals)
    frames = [Frame(f.frame_id, f.intrinsics, f.pose, np.rint(f.depth * 1000.0) / 1000.0, f.masks)
              for f in bundle.frames]
    return SceneBundle(cloud, frames, bundle.config)


def assert_same_bundle(a: SceneBundle, b: SceneBundle):
    assert np.array_equal(a.cloud.positions, b.cloud.positions)
    assert np.array_equal(a.cloud.colors, b.cloud.colors)
    assert np.array_equal(a.cloud.normals, b.cloud.normals)
    assert a.config == b.config
    assert len(a.frames) == len(b.frames)
    for fa, fb in zip(a.frames, b.frames):
        assert fa.frame_id == fb.frame_id
        assert fa.intrinsics == fb.intrinsics
        assert np.array_equal(fa.pose.world_to_camera, fb.pose.world_to_camera)
        assert np.array_equal(fa.depth, fb.depth)
        assert fa.masks == fb.masks


def test_bundle_round_trip_is_exact(tmp_path):
    bundle, _ = synthetic(("random", ("seed", 2), ("n_objects", 2), ("n_cameras", 3),
                           ("corruption", (("fragment_prob", 0.5),))))
    bundle = quantized(bundle.with_config(PipelineConfig(alpha=0.07, tau_merge=0.6)))
    io.save_bundle(bundle, tmp_path / "a")
    loaded = io.load_bundle(tmp_path / "a")
    assert_same_bundle(bundle, loaded)


def test_save_load_save_is_byte_identical(tmp_path):
    bundle, _ = synthetic(("random", ("seed", 2), ("n_objects", 2), ("n_cameras", 3)))
    io.save_bundle(bundle, tmp_path / "a")
    io.save_bundle(io.load_bundle(tmp_path / "a"), tmp_path / "b")
    files_a = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    files_b = sorted(p.relative_to(tmp_path / "b") for p in (tmp_path / "b").rglob("*") if p.is_file())
    assert files_a == files_b
    for rel in files_a:
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()


def test_depth_png_stores_millimetres(tmp_path):
    depth = np.array([[0.0, 1.2344], [1.2346, 65.535]])
    io.write_depth_png(tmp_path / "d.png", depth)
    back = io.read_depth_png(tmp_path / "d.png")
    assert np.array_equal(back, np.array([[0.0, 1.234], [1.235, 65.535]]))
    with pytest.raises(ValueError):
        io.write_depth_png(tmp_path / "far.png", np.array([[70.0]]))


def test_depth_png_rejects_8_bit(tmp_path):
    from PIL import Image

    Image.fromarray(np.zeros((2, 2), dtype=np.uint8)).save(tmp_path / "d.png")
    with pytest.raises(io.DataError, match="16-bit"):
        io.read_depth_png(tmp_path / "d.png")


def test_ply_without_optional_fields(tmp_path):
    cloud = PointCloud(np.array([[0.5, 1.5, -2.0], [1.0, 2.0, 3.0]]))
    io.write_ply(tmp_path / "c.ply", cloud)
    back = io.read_ply(tmp_path / "c.ply")
    assert np.array_equal(back.positions, cloud.positions)
    assert back.colors is None and back.normals is None
    assert (tmp_path / "c.ply").read_bytes().startswith(b"ply\nformat binary_little_endian 1.0")


def test_garbage_ply_is_a_data_error(tmp_path):
    (tmp_path / "c.ply").write_bytes(b"not a ply at all")
    with pytest.raises(io.DataError):
        io.read_ply(tmp_path / "c.ply")


@settings(max_examples=30)
@given(st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=16, max_size=16))
def test_pose_text_round_trip(tmp_path_factory, values):
    path = tmp_path_factory.mktemp("pose") / "p.txt"
    pose = CameraPose(np.array(values).reshape(4, 4))
    io.write_pose(path, pose)
    assert np.array_equal(io.read_pose(path).world_to_camera, pose.world_to_camera)


def test_intrinsics_round_trip(tmp_path):
    k = CameraIntrinsics(525.0, 524.5, 319.5, 239.25, 640, 480)
    io.write_intrinsics(tmp_path / "k.txt", k)
    assert io.read_intrinsics(tmp_path / "k.txt") == k


def test_bad_number_reports_offset(tmp_path):
    (tmp_path / "k.txt").write_text("525 525 x9 239.5 640 480\n")
    with pytest.raises(io.DataError) as info:
        io.read_intrinsics(tmp_path / "k.txt")
    assert info.value.offset == 8


def test_mask_json_round_trip(tmp_path):
    bitmap = np.zeros((3, 4), dtype=bool)
    bitmap[1:, 2:] = True
    masks = [Mask2D.from_bitmap(7, 0, bitmap, 0.25), Mask2D.from_bitmap(7, 3, ~bitmap, 1.0)]
    io.write_masks(tmp_path / "m.json", 7, masks)
    frame_id, back = io.read_masks(tmp_path / "m.json")
    assert frame_id == 7
    assert back == masks


def test_malformed_mask_json_names_byte_offset(tmp_path):
    text = '{"frame_id": 0, "masks": [{"index": 0,, }]}'
    (tmp_path / "m.json").write_text(text)
    with pytest.raises(io.DataError) as info:
        io.read_masks(tmp_path / "m.json")
    assert info.value.offset == text.index(",,") + 1
    assert "m.json at byte" in str(info.value)


def test_mask_offset_counts_bytes_not_characters(tmp_path):
    text = '{"note": "éé", "frame_id": 0, "masks": [}'
    (tmp_path / "m.json").write_text(text, encoding="utf-8")
    with pytest.raises(io.DataError) as info:
        io.read_masks(tmp_path / "m.json")
    assert info.value.offset == len(text[:text.index("}")].encode("utf-8"))


def test_mask_schema_errors_name_the_field(tmp_path):
    doc = {"frame_id": 0, "masks": [{"index": 0, "score": "high", "rle": {"size": [1, 1], "counts": [0, 1]}}]}
    (tmp_path / "m.json").write_text(json.dumps(doc))
    with pytest.raises(io.DataError, match=r"masks\[0\]\.score"):
        io.read_masks(tmp_path / "m.json")


def test_mask_scores_are_clamped():
    doc = {"frame_id": 1, "masks": [
        {"index": 0, "score": 1.7, "rle": {"size": [1, 2], "counts": [0, 2]}},
        {"index": 1, "score": -0.2, "rle": {"size": [1, 2], "counts": [1, 1]}},
    ]}
    _, masks = io.parse_masks(json.dumps(doc))
    assert [m.score for m in masks] == [1.0, 0.0]


def test_masks_file_must_match_frame(tmp_path):
    bundle, _ = synthetic(("random", ("seed", 2), ("n_objects", 2), ("n_cameras", 3)))
    io.save_bundle(bundle, tmp_path)
    path = tmp_path / "frames" / "000001.masks.json"
    doc = json.loads(path.read_text())
    doc["frame_id"] = 5
    path.write_text(json.dumps(doc))
    with pytest.raises(io.DataError, match="does not match"):
        io.load_bundle(tmp_path)


def test_labels_round_trip_and_bad_line(tmp_path):
    labels = np.array([0, -1, 12, 3])
    io.write_labels(tmp_path / "l.txt", labels)
    assert np.array_equal(io.read_labels(tmp_path / "l.txt"), labels)
    (tmp_path / "bad.txt").write_text("1\n2\nthree\n")
    with pytest.raises(io.DataError) as info:
        io.read_labels(tmp_path / "bad.txt")
    assert info.value.offset == 4


def test_config_file_errors(tmp_path):
    (tmp_path / "c.json").write_text('{"alpha": 0.1, "bogus": 1}')
    with pytest.raises(io.DataError, match="bogus"):
        io.read_config(tmp_path / "c.json")
    (tmp_path / "d.json").write_text('{"alpha": }')
    with pytest.raises(io.DataError) as info:
        io.read_config(tmp_path / "d.json")
    assert info.value.offset == 10
