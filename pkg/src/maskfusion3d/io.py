"""Reading and writing scene bundles, label files and ground truth.

Scene directory layout::

    cloud.ply                    binary little-endian PLY
    config.json                  PipelineConfig fields (optional on load)
    frames/NNNNNN.depth.png      16-bit millimetres, 0 = no measurement
    frames/NNNNNN.pose.txt       4x4 row-major world-to-camera matrix
    frames/NNNNNN.intrinsics.txt fx fy cx cy width height
    frames/NNNNNN.masks.json     {"frame_id", "masks": [{"index", "score", "rle"}]}
"""
from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from PIL import Image
from plyfile import PlyData, PlyElement, PlyParseError

from .config import PipelineConfig
from .scene import RLE, CameraIntrinsics, CameraPose, Frame, Mask2D, PointCloud, SceneBundle

FRAME_DIGITS = 6
DEPTH_SCALE = 1000.0


class DataError(ValueError):
    """Malformed input file. ``offset`` is a byte offset into ``path`` when known."""

    def __init__(self, path, message: str, offset: Optional[int] = None):
        self.path = str(path)
        self.offset = offset
        where = f"{self.path}" if offset is None else f"{self.path} at byte {offset}"
        super().__init__(f"{where}: {message}")


def _frame_stem(frame_id: int) -> str:
    return f"{frame_id:0{FRAME_DIGITS}d}"


# -- point clouds --------------------------------------------------------------

def write_ply(path, cloud: PointCloud) -> None:
    fields = [("x", "<f4"), ("y", "<f4"), ("z", "<f4")]
    if cloud.colors is not None:
        fields += [("red", "u1"), ("green", "u1"), ("blue", "u1")]
    if cloud.normals is not None:
        fields += [("nx", "<f4"), ("ny", "<f4"), ("nz", "<f4")]
    data = np.empty(len(cloud), dtype=fields)
    for k, name in enumerate("xyz"):
        data[name] = cloud.positions[:, k]
    if cloud.colors is not None:
        for k, name in enumerate(("red", "green", "blue")):
            data[name] = cloud.colors[:, k]
    if cloud.normals is not None:
        for k, name in enumerate(("nx", "ny", "nz")):
            data[name] = cloud.normals[:, k]
    PlyData([PlyElement.describe(data, "vertex")], text=False, byte_order="<").write(str(path))


def read_ply(path) -> PointCloud:
    try:
        ply = PlyData.read(str(path))
    except (PlyParseError, ValueError, EOFError, OSError) as exc:
        raise DataError(path, f"cannot parse PLY: {exc}") from exc
    if "vertex" not in ply:
        raise DataError(path, "no vertex element")
    vertex = ply["vertex"].data
    names = set(vertex.dtype.names or ())
    if not {"x", "y", "z"} <= names:
        raise DataError(path, "vertex element lacks x, y, z")
    positions = np.stack([vertex[n] for n in "xyz"], axis=1).astype(np.float64)
    colors = None
    if {"red", "green", "blue"} <= names:
        colors = np.stack([vertex[n] for n in ("red", "green", "blue")], axis=1).astype(np.uint8)
    normals = None
    if {"nx", "ny", "nz"} <= names:
        normals = np.stack([vertex[n] for n in ("nx", "ny", "nz")], axis=1).astype(np.float64)
    return PointCloud(positions, colors, normals)


def write_label_ply(path, positions: np.ndarray, labels: np.ndarray, palette: np.ndarray) -> None:
    """Point cloud colored by label; unlabeled points (-1) are gray."""
    labels = np.asarray(labels)
    colors = np.full((len(labels), 3), 128, dtype=np.uint8)
    ok = labels >= 0
    colors[ok] = palette[labels[ok] % len(palette)]
    write_ply(path, PointCloud(positions, colors))


# -- per-frame files -----------------------------------------------------------

def write_depth_png(path, depth: np.ndarray) -> None:
    mm = np.rint(np.asarray(depth) * DEPTH_SCALE)
    if (mm > np.iinfo(np.uint16).max).any():
        raise ValueError(f"{path}: depth beyond {np.iinfo(np.uint16).max / DEPTH_SCALE} m cannot be stored")
    Image.fromarray(mm.astype(np.uint16)).save(str(path))


def read_depth_png(path) -> np.ndarray:
    try:
        with Image.open(str(path)) as img:
            if img.mode not in ("I;16", "I;16B", "I;16L", "I"):
                raise DataError(path, f"expected a 16-bit grayscale PNG, got mode {img.mode}")
            raw = np.array(img)
    except DataError:
        raise
    except (OSError, ValueError) as exc:
        raise DataError(path, f"cannot read depth image: {exc}") from exc
    return raw.astype(np.float64) / DEPTH_SCALE


def _read_numbers(path, count: int) -> list[float]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise DataError(path, str(exc)) from exc
    tokens = text.split()
    if len(tokens) != count:
        raise DataError(path, f"expected {count} numbers, found {len(tokens)}")
    values = []
    pos = 0
    for tok in tokens:
        pos = text.index(tok, pos)
        try:
            values.append(float(tok))
        except ValueError:
            raise DataError(path, f"not a number: {tok!r}", len(text[:pos].encode())) from None
        pos += len(tok)
    return values


def write_pose(path, pose: CameraPose) -> None:
    rows = [" ".join(repr(float(x)) for x in row) for row in pose.world_to_camera]
    Path(path).write_text("\n".join(rows) + "\n")


def read_pose(path) -> CameraPose:
    return CameraPose(np.array(_read_numbers(path, 16)).reshape(4, 4))


def write_intrinsics(path, k: CameraIntrinsics) -> None:
    Path(path).write_text(f"{k.fx!r} {k.fy!r} {k.cx!r} {k.cy!r} {k.width} {k.height}\n")


def read_intrinsics(path) -> CameraIntrinsics:
    fx, fy, cx, cy, w, h = _read_numbers(path, 6)
    if not (w.is_integer() and h.is_integer()):
        raise DataError(path, "width and height must be integers")
    return CameraIntrinsics(fx, fy, cx, cy, int(w), int(h))


def masks_to_json(frame_id: int, masks: Sequence[Mask2D]) -> dict:
    return {
        "frame_id": int(frame_id),
        "masks": [
            {"index": m.index, "score": m.score, "rle": {"size": list(m.rle.size), "counts": list(m.rle.counts)}}
            for m in masks
        ],
    }


def write_masks(path, frame_id: int, masks: Sequence[Mask2D]) -> None:
    Path(path).write_text(json.dumps(masks_to_json(frame_id, masks)))


def _is_int(value) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def parse_masks(text: str, path="<masks>") -> tuple[int, list[Mask2D]]:
    """Parse a mask document. Scores are clamped into [0, 1]."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError(path, exc.msg, len(text[:exc.pos].encode())) from None
    if not isinstance(doc, dict) or not _is_int(doc.get("frame_id")) or not isinstance(doc.get("masks"), list):
        raise DataError(path, "expected an object with integer 'frame_id' and list 'masks'", 0)
    frame_id = doc["frame_id"]
    out = []
    for j, entry in enumerate(doc["masks"]):
        where = f"masks[{j}]"
        try:
            index, score, rle = entry["index"], entry["score"], entry["rle"]
            size, counts = rle["size"], rle["counts"]
        except (KeyError, TypeError):
            raise DataError(path, f"{where}: needs 'index', 'score' and 'rle' with 'size' and 'counts'") from None
        if not _is_int(index):
            raise DataError(path, f"{where}.index: expected an integer")
        if isinstance(score, bool) or not isinstance(score, (int, float)) or not np.isfinite(score):
            raise DataError(path, f"{where}.score: expected a finite number")
        if not (isinstance(size, list) and len(size) == 2 and all(_is_int(s) and s > 0 for s in size)):
            raise DataError(path, f"{where}.rle.size: expected [height, width]")
        if not (isinstance(counts, list) and all(_is_int(c) and c >= 0 for c in counts)):
            raise DataError(path, f"{where}.rle.counts: expected non-negative integers")
        score = min(1.0, max(0.0, float(score)))
        out.append(Mask2D(frame_id, index, RLE(tuple(size), tuple(counts)), score))
    return frame_id, out


def read_masks(path) -> tuple[int, list[Mask2D]]:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(path, str(exc)) from exc
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise DataError(path, "not valid UTF-8", exc.start) from None
    return parse_masks(text, path)


# -- bundles -------------------------------------------------------------------

def save_bundle(bundle: SceneBundle, directory) -> Path:
    root = Path(directory)
    frames_dir = root / "frames"
    frames_dir.mkdir(parents=True, exist_ok=True)
    write_ply(root / "cloud.ply", bundle.cloud)
    (root / "config.json").write_text(bundle.config.to_json() + "\n")
    for frame in bundle.frames:
        stem = frames_dir / _frame_stem(frame.frame_id)
        write_depth_png(f"{stem}.depth.png", frame.depth)
        write_pose(f"{stem}.pose.txt", frame.pose)
        write_intrinsics(f"{stem}.intrinsics.txt", frame.intrinsics)
        write_masks(f"{stem}.masks.json", frame.frame_id, frame.masks)
    return root


def read_config(path) -> PipelineConfig:
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError(path, exc.msg, len(text[:exc.pos].encode())) from None
    if not isinstance(data, dict):
        raise DataError(path, "config must be a JSON object", 0)
    try:
        return PipelineConfig.from_dict(data)
    except (KeyError, ValueError) as exc:
        raise DataError(path, str(exc).strip("'\"")) from None


def load_bundle(directory, config: Optional[PipelineConfig] = None) -> SceneBundle:
    """Load a scene directory. ``config`` overrides ``config.json`` when given."""
    root = Path(directory)
    if not root.is_dir():
        raise DataError(root, "scene directory does not exist")
    cloud = read_ply(root / "cloud.ply")
    if config is None:
        config = read_config(root / "config.json") if (root / "config.json").exists() else PipelineConfig()
    frames_dir = root / "frames"
    stems = sorted({p.name.split(".")[0] for p in frames_dir.glob("*.depth.png")}) if frames_dir.is_dir() else []
    frames = []
    for stem in stems:
        if not stem.isdigit():
            raise DataError(frames_dir / f"{stem}.depth.png", "frame files must be named by their integer id")
        base = frames_dir / stem
        depth = read_depth_png(f"{base}.depth.png")
        pose = read_pose(f"{base}.pose.txt")
        intr = read_intrinsics(f"{base}.intrinsics.txt")
        masks_path = Path(f"{base}.masks.json")
        masks: list[Mask2D] = []
        if masks_path.exists():
            fid, masks = read_masks(masks_path)
            if fid != int(stem):
                raise DataError(masks_path, f"frame_id {fid} does not match file name")
        frames.append(Frame(int(stem), intr, pose, depth, tuple(masks)))
    return SceneBundle(cloud, tuple(frames), config)


# -- labels ----------------------------------------------------------------------

def write_labels(path, labels: np.ndarray) -> None:
    """One integer per line, terminated by a newline."""
    labels = np.asarray(labels, dtype=np.int64)
    Path(path).write_text("".join(f"{int(x)}\n" for x in labels))


def read_labels(path) -> np.ndarray:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(path, str(exc)) from exc
    out = []
    offset = 0
    for line in raw.split(b"\n"):
        stripped = line.strip()
        if stripped:
            try:
                out.append(int(stripped))
            except ValueError:
                raise DataError(path, f"not an integer label: {stripped[:20]!r}", offset) from None
        offset += len(line) + 1
    return np.array(out, dtype=np.int64)


def write_json(path, payload) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True)
    tmp = f"{path}.tmp"
    Path(tmp).write_text(text + "\n")
    os.replace(tmp, path)
