"""Core scene types shared by every pipeline stage.

All containers are frozen; array fields are made read-only on construction
so a bundle can be handed to worker threads without copies.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np

from .config import PipelineConfig

MaskId = tuple[int, int]


def _readonly(array: np.ndarray) -> np.ndarray:
    array.flags.writeable = False
    return array


@dataclass(frozen=True, eq=False)
class PointCloud:
    positions: np.ndarray
    colors: Optional[np.ndarray] = None
    normals: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "positions", _readonly(np.array(self.positions, dtype=np.float64).reshape(-1, 3)))
        if self.colors is not None:
            object.__setattr__(self, "colors", _readonly(np.array(self.colors, dtype=np.uint8).reshape(-1, 3)))
        if self.normals is not None:
            object.__setattr__(self, "normals", _readonly(np.array(self.normals, dtype=np.float64).reshape(-1, 3)))

    def __len__(self) -> int:
        return len(self.positions)


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])


@dataclass(frozen=True, eq=False)
class CameraPose:
    """Rigid world-to-camera transform."""

    world_to_camera: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "world_to_camera", _readonly(np.array(self.world_to_camera, dtype=np.float64).reshape(4, 4)))

    @property
    def rotation(self) -> np.ndarray:
        return self.world_to_camera[:3, :3]

    @property
    def translation(self) -> np.ndarray:
        return self.world_to_camera[:3, 3]

    def camera_to_world(self) -> np.ndarray:
        inv = np.eye(4)
        inv[:3, :3] = self.rotation.T
        inv[:3, 3] = -self.rotation.T @ self.translation
        return inv

    @classmethod
    def from_camera_to_world(cls, matrix: np.ndarray) -> "CameraPose":
        matrix = np.asarray(matrix, dtype=np.float64)
        out = np.eye(4)
        out[:3, :3] = matrix[:3, :3].T
        out[:3, 3] = -matrix[:3, :3].T @ matrix[:3, 3]
        return cls(out)


@dataclass(frozen=True)
class RLE:
    """Uncompressed column-major run-length encoding; the first run counts zeros."""

    size: tuple[int, int]
    counts: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "size", (int(self.size[0]), int(self.size[1])))
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))

    @classmethod
    def encode(cls, mask: np.ndarray) -> "RLE":
        mask = np.asarray(mask, dtype=bool)
        flat = mask.ravel(order="F")
        change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
        bounds = np.concatenate(([0], change, [flat.size]))
        runs = np.diff(bounds).tolist()
        if flat.size and flat[0]:
            runs.insert(0, 0)
        return cls(mask.shape, tuple(runs))

    def decode(self) -> np.ndarray:
        h, w = self.size
        if sum(self.counts) != h * w:
            raise ValueError(f"RLE decodes to {sum(self.counts)} bits, expected {h * w}")
        values = np.zeros(len(self.counts), dtype=bool)
        values[1::2] = True
        flat = np.repeat(values, self.counts)
        return flat.reshape((h, w), order="F")

    @property
    def area(self) -> int:
        return int(sum(self.counts[1::2]))


@dataclass(frozen=True)
class Mask2D:
    frame_id: int
    index: int
    rle: RLE
    score: float

    @property
    def mask_id(self) -> MaskId:
        return (self.frame_id, self.index)

    @cached_property
    def bitmap(self) -> np.ndarray:
        return _readonly(self.rle.decode())

    @cached_property
    def flat(self) -> np.ndarray:
        """Row-major flattened bitmap, indexable by ``v * width + u``."""
        return _readonly(np.ascontiguousarray(self.bitmap).ravel())

    @cached_property
    def area(self) -> int:
        return self.rle.area

    @classmethod
    def from_bitmap(cls, frame_id: int, index: int, bitmap: np.ndarray, score: float) -> "Mask2D":
        return cls(frame_id, index, RLE.encode(bitmap), float(score))


@dataclass(frozen=True, eq=False)
class Frame:
    frame_id: int
    intrinsics: CameraIntrinsics
    pose: CameraPose
    depth: np.ndarray
    masks: tuple[Mask2D, ...] = ()
    image: Optional[np.ndarray] = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "depth", _readonly(np.array(self.depth, dtype=np.float64)))
        object.__setattr__(self, "masks", tuple(self.masks))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.intrinsics.height, self.intrinsics.width)


@dataclass(frozen=True, eq=False)
class SceneBundle:
    cloud: PointCloud
    frames: tuple[Frame, ...]
    config: PipelineConfig = field(default_factory=PipelineConfig)

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(self.frames))

    def with_config(self, config: PipelineConfig) -> "SceneBundle":
        return SceneBundle(self.cloud, self.frames, config)

    def with_frames(self, frames) -> "SceneBundle":
        return SceneBundle(self.cloud, tuple(frames), self.config)


@dataclass(frozen=True)
class Violation:
    path: str
    message: str

    def __str__(self) -> str:
        return f"{self.path}: {self.message}"


class ValidationError(ValueError):
    def __init__(self, violations: list[Violation]):
        self.violations = violations
        head = "; ".join(str(v) for v in violations[:5])
        more = f" (+{len(violations) - 5} more)" if len(violations) > 5 else ""
        super().__init__(f"invalid scene: {head}{more}")


def _check_cloud(cloud: PointCloud) -> list[Violation]:
    out = []
    pos = cloud.positions
    if len(pos) == 0:
        out.append(Violation("cloud.positions", "empty point cloud"))
    elif not np.isfinite(pos).all():
        bad = int(np.flatnonzero(~np.isfinite(pos).all(axis=1))[0])
        out.append(Violation(f"cloud.positions[{bad}]", "non-finite coordinate"))
    if cloud.colors is not None and len(cloud.colors) != len(pos):
        out.append(Violation("cloud.colors", f"{len(cloud.colors)} colors for {len(pos)} points"))
    if cloud.normals is not None:
        if len(cloud.normals) != len(pos):
            out.append(Violation("cloud.normals", f"{len(cloud.normals)} normals for {len(pos)} points"))
        else:
            norms = np.linalg.norm(cloud.normals, axis=1)
            bad = np.flatnonzero(~(np.abs(norms - 1.0) <= 1e-4))
            if bad.size:
                out.append(Violation(f"cloud.normals[{int(bad[0])}]", f"not unit length ({bad.size} offending)"))
    return out


def _check_frame(i: int, frame: Frame) -> list[Violation]:
    out = []
    path = f"frames[{i}]"
    k = frame.intrinsics
    if not (k.fx > 0 and k.fy > 0):
        out.append(Violation(f"{path}.intrinsics", "focal lengths must be positive"))
    if not (0 <= k.cx < k.width and 0 <= k.cy < k.height):
        out.append(Violation(f"{path}.intrinsics", "principal point outside the image"))
    rot = frame.pose.rotation
    if not np.isfinite(frame.pose.world_to_camera).all():
        out.append(Violation(f"{path}.pose", "non-finite entries"))
    elif np.abs(rot @ rot.T - np.eye(3)).max() > 1e-5 or np.linalg.det(rot) <= 0:
        out.append(Violation(f"{path}.pose", "rotation block is not a proper orthonormal matrix"))
    elif not np.allclose(frame.pose.world_to_camera[3], [0, 0, 0, 1]):
        out.append(Violation(f"{path}.pose", "last row must be [0, 0, 0, 1]"))
    if frame.depth.shape != (k.height, k.width):
        out.append(
            Violation(f"{path}.depth", f"depth is {frame.depth.shape[1]}x{frame.depth.shape[0]} but intrinsics are {k.width}x{k.height}")
        )
    if not np.isfinite(frame.depth).all() or (frame.depth < 0).any():
        out.append(Violation(f"{path}.depth", "depth values must be finite and >= 0"))
    seen = set()
    for j, mask in enumerate(frame.masks):
        mpath = f"{path}.masks[{j}]"
        if mask.frame_id != frame.frame_id:
            out.append(Violation(mpath, f"frame_id {mask.frame_id} differs from frame {frame.frame_id}"))
        if mask.index in seen:
            out.append(Violation(mpath, f"duplicate mask index {mask.index}"))
        seen.add(mask.index)
        if not 0.0 <= mask.score <= 1.0:
            out.append(Violation(mpath, f"score {mask.score} outside [0, 1]"))
        total = sum(mask.rle.counts)
        if total != k.width * k.height or mask.rle.size != (k.height, k.width):
            out.append(Violation(f"{mpath}.rle", f"RLE decodes to {total} bits, expected {k.width * k.height}"))
        elif any(c < 0 for c in mask.rle.counts):
            out.append(Violation(f"{mpath}.rle", "negative run length"))
        elif mask.area < 1:
            out.append(Violation(f"{mpath}.rle", "mask covers no pixels"))
    return out


def validate_scene(bundle: SceneBundle) -> list[Violation]:
    """Return every invariant violation in ``bundle``; an empty list means valid."""
    out = _check_cloud(bundle.cloud)
    if not bundle.frames:
        out.append(Violation("frames", "at least one frame is required"))
    ids = [f.frame_id for f in bundle.frames]
    if len(set(ids)) != len(ids):
        out.append(Violation("frames", "frame_ids are not unique"))
    for i, frame in enumerate(bundle.frames):
        out.extend(_check_frame(i, frame))
    out.extend(Violation("config", msg) for msg in bundle.config.violations())
    return out


def require_valid(bundle: SceneBundle) -> None:
    violations = validate_scene(bundle)
    if violations:
        raise ValidationError(violations)
