"""Pinhole projection, depth-gated visibility and per-point depth consistency."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .scene import CameraIntrinsics, CameraPose, Frame, SceneBundle


def project_point(p, intrinsics: CameraIntrinsics, pose: CameraPose) -> tuple[float, float, float]:
    """Project one world point; ``(nan, nan, z_c)`` when it lies on the camera plane."""
    pc = pose.world_to_camera @ np.array([p[0], p[1], p[2], 1.0])
    uvw = intrinsics.matrix @ pc[:3]
    if uvw[2] == 0:
        return math.nan, math.nan, float(pc[2])
    return float(uvw[0] / uvw[2]), float(uvw[1] / uvw[2]), float(pc[2])


def project_points(positions: np.ndarray, intrinsics: CameraIntrinsics, pose: CameraPose):
    """Vectorised :func:`project_point` over an ``(N, 3)`` array."""
    rot, trans = pose.rotation, pose.translation
    pc = positions @ rot.T + trans
    uvw = pc @ intrinsics.matrix.T
    w = uvw[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = np.where(w != 0, uvw[:, 0] / w, np.nan)
        v = np.where(w != 0, uvw[:, 1] / w, np.nan)
    return u, v, pc[:, 2]


def unproject_pixel(u: float, v: float, z_c: float, intrinsics: CameraIntrinsics, pose: CameraPose) -> np.ndarray:
    x = (u - intrinsics.cx) / intrinsics.fx * z_c
    y = (v - intrinsics.cy) / intrinsics.fy * z_c
    return (pose.camera_to_world() @ np.array([x, y, z_c, 1.0]))[:3]


def pixel_of(u, v):
    """Nearest pixel, rounding halves up."""
    return np.floor(np.asarray(u) + 0.5), np.floor(np.asarray(v) + 0.5)


def is_visible(u: float, v: float, z_c: float, frame: Frame, alpha: float) -> bool:
    if not (math.isfinite(u) and math.isfinite(v)) or not z_c > 0:
        return False
    pu, pv = (int(x) for x in pixel_of(u, v))
    h, w = frame.depth.shape
    if not (0 <= pu < w and 0 <= pv < h):
        return False
    d = frame.depth[pv, pu]
    return bool(d > 0 and abs(z_c - d) < alpha * d)


def depth_weight(z_c: float, d: float, alpha: float) -> float:
    if not d > 0:
        raise ValueError("invalid depth")
    return 1.0 - abs(z_c - d) / (alpha * d)


@dataclass(frozen=True, eq=False)
class ProjectionTable:
    """Per-(frame, point) projections; every array is ``(n_frames, n_points)``.

    ``pixel`` holds the row-major flat pixel index (``v * width + u``) and is
    -1 wherever the point is not visible.
    """

    frame_ids: tuple[int, ...]
    u: np.ndarray
    v: np.ndarray
    z: np.ndarray
    visible: np.ndarray
    weight: np.ndarray
    pixel: np.ndarray

    @property
    def n_frames(self) -> int:
        return len(self.frame_ids)

    def without_depth_weights(self) -> "ProjectionTable":
        """Copy in which every visible point carries weight 1."""
        return ProjectionTable(self.frame_ids, self.u, self.v, self.z, self.visible,
                               self.visible.astype(np.float64), self.pixel)

    def select(self, frame_ids) -> "ProjectionTable":
        rows = [self.frame_ids.index(f) for f in frame_ids]
        return ProjectionTable(tuple(frame_ids), self.u[rows], self.v[rows], self.z[rows],
                               self.visible[rows], self.weight[rows], self.pixel[rows])


def _project_frame(positions: np.ndarray, frame: Frame, alpha: float):
    u, v, z = project_points(positions, frame.intrinsics, frame.pose)
    h, w = frame.depth.shape
    pu, pv = pixel_of(u, v)
    inside = np.isfinite(pu) & np.isfinite(pv) & (pu >= 0) & (pu < w) & (pv >= 0) & (pv < h) & (z > 0)
    iu = np.where(inside, pu, 0).astype(np.int64)
    iv = np.where(inside, pv, 0).astype(np.int64)
    d = np.where(inside, frame.depth[iv, iu], 0.0)
    err = np.abs(z - d)
    visible = inside & (d > 0) & (err < alpha * d)
    weight = np.zeros(len(positions))
    weight[visible] = 1.0 - err[visible] / (alpha * d[visible])
    pixel = np.where(visible, iv * w + iu, -1)
    return iu, iv, z, visible, weight, pixel


def build_projection_table(bundle: SceneBundle, alpha: float | None = None, threads: int = 1) -> ProjectionTable:
    """Project every point into every frame. Frames may be processed in parallel;
    rows are always stored in bundle frame order."""
    alpha = bundle.config.alpha if alpha is None else alpha
    positions = bundle.cloud.positions
    frames = bundle.frames
    if threads != 1 and len(frames) > 1:
        with ThreadPoolExecutor(max_workers=threads or None) as pool:
            rows = list(pool.map(lambda f: _project_frame(positions, f, alpha), frames))
    else:
        rows = [_project_frame(positions, f, alpha) for f in frames]
    if rows:
        u, v, z, vis, wt, pix = (np.stack(col) for col in zip(*rows))
    else:
        n = len(positions)
        u = v = pix = np.zeros((0, n), dtype=np.int64)
        z = wt = np.zeros((0, n))
        vis = np.zeros((0, n), dtype=bool)
    return ProjectionTable(tuple(f.frame_id for f in frames), u, v, z, vis, wt, pix)
