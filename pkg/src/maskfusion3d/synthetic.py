"""Seeded synthetic scenes with exact ground truth.

Surfaces of boxes, cylinders and planes are sampled on a jittered grid,
rendered into depth maps with a 3x3 point splat that keeps the nearest
point, and labelled with one perfect mask per visible instance. Masks can
then be fragmented, merged or dropped per frame to imitate a 2D segmenter
that disagrees with itself across views.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Any, Optional, Sequence

import numpy as np
from scipy.ndimage import binary_dilation
from scipy.spatial.transform import Rotation

from . import kernels
from .config import PipelineConfig
from .projection import pixel_of, project_points
from .scene import CameraIntrinsics, CameraPose, Frame, Mask2D, PointCloud, SceneBundle

SPLAT_RADIUS = 1
SURFACE_TOLERANCE = 0.05
WHOLE_SCORE = 0.9
CORRUPT_SCORE = 0.95
# relative depth agreement for a point to count as seen when culling
OBSERVED_TOLERANCE = 0.02

_PALETTE = np.array([
    [230, 25, 75], [60, 180, 75], [255, 225, 25], [0, 130, 200], [245, 130, 48], [145, 30, 180],
    [70, 240, 240], [240, 50, 230], [210, 245, 60], [250, 190, 190], [0, 128, 128], [170, 110, 40],
], dtype=np.uint8)


class DegenerateCameraError(ValueError):
    pass


@dataclass(frozen=True)
class Primitive:
    """``size`` is the full extent along local x, y, z. Cylinders take their
    radius from ``size[0] / 2`` and height from ``size[2]``; planes use x and y.

    Primitives sharing a non-None ``instance`` key form one object.
    """

    kind: str
    center: tuple[float, float, float]
    size: tuple[float, float, float]
    rotation: tuple[float, float, float] = (0.0, 0.0, 0.0)
    instance: Optional[int] = None

    def __post_init__(self):
        if self.kind not in ("box", "cylinder", "plane"):
            raise ValueError(f"unknown primitive kind {self.kind!r}")
        object.__setattr__(self, "center", tuple(float(x) for x in self.center))
        object.__setattr__(self, "size", tuple(float(x) for x in self.size))
        object.__setattr__(self, "rotation", tuple(float(x) for x in self.rotation))

    @property
    def matrix(self) -> np.ndarray:
        return Rotation.from_euler("xyz", self.rotation).as_matrix()

    def contains(self, point) -> bool:
        local = self.matrix.T @ (np.asarray(point, dtype=np.float64) - np.asarray(self.center))
        sx, sy, sz = self.size
        if self.kind == "box":
            return bool(np.all(np.abs(local) < np.array([sx, sy, sz]) / 2))
        if self.kind == "cylinder":
            return bool(math.hypot(local[0], local[1]) < sx / 2 and abs(local[2]) < sz / 2)
        return False


@dataclass(frozen=True)
class CameraRing:
    """Cameras on a horizontal circle around ``look_at``, all aimed at it.

    With ``arc_degrees`` below 360 the cameras span the arc end to end.
    """

    count: int
    radius: float = 2.0
    height: float = 1.2
    look_at: tuple[float, float, float] = (0.0, 0.0, 0.0)
    arc_degrees: float = 360.0
    start_degrees: float = 0.0

    def angles(self) -> np.ndarray:
        start = math.radians(self.start_degrees)
        arc = math.radians(self.arc_degrees)
        if self.arc_degrees >= 360.0 or self.count == 1:
            return start + arc * np.arange(self.count) / self.count
        return start + arc * np.arange(self.count) / (self.count - 1)

    def eyes(self) -> np.ndarray:
        a = self.angles()
        c = np.asarray(self.look_at, dtype=np.float64)
        return np.stack([c[0] + self.radius * np.cos(a), c[1] + self.radius * np.sin(a),
                         np.full_like(a, self.height)], axis=1)


@dataclass(frozen=True)
class Corruption:
    """Per-frame, per-mask corruption probabilities.

    ``fragment_mode="axis"`` cuts a mask across its bounding box into
    ``fragment_axis_splits`` pieces. ``"parts"`` splits an instance built
    from several primitives into one piece per primitive, so the pieces stay
    put in 3D from view to view the way a part-happy 2D segmenter's do.
    """

    fragment_prob: float = 0.0
    fragment_axis_splits: int = 2
    merge_prob: float = 0.0
    drop_prob: float = 0.0
    depth_noise: float = 0.0
    fragment_mode: str = "axis"

    def __post_init__(self):
        if self.fragment_mode not in ("axis", "parts"):
            raise ValueError(f"unknown fragment_mode {self.fragment_mode!r}")
        for key in ("fragment_prob", "merge_prob", "drop_prob"):
            if not 0.0 <= getattr(self, key) <= 1.0:
                raise ValueError(f"{key} must lie in [0, 1]")
        if self.fragment_axis_splits < 2:
            raise ValueError("fragment_axis_splits must be >= 2")
        if self.depth_noise < 0:
            raise ValueError("depth_noise must be >= 0")


@dataclass(frozen=True)
class SceneSpec:
    """Everything needed to regenerate a scene bit for bit.

    ``scan`` optionally names a separate camera ring used only to decide
    which surface points exist in the cloud, so that scenes differing only
    in their frame cameras share one point cloud.
    """

    primitives: tuple[Primitive, ...]
    cameras: CameraRing
    density: float = 1500.0
    image_size: tuple[int, int] = (160, 120)
    focal: float = 140.0
    corruption: Corruption = field(default_factory=Corruption)
    seed: int = 0
    scan: Optional[CameraRing] = None
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "primitives", tuple(self.primitives))
        object.__setattr__(self, "image_size", tuple(int(x) for x in self.image_size))
        if not self.primitives:
            raise ValueError("a scene needs at least one primitive")
        if self.cameras.count < 1:
            raise ValueError("a scene needs at least one camera")
        if not self.density > 0:
            raise ValueError("density must be positive")

    def pipeline_config(self) -> PipelineConfig:
        return PipelineConfig.from_dict(dict(self.config))

    def to_dict(self) -> dict[str, Any]:
        out = asdict(self)
        out["primitives"] = [asdict(p) for p in self.primitives]
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "SceneSpec":
        data = dict(data)
        prims = tuple(Primitive(**p) for p in data.pop("primitives"))
        cams = CameraRing(**_tuples(data.pop("cameras")))
        scan = data.pop("scan", None)
        corruption = Corruption(**data.pop("corruption", {}))
        return cls(prims, cams, corruption=corruption, scan=CameraRing(**_tuples(scan)) if scan else None, **data)

    def with_cameras(self, count: int) -> "SceneSpec":
        ring = self.cameras
        return SceneSpec(self.primitives, CameraRing(count, ring.radius, ring.height, ring.look_at, ring.arc_degrees,
                                                     ring.start_degrees), self.density, self.image_size, self.focal,
                         self.corruption, self.seed, self.scan or ring, self.config)

    def with_corruption(self, corruption: Corruption) -> "SceneSpec":
        return SceneSpec(self.primitives, self.cameras, self.density, self.image_size, self.focal, corruption,
                         self.seed, self.scan, self.config)


def _tuples(d: dict) -> dict:
    return {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}


@dataclass(frozen=True, eq=False)
class GroundTruth:
    point_labels: np.ndarray
    label_images: tuple[np.ndarray, ...]
    events: tuple[dict, ...]
    instance_masks: int


# -- surface sampling --------------------------------------------------------

def _grid(rng: np.random.Generator, su: float, sv: float, density: float) -> np.ndarray:
    """Jittered grid over ``[-su/2, su/2] x [-sv/2, sv/2]``."""
    step = 1.0 / math.sqrt(density)
    nu = max(1, int(round(su / step)))
    nv = max(1, int(round(sv / step)))
    iu, iv = np.meshgrid(np.arange(nu), np.arange(nv), indexing="ij")
    jitter = rng.random((nu * nv, 2))
    u = (iu.ravel() + jitter[:, 0]) / nu * su - su / 2
    v = (iv.ravel() + jitter[:, 1]) / nv * sv - sv / 2
    return np.stack([u, v], axis=1)


def _face(uv: np.ndarray, axes: tuple[int, int, int], offset: float, sign: float):
    pts = np.zeros((len(uv), 3))
    pts[:, axes[0]] = uv[:, 0]
    pts[:, axes[1]] = uv[:, 1]
    pts[:, axes[2]] = offset
    normals = np.zeros((len(uv), 3))
    normals[:, axes[2]] = sign
    return pts, normals


def _sample_local(prim: Primitive, rng: np.random.Generator, density: float):
    sx, sy, sz = prim.size
    parts = []
    if prim.kind == "plane":
        parts.append(_face(_grid(rng, sx, sy, density), (0, 1, 2), 0.0, 1.0))
    elif prim.kind == "box":
        for axes, (su, sv), half in (((1, 2, 0), (sy, sz), sx / 2), ((0, 2, 1), (sx, sz), sy / 2),
                                     ((0, 1, 2), (sx, sy), sz / 2)):
            for sign in (-1.0, 1.0):
                parts.append(_face(_grid(rng, su, sv, density), axes, sign * half, sign))
    else:
        r, h = sx / 2, sz
        uv = _grid(rng, 2 * math.pi * r, h, density)
        theta = uv[:, 0] / r
        pts = np.stack([r * np.cos(theta), r * np.sin(theta), uv[:, 1]], axis=1)
        normals = np.stack([np.cos(theta), np.sin(theta), np.zeros_like(theta)], axis=1)
        parts.append((pts, normals))
        for sign in (-1.0, 1.0):
            disk = _grid(rng, 2 * r, 2 * r, density)
            disk = disk[np.hypot(disk[:, 0], disk[:, 1]) <= r]
            parts.append(_face(disk, (0, 1, 2), sign * h / 2, sign))
    return np.concatenate([p for p, _ in parts]), np.concatenate([n for _, n in parts])


def instance_ids(primitives: Sequence[Primitive]) -> list[int]:
    """Dense instance id per primitive, numbered in order of first appearance."""
    remap: dict = {}
    out = []
    for k, prim in enumerate(primitives):
        key = ("group", prim.instance) if prim.instance is not None else ("own", k)
        out.append(remap.setdefault(key, len(remap)))
    return out


def sample_surfaces(spec: SceneSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Return ``(positions, normals, instance ids, primitive ids)`` for every primitive, in order."""
    positions, normals, prim_ids = [], [], []
    for k, prim in enumerate(spec.primitives):
        rng = np.random.default_rng([spec.seed, 0, k])
        local, local_n = _sample_local(prim, rng, spec.density)
        rot = prim.matrix
        positions.append(local @ rot.T + np.asarray(prim.center))
        normals.append(local_n @ rot.T)
        prim_ids.append(np.full(len(local), k, dtype=np.int64))
    pos = np.concatenate(positions).astype(np.float32).astype(np.float64)
    nrm = np.concatenate(normals)
    nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
    prim_ids = np.concatenate(prim_ids)
    return pos, nrm, np.asarray(instance_ids(spec.primitives), dtype=np.int64)[prim_ids], prim_ids


# -- cameras and rendering ---------------------------------------------------

def look_at_pose(eye, target, up=(0.0, 0.0, 1.0)) -> CameraPose:
    """Camera looking from ``eye`` at ``target``; x right, y down, z forward."""
    eye = np.asarray(eye, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - eye
    forward /= np.linalg.norm(forward)
    right = np.cross(forward, up)
    if np.linalg.norm(right) < 1e-9:
        right = np.cross(forward, (0.0, 1.0, 0.0))
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    c2w = np.eye(4)
    c2w[:3, 0], c2w[:3, 1], c2w[:3, 2], c2w[:3, 3] = right, down, forward, eye
    return CameraPose.from_camera_to_world(c2w)


def ring_poses(ring: CameraRing, primitives: Sequence[Primitive]) -> list[CameraPose]:
    poses = []
    for k, eye in enumerate(ring.eyes()):
        for prim in primitives:
            if prim.contains(eye):
                raise DegenerateCameraError(f"degenerate camera: camera {k} at {eye.tolist()} is inside a {prim.kind}")
        poses.append(look_at_pose(eye, ring.look_at))
    return poses


def intrinsics_for(spec: SceneSpec) -> CameraIntrinsics:
    w, h = spec.image_size
    return CameraIntrinsics(spec.focal, spec.focal, (w - 1) / 2, (h - 1) / 2, w, h)


def render(positions: np.ndarray, intrinsics: CameraIntrinsics, pose: CameraPose):
    """Splat every point into a ``(depth, owner)`` z-buffer; empty pixels have depth 0, owner -1."""
    u, v, z = project_points(positions, intrinsics, pose)
    pu, pv = pixel_of(u, v)
    ok = np.isfinite(pu) & np.isfinite(pv) & (z > 0)
    # park unusable points far outside so the kernel skips them
    px = np.where(ok, pu, -10).astype(np.int64)
    py = np.where(ok, pv, -10).astype(np.int64)
    zz = np.where(ok, z, -1.0)
    depth, owner = kernels.splat_min_depth(px, py, zz, intrinsics.width, intrinsics.height, SPLAT_RADIUS)
    # the splat decides occlusion; a point landing on its own pixel close to
    # the splatted surface writes its exact depth there
    own_depth, own_owner = kernels.splat_min_depth(px, py, zz, intrinsics.width, intrinsics.height, 0)
    with np.errstate(invalid="ignore"):
        gap = np.where(own_owner >= 0, own_depth - depth, np.inf)
    exact = gap <= SURFACE_TOLERANCE * depth
    depth = np.where(exact, own_depth, depth)
    owner = np.where(exact, own_owner, owner)
    depth = np.where(owner >= 0, depth, 0.0)
    return depth, owner, (px, py, z, ok)


def _observed(positions: np.ndarray, normals: np.ndarray, intrinsics: CameraIntrinsics,
              poses: Sequence[CameraPose]) -> np.ndarray:
    """Points that some camera sees from their front side at the rendered depth."""
    seen = np.zeros(len(positions), dtype=bool)
    h, w = intrinsics.height, intrinsics.width
    for pose in poses:
        depth, _, (px, py, z, ok) = render(positions, intrinsics, pose)
        eye = pose.camera_to_world()[:3, 3]
        facing = np.einsum("ij,ij->i", eye - positions, normals) > 0
        inside = ok & facing & (px >= 0) & (px < w) & (py >= 0) & (py < h)
        d = np.zeros(len(positions))
        d[inside] = depth[py[inside], px[inside]]
        seen |= inside & (d > 0) & (np.abs(z - d) <= OBSERVED_TOLERANCE * d)
    return seen


# -- masks and corruption ----------------------------------------------------

def split_mask(bitmap: np.ndarray, pieces: int) -> list[np.ndarray]:
    """Cut a mask across the longer side of its bounding box into ``pieces``
    parts holding roughly equal pixel counts. Returns [] if it is too small."""
    rows, cols = np.nonzero(bitmap)
    if len(rows) < pieces:
        return []
    height = rows.max() - rows.min()
    width = cols.max() - cols.min()
    coord = rows if height >= width else cols
    order = np.sort(coord)
    cuts = [order[(len(order) * k) // pieces] for k in range(1, pieces)]
    bounds = [-np.inf] + cuts + [np.inf]
    out = []
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        keep = (coord >= lo) & (coord < hi)
        if not keep.any():
            return []
        piece = np.zeros_like(bitmap)
        piece[rows[keep], cols[keep]] = True
        out.append(piece)
    return out


def split_by_parts(bitmap: np.ndarray, part_image: np.ndarray) -> list[np.ndarray]:
    """One piece per primitive inside the mask; [] when only one shows."""
    parts = np.unique(part_image[bitmap])
    if len(parts) < 2:
        return []
    return [bitmap & (part_image == p) for p in parts.tolist()]


def _frame_masks(frame_id: int, label_image: np.ndarray, part_image: np.ndarray, n_instances: int,
                 corruption: Corruption, seed: int):
    rng = np.random.default_rng([seed, 1, frame_id])
    wholes = []
    for inst in range(n_instances):
        bitmap = label_image == inst
        if bitmap.any():
            wholes.append((inst, bitmap))
    out: list[tuple[np.ndarray, float]] = []
    events = []
    extra: list[tuple[np.ndarray, float]] = []
    survivors = []
    for inst, bitmap in wholes:
        drop, frag = rng.random(2)
        if drop < corruption.drop_prob:
            events.append({"frame_id": frame_id, "kind": "drop", "instances": [inst]})
            continue
        survivors.append((inst, bitmap))
        out.append((bitmap, WHOLE_SCORE))
        if frag < corruption.fragment_prob:
            if corruption.fragment_mode == "axis":
                pieces = split_mask(bitmap, corruption.fragment_axis_splits)
            else:
                pieces = split_by_parts(bitmap, part_image)
            if pieces:
                events.append({"frame_id": frame_id, "kind": "fragment", "instances": [inst], "pieces": len(pieces)})
                extra.extend((p, CORRUPT_SCORE) for p in pieces)
    structure = np.ones((3, 3), dtype=bool)
    for a in range(len(survivors)):
        grown = binary_dilation(survivors[a][1], structure)
        for b in range(a + 1, len(survivors)):
            touching = bool((grown & survivors[b][1]).any())
            if touching and rng.random() < corruption.merge_prob:
                events.append({"frame_id": frame_id, "kind": "merge",
                               "instances": [survivors[a][0], survivors[b][0]]})
                extra.append((survivors[a][1] | survivors[b][1], CORRUPT_SCORE))
    out.extend(extra)
    masks = tuple(Mask2D.from_bitmap(frame_id, j, bitmap, score) for j, (bitmap, score) in enumerate(out))
    return masks, events


def generate(spec: SceneSpec) -> tuple[SceneBundle, GroundTruth]:
    intr = intrinsics_for(spec)
    poses = ring_poses(spec.cameras, spec.primitives)
    positions, normals, ids, part_ids = sample_surfaces(spec)
    n_instances = int(ids.max()) + 1
    scan_poses = ring_poses(spec.scan, spec.primitives) if spec.scan is not None else poses
    keep = _observed(positions, normals, intr, scan_poses)
    positions, normals, ids, part_ids = positions[keep], normals[keep], ids[keep], part_ids[keep]
    colors = _PALETTE[ids % len(_PALETTE)]
    cloud = PointCloud(positions, colors, normals)

    frames, label_images, events = [], [], []
    instance_masks = 0
    for frame_id, pose in enumerate(poses):
        depth, owner, _ = render(positions, intr, pose)
        label_image = np.where(owner >= 0, ids[np.maximum(owner, 0)], -1)
        part_image = np.where(owner >= 0, part_ids[np.maximum(owner, 0)], -1)
        if spec.corruption.depth_noise > 0:
            noise_rng = np.random.default_rng([spec.seed, 2, frame_id])
            depth = np.where(depth > 0, depth * (1 + spec.corruption.depth_noise * noise_rng.standard_normal(depth.shape)), 0.0)
            depth = np.maximum(depth, 0.0)
        instance_masks += len(np.unique(label_image[label_image >= 0]))
        masks, ev = _frame_masks(frame_id, label_image, part_image, n_instances, spec.corruption, spec.seed)
        frames.append(Frame(frame_id, intr, pose, depth, masks))
        label_images.append(label_image)
        events.extend(ev)
    bundle = SceneBundle(cloud, tuple(frames), spec.pipeline_config())
    return bundle, GroundTruth(ids, tuple(label_images), tuple(events), instance_masks)


@dataclass(frozen=True)
class CorruptionReport:
    masks_per_frame: tuple[int, ...]
    instance_masks: int
    fragmented: int
    merged: int
    dropped: int

    @property
    def fragmentation_rate(self) -> float:
        return self.fragmented / self.instance_masks if self.instance_masks else 0.0

    def to_json(self) -> dict:
        out = asdict(self)
        out["masks_per_frame"] = list(self.masks_per_frame)
        out["fragmentation_rate"] = self.fragmentation_rate
        return out


def corruption_report(bundle: SceneBundle, gt: GroundTruth) -> CorruptionReport:
    kinds = [e["kind"] for e in gt.events]
    return CorruptionReport(tuple(len(f.masks) for f in bundle.frames), gt.instance_masks,
                            kinds.count("fragment"), kinds.count("merge"), kinds.count("drop"))


# -- scene suites ------------------------------------------------------------

FLOOR_GAP = 0.06
PART_GAP = 0.04
GRID_SPACING = 0.42
WIDTH_RANGE = (0.2, 0.3)
HEIGHT_RANGE = (0.15, 0.4)
PART_HEIGHT_RANGE = (0.08, 0.12)
STACK_PARTS = 4
RING_HEIGHT = 1.3
RING_RADIUS = 2.0
LOOK_AT = (0.0, 0.0, 0.1)
SUITE_CORRUPTION = Corruption(fragment_prob=0.5, fragment_mode="parts", drop_prob=0.1)
FRAGMENT_CORRUPTION = Corruption(fragment_prob=0.5, fragment_mode="parts")


def _solid(kind: str, center, width: float, depth: float, height: float, yaw: float, instance=None) -> Primitive:
    if kind == "box":
        return Primitive("box", center, (width, depth, height), (0.0, 0.0, yaw), instance)
    return Primitive("cylinder", center, (width, width, height), instance=instance)


def random_scene_spec(seed: int, n_objects: Optional[int] = None, n_cameras: Optional[int] = None,
                      corruption: Corruption = Corruption(), scan_cameras: Optional[int] = None,
                      stacked: bool = False) -> SceneSpec:
    """A floor plane with boxes and cylinders standing on it.

    Objects occupy distinct cells of a 3x3 grid and hover ``FLOOR_GAP`` above
    the floor. With ``stacked`` every object is a column of ``STACK_PARTS``
    solids separated by ``PART_GAP`` and sharing one instance id; otherwise
    each object is a single solid and the scene has 2-6 primitives.
    """
    rng = np.random.default_rng([seed, 7])
    if n_objects is None:
        n_objects = int(rng.integers(3, 6)) if stacked else int(rng.integers(1, 6))
    n_cameras = int(rng.integers(4, 13)) if n_cameras is None else n_cameras
    spacing = GRID_SPACING
    cells = rng.permutation(9)[:n_objects]
    prims = [Primitive("plane", (0.0, 0.0, 0.0), (1.6, 1.6, 0.0))]
    for obj, cell in enumerate(cells.tolist()):
        cx = (cell % 3 - 1) * spacing + rng.uniform(-0.03, 0.03)
        cy = (cell // 3 - 1) * spacing + rng.uniform(-0.03, 0.03)
        width = rng.uniform(*WIDTH_RANGE)
        depth = rng.uniform(*WIDTH_RANGE)
        kind = "box" if rng.random() < 0.5 else "cylinder"
        yaw = rng.uniform(0, math.pi / 2)
        if not stacked:
            height = rng.uniform(*HEIGHT_RANGE)
            prims.append(_solid(kind, (cx, cy, FLOOR_GAP + height / 2), width, depth, height, yaw))
            continue
        base = FLOOR_GAP
        for _ in range(STACK_PARTS):
            height = rng.uniform(*PART_HEIGHT_RANGE)
            prims.append(_solid(kind, (cx, cy, base + height / 2), width, depth, height, yaw, instance=obj))
            base += height + PART_GAP
    start = float(rng.uniform(0, 360))
    ring = CameraRing(n_cameras, RING_RADIUS, RING_HEIGHT, LOOK_AT, start_degrees=start)
    scan = CameraRing(scan_cameras, RING_RADIUS, RING_HEIGHT, LOOK_AT, start_degrees=start) if scan_cameras else None
    return SceneSpec(tuple(prims), ring, corruption=corruption, seed=seed, scan=scan)


def suite_specs(seeds=range(10), corruption: Corruption = SUITE_CORRUPTION, **kwargs) -> list[SceneSpec]:
    """Stacked-object scenes used by the benchmark suites."""
    return [random_scene_spec(seed, corruption=corruption, stacked=True, **kwargs) for seed in seeds]


# -- layered planes ------------------------------------------------------------

LAYER_DISTANCE = 2.0


def layered_planes_spec(separation: float = 0.8, alpha: float = 0.05, n_cameras: int = 5,
                        arc_degrees: float = 20.0, seed: int = 0) -> SceneSpec:
    """A small square in front of a large square, both facing the cameras.

    The gap between them is ``separation * alpha * LAYER_DISTANCE``, so with
    ``separation < 1`` background points hidden behind the foreground still
    pass the relative depth test at tolerance ``alpha``. Instance 0 is the
    background, instance 1 the foreground. A wide scan ring makes the hidden
    background part of the cloud.
    """
    gap = separation * alpha * LAYER_DISTANCE
    facing = (math.pi / 2, 0.0, 0.0)  # plane normal turned to -y
    height = 1.0
    prims = (
        Primitive("plane", (0.0, gap, height), (1.2, 1.2, 0.0), facing, instance=0),
        Primitive("plane", (0.0, 0.0, height), (0.4, 0.4, 0.0), facing, instance=1),
    )
    look_at = (0.0, 0.0, height)
    ring = CameraRing(n_cameras, LAYER_DISTANCE, height, look_at, arc_degrees, -90.0 - arc_degrees / 2)
    scan = CameraRing(9, LAYER_DISTANCE, height, look_at, 160.0, -170.0)
    return SceneSpec(prims, ring, seed=seed, scan=scan, config={"alpha": alpha})


def occlusion_leakage(bundle: SceneBundle, gt: GroundTruth, occluded: int = 0, occluder: int = 1,
                      use_depth_weights: bool = True) -> float:
    """Mean coverage entry of instance ``occluded`` in the masks of instance ``occluder``.

    Ground-truth instances act as the 3D segments and the perfect masks of
    ``occluder`` as the 2D masks.
    """
    from .matching import coverage_entry
    from .projection import build_projection_table

    table = build_projection_table(bundle, bundle.config.alpha)
    if not use_depth_weights:
        table = table.without_depth_weights()
    points = np.flatnonzero(gt.point_labels == occluded)
    entries = []
    for row, (frame, labels) in enumerate(zip(bundle.frames, gt.label_images)):
        bitmap = labels == occluder
        if bitmap.any():
            mask = Mask2D.from_bitmap(frame.frame_id, 0, bitmap, 1.0)
            entries.append(coverage_entry(points, row, mask, table))
    if not entries:
        raise ValueError(f"instance {occluder} is never observed")
    return float(np.mean(entries))
