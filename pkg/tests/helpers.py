"""Small builders shared by the tests."""
from __future__ import annotations

from functools import lru_cache

import numpy as np

from maskfusion3d.affinity import AffinityGraph
from maskfusion3d.projection import ProjectionTable
from maskfusion3d.scene import CameraIntrinsics, CameraPose, Frame, Mask2D
from maskfusion3d.superpoints import SuperpointAdjacency, SuperpointSet


def table(visible, weight=None, pixel=None, frame_ids=None) -> ProjectionTable:
    """Projection table straight from per-(frame, point) arrays."""
    visible = np.atleast_2d(np.asarray(visible, dtype=bool))
    weight = visible.astype(float) if weight is None else np.atleast_2d(np.asarray(weight, dtype=float))
    if pixel is None:
        pixel = np.where(visible, 0, -1)
    pixel = np.atleast_2d(np.asarray(pixel, dtype=np.int64))
    zeros = np.zeros(visible.shape)
    ids = tuple(range(len(visible))) if frame_ids is None else tuple(frame_ids)
    return ProjectionTable(ids, zeros, zeros, zeros, visible, weight, pixel)


def graph(n: int, affinities: dict) -> AffinityGraph:
    pairs = sorted((min(a, b), max(a, b)) for a, b in affinities)
    values = [affinities.get(p, affinities.get(p[::-1])) for p in pairs]
    arr = np.array(pairs, dtype=np.int64).reshape(-1, 2)
    return AffinityGraph(n, arr, np.array(values, dtype=float), np.ones(len(pairs)))


def adjacency(n: int, pairs) -> SuperpointAdjacency:
    arr = np.array(sorted((min(a, b), max(a, b)) for a, b in pairs), dtype=np.int64).reshape(-1, 2)
    return SuperpointAdjacency(n, arr)


def superpoints(centroids, counts) -> SuperpointSet:
    counts = np.asarray(counts, dtype=np.int64)
    labels = np.repeat(np.arange(len(counts)), counts)
    return SuperpointSet(labels, np.asarray(centroids, dtype=float).reshape(-1, 3), counts)


def line_mask(frame_id: int, index: int, pixels, width: int, score: float = 1.0) -> Mask2D:
    bitmap = np.zeros((1, width), dtype=bool)
    bitmap[0, list(pixels)] = True
    return Mask2D.from_bitmap(frame_id, index, bitmap, score)


def flat_frame(frame_id: int = 0, width: int = 4, height: int = 4, depth: float = 2.0, masks=()) -> Frame:
    intr = CameraIntrinsics(100.0, 100.0, (width - 1) / 2, (height - 1) / 2, width, height)
    return Frame(frame_id, intr, CameraPose(np.eye(4)), np.full((height, width), depth), tuple(masks))


@lru_cache(maxsize=None)
def synthetic(spec_key: tuple):
    """Generated ``(bundle, gt)`` for a hashable description, cached across tests."""
    from maskfusion3d import synthetic as syn

    kind, args = spec_key[0], dict(spec_key[1:])
    if kind == "random":
        corruption = syn.Corruption(**dict(args.pop("corruption", ())))
        spec = syn.random_scene_spec(corruption=corruption, **args)
    elif kind == "layered":
        spec = syn.layered_planes_spec(**args)
    else:
        raise KeyError(kind)
    return syn.generate(spec)


def random_affinity_instance(seed: int, n_superpoints: int = 20):
    """Random superpoints, a table and coarse maps, with every pair adjacent."""
    from maskfusion3d.masks import SegmentationMap2D

    rng = np.random.default_rng(seed)
    n_sp = int(rng.integers(2, n_superpoints + 1))
    counts = rng.integers(1, 6, n_sp)
    sp = superpoints(rng.normal(size=(n_sp, 3)), counts)
    n_frames, w, h = int(rng.integers(1, 5)), 4, 3
    n_points = int(counts.sum())
    visible = rng.random((n_frames, n_points)) < 0.7
    weight = np.where(visible, rng.uniform(0.01, 1.0, visible.shape), 0.0)
    pixel = np.where(visible, rng.integers(0, w * h, visible.shape), -1)
    tbl = table(visible, weight, pixel)
    maps = []
    for f in range(n_frames):
        n_labels = int(rng.integers(1, 4))
        labels = rng.integers(-1, n_labels, (h, w)).astype(np.int32)
        maps.append(SegmentationMap2D(f, labels, tuple((f, k) for k in range(n_labels)), "coarse"))
    pairs = [(a, b) for a in range(n_sp) for b in range(a + 1, n_sp)]
    return sp, adjacency(n_sp, pairs), tbl, maps
