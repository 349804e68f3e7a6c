"""End-to-end coarse-to-fine segmentation of a scene bundle."""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .affinity import AffinityGraph, build_graph
from .config import PipelineConfig
from .growing import SegmentationState, grow
from .masks import SegmentationMap2D, coarse_maps
from .matching import MatchingResult, match_masks
from .projection import ProjectionTable, build_projection_table
from .refinement import RefinementTrace, refine_segmentation
from .scene import SceneBundle, require_valid
from .superpoints import KnnGraph, SuperpointAdjacency, SuperpointSet, oversegment

STAGES = ("superpoints", "projection", "coarse_maps", "coarse_graph", "region_growing",
          "mask_matching", "refined_graph", "refinement")


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage {stage} failed: {type(cause).__name__}: {cause}")


@dataclass(eq=False)
class PipelineResult:
    labels: np.ndarray
    coarse_labels: np.ndarray
    superpoints: SuperpointSet
    adjacency: SuperpointAdjacency
    coarse_state: SegmentationState
    state: SegmentationState
    coarse_maps: list[SegmentationMap2D]
    refined_maps: list[SegmentationMap2D]
    coarse_graph: AffinityGraph
    refined_graph: AffinityGraph
    matching: Optional[MatchingResult]
    trace: RefinementTrace
    timings_ms: dict[str, float] = field(default_factory=dict)

    @property
    def n_instances(self) -> int:
        return self.state.n_regions


class _Timer:
    def __init__(self):
        self.timings: dict[str, float] = {}

    def run(self, stage: str, fn: Callable, *args, **kwargs):
        start = time.perf_counter()
        try:
            out = fn(*args, **kwargs)
        except Exception as exc:  # noqa: BLE001 - re-raised with the stage name
            raise StageError(stage, exc) from exc
        self.timings[stage] = (time.perf_counter() - start) * 1000.0
        return out


def compute_superpoints(bundle: SceneBundle) -> tuple[SuperpointSet, SuperpointAdjacency, KnnGraph]:
    cfg = bundle.config
    return oversegment(bundle.cloud, cfg.k_graph, cfg.weight_scale, cfg.min_size)


def projection_for(bundle: SceneBundle, threads: int = 1) -> ProjectionTable:
    table = build_projection_table(bundle, bundle.config.alpha, threads)
    return table if bundle.config.use_depth_weights else table.without_depth_weights()


def run(bundle: SceneBundle, threads: int = 1, config: Optional[PipelineConfig] = None,
        superpoints: Optional[tuple[SuperpointSet, SuperpointAdjacency]] = None) -> PipelineResult:
    """Run every stage. ``superpoints`` may be passed in to reuse an oversegmentation."""
    if config is not None:
        bundle = bundle.with_config(config)
    cfg = bundle.config
    timer = _Timer()
    timer.run("validation", require_valid, bundle)
    if superpoints is None:
        sp, adjacency, _ = timer.run("superpoints", compute_superpoints, bundle)
    else:
        sp, adjacency = superpoints
    table = timer.run("projection", projection_for, bundle, threads)
    cmaps, survivors = timer.run("coarse_maps", coarse_maps, bundle.frames, cfg.nms_iou)
    coarse_graph = timer.run("coarse_graph", build_graph, sp, adjacency, table, cmaps, threads)
    coarse_state = timer.run("region_growing", grow, sp, adjacency, coarse_graph, cfg.tau_merge)

    matching = None
    if cfg.use_matching:
        matching = timer.run("mask_matching", match_masks, coarse_state.point_labels(sp), coarse_state.n_regions,
                             bundle.frames, survivors, table, cfg.tau_f, cfg.tau_m, cfg.consistency_nms_iou)
        refined_maps = matching.refined_maps
        refined_graph = timer.run("refined_graph", build_graph, sp, adjacency, table, refined_maps, threads)
    else:
        refined_maps = cmaps
        refined_graph = coarse_graph

    if cfg.use_refinement:
        state, trace = timer.run("refinement", refine_segmentation, coarse_state, refined_graph, sp, adjacency,
                                 cfg.tau_merge, cfg.refine_max_iters)
    else:
        state, trace = coarse_state, RefinementTrace()
    return PipelineResult(
        labels=state.point_labels(sp), coarse_labels=coarse_state.point_labels(sp), superpoints=sp,
        adjacency=adjacency, coarse_state=coarse_state, state=state, coarse_maps=cmaps, refined_maps=refined_maps,
        coarse_graph=coarse_graph, refined_graph=refined_graph, matching=matching, trace=trace,
        timings_ms=timer.timings,
    )


ABLATION_ROWS = (
    ("baseline", dict(use_refinement=False, use_matching=False, use_depth_weights=False)),
    ("+refinement", dict(use_refinement=True, use_matching=False, use_depth_weights=False)),
    ("+matching", dict(use_refinement=True, use_matching=True, use_depth_weights=False)),
    ("+depth weights", dict(use_refinement=True, use_matching=True, use_depth_weights=True)),
)
