"""Command line interface.

Exit codes: 0 success, 1 usage error, 2 data or validation error, 3 stage
failure. Diagnostics go to standard error.

Stage subcommands (``superpoints`` .. ``refine``, ``run``) read a scene
directory and write into ``--out``. Each stage records a ``.meta.json``
sidecar keyed by a hash of its inputs and parameters, and a later command
reuses the stage's files while that key and the file hashes still match.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import fields
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import artifacts, io, synthetic
from .affinity import AffinityGraph, build_graph
from .artifacts import Workspace, stage_key
from .config import PipelineConfig, coerce_field
from .evaluation import evaluate_labels
from .growing import SegmentationState, grow
from .masks import coarse_maps
from .matching import match_masks
from .pipeline import ABLATION_ROWS, StageError, projection_for
from .pipeline import run as run_pipeline
from .refinement import RefinementTrace, refine_segmentation
from .scene import SceneBundle, ValidationError, Violation, require_valid
from .superpoints import build_knn_graph, compute_adjacency, oversegment

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_STAGE = 0, 1, 2, 3

STAGE_COMMANDS = ("superpoints", "coarse-maps", "graph", "segment", "match", "refine", "run")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


# -- argument parsing ------------------------------------------------------------

def _config_help() -> str:
    defaults = PipelineConfig()
    lines = ["config keys (--key or --key-with-dashes; default shown):"]
    for f in fields(PipelineConfig):
        lines.append(f"  --{f.name:<22} {getattr(defaults, f.name)!r}")
    return "\n".join(lines)


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("pipeline config")
    group.add_argument("--config", type=Path, help="JSON file with PipelineConfig fields; flags override it")
    defaults = PipelineConfig()
    for f in fields(PipelineConfig):
        names = [f"--{f.name}"]
        if "_" in f.name:
            names.append(f"--{f.name.replace('_', '-')}")
        group.add_argument(*names, dest=f"cfg_{f.name}", default=argparse.SUPPRESS, metavar="V",
                           help=f"(default: {getattr(defaults, f.name)!r})")


def _add_common(parser: argparse.ArgumentParser, scene: bool = True, out: bool = True) -> None:
    if scene:
        parser.add_argument("--scene", type=Path, required=True, help="scene directory")
    if out:
        parser.add_argument("--out", type=Path, required=True, help="results directory")
    parser.add_argument("--threads", type=int, default=1, help="worker threads, 0 = one per CPU (default: 1)")
    _add_config_flags(parser)


def _stage_parser(sub, name: str, help_text: str, superpoints: bool = True) -> argparse.ArgumentParser:
    p = sub.add_parser(name, help=help_text, description=help_text, epilog=_config_help(),
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    _add_common(p)
    if superpoints:
        p.add_argument("--superpoints", type=Path, help="per-point superpoint labels to use instead of computing them")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="maskfusion3d", description="Fuse per-view 2D masks into 3D instance segments.",
                     epilog=_config_help(), formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic scene", epilog=_config_help(),
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    _add_common(p, scene=False)
    p.add_argument("--spec", type=Path, help="scene description JSON; overrides the seed options")
    p.add_argument("--scene-seed", type=int, default=0, help="seed of the random scene layout")
    p.add_argument("--objects", type=int, help="number of objects (default: drawn from the seed)")
    p.add_argument("--cameras", type=int, help="number of cameras (default: drawn from the seed)")
    p.add_argument("--stacked", action="store_true", help="build every object from stacked parts")
    p.add_argument("--fragment-prob", type=float, default=0.0)
    p.add_argument("--fragment-mode", choices=("axis", "parts"), default="axis")
    p.add_argument("--merge-prob", type=float, default=0.0)
    p.add_argument("--drop-prob", type=float, default=0.0)
    p.add_argument("--depth-noise", type=float, default=0.0)

    _stage_parser(sub, "superpoints", "oversegment the point cloud", superpoints=False)
    _stage_parser(sub, "coarse-maps", "build per-frame coarse label maps", superpoints=False)
    _stage_parser(sub, "graph", "build the coarse affinity graph")
    _stage_parser(sub, "segment", "grow coarse 3D segments")
    _stage_parser(sub, "match", "score masks by multi-view consistency")
    _stage_parser(sub, "refine", "refine segments on the refined graph")
    p = _stage_parser(sub, "run", "run every stage")
    p.add_argument("--evaluate", action="store_true", help="print the evaluation report for --gt")
    p.add_argument("--gt", type=Path, help="ground-truth labels, one per point")

    p = sub.add_parser("evaluate", help="score predicted labels against ground truth")
    p.add_argument("--pred", type=Path, required=True)
    p.add_argument("--gt", type=Path, required=True)

    p = sub.add_parser("ablate", help="run the component ablation", epilog=_config_help(),
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    _add_common(p, scene=False, out=False)
    p.add_argument("--scene", type=Path, action="append", default=[], help="scene directory (repeatable)")
    p.add_argument("--gt", type=Path, action="append", default=[], help="ground truth per --scene")
    p.add_argument("--suite", type=int, default=0, help="also run synthetic suite seeds 0..N-1")
    p.add_argument("--out", type=Path, help="write the JSON report here")
    return parser


def resolve_config(args, base: Optional[PipelineConfig] = None) -> PipelineConfig:
    """Defaults, then ``base`` (the scene's own config), then ``--config``, then flags."""
    data = (base or PipelineConfig()).to_dict()
    if getattr(args, "config", None) is not None:
        from_file = io.read_config(args.config).to_dict()
        data.update({k: from_file[k] for k in json.loads(args.config.read_text())})
    for f in fields(PipelineConfig):
        value = getattr(args, f"cfg_{f.name}", None)
        if value is not None:
            try:
                data[f.name] = coerce_field(f.name, value)
            except ValueError as exc:
                raise UsageError(str(exc)) from None
    config = PipelineConfig(**data)
    problems = config.violations()
    if problems:
        raise ValidationError([Violation(p.split(":")[0], p.split(": ", 1)[1]) for p in problems])
    return config


def _threads(n: int) -> int:
    if n < 0:
        raise UsageError("--threads must be >= 0")
    return n or (os.cpu_count() or 1)


# -- stages ------------------------------------------------------------------------

def _stage(name: str, fn, *args):
    try:
        return fn(*args)
    except (io.DataError, ValidationError, UsageError):
        raise
    except Exception as exc:  # noqa: BLE001 - reported as a stage failure
        raise StageError(name, exc) from exc


class StagedRun:
    """Runs the pipeline stage by stage against a cached results directory."""

    def __init__(self, bundle: SceneBundle, scene_dir: Path, ws: Workspace, threads: int,
                 superpoints_file: Optional[Path] = None):
        self.bundle = bundle
        self.cfg = bundle.config
        self.ws = ws
        self.threads = threads
        self.superpoints_file = superpoints_file
        self.cloud_hash = artifacts.sha256_file(scene_dir / "cloud.ply")
        self.frames_hash = artifacts.sha256_tree(scene_dir / "frames") if (scene_dir / "frames").is_dir() else ""
        self._cache: dict = {}
        self.reused: list[str] = []

    def _fresh(self, stage: str, key: str) -> bool:
        ok = self.ws.is_fresh(stage, key)
        if ok:
            self.reused.append(stage)
        return ok

    def superpoints(self):
        if "sp" in self._cache:
            return self._cache["sp"]
        cfg = self.cfg
        positions = self.bundle.cloud.positions
        if self.superpoints_file is not None:
            sp = artifacts.superpoints_from_file(self.superpoints_file, positions)
            source = artifacts.sha256_file(self.superpoints_file)
        else:
            source = None
        key = stage_key("superpoints", cloud=self.cloud_hash, k=cfg.k_graph, scale=cfg.weight_scale,
                        min_size=cfg.min_size, source=source)
        if source is None:
            if self._fresh("superpoints", key):
                sp = artifacts.superpoints_from_file(self.ws.path("superpoints.txt"), positions)
            else:
                sp, _, _ = _stage("superpoints", oversegment, self.bundle.cloud, cfg.k_graph, cfg.weight_scale,
                                  cfg.min_size)
        if not self.ws.is_fresh("superpoints", key):
            self.ws.commit("superpoints", key, artifacts.write_superpoints(self.ws, sp))
        knn = build_knn_graph(self.bundle.cloud, min(cfg.k_graph, len(positions) - 1))
        adjacency = compute_adjacency(sp, knn)
        self._cache["sp"] = (sp, adjacency)
        return sp, adjacency

    def table(self):
        if "table" not in self._cache:
            self._cache["table"] = _stage("projection", projection_for, self.bundle, self.threads)
        return self._cache["table"]

    def coarse(self):
        if "coarse" in self._cache:
            return self._cache["coarse"]
        key = stage_key("coarse_maps", frames=self.frames_hash, nms_iou=self.cfg.nms_iou)
        # survivors are cheap to recompute and are needed by matching
        maps, survivors = _stage("coarse_maps", coarse_maps, self.bundle.frames, self.cfg.nms_iou)
        if self._fresh("coarse_maps", key):
            maps = artifacts.read_maps(self.ws, "coarse_maps")
        else:
            self.ws.commit("coarse_maps", key, artifacts.write_maps(self.ws, "coarse_maps", maps))
        self._cache["coarse"] = (maps, survivors)
        return maps, survivors

    def _graph(self, stage: str, maps_stage: str, maps) -> AffinityGraph:
        sp, adjacency = self.superpoints()
        cfg = self.cfg
        key = stage_key(stage, superpoints=self.ws.digest("superpoints"), maps=self.ws.digest(maps_stage),
                        frames=self.frames_hash, cloud=self.cloud_hash, alpha=cfg.alpha,
                        depth_weights=cfg.use_depth_weights)
        if self._fresh(stage, key):
            return artifacts.read_graph(self.ws, stage, len(sp))
        graph = _stage(stage, build_graph, sp, adjacency, self.table(), maps, self.threads)
        self.ws.commit(stage, key, artifacts.write_graph(self.ws, stage, graph))
        return graph

    def coarse_graph(self) -> AffinityGraph:
        if "coarse_graph" not in self._cache:
            self._cache["coarse_graph"] = self._graph("coarse_graph", "coarse_maps", self.coarse()[0])
        return self._cache["coarse_graph"]

    def _write_labels(self, stage: str, key: str, labels: np.ndarray, extra: dict[str, object]) -> None:
        io.write_labels(self.ws.path(f"{stage}.txt"), labels)
        io.write_label_ply(self.ws.path(f"{stage}.ply"), self.bundle.cloud.positions, labels, palette(labels))
        files = [f"{stage}.txt", f"{stage}.ply"]
        for name, payload in extra.items():
            io.write_json(self.ws.path(name), payload)
            files.append(name)
        self.ws.commit(stage, key, files)

    def _state_from_labels(self, path: Path) -> SegmentationState:
        sp, _ = self.superpoints()
        labels = io.read_labels(path)
        first = np.zeros(len(sp), dtype=np.int64)
        first[sp.labels[::-1]] = np.arange(len(sp.labels))[::-1]
        return SegmentationState.from_assignment(labels[first])

    def segments(self) -> SegmentationState:
        if "segments" in self._cache:
            return self._cache["segments"]
        sp, adjacency = self.superpoints()
        graph = self.coarse_graph()
        key = stage_key("segments", graph=self.ws.digest("coarse_graph"), tau_merge=self.cfg.tau_merge)
        if self._fresh("segments", key):
            state = self._state_from_labels(self.ws.path("segments.txt"))
        else:
            state = _stage("region_growing", grow, sp, adjacency, graph, self.cfg.tau_merge)
            self._write_labels("segments", key, state.point_labels(sp), {})
        self._cache["segments"] = state
        return state

    def matched(self):
        """Refined maps, or the coarse maps when matching is switched off."""
        if "matched" in self._cache:
            return self._cache["matched"]
        if not self.cfg.use_matching:
            self._cache["matched"] = ("coarse_maps", self.coarse()[0])
            return self._cache["matched"]
        cfg = self.cfg
        sp, _ = self.superpoints()
        state = self.segments()
        _, survivors = self.coarse()
        key = stage_key("matching", segments=self.ws.digest("segments"), frames=self.frames_hash,
                        cloud=self.cloud_hash, tau_f=cfg.tau_f, tau_m=cfg.tau_m, nms=cfg.consistency_nms_iou,
                        nms_iou=cfg.nms_iou, alpha=cfg.alpha, depth_weights=cfg.use_depth_weights)
        if self._fresh("matching", key):
            maps = artifacts.read_maps(self.ws, "refined_maps")
        else:
            result = _stage("mask_matching", match_masks, state.point_labels(sp), state.n_regions, self.bundle.frames,
                            survivors, self.table(), cfg.tau_f, cfg.tau_m, cfg.consistency_nms_iou)
            maps = result.refined_maps
            io.write_json(self.ws.path("matching.json"), result.to_json())
            files = artifacts.write_maps(self.ws, "refined_maps", maps) + ["matching.json"]
            self.ws.commit("matching", key, files)
        self._cache["matched"] = ("matching", maps)
        return self._cache["matched"]

    def refined(self) -> np.ndarray:
        cfg = self.cfg
        sp, adjacency = self.superpoints()
        coarse_state = self.segments()
        maps_stage, maps = self.matched()
        if cfg.use_matching:
            graph = self._graph("refined_graph", "matching", maps)
            graph_digest = self.ws.digest("refined_graph")
        else:
            graph = self.coarse_graph()
            graph_digest = self.ws.digest("coarse_graph")
        key = stage_key("labels", segments=self.ws.digest("segments"), graph=graph_digest,
                        refine=cfg.use_refinement, tau_merge=cfg.tau_merge, iters=cfg.refine_max_iters)
        if self._fresh("labels", key):
            return io.read_labels(self.ws.path("labels.txt"))
        if cfg.use_refinement:
            state, trace = _stage("refinement", refine_segmentation, coarse_state, graph, sp, adjacency,
                                  cfg.tau_merge, cfg.refine_max_iters)
        else:
            state, trace = coarse_state, RefinementTrace()
        labels = state.point_labels(sp)
        self._write_labels("labels", key, labels, {"refine_trace.json": trace.to_json()})
        return labels


def palette(labels: np.ndarray) -> np.ndarray:
    n = int(labels.max()) + 1 if len(labels) and labels.max() >= 0 else 0
    rng = np.random.default_rng(12345)
    return rng.integers(40, 256, size=(max(n, 1), 3)).astype(np.uint8)


# -- commands ----------------------------------------------------------------------

def _load_scene(args) -> tuple[SceneBundle, PipelineConfig]:
    scene = io.load_bundle(args.scene)
    config = resolve_config(args, scene.config)
    bundle = scene.with_config(config)
    require_valid(bundle)
    return bundle, config


def _staged(args) -> StagedRun:
    bundle, config = _load_scene(args)
    ws = Workspace(args.out)
    io.write_json(ws.path("config.json"), config.to_dict())
    return StagedRun(bundle, args.scene, ws, _threads(args.threads), getattr(args, "superpoints", None))


def _report_text(pred_path: Path, gt_path: Path) -> str:
    pred = io.read_labels(pred_path)
    gt = io.read_labels(gt_path)
    if len(pred) != len(gt):
        raise io.DataError(pred_path, f"{len(pred)} predicted labels but {len(gt)} ground-truth labels")
    return json.dumps(evaluate_labels(pred, gt).to_json(), indent=2, sort_keys=True)


def cmd_synth(args) -> int:
    if args.spec is not None:
        try:
            spec = synthetic.SceneSpec.from_dict(json.loads(args.spec.read_text()))
        except json.JSONDecodeError as exc:
            text = args.spec.read_text()
            raise io.DataError(args.spec, exc.msg, len(text[:exc.pos].encode())) from None
        except (KeyError, TypeError, ValueError) as exc:
            raise io.DataError(args.spec, f"invalid scene description: {exc}") from None
    else:
        try:
            corruption = synthetic.Corruption(fragment_prob=args.fragment_prob, merge_prob=args.merge_prob,
                                              drop_prob=args.drop_prob, depth_noise=args.depth_noise,
                                              fragment_mode=args.fragment_mode)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        spec = synthetic.random_scene_spec(args.scene_seed, args.objects, args.cameras, corruption, stacked=args.stacked)
    config = resolve_config(args, spec.pipeline_config())
    bundle, gt = _stage("synth", synthetic.generate, spec)
    bundle = bundle.with_config(config)
    io.save_bundle(bundle, args.out)
    io.write_labels(args.out / "gt.txt", gt.point_labels)
    io.write_json(args.out / "spec.json", spec.to_dict())
    print(f"wrote {len(bundle.cloud)} points and {len(bundle.frames)} frames to {args.out}", file=sys.stderr)
    return EXIT_OK


def cmd_stage(args) -> int:
    run = _staged(args)
    command = args.command
    if command == "superpoints":
        run.superpoints()
    elif command == "coarse-maps":
        run.coarse()
    elif command == "graph":
        run.coarse_graph()
    elif command == "segment":
        run.segments()
    elif command == "match":
        if not run.cfg.use_matching:
            raise UsageError("match needs use_matching=true")
        run.matched()
    else:
        run.refined()
    if run.reused:
        print(f"reused cached stages: {', '.join(run.reused)}", file=sys.stderr)
    if command == "run" and args.evaluate:
        if args.gt is None:
            raise UsageError("run --evaluate needs --gt")
        print(_report_text(run.ws.path("labels.txt"), args.gt))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    print(_report_text(args.pred, args.gt))
    return EXIT_OK


def cmd_ablate(args) -> int:
    if len(args.scene) != len(args.gt):
        raise UsageError("give one --gt per --scene")
    if not args.scene and args.suite <= 0:
        raise UsageError("nothing to ablate: pass --scene/--gt or --suite N")
    threads = _threads(args.threads)
    scenes = []
    for scene_dir, gt_path in zip(args.scene, args.gt):
        bundle = io.load_bundle(scene_dir)
        scenes.append((str(scene_dir), bundle.with_config(resolve_config(args, bundle.config)), io.read_labels(gt_path)))
    for spec in synthetic.suite_specs(range(args.suite)):
        bundle, gt = synthetic.generate(spec)
        scenes.append((f"suite-{spec.seed}", bundle.with_config(resolve_config(args, bundle.config)), gt.point_labels))
    rows = []
    for name, toggles in ABLATION_ROWS:
        per_scene = {}
        for scene_name, bundle, gt in scenes:
            cfg = bundle.config.replace(**toggles)
            result = run_pipeline(bundle, threads, cfg)
            per_scene[scene_name] = evaluate_labels(result.labels, gt).mAP
        rows.append({"row": name, "toggles": toggles, "mAP": float(np.mean(list(per_scene.values()))),
                     "per_scene": per_scene})
    report = {"rows": rows}
    if args.out is not None:
        io.write_json(args.out, report)
    width = max(len(r["row"]) for r in rows)
    print(f"{'configuration':<{width}}  mAP")
    for r in rows:
        print(f"{r['row']:<{width}}  {r['mAP']:.4f}")
    return EXIT_OK


COMMANDS = {"synth": cmd_synth, "evaluate": cmd_evaluate, "ablate": cmd_ablate}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    handler = COMMANDS.get(args.command, cmd_stage)
    try:
        return handler(args)
    except UsageError as exc:
        print(f"maskfusion3d {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except io.DataError as exc:
        print(f"maskfusion3d: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValidationError as exc:
        print(f"maskfusion3d: invalid input: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"maskfusion3d: data error: {exc.filename}: file not found", file=sys.stderr)
        return EXIT_DATA
    except StageError as exc:
        print(f"maskfusion3d: {exc}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
