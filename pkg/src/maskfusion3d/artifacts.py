"""On-disk stage artifacts with content-hash sidecars.

Every stage writes its files into a results directory together with
``<stage>.meta.json``, which records a key derived from the stage inputs and
the SHA-256 of each file written. A later invocation reuses the files when
the key matches and the files still hash to the recorded values.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Iterable, Optional

import numpy as np
from PIL import Image

from .affinity import AffinityGraph
from .io import DataError, write_json
from .masks import BACKGROUND, SegmentationMap2D
from .superpoints import SuperpointSet

META_SUFFIX = ".meta.json"


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def sha256_tree(root, patterns: Iterable[str] = ("**/*",)) -> str:
    """Hash of every file's relative path and content below ``root``."""
    root = Path(root)
    h = hashlib.sha256()
    files = sorted({p for pat in patterns for p in root.glob(pat) if p.is_file()})
    for p in files:
        h.update(str(p.relative_to(root)).encode())
        h.update(b"\0")
        h.update(sha256_file(p).encode())
    return h.hexdigest()


def stage_key(stage: str, **inputs) -> str:
    blob = json.dumps({"stage": stage, **inputs}, sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


class Workspace:
    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def path(self, name: str) -> Path:
        return self.root / name

    def meta(self, stage: str) -> Optional[dict]:
        p = self.path(stage + META_SUFFIX)
        if not p.exists():
            return None
        try:
            return json.loads(p.read_text())
        except json.JSONDecodeError:
            return None

    def is_fresh(self, stage: str, key: str) -> bool:
        meta = self.meta(stage)
        if meta is None or meta.get("key") != key:
            return False
        for name, digest in meta.get("files", {}).items():
            p = self.path(name)
            if not p.exists() or sha256_file(p) != digest:
                return False
        return True

    def commit(self, stage: str, key: str, files: Iterable[str]) -> str:
        """Record the sidecar; returns a digest over the stage's files."""
        digests = {name: sha256_file(self.path(name)) for name in sorted(files)}
        combined = hashlib.sha256("".join(f"{k}:{v}" for k, v in digests.items()).encode()).hexdigest()
        write_json(self.path(stage + META_SUFFIX), {"stage": stage, "key": key, "files": digests, "digest": combined})
        return combined

    def digest(self, stage: str) -> str:
        meta = self.meta(stage)
        if meta is None:
            raise KeyError(stage)
        return meta["digest"]


# -- superpoints ---------------------------------------------------------------

def write_superpoints(ws: Workspace, superpoints: SuperpointSet) -> list[str]:
    from .io import write_labels
    write_labels(ws.path("superpoints.txt"), superpoints.labels)
    write_json(ws.path("superpoints.json"), {
        "count": len(superpoints),
        "centroids": superpoints.centroids.tolist(),
        "point_counts": superpoints.counts.tolist(),
    })
    return ["superpoints.txt", "superpoints.json"]


def superpoints_from_file(path, positions: np.ndarray) -> SuperpointSet:
    from .io import read_labels
    labels = read_labels(path)
    if len(labels) != len(positions):
        raise DataError(path, f"{len(labels)} superpoint labels for {len(positions)} points")
    if (labels < 0).any():
        raise DataError(path, "superpoint labels must be >= 0")
    return SuperpointSet.from_labels(labels, positions)


# -- label maps ----------------------------------------------------------------

def write_maps(ws: Workspace, name: str, maps: list[SegmentationMap2D]) -> list[str]:
    folder = ws.path(name)
    folder.mkdir(exist_ok=True)
    files = []
    index = []
    for m in maps:
        fname = f"{name}/{m.frame_id:06d}.png"
        if m.n_labels + 1 > np.iinfo(np.uint16).max:
            raise ValueError(f"frame {m.frame_id}: too many labels for a 16-bit PNG")
        Image.fromarray((m.labels.astype(np.int64) + 1).astype(np.uint16)).save(ws.path(fname))
        files.append(fname)
        index.append({"frame_id": m.frame_id, "kind": m.kind, "file": fname,
                      "labels": [list(mid) for mid in m.label_to_mask]})
    write_json(ws.path(f"{name}.json"), {"maps": index})
    return files + [f"{name}.json"]


def read_maps(ws: Workspace, name: str) -> list[SegmentationMap2D]:
    index_path = ws.path(f"{name}.json")
    try:
        index = json.loads(index_path.read_text())["maps"]
    except (OSError, KeyError, json.JSONDecodeError) as exc:
        raise DataError(index_path, f"cannot read map index: {exc}") from None
    out = []
    for entry in index:
        with Image.open(ws.path(entry["file"])) as img:
            labels = np.array(img).astype(np.int32) + BACKGROUND
        out.append(SegmentationMap2D(int(entry["frame_id"]), labels,
                                     tuple((int(a), int(b)) for a, b in entry["labels"]), entry["kind"]))
    return out


# -- graphs --------------------------------------------------------------------

def write_graph(ws: Workspace, name: str, graph: AffinityGraph) -> list[str]:
    lines = []
    for (a, b), num, den, aff in zip(graph.pairs.tolist(), graph.numerator.tolist(), graph.denominator.tolist(),
                                     graph.affinity.tolist()):
        lines.append(json.dumps({"i": a, "j": b, "affinity": aff if aff == aff else None,
                                 "numerator": num, "denominator": den}))
    ws.path(f"{name}.jsonl").write_text("".join(line + "\n" for line in lines))
    return [f"{name}.jsonl"]


def read_graph(ws: Workspace, name: str, n_superpoints: int) -> AffinityGraph:
    path = ws.path(f"{name}.jsonl")
    pairs, num, den = [], [], []
    offset = 0
    for line in path.read_bytes().split(b"\n"):
        if line.strip():
            try:
                row = json.loads(line)
                pairs.append((int(row["i"]), int(row["j"])))
                num.append(float(row["numerator"]))
                den.append(float(row["denominator"]))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError):
                raise DataError(path, "malformed graph line", offset) from None
        offset += len(line) + 1
    pairs_arr = np.array(pairs, dtype=np.int64).reshape(-1, 2)
    return AffinityGraph(n_superpoints, pairs_arr, np.array(num), np.array(den))
