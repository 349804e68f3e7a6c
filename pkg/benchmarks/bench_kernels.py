"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--points 20000] [--repeat 5]

Both backends get identical inputs and the script checks that their outputs
agree before reporting timings.
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from maskfusion3d import _pykernels
from maskfusion3d.scene import PointCloud
from maskfusion3d.superpoints import build_knn_graph
from maskfusion3d.synthetic import generate, random_scene_spec

try:
    from maskfusion3d import _ckernels
except ImportError:
    _ckernels = None


def felzenszwalb_inputs(n_points: int):
    spec = random_scene_spec(0, n_objects=5, n_cameras=4)
    bundle, _ = generate(spec)
    positions = bundle.cloud.positions
    reps = max(1, n_points // len(positions))
    # tile shifted copies so the graph size tracks --points
    tiled = np.concatenate([positions + [3.0 * k, 0.0, 0.0] for k in range(reps)])
    normals = np.concatenate([bundle.cloud.normals] * reps)
    cloud = PointCloud(tiled, np.zeros((len(tiled), 3), dtype=np.uint8), normals)
    graph = build_knn_graph(cloud, 12)
    order = np.lexsort((graph.edges[:, 1], graph.edges[:, 0], graph.weights))
    src = np.ascontiguousarray(graph.edges[order, 0], dtype=np.int64)
    dst = np.ascontiguousarray(graph.edges[order, 1], dtype=np.int64)
    w = np.ascontiguousarray(graph.weights[order], dtype=np.float64)
    return (len(tiled), src, dst, w, 0.05, 20)


def splat_inputs(n_points: int, width: int = 320, height: int = 240):
    rng = np.random.default_rng(0)
    px = rng.integers(-2, width + 2, n_points).astype(np.int64)
    py = rng.integers(-2, height + 2, n_points).astype(np.int64)
    z = rng.uniform(0.5, 4.0, n_points)
    return (px, py, z, width, height, 1)


def best_of(fn, args, repeat: int) -> float:
    return min(timeit.repeat(lambda: fn(*args), number=1, repeat=repeat))


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--points", type=int, default=20000)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    if _ckernels is None:
        raise SystemExit("compiled extension not built; run `pip install -e . --no-build-isolation` first")

    cases = [
        ("felzenszwalb_components", felzenszwalb_inputs(args.points)),
        ("splat_min_depth", splat_inputs(args.points * 5)),
    ]
    print(f"{'kernel':<26}{'python ms':>12}{'cython ms':>12}{'speedup':>10}")
    for name, inputs in cases:
        py_fn, c_fn = getattr(_pykernels, name), getattr(_ckernels, name)
        py_out, c_out = py_fn(*inputs), c_fn(*inputs)
        py_out = py_out if isinstance(py_out, tuple) else (py_out,)
        c_out = c_out if isinstance(c_out, tuple) else (c_out,)
        for a, b in zip(py_out, c_out):
            np.testing.assert_array_equal(np.asarray(a), np.asarray(b))
        t_py = best_of(py_fn, inputs, args.repeat)
        t_c = best_of(c_fn, inputs, args.repeat)
        print(f"{name:<26}{t_py * 1e3:>12.2f}{t_c * 1e3:>12.2f}{t_py / t_c:>9.1f}x")


if __name__ == "__main__":
    main()
