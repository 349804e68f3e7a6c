"""Pure-Python/numpy reference versions of the compiled kernels."""
from __future__ import annotations

import numpy as np


def felzenszwalb_components(n, src, dst, weight, scale, min_size):
    parent = list(range(n))
    size = [1] * n
    internal = [0.0] * n

    def find(x):
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    def union(a, b):
        if size[a] < size[b] or (size[a] == size[b] and b < a):
            a, b = b, a
        parent[b] = a
        size[a] += size[b]
        return a

    src = np.asarray(src).tolist()
    dst = np.asarray(dst).tolist()
    weight = np.asarray(weight, dtype=np.float64).tolist()
    for i, j, w in zip(src, dst, weight):
        a, b = find(i), find(j)
        if a == b:
            continue
        if w <= internal[a] + scale / size[a] and w <= internal[b] + scale / size[b]:
            internal[union(a, b)] = w
    for i, j in zip(src, dst):
        a, b = find(i), find(j)
        if a != b and (size[a] < min_size or size[b] < min_size):
            union(a, b)
    return np.array([find(x) for x in range(n)], dtype=np.int64)


def splat_min_depth(px, py, z, width, height, radius):
    px = np.asarray(px, dtype=np.int64)
    py = np.asarray(py, dtype=np.int64)
    z = np.asarray(z, dtype=np.float64)
    depth = np.full((height, width), np.inf)
    owner = np.full((height, width), -1, dtype=np.int64)
    idx = np.flatnonzero(z > 0)
    if idx.size == 0:
        return depth, owner
    offsets = [(du, dv) for dv in range(-radius, radius + 1) for du in range(-radius, radius + 1)]
    cand_pix, cand_z, cand_idx = [], [], []
    for du, dv in offsets:
        u = px[idx] + du
        v = py[idx] + dv
        ok = (u >= 0) & (u < width) & (v >= 0) & (v < height)
        cand_pix.append(v[ok] * width + u[ok])
        cand_z.append(z[idx[ok]])
        cand_idx.append(idx[ok])
    pix = np.concatenate(cand_pix)
    zz = np.concatenate(cand_z)
    ii = np.concatenate(cand_idx)
    order = np.lexsort((ii, zz, pix))
    pix, zz, ii = pix[order], zz[order], ii[order]
    first = np.ones(pix.size, dtype=bool)
    first[1:] = pix[1:] != pix[:-1]
    depth.ravel()[pix[first]] = zz[first]
    owner.ravel()[pix[first]] = ii[first]
    return depth, owner
