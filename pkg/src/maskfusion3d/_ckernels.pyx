# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops. Semantics must match ``_pykernels`` exactly."""
import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY

cnp.import_array()


cdef inline Py_ssize_t _find(Py_ssize_t[::1] parent, Py_ssize_t x) noexcept nogil:
    cdef Py_ssize_t root = x
    cdef Py_ssize_t nxt
    while parent[root] != root:
        root = parent[root]
    while parent[x] != root:
        nxt = parent[x]
        parent[x] = root
        x = nxt
    return root


def felzenszwalb_components(Py_ssize_t n, const cnp.int64_t[::1] src, const cnp.int64_t[::1] dst,
                            const double[::1] weight, double scale, Py_ssize_t min_size):
    """Union-find over edges already sorted by (weight, src, dst); returns a root per node."""
    parent_arr = np.arange(n, dtype=np.intp)
    size_arr = np.ones(n, dtype=np.intp)
    internal_arr = np.zeros(n, dtype=np.float64)
    cdef Py_ssize_t[::1] parent = parent_arr
    cdef Py_ssize_t[::1] size = size_arr
    cdef double[::1] internal = internal_arr
    cdef Py_ssize_t e, m = src.shape[0], a, b
    cdef double w, ta, tb

    with nogil:
        for e in range(m):
            a = _find(parent, src[e])
            b = _find(parent, dst[e])
            if a == b:
                continue
            w = weight[e]
            ta = internal[a] + scale / size[a]
            tb = internal[b] + scale / size[b]
            if w <= ta and w <= tb:
                if size[a] < size[b] or (size[a] == size[b] and b < a):
                    a, b = b, a
                parent[b] = a
                size[a] += size[b]
                internal[a] = w
        for e in range(m):
            a = _find(parent, src[e])
            b = _find(parent, dst[e])
            if a != b and (size[a] < min_size or size[b] < min_size):
                if size[a] < size[b] or (size[a] == size[b] and b < a):
                    a, b = b, a
                parent[b] = a
                size[a] += size[b]
        for e in range(n):
            _find(parent, e)
    return np.asarray(parent_arr, dtype=np.int64)


def splat_min_depth(const cnp.int64_t[::1] px, const cnp.int64_t[::1] py, const double[::1] z,
                    Py_ssize_t width, Py_ssize_t height, Py_ssize_t radius):
    """Square-splat z-buffer; strict < keeps the lowest point index on equal depth."""
    depth_arr = np.full((height, width), np.inf, dtype=np.float64)
    owner_arr = np.full((height, width), -1, dtype=np.int64)
    cdef double[:, ::1] depth = depth_arr
    cdef cnp.int64_t[:, ::1] owner = owner_arr
    cdef Py_ssize_t i, n = z.shape[0], u, v, uu, vv
    cdef double zi
    with nogil:
        for i in range(n):
            zi = z[i]
            if not zi > 0:
                continue
            for vv in range(py[i] - radius, py[i] + radius + 1):
                if vv < 0 or vv >= height:
                    continue
                for uu in range(px[i] - radius, px[i] + radius + 1):
                    if uu < 0 or uu >= width:
                        continue
                    if zi < depth[vv, uu]:
                        depth[vv, uu] = zi
                        owner[vv, uu] = i
    return depth_arr, owner_arr
