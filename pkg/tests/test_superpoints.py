import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from maskfusion3d.scene import PointCloud
from maskfusion3d.superpoints import (
    DegenerateCloudError,
    SuperpointSet,
    build_knn_graph,
    compute_adjacency,
    felzenszwalb_segment,
    oversegment,
)


def two_clusters(spacing=0.01, per_side=5):
    """Two 50-point grids whose gap is 10x the grid spacing."""
    g = np.arange(per_side) * spacing
    block = np.array([(x, y, z) for x in g for y in g for z in g[:2]])
    far = block + [block[:, 0].max() + 10 * spacing, 0.0, 0.0]
    return np.concatenate([block, far])


def partition(sp: SuperpointSet) -> set:
    return {frozenset(m.tolist()) for m in sp.members()}


def test_collinear_points_give_two_edges():
    g = build_knn_graph(PointCloud(np.array([[0.0, 0, 0], [1, 0, 0], [2, 0, 0]])), 1)
    assert g.edges.tolist() == [[0, 1], [1, 2]]
    assert g.weights.tolist() == [1.0, 1.0]


def test_square_excludes_diagonal():
    corners = np.array([[0.0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]])
    g = build_knn_graph(PointCloud(corners), 2)
    expected = {(i, j) for i in range(4) for j in range(i + 1, 4)
                if np.isclose(np.linalg.norm(corners[i] - corners[j]), 1.0)}
    assert {tuple(e) for e in g.edges.tolist()} == expected


def test_knn_preconditions():
    cloud = PointCloud(np.zeros((3, 3)) + np.arange(3)[:, None])
    with pytest.raises(ValueError):
        build_knn_graph(cloud, 3)
    with pytest.raises(DegenerateCloudError, match="degenerate cloud"):
        build_knn_graph(PointCloud(np.zeros((1, 3))), 1)


def test_normals_stretch_edge_weights():
    pos = np.array([[0.0, 0, 0], [1, 0, 0]])
    same = PointCloud(pos, normals=np.array([[0.0, 0, 1], [0, 0, 1]]))
    flip = PointCloud(pos, normals=np.array([[0.0, 0, 1], [0, 0, -1]]))
    assert build_knn_graph(same, 1).weights.tolist() == [1.0]
    assert build_knn_graph(flip, 1).weights.tolist() == [2.0]


def test_two_clusters_split():
    pos = two_clusters()
    graph = build_knn_graph(PointCloud(pos), 6)
    sp = felzenszwalb_segment(graph, 0.05, 5, pos)
    assert partition(sp) == {frozenset(range(50)), frozenset(range(50, 100))}
    assert np.allclose(sp.centroids[0], pos[:50].mean(axis=0))


def test_huge_scale_merges_everything():
    pos = two_clusters()
    graph = build_knn_graph(PointCloud(pos), 60)
    assert len(felzenszwalb_segment(graph, 1e9, 1, pos)) == 1


def test_min_size_absorbs_small_cluster():
    pos = two_clusters()
    graph = build_knn_graph(PointCloud(pos), 60)
    assert len(felzenszwalb_segment(graph, 0.05, 51, pos)) == 1


def test_adjacency_examples():
    pos = two_clusters()
    graph = build_knn_graph(PointCloud(pos), 60)
    sp = felzenszwalb_segment(graph, 0.05, 5, pos)
    assert len(sp) == 2
    adj = compute_adjacency(sp, graph)
    assert adj.pairs.tolist() == [[0, 1]]
    assert (0, 1) in adj and (1, 0) in adj and (0, 0) not in adj

    one = felzenszwalb_segment(graph, 1e9, 1, pos)
    assert compute_adjacency(one, graph).pairs.shape == (0, 2)


clouds = st.integers(0, 10_000).map(
    lambda seed: np.random.default_rng(seed).uniform(0, 1, (40, 3)))


@settings(max_examples=25, deadline=None)
@given(clouds, st.integers(1, 8), st.floats(0.01, 1.0), st.integers(1, 10))
def test_partition_property(pos, k, scale, min_size):
    sp, adj, _ = oversegment(PointCloud(pos), k, scale, min_size)
    assert sorted(np.concatenate(sp.members()).tolist()) == list(range(len(pos)))
    assert np.array_equal(np.bincount(sp.labels), sp.counts)
    assert all(a < b for a, b in adj.pairs.tolist())


@settings(max_examples=25, deadline=None)
@given(clouds, st.integers(0, 1000))
def test_permutation_equivariance(pos, seed):
    perm = np.random.default_rng(seed).permutation(len(pos))
    sp, _, _ = oversegment(PointCloud(pos), 6, 0.1, 3)
    sq, _, _ = oversegment(PointCloud(pos[perm]), 6, 0.1, 3)
    assert partition(sp) == {frozenset(perm[list(m)].tolist()) for m in partition(sq)}


@settings(max_examples=25, deadline=None)
@given(clouds, st.floats(0.001, 1.0), st.floats(1.0, 10.0))
def test_more_scale_never_more_superpoints(pos, scale, factor):
    graph = build_knn_graph(PointCloud(pos), 6)
    small = felzenszwalb_segment(graph, scale, 1, pos)
    large = felzenszwalb_segment(graph, scale * factor, 1, pos)
    assert len(large) <= len(small)
