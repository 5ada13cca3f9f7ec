import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drivable.ingest import FusedPoints
from drivable.obstacle import (AdjacencyGraph, NormalField, build_graph, classify_obstacles,
                               compute_normals, triangle_normals)


def pts(uv, xyz):
    uv = np.asarray(uv, dtype=float)
    return FusedPoints(np.asarray(xyz, dtype=float), uv, np.arange(len(uv)))


def circumcircle(a, b, c):
    d = 2 * (a[0] * (b[1] - c[1]) + b[0] * (c[1] - a[1]) + c[0] * (a[1] - b[1]))
    ux = ((a @ a) * (b[1] - c[1]) + (b @ b) * (c[1] - a[1]) + (c @ c) * (a[1] - b[1])) / d
    uy = ((a @ a) * (c[0] - b[0]) + (b @ b) * (a[0] - c[0]) + (c @ c) * (b[0] - a[0])) / d
    centre = np.array([ux, uy])
    return centre, np.linalg.norm(a - centre)


def test_three_points_one_triangle():
    p = pts([[0, 0], [10, 0], [0, 10]], [[0, 0, 0], [0.3, 0, 0], [0, 0.3, 0]])
    g = build_graph(p, 0.5)
    assert g.triangles.shape == (1, 3)
    assert len(g.edges) == 3
    assert g.tri_alive.tolist() == [True]


def test_long_edge_pruned():
    p = pts([[0, 0], [10, 0], [0, 10]], [[0, 0, 0], [0.3, 0, 0], [0, 0.6, 0]])
    g = build_graph(p, 0.5)
    kept = {tuple(e) for e in g.edges.tolist()}
    assert kept == {(0, 1)}
    assert g.tri_alive.tolist() == [False]
    assert g.neighbors() == [{1}, {0}, set()]


def test_edge_exactly_epsilon_pruned():
    p = pts([[0, 0], [10, 0], [0, 10]], [[0, 0, 0], [0.5, 0, 0], [0, 0.25, 0]])
    g = build_graph(p, 0.5)
    assert (0, 1) not in {tuple(e) for e in g.edges.tolist()}


def test_degenerate_inputs():
    assert len(build_graph(pts([[0, 0], [1, 1]], np.zeros((2, 3))), 1.0).triangles) == 0
    line = pts([[0, 0], [1, 1], [2, 2], [3, 3]], np.zeros((4, 3)))
    g = build_graph(line, 1.0)
    assert len(g.triangles) == 0 and len(g.edges) == 0
    assert not compute_normals(g, line).valid.any()
    with pytest.raises(ValueError):
        build_graph(line, 0.0)


def test_random_fifty():
    rng = np.random.default_rng(11)
    uv = rng.uniform(0, 100, (50, 2))
    xyz = rng.uniform(-2, 2, (50, 3))
    g = build_graph(pts(uv, xyz), 1.5)
    assert len(g.all_edges) <= 3 * 50 - 6
    # empty circumcircle for every triangle
    for t in g.triangles:
        centre, r = circumcircle(*uv[t])
        others = np.delete(np.arange(50), t)
        assert np.all(np.linalg.norm(uv[others] - centre, axis=1) >= r - 1e-9)
    # independent distance recheck of kept and pruned edges
    kept = {tuple(e) for e in g.edges.tolist()}
    for i, j in g.all_edges.tolist():
        d = float(np.sqrt(sum((xyz[i, k] - xyz[j, k]) ** 2 for k in range(3))))
        assert ((i, j) in kept) == (d < 1.5)
    # triangle survival needs all three edges
    for t, alive in zip(g.triangles, g.tri_alive):
        edges = {tuple(sorted(map(int, e))) for e in itertools.combinations(t, 2)}
        assert alive == edges.issubset(kept)


def test_ground_and_wall_triangles():
    ground = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]], float)
    n, ok = triangle_normals(ground, np.array([[0, 1, 2]]))
    assert ok.all() and np.allclose(n, [[0, 0, 1]])
    wall = np.array([[5, 0, 0], [5, 1, 0], [5, 0, 1]], float)
    n, _ = triangle_normals(wall, np.array([[0, 1, 2]]))
    assert np.allclose(np.abs(n), [[1, 0, 0]])
    assert n[0, 2] == 0.0


def test_downward_winding_flipped():
    ground = np.array([[0, 0, 0], [0, 1, 0], [1, 0, 0]], float)
    n, _ = triangle_normals(ground, np.array([[0, 1, 2]]))
    assert np.allclose(n, [[0, 0, 1]])


def test_degenerate_triangle_skipped():
    xyz = np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0]], float)
    _, ok = triangle_normals(xyz, np.array([[0, 1, 2]]))
    assert not ok.any()


def test_vertex_on_slope():
    # fan around a centre vertex, sampled from the plane z = x
    ang = np.linspace(0, 2 * np.pi, 8, endpoint=False)
    ring = np.column_stack([np.cos(ang), np.sin(ang)])
    uv = np.vstack([[0, 0], ring]) * 10 + 50
    xy = np.vstack([[0, 0], ring])
    xyz = np.column_stack([xy, xy[:, 0]])
    p = pts(uv, xyz)
    nf = compute_normals(build_graph(p, 10.0), p)
    assert nf.valid[0]
    assert np.allclose(nf.normals[0], np.array([-1, 0, 1]) / np.sqrt(2), atol=1e-12)
    assert nf.elevation_deg()[0] == pytest.approx(45.0)


def test_isolated_vertex_invalid_and_obstacle():
    p = pts([[0, 0], [10, 0], [0, 10], [100, 100]],
            [[0, 0, 0], [0.3, 0, 0], [0, 0.3, 0], [50, 50, 0]])
    nf = compute_normals(build_graph(p, 0.5), p)
    assert nf.valid.tolist() == [True, True, True, False]
    assert classify_obstacles(nf, 30.0).tolist()[3] == 1


def normal_field(elev_deg):
    e = np.radians(np.asarray(elev_deg, float))
    n = np.column_stack([np.cos(e), np.zeros_like(e), np.sin(e)])
    return NormalField(n, np.ones(len(e), bool))


def test_classify_examples():
    ob = classify_obstacles(normal_field([90.0, 0.0]), 30.0)
    assert ob.dtype == np.uint8
    assert ob.tolist() == [0, 1]


@pytest.mark.parametrize("c", [10.0, 30.0, 45.0, 60.0, 89.0])
def test_classify_boundary(c):
    nf = NormalField(np.array([[np.cos(np.radians(90 - c)), 0, np.sin(np.radians(90 - c))]]),
                     np.array([True]))
    assert classify_obstacles(nf, c).tolist() == [0]


def test_classify_range():
    for c in (0.0, 90.0):
        with pytest.raises(ValueError):
            classify_obstacles(normal_field([90.0]), c)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0, 90), min_size=1, max_size=30),
       st.floats(1, 88), st.floats(1, 88))
def test_monotone_in_c(elev, c1, c2):
    lo, hi = sorted((c1, c2))
    nf = normal_field(elev)
    assert classify_obstacles(nf, hi).sum() <= classify_obstacles(nf, lo).sum()


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.floats(0, 2 * np.pi))
def test_normals_unit_and_upward(seed, phi):
    rng = np.random.default_rng(seed)
    uv = rng.uniform(0, 200, (40, 2))
    xyz = np.column_stack([uv / 20, rng.normal(0, 0.3, 40)])
    p = pts(uv, xyz)
    nf = compute_normals(build_graph(p, 3.0), p)
    assert np.allclose(np.linalg.norm(nf.normals[nf.valid], axis=1), 1.0, atol=1e-9)
    assert np.all(nf.z >= 0)

    # rigid rotation about z of the cloud and of the image plane
    rot = np.array([[np.cos(phi), -np.sin(phi)], [np.sin(phi), np.cos(phi)]])
    q = pts((uv - 100) @ rot.T + 100, np.column_stack([xyz[:, :2] @ rot.T, xyz[:, 2]]))
    gq = build_graph(q, 3.0)
    g = build_graph(p, 3.0)
    same = {frozenset(t) for t in g.triangles.tolist()} == {frozenset(t) for t in gq.triangles.tolist()}
    if same:
        nq = compute_normals(gq, q)
        assert np.array_equal(nq.valid, nf.valid)
        assert np.allclose(nq.z, nf.z, atol=1e-9)


def test_graph_is_plain_dataclass():
    g = build_graph(pts([[0, 0], [1, 0], [0, 1]], np.zeros((3, 3))), 1.0)
    assert isinstance(g, AdjacencyGraph)
    assert g.n_vertices == 3
