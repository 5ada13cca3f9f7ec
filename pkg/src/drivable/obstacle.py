"""Obstacle classification on a Delaunay graph of projected LIDAR points."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import Delaunay, QhullError

DEFAULT_EPSILON = 3.0
DEFAULT_C = 30.0


@dataclass(frozen=True)
class AdjacencyGraph:
    """Image-plane Delaunay triangulation with 3D-length-pruned edges.

    ``triangles`` is the unpruned (m, 3) triangulation over (u, v);
    ``edges`` holds the (k, 2) surviving pairs (i < j); ``tri_alive`` flags
    triangles whose three edges all survived.
    """

    n_vertices: int
    triangles: np.ndarray
    all_edges: np.ndarray
    edges: np.ndarray
    tri_alive: np.ndarray

    def neighbors(self) -> list[set[int]]:
        nb = [set() for _ in range(self.n_vertices)]
        for i, j in self.edges:
            nb[i].add(int(j))
            nb[j].add(int(i))
        return nb


@dataclass(frozen=True)
class NormalField:
    normals: np.ndarray  # (n, 3), zero rows where invalid
    valid: np.ndarray

    @property
    def z(self) -> np.ndarray:
        return self.normals[:, 2]

    def elevation_deg(self) -> np.ndarray:
        return np.degrees(np.arcsin(np.clip(self.z, -1.0, 1.0)))


def _edge_key(a, b, n):
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    return lo.astype(np.int64) * n + hi


def build_graph(points, epsilon: float = DEFAULT_EPSILON) -> AdjacencyGraph:
    """Triangulate ``points.uv`` and drop edges at least ``epsilon`` long in 3D."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    uv = np.asarray(points.uv, dtype=np.float64)
    xyz = np.asarray(points.xyz, dtype=np.float64)
    n = len(uv)
    empty = np.empty((0, 3), dtype=np.intp)
    tris = empty
    if n >= 3:
        try:
            tris = Delaunay(uv).simplices.astype(np.intp)
        except QhullError:
            tris = empty
    if not len(tris):
        none2 = np.empty((0, 2), dtype=np.intp)
        return AdjacencyGraph(n, tris, none2, none2, np.zeros(0, dtype=bool))

    tri_keys = np.column_stack([
        _edge_key(tris[:, 0], tris[:, 1], n),
        _edge_key(tris[:, 1], tris[:, 2], n),
        _edge_key(tris[:, 2], tris[:, 0], n),
    ])
    keys, inverse = np.unique(tri_keys.ravel(), return_inverse=True)
    all_edges = np.column_stack([keys // n, keys % n]).astype(np.intp)
    length = np.linalg.norm(xyz[all_edges[:, 0]] - xyz[all_edges[:, 1]], axis=1)
    keep = length < epsilon
    tri_alive = keep[inverse.reshape(-1, 3)].all(axis=1)
    return AdjacencyGraph(n, tris, all_edges, all_edges[keep], tri_alive)


def triangle_normals(xyz: np.ndarray, tris: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Unit normals of ``tris`` oriented with z >= 0, and a non-degenerate mask."""
    p0, p1, p2 = (xyz[tris[:, k]] for k in range(3))
    nrm = np.cross(p1 - p0, p2 - p0)
    length = np.linalg.norm(nrm, axis=1)
    ok = length > 1e-12
    nrm[ok] /= length[ok, None]
    nrm[~ok] = 0.0
    # horizontal normals (z == 0) face the sensor at the origin
    centre = (p0 + p1 + p2) / 3.0
    flip = (nrm[:, 2] < 0) | ((nrm[:, 2] == 0) & ((nrm * centre).sum(1) > 0))
    nrm[flip] *= -1.0
    return nrm, ok


def compute_normals(graph: AdjacencyGraph, points) -> NormalField:
    """Average the normals of each vertex's surviving incident triangles."""
    xyz = np.asarray(getattr(points, "xyz", points), dtype=np.float64)
    n = graph.n_vertices
    acc = np.zeros((n, 3))
    count = np.zeros(n)
    if len(graph.triangles):
        tris = graph.triangles[graph.tri_alive]
        nrm, ok = triangle_normals(xyz, tris)
        tris, nrm = tris[ok], nrm[ok]
        for k in range(3):
            np.add.at(acc, tris[:, k], nrm)
            np.add.at(count, tris[:, k], 1.0)
    length = np.linalg.norm(acc, axis=1)
    valid = (count > 0) & (length > 1e-12)
    normals = np.zeros((n, 3))
    normals[valid] = acc[valid] / length[valid, None]
    return NormalField(normals, valid)


def classify_obstacles(normals: NormalField, c: float = DEFAULT_C) -> np.ndarray:
    """Per-vertex obstacle flag (uint8).

    A point is an obstacle when its surface tilts more than ``c`` degrees
    from horizontal, i.e. its normal elevation is below ``90 - c``. The
    comparison runs on the z-component against ``sin(90 - c)``, which is the
    same test without the arcsin round-trip. Points without a normal count as
    obstacles.
    """
    if not 0.0 < c < 90.0:
        raise ValueError("c must lie in (0, 90) degrees")
    limit = np.sin(np.radians(90.0 - c))
    ob = (normals.z < limit) | ~normals.valid
    return ob.astype(np.uint8)
