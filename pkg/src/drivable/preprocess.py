"""Superpixel segmentation and the illumination-invariant color channel."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from skimage import measure
from skimage.color import rgb2lab

DEFAULT_ALPHA = 0.4706


@dataclass(frozen=True)
class SuperpixelMap:
    """Dense superpixel labelling of an image.

    ``labels`` is an (H, W) int array with ids ``0..n-1``. Per-segment
    statistics are derived lazily from it.
    """

    labels: np.ndarray

    @property
    def n(self) -> int:
        return int(self.labels.max()) + 1 if self.labels.size else 0

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape

    @cached_property
    def area(self) -> np.ndarray:
        return np.bincount(self.labels.ravel(), minlength=self.n)

    @cached_property
    def centroid(self) -> np.ndarray:
        """(n, 2) array of mean (u, v) per segment."""
        rows, cols = np.indices(self.labels.shape)
        flat = self.labels.ravel()
        u = np.bincount(flat, cols.ravel(), self.n) / self.area
        v = np.bincount(flat, rows.ravel(), self.n) / self.area
        return np.column_stack([u, v])

    @cached_property
    def edges(self) -> np.ndarray:
        """Sorted (m, 2) array of adjacent id pairs with i < j."""
        return _adjacent_pairs(self.labels)

    @cached_property
    def adjacency(self) -> list[set[int]]:
        adj = [set() for _ in range(self.n)]
        for i, j in self.edges:
            adj[i].add(int(j))
            adj[j].add(int(i))
        return adj

    def pixels(self, sid: int) -> np.ndarray:
        """(k, 2) array of (row, col) pixels in segment ``sid``."""
        return np.argwhere(self.labels == sid)


def _adjacent_pairs(labels: np.ndarray) -> np.ndarray:
    pairs = _boundary_pairs(labels)
    if not len(pairs):
        return np.empty((0, 2), dtype=np.intp)
    pairs = np.sort(pairs, axis=1)
    n = int(labels.max()) + 1
    keys = np.unique(pairs[:, 0] * n + pairs[:, 1])
    return np.column_stack([keys // n, keys % n]).astype(np.intp)


def _relabel_dense(labels: np.ndarray) -> np.ndarray:
    # ids assigned in raster order of first appearance
    flat = labels.ravel()
    _, first = np.unique(flat, return_index=True)
    order = np.argsort(first)
    remap = np.empty(flat.max() + 1, dtype=np.intp)
    remap[np.unique(flat)[order]] = np.arange(len(order))
    return remap[labels]


def _enforce_connectivity(labels: np.ndarray, min_size: int) -> np.ndarray:
    """Split disconnected segments and absorb fragments below ``min_size``."""
    comps = _components(labels)
    while True:
        n = int(comps.max()) + 1
        if n == 1:
            break
        small = np.bincount(comps.ravel(), minlength=n) < min_size
        if not small.any():
            break
        pairs = _boundary_pairs(comps)
        directed = np.concatenate([pairs, pairs[:, ::-1]])
        keys, border = np.unique(directed[:, 0] * n + directed[:, 1], return_counts=True)
        keys = np.column_stack([keys // n, keys % n])
        src, dst = keys.T
        sel = small[src]
        src, dst, border = src[sel], dst[sel], border[sel]
        # big neighbours first, then longest shared border, then lowest id
        order = np.lexsort((dst, -border, small[dst], src))
        src, dst = src[order], dst[order]
        first = np.r_[True, src[1:] != src[:-1]]
        graph = coo_matrix((np.ones(first.sum()), (src[first], dst[first])), shape=(n, n))
        _, group = connected_components(graph, directed=False)
        comps = _relabel_dense(group[comps])
    return comps


def _boundary_pairs(labels: np.ndarray) -> np.ndarray:
    pairs = []
    for a, b in ((labels[:, :-1], labels[:, 1:]), (labels[:-1, :], labels[1:, :])):
        diff = a != b
        pairs.append(np.column_stack([a[diff], b[diff]]))
    return np.concatenate(pairs)


def _components(labels: np.ndarray) -> np.ndarray:
    """4-connected components of equal label, densely numbered."""
    comps = measure.label(labels, background=-1, connectivity=1)
    return _relabel_dense(comps)


def segment_superpixels(image: np.ndarray, k: int = 1000, compactness: float = 10.0,
                        n_iter: int = 10) -> SuperpixelMap:
    """SLIC-style superpixels.

    Cluster centres are seeded on a regular grid of roughly ``k`` cells and
    refined by k-means in (L, a, b, row, col) space, each pixel only
    considering the centres seeded in its own and the eight surrounding grid
    cells. Fragments are then merged so every segment is 4-connected.
    """
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[0] == 0 or image.shape[1] == 0:
        raise ValueError("image must be a nonempty (H, W, 3) array")
    h, w = image.shape[:2]
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > h * w:
        raise ValueError(f"k={k} exceeds pixel count {h * w}")

    if image.dtype == np.uint8:
        lab = rgb2lab(image)
    else:
        lab = rgb2lab(np.clip(image, 0.0, 1.0))

    step = np.sqrt(h * w / k)
    gr = max(1, min(h, int(round(h / step))))
    gc = max(1, min(w, int(round(w / step))))
    cell_h, cell_w = h / gr, w / gc

    cy = (np.arange(gr) + 0.5) * cell_h
    cx = (np.arange(gc) + 0.5) * cell_w
    cyy, cxx = np.meshgrid(cy, cx, indexing="ij")
    yi = np.clip(cyy.astype(int), 0, h - 1)
    xi = np.clip(cxx.astype(int), 0, w - 1)
    centers = np.column_stack([lab[yi, xi].reshape(-1, 3), cyy.ravel(), cxx.ravel()])

    rows, cols = np.indices((h, w))
    pr = np.minimum((rows / cell_h).astype(int), gr - 1)
    pc = np.minimum((cols / cell_w).astype(int), gc - 1)
    cand = []
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            r, c = pr + dr, pc + dc
            valid = (r >= 0) & (r < gr) & (c >= 0) & (c < gc)
            if valid.any():
                cand.append((np.where(valid, r * gc + c, 0), ~valid))

    lab = lab.astype(np.float32)
    rows = rows.astype(np.float32)
    cols = cols.astype(np.float32)
    spatial_scale = np.float32((compactness / step) ** 2)
    flat_lab = lab.reshape(-1, 3).astype(np.float64)
    flat_rows = rows.ravel().astype(np.float64)
    flat_cols = cols.ravel().astype(np.float64)
    n_centers = len(centers)
    labels = np.zeros((h, w), dtype=np.intp)
    best = np.empty((h, w), dtype=np.float32)
    for _ in range(max(1, n_iter)):
        best.fill(np.inf)
        c_lab = centers[:, :3].astype(np.float32)
        c_row = centers[:, 3].astype(np.float32)
        c_col = centers[:, 4].astype(np.float32)
        # slot order is fixed, so ties resolve to the first candidate
        for slot, invalid in cand:
            d = rows - c_row[slot]
            d *= d
            t = cols - c_col[slot]
            d += t * t
            d *= spatial_scale
            diff = lab - c_lab[slot]
            d += np.einsum("ijk,ijk->ij", diff, diff)
            d[invalid] = np.inf
            better = d < best
            np.copyto(best, d, where=better)
            np.copyto(labels, slot, where=better)
        flat = labels.ravel()
        cnt = np.bincount(flat, minlength=n_centers)
        has = cnt > 0
        new = np.empty_like(centers)
        for j in range(3):
            new[:, j] = np.bincount(flat, flat_lab[:, j], n_centers)
        new[:, 3] = np.bincount(flat, flat_rows, n_centers)
        new[:, 4] = np.bincount(flat, flat_cols, n_centers)
        centers[has] = new[has] / cnt[has, None]

    min_size = max(1, int(step * step / 4))
    labels = _enforce_connectivity(labels, min_size)
    return SuperpixelMap(_relabel_dense(labels))


def illumination_invariant(image: np.ndarray, alpha: float = DEFAULT_ALPHA,
                           floor: float = 1.0 / 256) -> np.ndarray:
    """One-channel log-chromaticity image ``log G - a log R - (1 - a) log B``.

    8-bit input is mapped to (0, 1] as (c + 1) / 256. Float input is taken
    as linear-light values and only floored at ``floor``, so a common gain
    on all three channels cancels exactly.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    image = np.asarray(image)
    if np.issubdtype(image.dtype, np.integer):
        rgb = (image.astype(np.float64) + 1.0) / 256.0
    else:
        rgb = np.maximum(image.astype(np.float64), floor)
    logs = np.log(rgb)
    # regrouped so that gray pixels give exactly 0
    log_b = logs[..., 2]
    return (logs[..., 1] - log_b) - alpha * (logs[..., 0] - log_b)
