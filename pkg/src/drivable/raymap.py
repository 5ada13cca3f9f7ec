"""Direction ray map: polar beams from the image base point to the first obstacle."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from skimage.draw import line

DEFAULT_H = 720
DEFAULT_W = 3
DEFAULT_R_MIN = 30.0


@dataclass(frozen=True)
class BeamSet:
    """Points re-indexed into ``H`` angular bins around ``base``.

    ``beams[h]`` lists point indices sorted by image distance to the base
    (ties broken by index). ``bin`` is -1 for points coincident with the base.
    """

    H: int
    base: tuple[int, int]  # (u, v)
    beams: list[np.ndarray]
    angle: np.ndarray
    dist: np.ndarray
    bin: np.ndarray
    uv: np.ndarray
    shape: tuple[int, int]  # (height, width)


@dataclass(frozen=True)
class RayMap:
    """Per-beam rays and their rasterisation.

    Absent rays carry NaN lengths. ``raw_length`` is the length each ray was
    cast with; ``length`` is the post-filter length (equal to ``raw_length``
    before any filtering).
    """

    H: int
    base: tuple[int, int]
    shape: tuple[int, int]
    endpoint: np.ndarray  # (H, 2) u, v
    endpoint_index: np.ndarray  # (H,) point index or -1
    raw_length: np.ndarray
    length: np.ndarray
    mask: np.ndarray

    @property
    def present(self) -> np.ndarray:
        return ~np.isnan(self.length)


@dataclass(frozen=True)
class InitialArea:
    s_int: np.ndarray  # sorted superpixel ids touching the ray mask
    in_s_int: np.ndarray  # bool per superpixel
    point_label: np.ndarray  # superpixel id per fused point

    @property
    def empty(self) -> bool:
        return len(self.s_int) == 0

    def members(self, sid: int) -> np.ndarray:
        return np.flatnonzero(self.point_label == sid)


def base_point(width: int, height: int) -> tuple[int, int]:
    return width // 2, height - 1


def polar_angle(uv: np.ndarray, base) -> np.ndarray:
    """Angle in [0, pi] of each point as seen from the base, v pointing down."""
    uv = np.asarray(uv, dtype=np.float64).reshape(-1, 2)
    theta = np.arctan2(base[1] - uv[:, 1], uv[:, 0] - base[0])
    # points in the base row slightly below it fold onto the horizontal
    neg = theta < 0
    theta[neg] = np.where(theta[neg] > -np.pi / 2, 0.0, np.pi)
    return theta


def bin_points_polar(points, width: int, height: int, H: int = DEFAULT_H) -> BeamSet:
    if H < 1:
        raise ValueError("H must be >= 1")
    uv = np.asarray(getattr(points, "uv", points), dtype=np.float64).reshape(-1, 2)
    base = base_point(width, height)
    du = uv[:, 0] - base[0]
    dv = uv[:, 1] - base[1]
    dist = np.hypot(du, dv)
    theta = polar_angle(uv, base)
    bins = np.minimum(np.floor(theta / np.pi * H).astype(np.intp), H - 1)
    bins[dist == 0] = -1

    order = np.lexsort((np.arange(len(uv)), dist, bins))
    sorted_bins = bins[order]
    splits = np.searchsorted(sorted_bins, np.arange(H + 1))
    beams = [order[splits[h]:splits[h + 1]] for h in range(H)]
    return BeamSet(H, base, beams, theta, dist, bins, uv, (int(height), int(width)))


def _beam_endpoint(beam: np.ndarray, ob: np.ndarray) -> int:
    obstacles = beam[ob[beam] == 1]
    if len(obstacles):
        return int(obstacles[0])
    return int(beam[-1])


def _raster(base, endpoints, raw, length, shape) -> np.ndarray:
    h_img, w_img = shape
    mask = np.zeros(shape, dtype=bool)
    bu, bv = base
    for e, r, l in zip(endpoints, raw, length):
        if np.isnan(l):
            continue
        eu = min(int(np.floor(e[0])), w_img - 1)
        ev = min(int(np.floor(e[1])), h_img - 1)
        rr, cc = line(bv, bu, ev, eu)
        if l < r:
            keep = np.hypot(cc - bu, rr - bv) <= l
            rr, cc = rr[keep], cc[keep]
        mask[rr, cc] = True
    return mask


def generate_drm(beams: BeamSet, ob: np.ndarray) -> RayMap:
    """Cast one ray per non-empty beam.

    Beams without obstacles reach their farthest point; otherwise the ray
    stops at the nearest obstacle point.
    """
    ob = np.asarray(ob)
    uv = beams.uv
    shape = beams.shape
    H = beams.H
    endpoint = np.full((H, 2), np.nan)
    index = np.full(H, -1, dtype=np.intp)
    raw = np.full(H, np.nan)
    for h, beam in enumerate(beams.beams):
        if not len(beam):
            continue
        k = _beam_endpoint(beam, ob)
        index[h] = k
        endpoint[h] = uv[k]
        raw[h] = beams.dist[k]
    mask = _raster(beams.base, endpoint, raw, raw, tuple(shape))
    return RayMap(H, beams.base, tuple(shape), endpoint, index, raw, raw.copy(), mask)


def window_min(lengths: np.ndarray, w: int) -> np.ndarray:
    """Minimum over beams ``[h - w, h + w]``, ignoring absent (NaN) beams."""
    H = len(lengths)
    out = np.full(H, np.nan)
    for h in range(H):
        if np.isnan(lengths[h]):
            continue
        out[h] = np.nanmin(lengths[max(0, h - w):h + w + 1])
    return out


def filter_rays(raymap: RayMap, w: int = DEFAULT_W, r_min: float = DEFAULT_R_MIN) -> RayMap:
    """Shorten each ray to the shortest raw ray in its window; drop short rays.

    Always works from the raw lengths, so re-filtering with the same
    parameters is a no-op.
    """
    if w < 0:
        raise ValueError("w must be >= 0")
    length = window_min(raymap.raw_length, int(w))
    length[length < r_min] = np.nan
    mask = _raster(raymap.base, raymap.endpoint, raymap.raw_length, length, raymap.shape)
    return RayMap(raymap.H, raymap.base, raymap.shape, raymap.endpoint,
                  raymap.endpoint_index, raymap.raw_length, length, mask)


def ray_points(beams: BeamSet, raymap: RayMap) -> np.ndarray:
    """Points on a retained beam no farther from the base than its ray."""
    flag = np.zeros(len(beams.bin), dtype=bool)
    for h, beam in enumerate(beams.beams):
        limit = raymap.length[h]
        if len(beam) and not np.isnan(limit):
            flag[beam[beams.dist[beam] <= limit]] = True
    return flag


def initial_area(raymap: RayMap, sp, points) -> InitialArea:
    """Superpixels touched by the ray mask, plus each point's superpixel."""
    labels = np.asarray(getattr(sp, "labels", sp))
    uv = getattr(points, "uv", points)
    n = int(labels.max()) + 1
    s_int = np.unique(labels[raymap.mask])
    in_s_int = np.zeros(n, dtype=bool)
    in_s_int[s_int] = True
    px = np.floor(np.asarray(uv, dtype=np.float64).reshape(-1, 2)).astype(np.intp)
    point_label = labels[px[:, 1], px[:, 0]] if len(px) else np.empty(0, dtype=np.intp)
    return InitialArea(s_int, in_s_int, point_label)
