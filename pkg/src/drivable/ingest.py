"""KITTI-format sensor I/O and LIDAR-to-image projection."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

log = logging.getLogger(__name__)

PROJECTION_KEY = "P2"
RECTIFICATION_KEY = "R0_rect"
LIDAR_TO_CAM_KEY = "Tr_velo_to_cam"


class CalibrationError(ValueError):
    pass


class MissingKeyError(CalibrationError):
    def __init__(self, key: str, path):
        super().__init__(f"calibration file {path} has no '{key}' entry")
        self.key = key


class VelodyneFormatError(ValueError):
    pass


@dataclass(frozen=True)
class PointCloud:
    """LIDAR sweep as an (N, 4) float32 array of x, y, z, reflectance."""

    points: np.ndarray
    rejected: int = 0

    def __len__(self) -> int:
        return len(self.points)

    @property
    def xyz(self) -> np.ndarray:
        return self.points[:, :3]


@dataclass(frozen=True)
class Calibration:
    projection: np.ndarray  # 3x4
    rectification: np.ndarray  # 4x4, 3x3 block embedded
    lidar_to_cam: np.ndarray  # 4x4 rigid

    def __post_init__(self):
        if self.projection.shape != (3, 4):
            raise CalibrationError("projection must be 3x4")
        if self.rectification.shape != (4, 4) or self.lidar_to_cam.shape != (4, 4):
            raise CalibrationError("rectification and lidar_to_cam must be 4x4")
        if not np.array_equal(self.lidar_to_cam[3], [0.0, 0.0, 0.0, 1.0]):
            raise CalibrationError("lidar_to_cam bottom row must be (0, 0, 0, 1)")
        if self.projection[0, 0] == 0 or self.projection[1, 1] == 0:
            raise CalibrationError("projection focal entries must be nonzero")

    @property
    def velo_to_image(self) -> np.ndarray:
        """Full 3x4 chain projection @ rectification @ lidar_to_cam."""
        return self.projection @ self.rectification @ self.lidar_to_cam


@dataclass(frozen=True)
class FusedPoints:
    """LIDAR returns that landed inside the image, with their pixel coordinates.

    Stored column-wise: ``xyz`` is (N, 3) in the LIDAR frame, ``uv`` is (N, 2)
    in pixels (v pointing down), ``index`` holds each point's row in the
    source cloud.
    """

    xyz: np.ndarray
    uv: np.ndarray
    index: np.ndarray
    width: int = 0
    height: int = 0
    depth: np.ndarray = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.xyz)

    @property
    def pixel(self) -> np.ndarray:
        """Integer (col, row) cell for each point."""
        return np.floor(self.uv).astype(np.intp)

    def subset(self, keep: np.ndarray) -> "FusedPoints":
        depth = None if self.depth is None else self.depth[keep]
        return FusedPoints(self.xyz[keep], self.uv[keep], self.index[keep],
                           self.width, self.height, depth)


def read_velodyne(path) -> PointCloud:
    raw = Path(path).read_bytes()
    if len(raw) % 16:
        raise VelodyneFormatError(
            f"{path}: size {len(raw)} is not a multiple of 16 bytes")
    pts = np.frombuffer(raw, dtype="<f4").reshape(-1, 4).astype(np.float32)
    finite = np.isfinite(pts).all(axis=1)
    rejected = int((~finite).sum())
    if rejected:
        log.warning("%s: rejected %d non-finite records", path, rejected)
    return PointCloud(pts[finite], rejected)


def write_velodyne(path, cloud) -> None:
    pts = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud)
    Path(path).write_bytes(np.ascontiguousarray(pts, dtype="<f4").tobytes())


def _read_calib_entries(path) -> dict[str, np.ndarray]:
    entries = {}
    for line in Path(path).read_text().splitlines():
        if ":" not in line:
            continue
        key, _, rest = line.partition(":")
        try:
            entries[key.strip()] = np.array(rest.split(), dtype=np.float64)
        except ValueError as exc:
            raise CalibrationError(f"{path}: bad values for {key.strip()}") from exc
    return entries


def _take(entries, key, count, path) -> np.ndarray:
    if key not in entries:
        raise MissingKeyError(key, path)
    vals = entries[key]
    if vals.size != count:
        raise CalibrationError(
            f"{path}: {key} has {vals.size} values, expected {count}")
    return vals


def parse_calibration(path, projection_key: str = PROJECTION_KEY) -> Calibration:
    entries = _read_calib_entries(path)
    proj = _take(entries, projection_key, 12, path).reshape(3, 4)
    rect = np.eye(4)
    rect[:3, :3] = _take(entries, RECTIFICATION_KEY, 9, path).reshape(3, 3)
    tr = np.eye(4)
    tr[:3, :] = _take(entries, LIDAR_TO_CAM_KEY, 12, path).reshape(3, 4)
    return Calibration(proj, rect, tr)


def write_calibration(path, calib: Calibration, projection_key: str = PROJECTION_KEY) -> None:
    def fmt(a):
        return " ".join(f"{v:.17g}" for v in np.ravel(a))

    lines = [
        f"{projection_key}: {fmt(calib.projection)}",
        f"{RECTIFICATION_KEY}: {fmt(calib.rectification[:3, :3])}",
        f"{LIDAR_TO_CAM_KEY}: {fmt(calib.lidar_to_cam[:3, :])}",
    ]
    Path(path).write_text("\n".join(lines) + "\n")


def project_points(cloud: PointCloud, calib: Calibration, width: int, height: int) -> FusedPoints:
    xyz = np.asarray(cloud.xyz, dtype=np.float64)
    homo = np.hstack([xyz, np.ones((len(xyz), 1))])
    img = homo @ calib.velo_to_image.T
    depth = img[:, 2]
    ok = depth > 0
    uv = np.full((len(xyz), 2), np.nan)
    uv[ok] = img[ok, :2] / depth[ok, None]
    ok &= (uv[:, 0] >= 0) & (uv[:, 0] < width) & (uv[:, 1] >= 0) & (uv[:, 1] < height)
    keep = np.flatnonzero(ok)
    return FusedPoints(xyz[keep], uv[keep], keep, int(width), int(height), depth[keep])


def read_image(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.array(im.convert("RGB"))


def write_png(path, array: np.ndarray) -> None:
    Image.fromarray(array).save(path)
