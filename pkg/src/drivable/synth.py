"""Synthetic ground-plus-boxes scenes with exact drivable ground truth.

World frame: x forward, y left, z up, ground plane at z = 0. The LIDAR sits
at height ``mount_height`` above the origin and reports points in its own
frame (KITTI convention), so ground returns have z = -mount_height.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .ingest import Calibration, PointCloud, write_calibration, write_png, write_velodyne
from .metrics import GroundTruth, encode_kitti_gt

# camera frame (x right, y down, z forward) from world axes
WORLD_TO_CAM = np.array([[0.0, -1.0, 0.0], [0.0, 0.0, -1.0], [1.0, 0.0, 0.0]])

GROUND_RGB = (100, 100, 100)
SKY_RGB = (110, 150, 255)
BACKGROUND_RGB = (80, 140, 60)
# the last two share the ground's chromaticity, so only brightness tells them apart
BOX_RGB = ((200, 60, 50), (70, 90, 200), (200, 180, 60), (90, 140, 80),
           (150, 150, 150), (60, 60, 60))

GROUND, SKY = 0, -1


@dataclass(frozen=True)
class Box:
    """Axis-aligned box standing on the ground; ``x, y`` is its footprint centre."""

    x: float
    y: float
    length: float
    width: float
    height: float
    color: tuple[int, int, int] | None = None

    @property
    def lo(self) -> np.ndarray:
        return np.array([self.x - self.length / 2, self.y - self.width / 2, 0.0])

    @property
    def hi(self) -> np.ndarray:
        return np.array([self.x + self.length / 2, self.y + self.width / 2, self.height])


@dataclass(frozen=True)
class SceneSpec:
    ground_x: float = 40.0  # ground spans |x| <= ground_x
    ground_y: float = 20.0  # and |y| <= ground_y
    boxes: tuple[Box, ...] = ()
    rings: int = 16
    points_per_ring: int = 360
    mount_height: float = 1.73
    ring_near: float = 4.0  # ground range of the lowest ring
    ring_far: float = 36.0  # ground range of the highest ring
    max_range: float = 120.0
    focal: float = 721.5
    cx: float = 609.6
    cy: float = 172.9
    width: int = 1242
    height: int = 375
    cam_x: float = 0.27
    cam_height: float = 1.65
    noise: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.focal <= 0:
            raise ValueError("focal length must be positive")
        if self.noise < 0:
            raise ValueError("noise std must be >= 0")
        if self.width < 1 or self.height < 1:
            raise ValueError("image size must be positive")
        if self.rings < 1 or self.points_per_ring < 1:
            raise ValueError("ring and point counts must be positive")
        if not 0 < self.ring_near <= self.ring_far:
            raise ValueError("need 0 < ring_near <= ring_far")
        for b in self.boxes:
            if min(b.length, b.width, b.height) <= 0:
                raise ValueError("box dimensions must be positive")
            if np.any(np.abs(b.lo[:2]) > [self.ground_x, self.ground_y]) or \
               np.any(np.abs(b.hi[:2]) > [self.ground_x, self.ground_y]):
                raise ValueError(f"box {b} leaves the ground extent")

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        d = dict(d)
        d["boxes"] = tuple(Box(**{**b, "color": tuple(b["color"]) if b.get("color") else None})
                           for b in d.get("boxes", ()))
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown scene fields: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Scene:
    spec: SceneSpec
    image: np.ndarray
    cloud: PointCloud
    calib: Calibration
    gt: GroundTruth
    surface: np.ndarray = field(repr=False)  # per point: 0 ground, k+1 box k
    world: np.ndarray = field(repr=False)  # per point, float64 world frame, before storage
    pixel_surface: np.ndarray = field(repr=False)  # per pixel: -1 sky/background


def ring_elevations(spec: SceneSpec) -> np.ndarray:
    """Ring angles (radians, negative = down) whose ground hits are evenly spaced in range."""
    ranges = np.linspace(spec.ring_near, spec.ring_far, spec.rings)
    return -np.arctan2(spec.mount_height, ranges)


def calibration(spec: SceneSpec) -> Calibration:
    proj = np.array([[spec.focal, 0.0, spec.cx, 0.0],
                     [0.0, spec.focal, spec.cy, 0.0],
                     [0.0, 0.0, 1.0, 0.0]])
    cam_pos = np.array([spec.cam_x, 0.0, spec.cam_height])
    lidar_pos = np.array([0.0, 0.0, spec.mount_height])
    tr = np.eye(4)
    tr[:3, :3] = WORLD_TO_CAM
    tr[:3, 3] = WORLD_TO_CAM @ (lidar_pos - cam_pos)
    return Calibration(proj, np.eye(4), tr)


def cast(origin: np.ndarray, dirs: np.ndarray, spec: SceneSpec) -> tuple[np.ndarray, np.ndarray]:
    """First hit distance and surface id for rays from one origin.

    Surface ids: 0 ground (inside the extent), k + 1 for box k, -1 for a miss.
    """
    n = len(dirs)
    t_best = np.full(n, np.inf)
    surf = np.full(n, SKY, dtype=np.intp)

    dz = dirs[:, 2]
    down = dz < 0
    t = np.full(n, np.inf)
    t[down] = -origin[2] / dz[down]
    hit = origin[:2] + t[:, None] * dirs[:, :2]
    inside = down & (np.abs(hit[:, 0]) <= spec.ground_x) & (np.abs(hit[:, 1]) <= spec.ground_y)
    t_best[inside] = t[inside]
    surf[inside] = GROUND

    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs
    for k, box in enumerate(spec.boxes):
        t0 = (box.lo - origin) * inv
        t1 = (box.hi - origin) * inv
        near = np.nanmax(np.minimum(t0, t1), axis=1)
        far = np.nanmin(np.maximum(t0, t1), axis=1)
        ok = (near <= far) & (near > 0) & (near < t_best)
        t_best[ok] = near[ok]
        surf[ok] = k + 1
    return t_best, surf


def simulate_lidar(spec: SceneSpec, rng: np.random.Generator) -> tuple[PointCloud, np.ndarray, np.ndarray]:
    el = ring_elevations(spec)
    az = np.arange(spec.points_per_ring) * (2 * np.pi / spec.points_per_ring)
    ee, aa = np.meshgrid(el, az, indexing="ij")
    dirs = np.column_stack([(np.cos(ee) * np.cos(aa)).ravel(),
                            (np.cos(ee) * np.sin(aa)).ravel(),
                            np.sin(ee).ravel()])
    origin = np.array([0.0, 0.0, spec.mount_height])
    t, surf = cast(origin, dirs, spec)
    ok = (surf != SKY) & (t <= spec.max_range)
    world = origin + t[ok, None] * dirs[ok]
    if spec.noise > 0:
        world[:, 2] += rng.normal(0.0, spec.noise, len(world))
    xyz = world - origin
    refl = np.where(surf[ok] == GROUND, 0.3, 0.6)
    pts = np.column_stack([xyz, refl]).astype(np.float32)
    return PointCloud(pts), surf[ok], world


def render(spec: SceneSpec, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Flat-shaded RGB image and per-pixel surface ids."""
    h, w = spec.height, spec.width
    v, u = np.mgrid[0:h, 0:w]
    d_cam = np.stack([(u + 0.5 - spec.cx) / spec.focal,
                      (v + 0.5 - spec.cy) / spec.focal,
                      np.ones((h, w))], axis=-1).reshape(-1, 3)
    dirs = d_cam @ WORLD_TO_CAM  # rows: WORLD_TO_CAM.T @ d
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    origin = np.array([spec.cam_x, 0.0, spec.cam_height])
    _, surf = cast(origin, dirs, spec)
    surf = surf.reshape(h, w)

    below_horizon = dirs[:, 2].reshape(h, w) < 0
    rgb = np.empty((h, w, 3))
    rgb[:] = SKY_RGB
    rgb[below_horizon & (surf == SKY)] = BACKGROUND_RGB
    rgb[surf == GROUND] = GROUND_RGB
    for k, box in enumerate(spec.boxes):
        rgb[surf == k + 1] = box.color or BOX_RGB[k % len(BOX_RGB)]

    # common gain on all channels: left-to-right illumination ramp plus
    # luminance texture; a small chroma jitter on top
    gain = 0.55 + 0.45 * (u / max(w - 1, 1))
    gain = gain * (1.0 + 0.06 * rng.standard_normal((h, w)))
    rgb = rgb * gain[..., None] + rng.normal(0.0, 1.0, (h, w, 3))
    image = np.clip(np.rint(rgb), 0, 255).astype(np.uint8)
    return image, surf


def generate_scene(spec: SceneSpec) -> Scene:
    rng = np.random.default_rng(spec.seed)
    cloud, surface, world = simulate_lidar(spec, rng)
    image, pix = render(spec, rng)
    road = pix == GROUND
    gt = GroundTruth(road, np.ones_like(road))
    return Scene(spec, image, cloud, calibration(spec), gt, surface, world, pix)


def random_spec(seed: int, n_boxes: int | None = None, **overrides) -> SceneSpec:
    """Scene with 1-4 non-overlapping boxes in front of the vehicle."""
    rng = np.random.default_rng(seed)
    if n_boxes is None:
        n_boxes = int(rng.integers(1, 5))
    boxes = []
    tries = 0
    while len(boxes) < n_boxes and tries < 1000:
        tries += 1
        b = Box(x=float(rng.uniform(8.0, 28.0)), y=float(rng.uniform(-7.0, 7.0)),
                length=float(rng.uniform(1.0, 4.0)), width=float(rng.uniform(1.0, 3.0)),
                height=float(rng.uniform(0.8, 2.5)),
                color=BOX_RGB[int(rng.integers(len(BOX_RGB)))])
        if all(np.any(b.lo[:2] > o.hi[:2] + 1.0) or np.any(o.lo[:2] > b.hi[:2] + 1.0)
               for o in boxes):
            boxes.append(b)
    params = dict(boxes=tuple(boxes), seed=seed)
    params.update(overrides)
    return SceneSpec(**params)


def frame_paths(root, frame_id: str) -> dict[str, Path]:
    root = Path(root)
    prefix, _, num = frame_id.rpartition("_")
    gt_name = f"{prefix}_road_{num}.png" if prefix else f"{frame_id}_road.png"
    return {
        "image": root / "image_2" / f"{frame_id}.png",
        "velodyne": root / "velodyne" / f"{frame_id}.bin",
        "calib": root / "calib" / f"{frame_id}.txt",
        "gt": root / "gt_image_2" / gt_name,
    }


def write_scene(root, frame_id: str, scene: Scene) -> dict[str, Path]:
    """Write a scene in the KITTI road layout, plus the spec as JSON."""
    paths = frame_paths(root, frame_id)
    for p in paths.values():
        p.parent.mkdir(parents=True, exist_ok=True)
    write_png(paths["image"], scene.image)
    write_velodyne(paths["velodyne"], scene.cloud)
    write_calibration(paths["calib"], scene.calib)
    write_png(paths["gt"], encode_kitti_gt(scene.gt))
    spec_dir = Path(root) / "spec"
    spec_dir.mkdir(exist_ok=True)
    (spec_dir / f"{frame_id}.json").write_text(json.dumps(scene.spec.to_dict(), indent=2))
    return paths
