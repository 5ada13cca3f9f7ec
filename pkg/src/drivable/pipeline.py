"""End-to-end drivable-area detection for one frame."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from . import features as ft
from . import fusion
from .ingest import project_points
from .obstacle import DEFAULT_C, DEFAULT_EPSILON, build_graph, classify_obstacles, compute_normals
from .preprocess import DEFAULT_ALPHA, illumination_invariant, segment_superpixels
from .raymap import (DEFAULT_H, DEFAULT_R_MIN, DEFAULT_W, bin_points_polar, filter_rays,
                     generate_drm, initial_area, ray_points)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PipelineConfig:
    alpha: float = DEFAULT_ALPHA
    k: int = 1000
    compactness: float = 10.0
    slic_iters: int = 10
    epsilon: float = DEFAULT_EPSILON
    c: float = DEFAULT_C
    H: int = DEFAULT_H
    w: int = DEFAULT_W
    r_min: float = DEFAULT_R_MIN
    sigma_min: float = ft.DEFAULT_SIGMA_MIN
    max_iters: int = fusion.MAX_ITERS
    tol: float = fusion.TOL
    theta: float = fusion.THETA
    eps_like: float = fusion.EPS_LIKE
    eps_psi: float = fusion.EPS_PSI
    psi_default: float = fusion.PSI_DEFAULT

    def __post_init__(self):
        checks = {
            "alpha": 0 < self.alpha < 1,
            "k": self.k >= 1,
            "compactness": self.compactness > 0,
            "slic_iters": self.slic_iters >= 1,
            "epsilon": self.epsilon > 0,
            "c": 0 < self.c < 90,
            "H": self.H >= 1,
            "w": self.w >= 0,
            "r_min": self.r_min >= 0,
            "sigma_min": self.sigma_min > 0,
            "max_iters": self.max_iters >= 1,
            "tol": self.tol >= 0,
            "theta": 0 <= self.theta <= 1,
            "eps_like": 0 < self.eps_like < 1,
            "eps_psi": 0 < self.eps_psi <= 1,
            "psi_default": 0 <= self.psi_default <= 1,
        }
        bad = [k for k, ok in checks.items() if not ok]
        if bad:
            raise ValueError(f"config values out of range: {', '.join(bad)}")

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        names = {f.name: f.type for f in fields(cls)}
        unknown = set(d) - set(names)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        defaults = cls()
        typed = {k: type(getattr(defaults, k))(v) for k, v in d.items()}
        return cls(**typed)

    def to_dict(self) -> dict:
        return asdict(self)

    def with_(self, **kw) -> "PipelineConfig":
        return replace(self, **kw)


@dataclass
class FrameResult:
    """Everything one run produces; ``prob`` is the per-pixel drivable map."""

    prob: np.ndarray
    mask: np.ndarray
    fused: object = None
    superpixels: object = None
    ii: np.ndarray = None
    graph: object = None
    normals: object = None
    ob: np.ndarray = None
    beams: object = None
    raw_rays: object = None
    rays: object = None
    area: object = None
    level: np.ndarray = None
    table: object = None
    params: object = None
    probs: object = None
    network: object = None
    posterior: object = None
    no_seed: bool = False

    def feature_image(self, name: str, unavailable: float = 0.5) -> np.ndarray:
        """Single-feature probability map, with ``unavailable`` where the feature is missing."""
        if self.probs is None:
            return np.zeros_like(self.prob)
        p = getattr(self.probs, name)
        return np.where(np.isnan(p), unavailable, p)[self.superpixels.labels]

    def initial_image(self) -> np.ndarray:
        if self.area is None:
            return np.zeros_like(self.prob)
        return self.area.in_s_int[self.superpixels.labels].astype(float)


def detect(image: np.ndarray, cloud, calib, config: PipelineConfig | None = None) -> FrameResult:
    cfg = config or PipelineConfig()
    h, w = image.shape[:2]
    fused = project_points(cloud, calib, w, h)
    sp = segment_superpixels(image, cfg.k, cfg.compactness, cfg.slic_iters)
    ii = illumination_invariant(image, cfg.alpha)

    graph = build_graph(fused, cfg.epsilon)
    normals = compute_normals(graph, fused)
    ob = classify_obstacles(normals, cfg.c)

    beams = bin_points_polar(fused, w, h, cfg.H)
    raw = generate_drm(beams, ob)
    rays = filter_rays(raw, cfg.w, cfg.r_min)
    area = initial_area(rays, sp, fused)
    res = FrameResult(np.zeros((h, w)), np.zeros((h, w), dtype=bool), fused, sp, ii,
                      graph, normals, ob, beams, raw, rays, area)
    if area.empty:
        log.warning("no drivable seed: ray map touches no superpixel")
        res.no_seed = True
        return res

    level = ft.level_feature(beams, ob, fused)
    table = ft.aggregate_features(sp, area, level, normals, ii, ray_points(beams, rays))
    params = ft.estimate_models(table, area, cfg.sigma_min)
    probs = ft.feature_probabilities(table, params)
    net = fusion.build_network(sp, probs, table, params, cfg.eps_like, cfg.eps_psi,
                               cfg.psi_default)
    post = fusion.run_bp(net, cfg.max_iters, cfg.tol)
    if not post.converged:
        log.info("belief propagation stopped after %d iterations without converging",
                 post.iterations)
    res.level, res.table, res.params, res.probs = level, table, params, probs
    res.network, res.posterior = net, post
    res.prob = post.image(sp)
    res.mask = fusion.threshold_posterior(post, cfg.theta, sp)
    return res
