"""Per-superpixel features and their self-learned Gaussian models."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_SIGMA_MIN = 1e-3
STRENGTH_QUANTILE = 95.0

FEATURES = ("level", "normal", "color", "strength")


@dataclass(frozen=True)
class FeatureTable:
    """Raw features per superpixel; NaN marks an unavailable value.

    ``strength`` is the raw strength score ``Sg * dist / area`` that the
    strength probability normalises.
    """

    level: np.ndarray
    normal: np.ndarray
    color: np.ndarray
    sg: np.ndarray
    strength: np.ndarray

    @property
    def n(self) -> int:
        return len(self.color)


@dataclass(frozen=True)
class ModelParams:
    mu_l: float
    var_l: float
    mu_n: float
    var_n: float
    mu_c: float
    var_c: float
    q_sg: float


@dataclass(frozen=True)
class ProbabilityTable:
    level: np.ndarray
    normal: np.ndarray
    color: np.ndarray
    strength: np.ndarray

    def stack(self) -> np.ndarray:
        """(n, 4) array in FEATURES order, NaN where unavailable."""
        return np.column_stack([self.level, self.normal, self.color, self.strength])


def level_feature(beams, ob: np.ndarray, points) -> np.ndarray:
    """Cumulative height step accrued along each beam at obstacle points.

    Walking a beam outward from the base, each obstacle point adds the
    absolute height change from its predecessor to itself and to every point
    behind it. The nearest point of a beam has no predecessor and adds
    nothing.
    """
    z = np.asarray(getattr(points, "xyz", points), dtype=np.float64)
    z = z[:, 2] if z.ndim == 2 else z
    ob = np.asarray(ob)
    level = np.zeros(len(z))
    for beam in beams.beams:
        if len(beam) < 2:
            continue
        zb = z[beam]
        step = np.zeros(len(beam))
        step[1:] = np.abs(np.diff(zb))
        step[ob[beam] != 1] = 0.0
        step[0] = 0.0
        level[beam] = np.cumsum(step)
    return level


def aggregate_features(sp, area, level: np.ndarray, normals, ii: np.ndarray,
                       ray_points: np.ndarray) -> FeatureTable:
    """Reduce point- and pixel-level quantities to one row per superpixel."""
    labels = sp.labels
    n = sp.n
    pl = np.asarray(area.point_label)
    count = np.bincount(pl, minlength=n).astype(float)
    has_pts = count > 0

    lvl = np.full(n, np.nan)
    lvl[has_pts] = np.bincount(pl, level, n)[has_pts] / count[has_pts]

    nz = np.full(n, np.inf)
    valid = np.asarray(normals.valid)
    np.minimum.at(nz, pl[valid], np.asarray(normals.z)[valid])
    nz[np.isinf(nz)] = np.nan

    color = np.bincount(labels.ravel(), np.asarray(ii, dtype=np.float64).ravel(), n) / sp.area

    sg = np.full(n, np.nan)
    sg[has_pts] = np.bincount(pl, np.asarray(ray_points, dtype=float), n)[has_pts]
    h, w = labels.shape
    base = np.array([w // 2, h - 1], dtype=float)
    dist = np.linalg.norm(sp.centroid - base, axis=1)
    strength = sg * dist / sp.area
    return FeatureTable(lvl, nz, color, sg, strength)


def _gaussian_fit(values: np.ndarray, default_mu: float, sigma_min: float) -> tuple[float, float]:
    v = values[~np.isnan(values)]
    floor = sigma_min ** 2
    if len(v) == 0:
        return default_mu, floor
    if len(v) == 1:
        return float(v[0]), floor
    return float(v.mean()), max(float(v.var()), floor)


def estimate_models(table: FeatureTable, area, sigma_min: float = DEFAULT_SIGMA_MIN) -> ModelParams:
    """Fit each feature's Gaussian over the initial drivable superpixels.

    Variances use the population convention and are floored at
    ``sigma_min ** 2``. ``q_sg`` is the 95th percentile of the raw strength
    score over the same set; 0 means no usable strength evidence.
    """
    sel = np.asarray(area.s_int)
    if not len(sel):
        raise ValueError("initial drivable area is empty")
    mu_l, var_l = _gaussian_fit(table.level[sel], 0.0, sigma_min)
    mu_n, var_n = _gaussian_fit(table.normal[sel], 1.0, sigma_min)
    mu_c, var_c = _gaussian_fit(table.color[sel], 0.0, sigma_min)
    s = table.strength[sel]
    s = s[~np.isnan(s)]
    q_sg = float(np.percentile(s, STRENGTH_QUANTILE)) if len(s) else 0.0
    return ModelParams(mu_l, var_l, mu_n, var_n, mu_c, var_c, q_sg)


def _gauss(x, mu, var):
    return np.exp(-(np.asarray(x, dtype=np.float64) - mu) ** 2 / (2.0 * var))


def level_prob(level, mu, var):
    """1 up to the mean, Gaussian fall-off above it (low level is drivable)."""
    return np.where(np.asarray(level) <= mu, 1.0, _gauss(level, mu, var))


def normal_prob(normal, mu, var):
    """1 from the mean upward, Gaussian fall-off below it (flat is drivable)."""
    return np.where(np.asarray(normal) >= mu, 1.0, _gauss(normal, mu, var))


def color_prob(color, mu, var):
    return _gauss(color, mu, var)


def strength_prob(strength, q_sg):
    strength = np.asarray(strength, dtype=np.float64)
    if q_sg <= 0:
        return np.full(strength.shape, np.nan)
    return np.minimum(1.0, strength / q_sg)


def feature_probabilities(table: FeatureTable, params: ModelParams) -> ProbabilityTable:
    def keep_nan(src, p):
        return np.where(np.isnan(src), np.nan, p)

    lp = keep_nan(table.level, level_prob(table.level, params.mu_l, params.var_l))
    np_ = keep_nan(table.normal, normal_prob(table.normal, params.mu_n, params.var_n))
    cp = color_prob(table.color, params.mu_c, params.var_c)
    sp = keep_nan(table.strength, strength_prob(table.strength, params.q_sg))
    return ProbabilityTable(lp, np_, cp, sp)
