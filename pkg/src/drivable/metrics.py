"""Pixel-wise road-detection metrics in perspective image space."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

COLUMNS = ("MaxF", "AP", "PRE", "REC", "FPR", "FNR")


@dataclass(frozen=True)
class GroundTruth:
    road: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        if np.any(self.road & ~self.valid):
            raise ValueError("road pixels must be a subset of valid pixels")


@dataclass(frozen=True)
class Metrics:
    max_f: float
    ap: float
    pre: float
    rec: float
    fpr: float
    fnr: float
    best_threshold: float

    def row(self) -> tuple[float, ...]:
        return (self.max_f, self.ap, self.pre, self.rec, self.fpr, self.fnr)

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Counts:
    """Confusion counts for one threshold sweep (one entry per threshold)."""

    thresholds: np.ndarray
    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray
    tn: np.ndarray

    def __add__(self, other: "Counts") -> "Counts":
        # pooling requires a shared threshold grid
        if not np.array_equal(self.thresholds, other.thresholds):
            raise ValueError("threshold grids differ")
        return Counts(self.thresholds, self.tp + other.tp, self.fp + other.fp,
                      self.fn + other.fn, self.tn + other.tn)


def decode_kitti_gt(png: np.ndarray) -> GroundTruth:
    """Red marks the evaluated area; red plus blue marks road."""
    png = np.asarray(png)
    valid = png[..., 0] > 0
    road = valid & (png[..., 2] > 0)
    return GroundTruth(road, valid)


def encode_kitti_gt(gt: GroundTruth) -> np.ndarray:
    out = np.zeros(gt.road.shape + (3,), dtype=np.uint8)
    out[gt.valid, 0] = 255
    out[gt.road, 2] = 255
    return out


def sweep_counts(prob: np.ndarray, gt: GroundTruth, thresholds=None) -> Counts:
    """Confusion counts of ``prob > t`` over valid pixels for every threshold.

    By default the thresholds are 0, 1 and every distinct probability value,
    in ascending order.
    """
    prob = np.asarray(prob, dtype=np.float64)
    if prob.shape != gt.road.shape:
        raise ValueError(f"shape mismatch: {prob.shape} vs {gt.road.shape}")
    p = prob[gt.valid]
    pos = gt.road[gt.valid]
    if thresholds is None:
        thresholds = np.unique(np.concatenate([p, [0.0, 1.0]]))
    thresholds = np.asarray(thresholds, dtype=np.float64)

    order = np.argsort(p, kind="stable")
    ps = p[order]
    cum_pos = np.concatenate([[0], np.cumsum(pos[order])])
    # pixels with p <= t are predicted negative
    below = np.searchsorted(ps, thresholds, side="right")
    n_pos = int(pos.sum())
    n_neg = len(p) - n_pos
    fn = cum_pos[below]
    tn = below - fn
    tp = n_pos - fn
    fp = n_neg - tn
    return Counts(thresholds, tp, fp, fn, tn)


def _safe_div(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return np.divide(a, b, out=np.zeros_like(a), where=b > 0)


def metrics_from_counts(c: Counts) -> Metrics:
    n_pos = c.tp[0] + c.fn[0]
    n_neg = c.fp[0] + c.tn[0]
    if n_pos + n_neg == 0:
        raise ValueError("ground truth has no valid pixels")
    if n_pos == 0:
        raise ValueError("ground truth has no road pixels, recall is undefined")
    predicted = c.tp + c.fp
    pre = _safe_div(c.tp, predicted)
    rec = c.tp / n_pos
    f = _safe_div(2 * pre * rec, pre + rec)
    best = int(np.argmax(f))

    # 11-point interpolated AP over thresholds that predict something
    defined = predicted > 0
    ap = 0.0
    for r in np.linspace(0.0, 1.0, 11):
        ok = defined & (rec >= r)
        ap += pre[ok].max() if ok.any() else 0.0
    ap /= 11.0

    fpr = c.fp[best] / n_neg if n_neg else 0.0
    return Metrics(float(f[best]), float(ap), float(pre[best]), float(rec[best]),
                   float(fpr), float(1.0 - rec[best]), float(c.thresholds[best]))


def compute_metrics(prob: np.ndarray, gt: GroundTruth) -> Metrics:
    if not gt.valid.any():
        raise ValueError("ground truth has no valid pixels")
    return metrics_from_counts(sweep_counts(prob, gt))


def pooled_metrics(pairs) -> Metrics:
    """Metrics over pixel counts pooled across frames.

    ``pairs`` yields (prob, gt). Thresholds are the union of every frame's
    distinct values.
    """
    pairs = list(pairs)
    values = [np.asarray(p, dtype=np.float64)[g.valid] for p, g in pairs]
    grid = np.unique(np.concatenate(values + [np.array([0.0, 1.0])]))
    total = None
    for p, g in pairs:
        c = sweep_counts(p, g, grid)
        total = c if total is None else total + c
    return metrics_from_counts(total)


def format_table(rows: dict[str, Metrics]) -> str:
    """Human-readable table in percent, one line per named result."""
    width = max([len(k) for k in rows] + [6])
    lines = [f"{'':<{width}} | " + " | ".join(f"{c:>6}" for c in COLUMNS)]
    lines.append("-" * len(lines[0]))
    for name, m in rows.items():
        lines.append(f"{name:<{width}} | " + " | ".join(f"{100 * v:6.2f}" for v in m.row()))
    return "\n".join(lines)


def format_csv(m: Metrics) -> str:
    return ",".join(COLUMNS) + "\n" + ",".join(f"{v:.6f}" for v in m.row()) + "\n"
