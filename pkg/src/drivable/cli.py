"""Command-line front end: ``drivable detect | eval | synth``."""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import fields
from pathlib import Path

import numpy as np
from PIL import Image

from . import synth
from .ingest import parse_calibration, read_image, read_velodyne
from .metrics import Metrics, compute_metrics, decode_kitti_gt, format_csv, format_table, pooled_metrics
from .pipeline import FrameResult, PipelineConfig, detect

log = logging.getLogger("drivable")

EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2
PROB_SUFFIX = "_prob.png"


# ---------------------------------------------------------------- file output

def atomic_write_bytes(path: Path, data: bytes) -> None:
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def png_bytes(array: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(array).save(buf, format="PNG")
    return buf.getvalue()


def prob_to_png16(prob: np.ndarray) -> np.ndarray:
    return np.rint(np.clip(prob, 0.0, 1.0) * 65535.0).astype(np.uint16)


def png16_to_prob(png: np.ndarray) -> np.ndarray:
    return np.asarray(png, dtype=np.float64) / 65535.0


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def overlay(image: np.ndarray, res: FrameResult) -> np.ndarray:
    """Drivable mask blended green over the image, rays in yellow, obstacle points red."""
    out = image.astype(np.float64)
    green = np.array([0.0, 255.0, 0.0])
    out[res.mask] = 0.5 * out[res.mask] + 0.5 * green
    if res.rays is not None:
        out[res.rays.mask] = (255.0, 255.0, 0.0)
    if res.fused is not None and res.ob is not None and len(res.ob):
        u, v = res.fused.pixel.T
        hit = res.ob == 1
        out[v[hit], u[hit]] = (255.0, 0.0, 0.0)
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def superpixel_rows(res: FrameResult):
    t, p = res.table, res.probs
    yield ["id", "L", "N", "C", "Sg", "L_prob", "N_prob", "C_prob", "Sg_prob", "posterior"]
    for i in range(res.superpixels.n):
        yield [i, t.level[i], t.normal[i], t.color[i], t.sg[i],
               p.level[i], p.normal[i], p.color[i], p.strength[i], res.posterior.drivable[i]]


def csv_bytes(rows) -> bytes:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue().encode()


# ---------------------------------------------------------------- detect

def frame_inputs(root: Path, frame_id: str) -> dict[str, Path]:
    paths = synth.frame_paths(root, frame_id)
    return {k: paths[k] for k in ("image", "velodyne", "calib")}


def list_frames(root: Path) -> list[str]:
    return sorted(p.stem for p in (Path(root) / "image_2").glob("*.png"))


def process_frame(root: str, frame_id: str, out_dir: str, cfg_dict: dict,
                  overlays: bool, debug_csv: bool) -> dict:
    """Run one frame and write its outputs; returns a manifest entry."""
    entry = {"frame": frame_id, "inputs": {}, "outputs": []}
    try:
        paths = frame_inputs(Path(root), frame_id)
        for key, p in paths.items():
            if not p.is_file():
                raise FileNotFoundError(f"missing {key} file {p}")
            entry["inputs"][key] = {"path": str(p), "sha256": sha256(p)}
        image = read_image(paths["image"])
        cloud = read_velodyne(paths["velodyne"])
        calib = parse_calibration(paths["calib"])
        res = detect(image, cloud, calib, PipelineConfig.from_dict(cfg_dict))

        out = Path(out_dir)
        outputs = {f"{frame_id}{PROB_SUFFIX}": png_bytes(prob_to_png16(res.prob)),
                   f"{frame_id}_mask.png": png_bytes(np.where(res.mask, 255, 0).astype(np.uint8))}
        if overlays:
            outputs[f"{frame_id}_overlay.png"] = png_bytes(overlay(image, res))
        if debug_csv and res.table is not None:
            outputs[f"{frame_id}_superpixels.csv"] = csv_bytes(superpixel_rows(res))
        for name, data in outputs.items():
            atomic_write_bytes(out / name, data)
        entry["outputs"] = sorted(outputs)
        entry["no_seed"] = res.no_seed
        if res.posterior is not None:
            entry["bp"] = {"converged": bool(res.posterior.converged),
                           "iterations": int(res.posterior.iterations)}
        entry["status"] = "ok"
    except Exception as exc:  # reported per frame, the run carries on
        entry["status"] = "error"
        entry["error"] = f"{type(exc).__name__}: {exc}"
    return entry


def resolve_config(args) -> PipelineConfig:
    cfg = {}
    if args.config:
        cfg.update(json.loads(Path(args.config).read_text()))
    for f in fields(PipelineConfig):
        value = getattr(args, f"cfg_{f.name}", None)
        if value is not None:
            cfg[f.name] = value
    return PipelineConfig.from_dict(cfg)


def cmd_detect(args) -> int:
    try:
        cfg = resolve_config(args)
    except (ValueError, TypeError, OSError) as exc:
        log.error("invalid configuration: %s", exc)
        return EXIT_USAGE
    root, out = Path(args.input), Path(args.output)
    frames = args.frame or list_frames(root)
    if not frames:
        log.error("no frames found under %s", root / "image_2")
        return EXIT_FAILED
    out.mkdir(parents=True, exist_ok=True)

    jobs = [(str(root), f, str(out), cfg.to_dict(), args.debug_overlays, args.debug_csv)
            for f in frames]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            entries = list(pool.map(process_frame, *zip(*jobs)))
    else:
        entries = [process_frame(*j) for j in jobs]

    failed = [e for e in entries if e["status"] != "ok"]
    for e in entries:
        if e["status"] == "ok":
            log.info("%s: ok", e["frame"])
        else:
            log.error("%s: %s", e["frame"], e["error"])
    manifest = {"config": cfg.to_dict(), "frames": entries,
                "failed": [e["frame"] for e in failed]}
    atomic_write_bytes(out / "manifest.json",
                       (json.dumps(manifest, indent=2, sort_keys=True) + "\n").encode())
    return EXIT_FAILED if failed else EXIT_OK


# ---------------------------------------------------------------- eval

def gt_path(gt_root: Path, frame_id: str) -> Path:
    path = synth.frame_paths(gt_root, frame_id)["gt"]
    return path if (gt_root / "gt_image_2").is_dir() else gt_root / path.name


def load_pairs(pred_dir: Path, gt_root: Path):
    pairs, names = [], []
    for p in sorted(pred_dir.glob(f"*{PROB_SUFFIX}")):
        frame_id = p.name[: -len(PROB_SUFFIX)]
        g = gt_path(gt_root, frame_id)
        if not g.is_file():
            raise FileNotFoundError(f"no ground truth for {frame_id}: {g}")
        prob = png16_to_prob(np.array(Image.open(p)))
        gt = decode_kitti_gt(read_image(g))
        if prob.shape != gt.road.shape:
            raise ValueError(f"{frame_id}: prediction {prob.shape} vs ground truth {gt.road.shape}")
        pairs.append((prob, gt))
        names.append(frame_id)
    return names, pairs


def cmd_eval(args) -> int:
    try:
        names, pairs = load_pairs(Path(args.pred), Path(args.gt))
    except (OSError, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_FAILED
    if not pairs:
        log.error("no *%s files in %s", PROB_SUFFIX, args.pred)
        return EXIT_FAILED
    try:
        rows: dict[str, Metrics] = {}
        if args.per_frame:
            rows.update({n: compute_metrics(p, g) for n, (p, g) in zip(names, pairs)})
        total = pooled_metrics(pairs)
    except ValueError as exc:
        log.error("%s", exc)
        return EXIT_FAILED
    rows["pooled"] = total
    print(format_table(rows))
    text = format_csv(total)
    if args.csv:
        atomic_write_bytes(Path(args.csv), text.encode())
    else:
        print()
        print(text, end="")
    return EXIT_OK


# ---------------------------------------------------------------- synth

def load_scene_specs(path: Path) -> list[tuple[str, synth.SceneSpec]]:
    """A spec file holds one scene dict, a list of them, or ``{"random": n, "seed": s}``.

    Random entries accept any SceneSpec field as an override.
    """
    data = json.loads(Path(path).read_text())
    items = data if isinstance(data, list) else [data]
    specs = []
    for item in items:
        item = dict(item)
        if "random" in item:
            n = int(item.pop("random"))
            seed = int(item.pop("seed", 0))
            for s in range(seed, seed + n):
                specs.append(synth.random_spec(s, **item))
        else:
            specs.append(synth.SceneSpec.from_dict(item))
    return [(f"um_{i:06d}", s) for i, s in enumerate(specs)]


def cmd_synth(args) -> int:
    try:
        specs = load_scene_specs(Path(args.spec))
    except (ValueError, TypeError, KeyError, OSError) as exc:
        log.error("invalid scene spec: %s", exc)
        return EXIT_USAGE
    for frame_id, spec in specs:
        synth.write_scene(args.output, frame_id, synth.generate_scene(spec))
        log.info("wrote %s", frame_id)
    return EXIT_OK


# ---------------------------------------------------------------- parser

def _config_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("pipeline parameters (override --config)")
    defaults = PipelineConfig()
    for f in fields(PipelineConfig):
        default = getattr(defaults, f.name)
        g.add_argument(f"--{f.name.replace('_', '-')}", dest=f"cfg_{f.name}",
                       type=type(default), default=None, metavar=type(default).__name__.upper(),
                       help=f"default {default}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="drivable",
                                     description="Camera and LIDAR drivable-area detection.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    d = sub.add_parser("detect", help="run the detector on a KITTI-layout directory")
    d.add_argument("input", help="directory with image_2/, velodyne/, calib/")
    d.add_argument("output", help="directory for probability, mask and overlay PNGs")
    d.add_argument("--frame", action="append", help="frame id (repeatable; default: all)")
    d.add_argument("--config", help="JSON file of pipeline parameters")
    d.add_argument("--jobs", type=int, default=1, help="frames processed concurrently")
    d.add_argument("--debug-overlays", action="store_true",
                   help="also write <frame>_overlay.png (mask, rays, obstacle points)")
    d.add_argument("--debug-csv", action="store_true",
                   help="also write per-superpixel features and probabilities")
    _config_flags(d)
    d.set_defaults(func=cmd_detect)

    e = sub.add_parser("eval", help="score probability maps against ground truth")
    e.add_argument("pred", help="directory of <frame>_prob.png files")
    e.add_argument("gt", help="dataset root holding gt_image_2/, or that directory itself")
    e.add_argument("--csv", help="write the pooled metrics CSV here instead of stdout")
    e.add_argument("--per-frame", action="store_true", help="add one table row per frame")
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("synth", help="generate synthetic scenes in the KITTI layout")
    s.add_argument("spec", help="JSON scene spec (see README)")
    s.add_argument("output", help="dataset root to write")
    s.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "jobs", 1) < 1:
        print("drivable: --jobs must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
