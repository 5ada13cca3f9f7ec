import json

import numpy as np
import pytest
from PIL import Image

from drivable import cli
from drivable.ingest import read_image, write_png
from drivable.metrics import GroundTruth, encode_kitti_gt


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    spec = root / "spec.json"
    spec.write_text(json.dumps({"random": 2, "seed": 3, "noise": 0.02}))
    assert cli.main(["synth", str(spec), str(root / "kitti")]) == 0
    return root / "kitti"


@pytest.fixture(scope="module")
def detected(dataset, tmp_path_factory):
    out = tmp_path_factory.mktemp("out")
    rc = cli.main(["detect", str(dataset), str(out), "--alpha", "0.3", "--k", "400",
                   "--debug-overlays", "--debug-csv"])
    return rc, out


def test_detect_outputs(dataset, detected):
    rc, out = detected
    assert rc == 0
    for fid in ("um_000000", "um_000001"):
        h, w = read_image(dataset / "image_2" / f"{fid}.png").shape[:2]
        prob = np.array(Image.open(out / f"{fid}_prob.png"))
        assert prob.shape == (h, w) and prob.dtype == np.uint16
        mask = np.array(Image.open(out / f"{fid}_mask.png"))
        assert set(np.unique(mask)) <= {0, 255}
        assert read_image(out / f"{fid}_overlay.png").shape == (h, w, 3)
        header = (out / f"{fid}_superpixels.csv").read_text().splitlines()[0]
        assert header == "id,L,N,C,Sg,L_prob,N_prob,C_prob,Sg_prob,posterior"


def test_manifest_records_config(detected):
    rc, out = detected
    m = json.loads((out / "manifest.json").read_text())
    assert m["config"]["alpha"] == 0.3 and m["config"]["k"] == 400
    assert m["failed"] == []
    for e in m["frames"]:
        assert e["status"] == "ok" and len(e["inputs"]["image"]["sha256"]) == 64


def test_rerun_bit_identical(dataset, detected, tmp_path):
    _, out = detected
    rc = cli.main(["detect", str(dataset), str(tmp_path), "--alpha", "0.3", "--k", "400",
                   "--debug-overlays", "--debug-csv", "--jobs", "2"])
    assert rc == 0
    for p in out.iterdir():
        assert (tmp_path / p.name).read_bytes() == p.read_bytes(), p.name


def test_config_file_and_flag_precedence(dataset, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"alpha": 0.6, "k": 300}))
    out = tmp_path / "o"
    rc = cli.main(["detect", str(dataset), str(out), "--config", str(cfg), "--k", "200",
                   "--frame", "um_000001"])
    assert rc == 0
    m = json.loads((out / "manifest.json").read_text())
    assert (m["config"]["alpha"], m["config"]["k"]) == (0.6, 200)
    assert [e["frame"] for e in m["frames"]] == ["um_000001"]


def test_invalid_config_exit_code(dataset, tmp_path):
    assert cli.main(["detect", str(dataset), str(tmp_path), "--alpha", "1.5"]) == 2


def test_missing_input_reported(dataset, tmp_path):
    out = tmp_path / "o"
    rc = cli.main(["detect", str(dataset), str(out), "--frame", "um_000000",
                   "--frame", "um_000099", "--k", "200"])
    assert rc == 1
    m = json.loads((out / "manifest.json").read_text())
    assert m["failed"] == ["um_000099"]
    bad = [e for e in m["frames"] if e["frame"] == "um_000099"][0]
    assert "missing" in bad["error"]
    assert (out / "um_000000_prob.png").is_file()


def write_pair(pred_dir, gt_dir, fid, prob, road):
    pred_dir.mkdir(exist_ok=True)
    gt_dir.mkdir(exist_ok=True)
    Image.fromarray(cli.prob_to_png16(prob)).save(pred_dir / f"{fid}_prob.png")
    gt = GroundTruth(road, np.ones_like(road))
    name = fid.replace("_", "_road_", 1)
    write_png(gt_dir / f"{name}.png", encode_kitti_gt(gt))


def test_eval_perfect(tmp_path, capsys):
    road = np.zeros((10, 12), bool)
    road[5:] = True
    write_pair(tmp_path / "pred", tmp_path / "gt", "um_000000", road.astype(float), road)
    assert cli.main(["eval", str(tmp_path / "pred"), str(tmp_path / "gt")]) == 0
    out = capsys.readouterr().out
    lines = out.strip().splitlines()
    assert lines[-2] == "MaxF,AP,PRE,REC,FPR,FNR"
    assert float(lines[-1].split(",")[0]) == 1.0


def test_eval_counts_through_files(tmp_path):
    prob = np.array([0.9] * 10 + [0.1] * 10)[None]
    road = np.array([1] * 8 + [0] * 2 + [1] * 2 + [0] * 8, bool)[None]
    write_pair(tmp_path / "pred", tmp_path / "gt", "um_000003", prob, road)
    csv = tmp_path / "m.csv"
    rc = cli.main(["eval", str(tmp_path / "pred"), str(tmp_path / "gt"), "--csv", str(csv),
                   "--per-frame"])
    assert rc == 0
    vals = dict(zip(*[l.split(",") for l in csv.read_text().splitlines()]))
    assert float(vals["PRE"]) == pytest.approx(0.8) and float(vals["REC"]) == pytest.approx(0.8)


def test_eval_missing_gt(tmp_path):
    road = np.ones((4, 4), bool)
    write_pair(tmp_path / "pred", tmp_path / "gt", "um_000000", road.astype(float), road)
    (tmp_path / "gt" / "um_road_000000.png").unlink()
    assert cli.main(["eval", str(tmp_path / "pred"), str(tmp_path / "gt")]) == 1


def test_synth_invalid_spec(tmp_path):
    spec = tmp_path / "s.json"
    spec.write_text(json.dumps({"focal": -1}))
    assert cli.main(["synth", str(spec), str(tmp_path / "o")]) == 2
    spec.write_text(json.dumps({"nonsense": 1}))
    assert cli.main(["synth", str(spec), str(tmp_path / "o")]) == 2


def test_prob_png_round_trip():
    p = np.linspace(0, 1, 101)[None]
    assert np.abs(cli.png16_to_prob(cli.prob_to_png16(p)) - p).max() <= 0.5 / 65535
