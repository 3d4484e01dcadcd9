import json
import re
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from trigrow import io
from trigrow.cli import main

SVG = "{http://www.w3.org/2000/svg}"


def synth(tmp_path, name, lines, keypoints=100, seed=None):
    cfg = tmp_path / f"{name}.txt"
    cfg.write_text("\n".join(lines) + "\n")
    argv = ["synth", "--config", str(cfg), "--out", str(tmp_path / name), "--keypoints", str(keypoints)]
    if seed is not None:
        argv += ["--seed", str(seed)]
    assert main(argv) == 0
    return tmp_path / name


@pytest.fixture(scope="module")
def exact(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("exact")
    d = synth(tmp, "fx", ["transforms = identity", "descriptor_noise = 0"])
    out = tmp / "run"
    assert main(["detect", "--template", str(d / "template.key"), "--scene", str(d / "scene.key"),
                 "--out", str(out), "--scene-size", "1000x750"]) == 0
    return d, out


def test_detect_exact_copy(exact):
    d, out = exact
    dets, doc = io.load_detections(out / "detections.json")
    assert len(dets) == 1
    assert len(dets[0].seed) == 100
    root = ET.parse(out / "overlay.svg").getroot()
    assert len(root.findall(f".//{SVG}polygon")) == 2
    lines = root.findall(f".//{SVG}line[@class='corr']")
    assert len(lines) == len(dets[0].seed)
    coords = {tuple(l.get(k) for k in ("x1", "y1", "x2", "y2")) for l in lines}
    assert len(coords) == len(lines)
    assert len(root.findall(f".//{SVG}path[@class='mesh-scene']")) == 1
    assert "1 detection" in (out / "summary.txt").read_text()


def test_eval_perfect(exact, capsys):
    d, out = exact
    capsys.readouterr()
    assert main(["eval", "--detections", str(out / "detections.json"), "--truth", str(d / "truth.json"),
                 "--out", str(out / "eval")]) == 0
    assert "identified 1/1, IoU 1.000" in capsys.readouterr().out
    assert json.loads((out / "eval" / "report.json").read_text())["identified"] == 1


def test_missing_scene_is_io_error(tmp_path, capsys):
    missing = tmp_path / "nowhere" / "scene.key"
    rc = main(["detect", "--template", str(missing), "--scene", str(missing), "--out", str(tmp_path)])
    assert rc == 2
    assert str(missing) in capsys.readouterr().err


def test_bad_keypoint_line_is_validation_error(exact, tmp_path, capsys):
    d, _ = exact
    bad = tmp_path / "bad.key"
    lines = (d / "scene.key").read_text().splitlines()
    lines[2] = "7 1.0 2.0 1.5 oops " + " ".join(["0"] * 128)
    bad.write_text("\n".join(lines) + "\n")
    rc = main(["detect", "--template", str(d / "template.key"), "--scene", str(bad), "--out", str(tmp_path)])
    assert rc == 1
    assert re.search(r"bad\.key:3", capsys.readouterr().err)


def test_kd_leaves_bounds_logged_seeds(tmp_path, capsys, monkeypatch):
    d = synth(tmp_path, "multi", ["instances = 3", "transforms = affine,similarity", "seed = 4"], keypoints=80)
    monkeypatch.setenv("TRIGROW_LOG", "INFO")
    capsys.readouterr()
    assert main(["detect", "--template", str(d / "template.key"), "--scene", str(d / "scene.key"),
                 "--out", str(tmp_path / "o"), "--kd-leaves", "5"]) == 0
    err = capsys.readouterr().err
    counts = [int(m.group(1)) for m in re.finditer(r"round \d+: (\d+) initial seeds", err)]
    assert counts and max(counts) <= 5
    assert counts[0] >= 3


def test_baseline_planted_homography(tmp_path):
    d = synth(tmp_path, "hom", ["transforms = homography", "descriptor_noise = 1", "seed = 6"])
    out = tmp_path / "b"
    assert main(["baseline", "--template", str(d / "template.key"), "--scene", str(d / "scene.key"),
                 "--out", str(out), "--template-size", "400x300", "--scene-size", "1000x750"]) == 0
    dets, _ = io.load_detections(out / "detections.json")
    truth = io.load_truth(d / "truth.json")
    assert len(dets) == 1
    planted = np.array(truth.instances[0].polygon)
    for v in dets[0].scene_hull:
        assert np.min(np.linalg.norm(planted - np.array(v), axis=1)) < 1.0


def test_pure_noise_gives_no_detections(tmp_path):
    d = synth(tmp_path, "noise", ["instances = 0", "outliers = 150", "outlier_descriptors = random"])
    tmpl = synth(tmp_path, "tmpl", ["instances = 1"])
    for cmd in ("detect", "baseline"):
        out = tmp_path / cmd
        assert main([cmd, "--template", str(tmpl / "template.key"), "--scene", str(d / "scene.key"),
                     "--out", str(out)]) == 0
        dets, doc = io.load_detections(out / "detections.json")
        assert dets == [] and doc["method"] == ("growth" if cmd == "detect" else "baseline")


def test_synth_is_byte_identical(tmp_path):
    a = synth(tmp_path, "a", ["transforms = tps", "outlier_fraction = 0.2"], seed=42)
    b = synth(tmp_path, "b", ["transforms = tps", "outlier_fraction = 0.2"], seed=42)
    for name in ("template.key", "scene.key", "truth.json", "spec.txt"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_eval_dimension_mismatch(exact, tmp_path, capsys):
    _, out = exact
    other = synth(tmp_path, "small", ["scene_size = 800x600"])
    rc = main(["eval", "--detections", str(out / "detections.json"), "--truth", str(other / "truth.json")])
    assert rc == 1
    assert "800x600" in capsys.readouterr().err


def test_detect_is_deterministic(tmp_path):
    d = synth(tmp_path, "det", ["transforms = tps", "outlier_fraction = 0.2", "dropout = 0.15", "seed = 3"])
    outs = []
    for k in range(2):
        o = tmp_path / f"r{k}"
        assert main(["detect", "--template", str(d / "template.key"), "--scene", str(d / "scene.key"),
                     "--out", str(o)]) == 0
        outs.append(o)
    for name in ("detections.json", "overlay.svg"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()


def test_config_and_flags(exact, tmp_path):
    d, _ = exact
    cfg = tmp_path / "g.txt"
    cfg.write_text("rcs_mu = paper\nkd_leaves = 2\n")
    out = tmp_path / "paper"
    assert main(["detect", "--template", str(d / "template.key"), "--scene", str(d / "scene.key"),
                 "--config", str(cfg), "--out", str(out)]) == 0
    # the literal mu caps rcs far below the acceptance threshold, so nothing grows
    assert io.load_detections(out / "detections.json")[0] == []
    cfg.write_text("kd_leaves = zero\n")
    assert main(["detect", "--template", str(d / "template.key"), "--scene", str(d / "scene.key"),
                 "--config", str(cfg), "--out", str(out)]) == 1


def test_dump_mesh(exact, tmp_path):
    d, _ = exact
    seg = tmp_path / "seg.txt"
    seg.write_text("0 2\n")
    out = tmp_path / "mesh"
    assert main(["dump-mesh", "--template", str(d / "template.key"), "--segments", str(seg),
                 "--out", str(out)]) == 0
    doc = json.loads((out / "mesh.json").read_text())
    assert [0, 2] in doc["constrained_edges"]
    n, e, t = len(doc["vertices"]), len(doc["edges"]), len(doc["triangles"])
    assert n - e + t == 1  # Euler characteristic of a triangulated disk
    ET.parse(out / "mesh.svg")
    seg.write_text("0 two\n")
    assert main(["dump-mesh", "--template", str(d / "template.key"), "--segments", str(seg),
                 "--out", str(out)]) == 1
