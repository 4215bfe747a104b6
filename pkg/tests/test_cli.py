import csv
import hashlib
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from specbeam import io as sio
from specbeam.cli import main, packaged
from specbeam.radar import preset

GOLDEN = json.loads((Path(__file__).parent / "golden" / "simulate_fixture_seed0.json").read_text())
SCENE = str(packaged("fixture_scene.json"))
SMALL_CORPUS = {"groups": [{"kind": "clean", "classes": ["sign"], "ranges": [10.0], "count": 2},
                           {"kind": "occlusion", "count": 1}]}


def sha(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@pytest.fixture(scope="module")
def simulated(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    assert main(["simulate", "--scene", SCENE, "--seed", "0", "--out", str(out)]) == 0
    return out


def test_simulate_matches_golden(simulated):
    for name, digest in GOLDEN["sha256"].items():
        assert sha(simulated / name) == digest, name


def test_simulate_is_repeatable(simulated, tmp_path):
    assert main(["simulate", "--scene", SCENE, "--seed", "0", "--out", str(tmp_path)]) == 0
    for name in GOLDEN["sha256"]:
        assert (tmp_path / name).read_bytes() == (simulated / name).read_bytes()


def test_simulate_prints_resolutions(tmp_path, capsys):
    main(["simulate", "--scene", SCENE, "--seed", "1", "--out", str(tmp_path)])
    text = capsys.readouterr().out
    assert "range resolution c/2B: 0.042000 m" in text
    assert "azimuth beamwidth: 1.3325 deg" in text


def test_missing_scene_exits_2(tmp_path, capsys):
    missing = tmp_path / "nope.json"
    assert main(["simulate", "--scene", str(missing), "--seed", "0", "--out", str(tmp_path)]) == 2
    assert str(missing) in capsys.readouterr().err


def test_usage_errors(tmp_path):
    assert main(["simulate", "--scene", SCENE, "--out", str(tmp_path)]) == 2          # no seed
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"colour": "red"}))
    assert main(["simulate", "--config", str(cfg), "--scene", SCENE, "--seed", "0", "--out", str(tmp_path)]) == 2
    cfg.write_text(json.dumps({"radar": {"num_samples": 1}}))
    assert main(["simulate", "--config", str(cfg), "--scene", SCENE, "--seed", "0", "--out", str(tmp_path)]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert main(["simulate", "--scene", str(bad), "--seed", "0", "--out", str(tmp_path)]) == 2


def test_flags_override_config(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"preset": "mid", "seed": 3, "scene": SCENE, "radar": {"num_samples": 64}}))
    assert main(["simulate", "--config", str(cfg), "--preset", "near", "--out", str(tmp_path / "a")]) == 0
    iq = sio.read_iq(tmp_path / "a" / "capture.iq")
    assert iq.config.bandwidth_hz == preset("near").bandwidth_hz
    assert iq.config.num_samples == 64


def test_full_chain(simulated, tmp_path):
    assert main(["beamform", "--capture", str(simulated / "capture.iq"), "--out", str(tmp_path / "bf")]) == 0
    assert (tmp_path / "bf" / "profile.pgm").read_bytes().startswith(b"P5\n")
    args = ["process", "--capture", str(simulated / "capture.iq"), "--masks", str(simulated / "masks.json"),
            "--mono", str(simulated / "mono.bin"), "--out", str(tmp_path / "p")]
    assert main(args) == 0
    objects = json.loads((tmp_path / "p" / "objects.json").read_text())
    assert [o["object_id"] for o in objects] == [0, 1, 2]
    assert all(o["error"] == "" for o in objects)
    for o in objects:
        assert (tmp_path / "p" / f"object_{o['object_id']}_dense.csv").is_file()
        assert (tmp_path / "p" / f"object_{o['object_id']}_declutter.json").is_file()
    assert main(["eval", "--predictions", str(tmp_path / "p"), "--scene", SCENE,
                 "--out", str(tmp_path / "m.csv")]) == 0
    rows = list(csv.DictReader((tmp_path / "m.csv").open()))
    assert len(rows) == 9
    assert {r["method"] for r in rows} == {"metamoran", "naive_fusion", "mono"}
    assert all(r["failed"] == "false" for r in rows)
    # the radar anchor lands within a few centimeters of the truth depth span
    assert all(float(r["depth_error"]) < 0.1 for r in rows if r["method"] == "metamoran")


def test_strict_mode_reports_grid_points(simulated, tmp_path):
    args = ["process", "--capture", str(simulated / "capture.iq"), "--masks", str(simulated / "masks.json"),
            "--mono", str(simulated / "mono.bin"), "--out", str(tmp_path), "--strict-paper"]
    assert main(args) == 0
    for o in json.loads((tmp_path / "objects.json").read_text()):
        grid = np.loadtxt(tmp_path / f"object_{o['object_id']}_curve.csv", delimiter=",", skiprows=1)[:, 0]
        assert np.min(np.abs(grid - o["d_star"])) < 1e-12


def test_process_with_no_usable_object_exits_1(simulated, tmp_path):
    mono, header = sio.read_mono(simulated / "mono.bin")
    mono.depth[:] = np.nan
    sio.write_mono(tmp_path / "empty.bin", mono, {"camera": header["camera"]})
    args = ["process", "--capture", str(simulated / "capture.iq"), "--masks", str(simulated / "masks.json"),
            "--mono", str(tmp_path / "empty.bin"), "--out", str(tmp_path / "p")]
    assert main(args) == 1


def test_sweep_byte_identical_and_jobs_independent(tmp_path):
    corpus = tmp_path / "corpus.json"
    corpus.write_text(json.dumps(SMALL_CORPUS))
    outs = []
    for name, jobs in (("a", "1"), ("b", "1"), ("c", "2")):
        assert main(["sweep", "--corpus", str(corpus), "--seed", "9", "--jobs", jobs, "--out", str(tmp_path / name)]) == 0
        outs.append(tmp_path / name)
    for f in ("report.csv", "summary.json", "declutter_audit.json"):
        assert (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes() == (outs[2] / f).read_bytes()


def test_console_script_runs(tmp_path):
    missing = tmp_path / "missing.json"
    proc = subprocess.run([sys.executable, "-m", "specbeam.cli", "simulate", "--scene", str(missing), "--seed", "0",
                           "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 2
    assert str(missing) in proc.stderr
