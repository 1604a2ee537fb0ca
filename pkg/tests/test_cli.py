import json
import subprocess
import sys

import pytest

from sonarpipe import clipio
from sonarpipe.cli import main


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["synth", "--seed", "1", "--frames", "60", "--fish", "2", "--width", "160", "--height", "120",
                 "--out", str(root / "clips" / "a")]) == 0
    assert main(["synth", "--seed", "2", "--frames", "60", "--fish", "0", "--width", "160", "--height", "120",
                 "--camera", "ARIS", "--clip-id", "empty", "--out", str(root / "clips" / "e")]) == 0
    (root / "empty.txt").write_text("empty\n")
    return root


def test_synth_layout(workspace):
    a = workspace / "clips" / "a"
    assert (a / "manifest.json").is_file() and (a / "passages.csv").is_file()
    assert len(list((a / "frames").glob("*.pgm"))) == 60
    assert len(list((a / "annotations").glob("*.txt"))) == 60
    assert clipio.load_manifest(a / "manifest.json").clip_id == "synth_1"


def test_run_full(workspace, capsys):
    out = workspace / "run"
    rc = main([
        "run", "--manifests-dir", str(workspace / "clips"), "--annotations", "auto",
        "--passages", str(workspace / "clips" / "a" / "passages.csv"),
        "--empty-clips", str(workspace / "empty.txt"), "--out", str(out),
    ])
    assert rc == 0
    report = json.loads((out / "report.json").read_text())
    assert set(report) >= {"config", "clips", "model", "ecological"}
    assert report["ecological"]["overall"]["passages"] == 2
    assert (out / "eco_table.txt").read_text().startswith("Recall (%TP) by fish size")
    for name in ("detections.jsonl", "filtered.jsonl", "tracks.jsonl"):
        assert (out / name).is_file()
    assert "AP50=" in capsys.readouterr().out


def test_stepwise_commands(workspace):
    a = workspace / "clips" / "a"
    e = workspace / "clips" / "e"
    step = workspace / "step"
    step.mkdir()
    assert main(["preprocess", "--manifest", str(a / "manifest.json"), "--dump-masks", str(step / "masks")]) == 0
    assert (step / "masks" / "synth_1_0_b.pgm").is_file()
    assert main(["detect", "--baseline", "--manifest", str(a / "manifest.json"), "--manifest", str(e / "manifest.json"),
                 "--out", str(step / "d.jsonl")]) == 0
    assert main(["track-filter", "--detections", str(step / "d.jsonl"), "--out", str(step / "t.jsonl"),
                 "--filtered-out", str(step / "f.jsonl")]) == 0
    assert main(["eval-model", "--pred", str(step / "d.jsonl"), "--gt", str(a / "annotations"),
                 "--manifest", str(a / "manifest.json"), "--out", str(step / "m.json")]) == 0
    assert "kappa" in json.loads((step / "m.json").read_text())
    assert main(["eval-eco", "--tracks", str(step / "t.jsonl"), "--passages", str(a / "passages.csv"),
                 "--manifest", str(a / "manifest.json"), "--manifest", str(e / "manifest.json"),
                 "--empty-clips", str(workspace / "empty.txt"), "--detections", str(step / "f.jsonl"),
                 "--out", str(step / "eco.json")]) == 0
    eco = json.loads((step / "eco.json").read_text())
    assert eco["cameras"]["ARIS"]["tn"]["total_images"] == 60

    # the run command and the step-by-step chain agree
    out = workspace / "run2"
    main(["run", "--manifest", str(a / "manifest.json"), "--manifest", str(e / "manifest.json"), "--out", str(out)])
    assert (out / "tracks.jsonl").read_text() == (step / "t.jsonl").read_text()


def test_external_detect_filters_tau(tmp_path):
    log = tmp_path / "ext.jsonl"
    log.write_text(
        json.dumps({"clip_id": "c", "frame": 0, "x": 0, "y": 0, "w": 2, "h": 2, "conf": 0.1}) + "\n"
        + json.dumps({"clip_id": "c", "frame": 1, "x": 0, "y": 0, "w": 2, "h": 2, "conf": 0.9}) + "\n"
    )
    assert main(["detect", "--external", str(log), "--tau", "0.5", "--out", str(tmp_path / "o.jsonl")]) == 0
    assert len((tmp_path / "o.jsonl").read_text().splitlines()) == 1


def test_errors_exit_nonzero(tmp_path, capsys):
    assert main(["run", "--manifest", str(tmp_path / "missing.json"), "--out", str(tmp_path / "o")]) == 1
    assert "error: [run]" in capsys.readouterr().err
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"clip_id": "c", "frame": 0, "x": 0, "y": 0, "w": 1, "h": 1, "conf": 7}\n')
    assert main(["track-filter", "--detections", str(bad), "--out", str(tmp_path / "t")]) == 1
    err = capsys.readouterr().err
    assert "bad.jsonl:1" in err
    assert main(["preprocess", "--manifest", str(bad)]) == 1


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "sonarpipe", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for cmd in ("preprocess", "detect", "track-filter", "eval-model", "eval-eco", "synth", "run"):
        assert cmd in res.stdout
