import json

import pytest

from pulsedistill.cli import OUT_DIR_ENV, main
from pulsedistill.dataio import read_hr


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    d = tmp_path_factory.mktemp("pipe")
    assert run("synth", "--hr", 1.5, "--seconds", 30, "--fps", 30, "--size", 16, "--noise-sd", 0.002,
               "--out", d / "video") == 0
    assert run("preprocess", "--frames", d / "video/frames.pdt", "--ppg", d / "video/ppg.csv",
               "--out", d / "sample") == 0
    assert run("infer", "--baseline", "pos", "--frames", d / "video/frames.pdt", "--out", d / "pos.csv") == 0
    assert run("estimate-hr", "--signal", d / "pos.csv", "--out", d / "pred_hr.csv") == 0
    assert run("estimate-hr", "--signal", d / "video/ppg.csv", "--out", d / "true_hr.csv") == 0
    assert run("evaluate", "--pred", d / "pred_hr.csv", "--truth", d / "true_hr.csv", "--out", d / "report") == 0
    return d


def report_values(path):
    lines = path.read_text().splitlines()
    return dict(zip(lines[0].split(","), (float(v) for v in lines[1].split(","))))


def test_pipeline_within_one_bin(pipeline):
    hr, _ = read_hr(pipeline / "true_hr.csv")
    rep = report_values(pipeline / "report/report.csv")
    assert rep["mae"] <= hr.resolution_bpm
    for name in ("report.txt", "bland_altman.csv", "correlation.csv", "manifest.json"):
        assert (pipeline / "report" / name).exists()


def test_manifest_contents(pipeline):
    m = json.loads((pipeline / "video/manifest.json").read_text())
    assert m["command"] == "synth" and m["seed"] == 0
    assert {"numpy", "scipy", "python", "pulsedistill"} <= set(m["versions"])
    inf = json.loads((pipeline / "pos.csv.manifest.json").read_text())
    assert any(k.endswith("frames.pdt") for k in inf["inputs"])


def test_evaluate_identical_files(pipeline, tmp_path):
    assert run("evaluate", "--pred", pipeline / "true_hr.csv", "--truth", pipeline / "true_hr.csv",
               "--out", tmp_path / "same") == 0
    rep = report_values(tmp_path / "same/report.csv")
    assert rep["mae"] == 0 and rep["rmse"] == 0 and rep["nmse"] == 0


def test_oracle_check(capsys):
    assert run("oracle-check", "--k", 4, "--trials", 10) == 0
    assert "PASS" in capsys.readouterr().out


def test_bad_input_exits_nonzero_and_cleans_up(tmp_path, capsys):
    bad = tmp_path / "broken.pdt"
    bad.write_bytes(b"PDTENSOR" + b"\x00" * 5)
    out = tmp_path / "nested/sample"
    assert run("preprocess", "--frames", bad, "--out", out) == 1
    err = capsys.readouterr().err
    assert err.startswith("error [pulsedistill.dataio.formats]")
    assert not (tmp_path / "nested").exists()


def test_missing_file(tmp_path, capsys):
    assert run("estimate-hr", "--signal", tmp_path / "nope.csv", "--out", tmp_path / "hr.csv") == 1
    assert "FileNotFoundError" in capsys.readouterr().err
    assert not (tmp_path / "hr.csv").exists()


def test_usage_error_exit_code():
    assert run("synth") == 2


def test_out_dir_override(tmp_path, monkeypatch):
    monkeypatch.setenv(OUT_DIR_ENV, str(tmp_path))
    assert run("synth", "--seconds", 2, "--fps", 10, "--size", 8, "--out", "rel") == 0
    assert (tmp_path / "rel/frames.pdt").exists()


def test_replay_reproduces_outputs(tmp_path):
    assert run("synth", "--seconds", 2, "--fps", 10, "--size", 8, "--noise-sd", 0.01, "--seed", 4,
               "--out", tmp_path / "v") == 0
    first = (tmp_path / "v/frames.pdt").read_bytes(), (tmp_path / "v/ppg.csv").read_bytes()
    (tmp_path / "v/frames.pdt").unlink()
    assert run("replay", tmp_path / "v/manifest.json") == 0
    assert ((tmp_path / "v/frames.pdt").read_bytes(), (tmp_path / "v/ppg.csv").read_bytes()) == first


def test_train_and_distill_commands(pipeline, tmp_path):
    # 30 s at 30 fps gives 899 differences, so train at that length with a tiny budget
    common = ["--data", pipeline / "sample", "--epochs", 1, "--batch", 1]
    assert run("train-teacher", *common, "--out", tmp_path / "t.pdc") == 0
    assert run("distill", *common, "--teacher", tmp_path / "t.pdc", "--out", tmp_path / "s.pdc") == 0
    assert run("infer", "--model", tmp_path / "s.pdc", "--data", pipeline / "sample", "--out", tmp_path / "p.csv") == 0
    assert (tmp_path / "s.pdc.curves.csv").read_text().startswith("epoch,train_loss")
