import json

import pytest

from nnopf.cli import main


def run(*argv):
    return main([str(a) for a in argv])


def outputs(path):
    return json.loads((path / "manifest.json").read_text())["outputs"]


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    b, d, m = root / "bundle", root / "data", root / "model"
    assert run("make-bundle", "--out", b, "--buses", 6, "--steps", 4, "--samples", 300, "--seed", 3) == 0
    assert run("gen-data", "--bundle", b, "--out", d) == 0
    assert run("train", "--data", d, "--hidden", 4, "--epochs", 30, "--out", m) == 0
    return root


def test_pipeline_writes_checked_outputs(pipeline):
    b, d, m = pipeline / "bundle", pipeline / "data", pipeline / "model"
    s, v = pipeline / "solve", pipeline / "validate"
    assert run("solve", "--bundle", b, "--surrogate", m / "surrogate.json", "--out", s, "--oracle") == 0
    assert run("validate", "--bundle", b, "--solution", s / "solution.json", "--out", v) == 0
    assert run("check", b / "prices.csv", d / "inputs.csv", d / "targets.csv",
               s / "validation.csv", s / "min_voltage.csv", v / "validation.csv") == 0
    summary = json.loads((s / "summary.json").read_text())
    assert summary["oracle agrees"]
    metrics = json.loads((m / "metrics.json").read_text())
    assert set(metrics["test"]) == {"full", "min_voltage"}
    assert set(outputs(s)) == {"solution.json", "validation.csv", "min_voltage.csv", "summary.json"}


def test_baseline_and_sweep(pipeline):
    b, d = pipeline / "bundle", pipeline / "data"
    assert run("solve", "--bundle", b, "--baseline", "lindistflow", "--out", pipeline / "lin") == 0
    assert run("sweep", "--bundle", b, "--data", d, "--hidden", "2,3", "--epochs", 5,
               "--out", pipeline / "sweep") == 0
    lines = (pipeline / "sweep" / "sweep.csv").read_text().splitlines()
    assert len(lines) == 3
    assert run("check", pipeline / "sweep" / "sweep.csv") == 0


def test_same_seed_gives_identical_digests(pipeline, tmp_path):
    b, d, m = tmp_path / "bundle", tmp_path / "data", tmp_path / "model"
    assert run("make-bundle", "--out", b, "--buses", 6, "--steps", 4, "--samples", 300, "--seed", 3) == 0
    assert run("gen-data", "--bundle", b, "--out", d) == 0
    assert run("train", "--data", d, "--hidden", 4, "--epochs", 30, "--out", m) == 0
    for name in ("bundle", "data", "model"):
        assert outputs(tmp_path / name) == outputs(pipeline / name)


def test_exit_codes(pipeline, tmp_path):
    b, d, m = pipeline / "bundle", pipeline / "data", pipeline / "model"
    assert run("train", "--data", d, "--hidden", 0, "--out", tmp_path) == 2
    assert run("sweep", "--bundle", b, "--data", d, "--hidden", ",", "--out", tmp_path) == 2
    assert run("gen-data", "--bundle", tmp_path / "missing", "--out", tmp_path) == 2
    assert run("solve", "--bundle", b, "--surrogate", m / "surrogate.json", "--model", 2,
               "--out", tmp_path) == 2
    bad = tmp_path / "validation.csv"
    bad.write_text("step,bus\n0,1\n")
    assert run("check", bad) == 3
    assert run("solve") == 2
