from __future__ import annotations

import hashlib
import json
import subprocess
import sys

import pytest

from mfcrate.cli import main


def run(*args):
    return subprocess.run([sys.executable, "-m", "mfcrate", *map(str, args)], capture_output=True, text=True)


def test_check_model_succeeds(tmp_path):
    assert main(["check-model", "quadratic-drift", "--seed", "42", "--out", str(tmp_path)]) == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["schema"] == 1 and summary["passed"] and summary["seed"] == 42


def test_usage_errors(tmp_path):
    assert run("check-model", "--out", tmp_path).returncode == 2
    assert run("check-model", "no-such-model", "--seed", 1, "--out", tmp_path).returncode == 2
    assert run("check-model", "--seed", -1, "--out", tmp_path).returncode == 2
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"no_such_key": 1}))
    assert run("rate", "--seed", 1, "--config", bad, "--out", tmp_path / "r").returncode == 2
    assert run("concentration", "quadratic-mean", "--seed", 1, "--out", tmp_path / "c").returncode == 2


@pytest.fixture(scope="module")
def rate_runs(tmp_path_factory):
    root = tmp_path_factory.mktemp("runs")
    conf = root / "rate.json"
    conf.write_text(json.dumps({"n_list": [2, 3, 4]}))
    codes = [main(["rate", "--seed", "5", "--config", str(conf), "--out", str(root / name)]) for name in ("a", "b")]
    return root, conf, codes


def test_rate_artifacts(rate_runs):
    root, conf, codes = rate_runs
    out = root / "a"
    assert codes[0] in (0, 1)
    summary = json.loads((out / "summary.json").read_text())
    assert summary["schema"] == 1 and summary["experiment"] == "rate"
    assert summary["config"]["n_list"] == [2, 3, 4]
    assert (out / "results.csv").read_text().splitlines()[0]
    manifest = (out / "MANIFEST").read_text().splitlines()
    entries = {line.split()[-1]: line.split()[1] for line in manifest}
    assert entries[str(conf)] == hashlib.sha256(conf.read_bytes()).hexdigest()
    for name in ("results.csv", "summary.json", "timing.json"):
        assert entries[name] == hashlib.sha256((out / name).read_bytes()).hexdigest()


def test_reruns_are_byte_identical(rate_runs):
    root, _, _ = rate_runs
    for name in ("results.csv", "summary.json"):
        assert (root / "a" / name).read_bytes() == (root / "b" / name).read_bytes()


def test_report_is_idempotent(rate_runs):
    root, _, _ = rate_runs
    assert main(["report", str(root)]) == 0
    first = (root / "report.md").read_bytes(), (root / "report.csv").read_bytes()
    assert main(["report", str(root)]) == 0
    assert ((root / "report.md").read_bytes(), (root / "report.csv").read_bytes()) == first
    lines = (root / "report.csv").read_text().splitlines()
    assert lines[0] == "run,experiment,rate,ci,checks" and len(lines) == 3


def test_report_single_run(tmp_path):
    assert main(["partition-demo", "--seed", "3", "--out", str(tmp_path / "p")]) in (0, 1)
    assert main(["report", str(tmp_path / "p")]) == 0
    assert len((tmp_path / "p" / "report.csv").read_text().splitlines()) == 2
    assert main(["report", str(tmp_path / "empty_dir_that_does_not_exist")]) == 2
