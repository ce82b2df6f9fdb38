import csv
import json
import subprocess
import sys

import jsonschema
import numpy as np
import pytest

from crowdweight import harness
from crowdweight.cli import main
from crowdweight.dataset import MultiLabelDataset, read_csv, write_csv


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr().out.strip().splitlines()
    return code, (json.loads(out[-1]) if out else None)


@pytest.fixture
def small_csv(tmp_path, rng):
    X = rng.normal(size=(80, 3))
    y = np.where(X[:, 0] - X[:, 1] >= 0, 1, -1)
    A = np.tile(y[:, None], (1, 4))
    flip = rng.random((80, 4)) < np.array([0.0, 0.1, 0.2, 0.3])
    A = np.where(flip, -A, A)
    path = tmp_path / "small.csv"
    write_csv(MultiLabelDataset(X, A, y), path)
    return path


class TestSimulate:
    def test_gaussian(self, capsys, tmp_path):
        out = tmp_path / "sim.csv"
        code, summary = run(capsys, "simulate", "--gaussian", "--p", 1, "--seed", 7, "--out", out)
        assert code == 0
        ds = read_csv(out)
        assert ds.num_examples == 1000 and ds.num_annotators == 12
        assert summary["config"]["seed"] == 7

    def test_byte_identical(self, capsys, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        run(capsys, "simulate", "--gaussian", "--seed", 3, "--out", a)
        run(capsys, "simulate", "--gaussian", "--seed", 3, "--out", b)
        assert a.read_bytes() == b.read_bytes()

    def test_missing_source(self, capsys, tmp_path):
        assert main(["simulate", "--out", str(tmp_path / "x.csv")]) == 2

    def test_missing_file(self, capsys, tmp_path):
        assert main(["simulate", "--input", str(tmp_path / "nope.svm"), "--out", str(tmp_path / "x.csv")]) == 1

    def test_env_seed(self, capsys, tmp_path, monkeypatch):
        monkeypatch.setenv("CROWDWEIGHT_SEED", "11")
        _, summary = run(capsys, "simulate", "--gaussian", "--out", tmp_path / "e.csv")
        assert summary["config"]["seed"] == 11


class TestTrain:
    def test_noiseless_baseline(self, capsys, tmp_path, rng):
        X = rng.normal(size=(60, 3))
        X[:, 0] += np.sign(X[:, 0]) * 2.0
        y = np.where(X[:, 0] >= 0, 1, -1)
        path = tmp_path / "clean.csv"
        write_csv(MultiLabelDataset(X, np.tile(y[:, None], (1, 3)), y), path)
        model = tmp_path / "m.json"
        code, summary = run(capsys, "train", "--data", path, "--mode", "baseline", "--lambda", 0.01, "--out", model)
        assert code == 0 and summary["au_roc"] == pytest.approx(1.0)
        assert json.loads(model.read_text())["mode"] == "baseline"

    def test_alpha_zero_close_to_baseline(self, capsys, tmp_path, small_csv):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        run(capsys, "train", "--data", small_csv, "--mode", "interactive", "--alpha", 0, "--lambda", 0.5, "--out", a)
        run(capsys, "train", "--data", small_csv, "--mode", "baseline", "--lambda", 1.0, "--out", b)
        wa, wb = json.loads(a.read_text())["w"], json.loads(b.read_text())["w"]
        np.testing.assert_allclose(wa, wb, atol=1e-8)

    def test_bad_mode(self, capsys, small_csv):
        assert main(["train", "--data", str(small_csv), "--mode", "greedy"]) == 2

    def test_config_overlay(self, capsys, tmp_path, small_csv):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"mode": "baseline", "lambda": 0.25}))
        code, summary = run(capsys, "train", "--data", small_csv, "--config", cfg)
        assert code == 0 and summary["mode"] == "baseline" and summary["lambda"] == 0.25
        code, summary = run(capsys, "train", "--data", small_csv, "--config", cfg, "--lambda", 2.0)
        assert summary["lambda"] == 2.0

    def test_unknown_config_key(self, capsys, tmp_path, small_csv):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"colour": "red"}))
        assert main(["train", "--data", str(small_csv), "--config", str(cfg)]) == 2

    def test_tune(self, capsys, small_csv):
        code, summary = run(capsys, "train", "--data", small_csv, "--tune", "--lambda-grid", "0.5,8", "--folds", 3)
        assert code == 0 and summary["lambda"] in (0.5, 8.0)


class TestPerceptron:
    def test_separable_certificate(self, capsys, tmp_path, rng):
        X = rng.uniform(-1, 1, size=(100, 2))
        X = X[np.abs(X[:, 0]) > 0.1]
        y = np.where(X[:, 0] > 0, 1, -1)
        path = tmp_path / "sep.csv"
        write_csv(MultiLabelDataset(X, y[:, None], y), path)
        code, summary = run(capsys, "perceptron", "--data", path, "--certify")
        assert code == 0 and summary["separable"]
        cert = summary["certificates"][0]
        assert cert["epsilon"] <= cert["novikoff_bound"]

    def test_runs_rows(self, capsys, tmp_path, small_csv):
        out = tmp_path / "cert.csv"
        code, summary = run(capsys, "perceptron", "--data", small_csv, "--certify", "--runs", 100, "--out", out)
        assert code == 0
        rows = list(csv.reader(open(out)))
        assert len(rows) == 101 and rows[0][0] == "instance"

    def test_nonseparable_has_no_noisy_bound(self, capsys, tmp_path, small_csv):
        ds = read_csv(small_csv)
        A = ds.annotator_labels.copy()
        A[:10] *= -1
        path = tmp_path / "noisy.csv"
        write_csv(MultiLabelDataset(ds.features, A, None), path)
        code, summary = run(capsys, "perceptron", "--data", path, "--certify", "--order", "given")
        assert code == 0
        assert summary["certificates"][0]["noisy_bound"] is None

    def test_runs_zero(self, capsys, small_csv):
        assert main(["perceptron", "--data", str(small_csv), "--runs", "0"]) == 2


class TestMargin:
    def test_perfect_annotator_max(self, capsys, tmp_path, small_csv):
        out = tmp_path / "m.json"
        code, summary = run(capsys, "margin", "--data", small_csv, "--out", out)
        assert code == 0
        z = json.loads(out.read_text())["z"]
        assert np.argmax(z) == 0
        again = tmp_path / "m2.json"
        run(capsys, "margin", "--data", small_csv, "--out", again)
        assert out.read_bytes() == again.read_bytes()

    def test_margins_feed_perceptron(self, capsys, tmp_path, small_csv):
        out = tmp_path / "m.json"
        run(capsys, "margin", "--data", small_csv, "--out", out)
        code, summary = run(capsys, "perceptron", "--data", small_csv, "--margins", out)
        assert code == 0

    def test_empty_data(self, capsys, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("x1,y_true,a1\n")
        assert main(["margin", "--data", str(path), "--out", str(tmp_path / "o.json")]) == 1


class TestExperiment:
    def test_report(self, capsys, tmp_path):
        code, summary = run(capsys, "experiment", "--synthetic", "--replicates", 5, "--lambda-grid", "0.25,4",
                            "--folds", 3, "--out-dir", tmp_path)
        assert code == 0
        s = summary["settings"][0]["summary"]["au_roc"]
        assert s["n"] == 5 and s["p_value"] is not None
        jsonschema.validate(json.loads((tmp_path / "report.json").read_text()), harness.REPORT_SCHEMA)

    def test_zero_replicates(self, capsys, tmp_path):
        assert main(["experiment", "--replicates", "0", "--out-dir", str(tmp_path)]) == 2


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "crowdweight", "simulate", "--gaussian", "--out",
                           str(tmp_path / "s.csv")], capture_output=True, text=True)
    assert proc.returncode == 0
    lines = proc.stdout.strip().splitlines()
    assert len(lines) == 1 and json.loads(lines[0])["command"] == "simulate"
