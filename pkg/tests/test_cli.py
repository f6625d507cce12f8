import csv
import json

import numpy as np
import pytest

from stablenn.cli import ConfigError, main, parse_config_text, parse_grid, resolve_config


def read_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture
def sim(tmp_path):
    out = tmp_path / "sim"
    assert main(["simulate", "--function", "three_jump", "--sigma", "0.5", "--seed", "7",
                 "-o", str(out)]) == 0
    return out


def test_simulate_writes_design(sim):
    train, test = read_rows(sim / "train.csv"), read_rows(sim / "test.csv")
    assert len(train) == 40 and len(test) == 100
    assert list(train[0]) == ["x1", "y"]
    meta = json.loads((sim / "meta.json").read_text())
    assert meta["config"]["data.seed"] == 7
    assert meta["version"].startswith("0.1.0")


def test_fit_outputs_and_determinism(sim, tmp_path):
    def run(out):
        args = ["fit", "--alpha", "1.1", "--nu", "1", "--train", str(sim / "train.csv"),
                "--test", str(sim / "test.csv"), "-T", "600", "--burn-in", "200",
                "--n-samples", "50000", "--trace", "-o", str(out)]
        assert main(args) == 0

    a, b = tmp_path / "a", tmp_path / "b"
    run(a)
    run(b)
    rows = read_rows(a / "predictions.csv")
    assert list(rows[0]) == ["x1", "mean", "q05", "q50", "q95"]
    assert len(rows) == 100
    assert (a / "predictions.csv").read_bytes() == (b / "predictions.csv").read_bytes()
    metrics = json.loads((a / "metrics.json").read_text())
    assert 0 < metrics["mae"] < 5
    assert 0 < metrics["scale_accept_rate"] <= 1
    trace = [json.loads(line) for line in (a / "trace.jsonl").read_text().splitlines()]
    assert len(trace) == 600
    assert {"iteration", "log_lik", "sigma2"} <= set(trace[0])
    meta = json.loads((a / "meta.json").read_text())
    assert meta["command"] == "fit"
    assert meta["config"]["model.alpha"] == 1.1
    assert meta["config"]["chain.T"] == 600


def test_fit_from_generator_reports_truth_error(tmp_path):
    assert main(["fit", "--function", "one_jump", "-T", "400", "--burn-in", "100",
                 "--n-samples", "20000", "-o", str(tmp_path)]) == 0
    metrics = json.loads((tmp_path / "metrics.json").read_text())
    assert "mae_truth" in metrics and "mae" in metrics


def test_cv_table(sim, tmp_path):
    assert main(["cv", "--train", str(sim / "train.csv"), "--grid", "0.9:1,1.7:1",
                 "--splits", "2", "-T", "300", "--burn-in", "100", "--n-samples", "20000",
                 "-o", str(tmp_path)]) == 0
    rows = read_rows(tmp_path / "cv_table.csv")
    assert len(rows) == 2
    assert list(rows[0]) == ["alpha", "nu", "mean_mae", "se_mae", "split1", "split2"]
    metrics = json.loads((tmp_path / "metrics.json").read_text())
    assert (metrics["best_alpha"], metrics["best_nu"]) in [(0.9, 1.0), (1.7, 1.0)]


def test_unknown_key_rejected(tmp_path, capsys):
    code = main(["fit", "--set", "chain.tt=5", "-o", str(tmp_path)])
    assert code == 2
    record = json.loads((tmp_path / "error.json").read_text())
    assert record["error"] == "ConfigError"
    assert "chain.tt" in record["message"]
    assert json.loads(capsys.readouterr().err.strip().splitlines()[-1]) == record


def test_config_file_sections_and_flag_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# comment\n[data]\nfunction = two_jump\nsigma = 0.3\n"
                   "[chain]\nT = 300\nburn_in = 100\nn_samples = 20000\n", encoding="utf-8")
    out = tmp_path / "out"
    assert main(["fit", "--config", str(cfg), "--sigma", "0.2", "-o", str(out)]) == 0
    meta = json.loads((out / "meta.json").read_text())
    assert meta["config"]["data.function"] == "two_jump"
    assert meta["config"]["data.sigma"] == 0.2
    assert meta["config"]["chain.T"] == 300


def test_two_data_sources_rejected(sim, tmp_path):
    code = main(["fit", "--function", "one_jump", "--train", str(sim / "train.csv"),
                 "--test", str(sim / "test.csv"), "-o", str(tmp_path)])
    assert code == 2


def test_missing_file_is_error(tmp_path):
    code = main(["fit", "--train", str(tmp_path / "nope.csv"), "--test", "x.csv",
                 "-o", str(tmp_path)])
    assert code == 1
    assert (tmp_path / "error.json").exists()


def test_partitions_counts(tmp_path, capsys):
    pts = tmp_path / "pts.csv"
    pts.write_text("x1\n" + "\n".join(str(v) for v in np.linspace(-2, 2, 6)) + "\n")
    assert main(["partitions", "--input", str(pts), "--probs", "-o", str(tmp_path)]) == 0
    rows = read_rows(tmp_path / "partitions.csv")
    assert len(rows) == 6
    assert abs(sum(float(r["prob"]) for r in rows) - 1.0) < 1e-12
    assert "patterns=6" in capsys.readouterr().out


def test_gp_baseline(sim, tmp_path):
    assert main(["gp-baseline", "--train", str(sim / "train.csv"), "--test",
                 str(sim / "test.csv"), "-o", str(tmp_path)]) == 0
    rows = read_rows(tmp_path / "predictions.csv")
    assert list(rows[0]) == ["x1", "mean", "var", "q05", "q50", "q95"]
    assert all(float(r["q05"]) <= float(r["q95"]) for r in rows)


def test_stable_check_passes(tmp_path, capsys):
    assert main(["stable-check", "-o", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and out.count("PASS") == 19


def test_oracle_check_passes(tmp_path, capsys):
    assert main(["oracle-check", "-o", str(tmp_path)]) == 0
    assert "FAIL" not in capsys.readouterr().out


def test_parse_helpers():
    assert parse_config_text("[model]\nalpha=1.3\nchain.T = 10\n") == {
        "model.alpha": "1.3", "chain.T": "10"}
    assert parse_grid("0.5:1,1.9:2") == [(0.5, 1.0), (1.9, 2.0)]
    assert len(parse_grid("default")) == 24
    with pytest.raises(ConfigError):
        parse_grid("1.1")
    with pytest.raises(ConfigError):
        resolve_config({"bogus": "1"}, {})
    with pytest.raises(ConfigError):
        resolve_config({"chain.T": "many"}, {})
