import json

import pandas as pd
import pytest

from stvanox.cli import EXIT_CONFIG, EXIT_OK, EXIT_PIPELINE, build_parser, main


@pytest.fixture
def config_file(tmp_path, small_config):
    path = tmp_path / "experiment.json"
    path.write_text(json.dumps(small_config.as_dict()), encoding="utf-8")
    return path


def _run(config_file, out, *args):
    return main(["--config", str(config_file), "--out", str(out), *args])


def test_synth(config_file, tmp_path, small_synth):
    out = tmp_path / "synth"
    assert _run(config_file, out, "synth") == EXIT_OK
    table = pd.read_csv(out / "obd.csv")
    assert len(table) == small_synth.runs * small_synth.run_length
    assert {"EngTq", "EGRkgph", "nox_ppm"} <= set(table.columns)
    labels = pd.read_csv(out / "labels.csv")
    assert len(labels) == len(table)
    saved = json.loads((out / "synth_config.json").read_text())
    assert saved == small_synth.to_dict()


def test_ingest(config_file, tmp_path):
    out = tmp_path / "out"
    assert _run(config_file, out, "synth") == EXIT_OK
    assert _run(config_file, out, "ingest", "--csv", str(out / "obd.csv")) == EXIT_OK
    report = json.loads((out / "ingest.json").read_text())
    assert report["rows_dropped"] == 0
    features = pd.read_csv(out / "features.csv")
    assert len(features) == len(pd.read_csv(out / "dataset.csv"))


def test_ingest_needs_a_csv(config_file, tmp_path, capsys):
    assert _run(config_file, tmp_path, "ingest") == EXIT_CONFIG
    assert "needs a CSV" in capsys.readouterr().err


def test_evaluate_is_reproducible(config_file, tmp_path, capsys):
    first, second = tmp_path / "first", tmp_path / "second"
    assert _run(config_file, first, "evaluate") == EXIT_OK
    stdout = capsys.readouterr().out
    assert "NOx predictive accuracy for training data" in stdout
    assert "P-STVA vs P-Base" in stdout
    assert _run(config_file, second, "evaluate") == EXIT_OK
    for name in ("report.json", "metrics.csv", "patterns.json", "model.json"):
        assert (first / name).read_bytes() == (second / name).read_bytes()
    assert (first / "timings.json").is_file()


def test_seed_changes_the_data(config_file, tmp_path):
    for name, seed in (("a", "1"), ("b", "1"), ("c", "2")):
        assert _run(config_file, tmp_path / name, "--seed", seed, "synth") == EXIT_OK
    data = {name: (tmp_path / name / "obd.csv").read_bytes() for name in "abc"}
    assert data["a"] == data["b"]
    assert data["a"] != data["c"]
    assert json.loads((tmp_path / "c" / "synth_config.json").read_text())["seed"] == 2


def test_fit_base_mine_and_fit_pstva(config_file, tmp_path, capsys):
    out = tmp_path / "out"
    assert _run(config_file, out, "fit-base") == EXIT_OK
    base = json.loads((out / "base.json").read_text())
    assert base["delta"] == 1 and {"fit", "lop", "delta_scores"} <= set(base)
    assert (out / "predictions_base_train.csv").is_file()
    assert (out / "predictions_base_test.csv").is_file()

    assert _run(config_file, out, "mine") == EXIT_OK
    assert "pattern" in capsys.readouterr().out
    windows = pd.read_csv(out / "windows.csv")
    assert list(windows.columns) == ["run_id", "start_t_s", "end_t_s", "error_sum_ppm"]
    patterns = json.loads((out / "patterns.json").read_text())
    assert len(patterns) <= 2

    assert _run(config_file, out, "fit-pstva") == EXIT_OK
    model = json.loads((out / "model.json").read_text())
    assert len(model["partition_params"]) == len(model["patterns"]) + 1


def test_sweep(config_file, tmp_path, capsys):
    out = tmp_path / "out"
    args = ("sweep", "--axis", "n_patterns", "--values", "0,1,2")
    assert _run(config_file, out, *args) == EXIT_OK
    table = pd.read_csv(out / "sweep_n_patterns.csv")
    assert sorted(set(table["value"])) == [0.0, 1.0, 2.0]
    assert len(table) == 18
    assert "lowest training RMSE" in capsys.readouterr().out


def test_scatter(config_file, tmp_path):
    out = tmp_path / "out"
    assert _run(config_file, out, "scatter") == EXIT_OK
    for method in ("lop", "p_base", "p_stva"):
        for split in ("train", "test"):
            assert (out / f"scatter_{method}_{split}.csv").is_file()
            summary = json.loads((out / f"scatter_{method}_{split}.json").read_text())
            assert summary["n"] > 0


def test_bad_config(tmp_path, capsys):
    path = tmp_path / "experiment.json"
    path.write_text('{"speed": 1}', encoding="utf-8")
    assert _run(path, tmp_path, "evaluate") == EXIT_CONFIG
    assert "unknown setting" in capsys.readouterr().err
    assert _run(tmp_path / "missing.json", tmp_path, "evaluate") == EXIT_CONFIG


def test_bad_csv(tmp_path, capsys):
    (tmp_path / "obd.csv").write_text("run_id,t_s\nr1,0\n", encoding="utf-8")
    path = tmp_path / "experiment.json"
    path.write_text('{"data": "obd.csv"}', encoding="utf-8")
    assert _run(path, tmp_path / "out", "evaluate") == EXIT_PIPELINE
    assert "stage 'ingest' failed" in capsys.readouterr().err


def test_parser():
    parser = build_parser()
    args = parser.parse_args(["sweep", "--axis", "window_len", "--values", "1, 3,5"])
    assert args.values == [1.0, 3.0, 5.0]
    assert args.log_level == "WARNING"
    with pytest.raises(SystemExit):
        parser.parse_args(["sweep", "--axis", "epsilon", "--values", "1"])
    with pytest.raises(SystemExit):
        parser.parse_args(["sweep", "--axis", "n_patterns", "--values", "a,b"])


def test_unknown_command():
    with pytest.raises(SystemExit):
        main(["plot"])
