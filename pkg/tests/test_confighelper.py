import io
import json

import pytest

from stvanox.confighelper import ExperimentConfig
from stvanox.divergence import DivergenceConfig
from stvanox.errors import ConfigError
from stvanox.obd.synthgen import default_config


def test_defaults():
    config = ExperimentConfig()
    assert config.data is None and config.is_synthetic
    assert config.n_patterns == 4
    assert config.delta == 1
    assert config.divergence_config() == DivergenceConfig()
    assert config.synth_config() == default_config()
    assert "miner" in config and len(config) == len(ExperimentConfig.DEFAULTS)


def test_shipped_default():
    config = ExperimentConfig.default()
    assert config.divergence_config() == DivergenceConfig(3.0, 30.0)
    assert config.miner_config().min_supp == 0.003
    assert config.lm_options().max_iterations == 200


def test_unknown_setting():
    with pytest.raises(ConfigError):
        ExperimentConfig(speed=1)
    config = ExperimentConfig()
    with pytest.raises(ConfigError):
        config.speed = 1
    with pytest.raises(ConfigError):
        config["speed"] = 1


@pytest.mark.parametrize(
    "settings",
    [
        {"physics": {"gamma": 1.0}},
        {"lop": {"amplitude": -1.0}},
        {"lm": {"max_iterations": 0}},
        {"divergence": {"window_len_s": 0.2}},
        {"divergence": {"width": 3}},
        {"miner": {"min_supp": 2.0}},
        {"data": 5},
        {"data": {"regimes": []}},
        {"n_patterns": -1},
        {"n_patterns": 1.5},
        {"delta": -1},
        {"delta_candidates": []},
        {"delta_candidates": [0, -1]},
        {"min_partition_samples": 0},
        {"sample_period": 0.0},
        {"workers": 0},
    ],
)
def test_validation(settings):
    with pytest.raises(ConfigError):
        ExperimentConfig(**settings)


def test_lock_copy_and_or():
    config = ExperimentConfig(n_patterns=2)
    config.lock("n_patterns")
    with pytest.raises(ConfigError):
        config.n_patterns = 3
    duply = config.copy()
    assert duply == config
    with pytest.raises(ConfigError):
        duply.n_patterns = 3
    duply.split_seed = 9
    assert config.split_seed == 0
    merged = ExperimentConfig() | {"split_seed": 4, "delta": 2}
    assert merged.split_seed == 4 and merged.delta == 2
    assert merged == {**ExperimentConfig().as_dict(), "split_seed": 4, "delta": 2}


def test_nested_settings_are_copied():
    config = ExperimentConfig(divergence={"summation_threshold": 10.0})
    other = config.copy()
    other.divergence["summation_threshold"] = 50.0
    assert config.divergence_config().summation_threshold == 10.0


@pytest.mark.parametrize(
    "axis, value, check",
    [
        ("n_patterns", 3.0, lambda c: c.n_patterns == 3),
        ("summation_threshold", 45, lambda c: c.divergence_config().summation_threshold == 45),
        ("window_len", 5, lambda c: c.divergence_config().window_len_s == 5.0),
    ],
)
def test_with_axis(axis, value, check):
    config = ExperimentConfig(divergence={"summation_threshold": 30.0})
    swept = config.with_axis(axis, value)
    assert check(swept)
    assert config.n_patterns == 4
    assert config.divergence == {"summation_threshold": 30.0}


def test_with_axis_errors():
    config = ExperimentConfig()
    with pytest.raises(ConfigError):
        config.with_axis("epsilon", 1.0)
    with pytest.raises(ConfigError):
        config.with_axis("window_len", 0.1)


def test_with_seed(tmp_path):
    config = ExperimentConfig().with_seed(11)
    assert config.split_seed == 11
    assert config.synth_config().seed == 11
    csv = tmp_path / "obd.csv"
    csv.write_text("")
    on_file = ExperimentConfig(data=str(csv)).with_seed(3)
    assert on_file.split_seed == 3 and on_file.data == str(csv)


def test_from_file_relative_data(tmp_path):
    (tmp_path / "data").mkdir()
    csv = tmp_path / "data" / "obd.csv"
    csv.write_text("")
    path = tmp_path / "experiment.json"
    path.write_text(json.dumps({"data": "data/obd.csv", "n_patterns": 2}), encoding="utf-8")
    config = ExperimentConfig.from_file(path)
    assert config.data == str(csv)
    assert not config.is_synthetic
    assert config.n_patterns == 2


@pytest.mark.parametrize(
    "content",
    ['{"data": "missing.csv"}', "{not json", "[1, 2]", '{"speed": 1}'],
)
def test_from_file_errors(tmp_path, content):
    path = tmp_path / "experiment.json"
    path.write_text(content, encoding="utf-8")
    with pytest.raises(ConfigError):
        ExperimentConfig.from_file(path)


def test_from_file_missing(tmp_path):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_file(tmp_path / "experiment.json")


def test_dump_round_trip(tmp_path, small_config):
    sink = io.StringIO()
    small_config.dump(sink)
    path = tmp_path / "experiment.json"
    path.write_text(sink.getvalue(), encoding="utf-8")
    assert ExperimentConfig.from_file(path) == small_config
