import dataclasses
import io
import json

import numpy as np
import pandas as pd
import pytest
from scipy import stats

from stvanox.errors import ConfigError
from stvanox.obd.dataset import TARGET
from stvanox.obd.synthgen import RegimeSpec, SynthConfig, default_config, generate
from stvanox.obd.synthgen import write_labels_csv
from stvanox.physics import compute_features, derive_features
from stvanox.regression import PowerLawParams, build_samples, fit_power_law


def _residuals(config):
    """Observed NOx minus the regime law of the features delta steps earlier."""
    dataset, labels = generate(config)
    laws = {r.name: r.params for r in config.regimes}
    residuals = []
    for run in dataset:
        columns = {name: run.column(name) for name in run.attributes}
        t_adiab, t_comb, _, valid = derive_features(columns, config.generator_constants())
        n = len(run) - config.delta
        observed = run.column(TARGET)[config.delta :]
        for name, params in laws.items():
            mask = valid[:n] & (labels[run.run_id][:n] == name)
            expected = params.evaluate(t_adiab[:n][mask], t_comb[:n][mask])
            residuals.append(observed[mask] - expected)
    return np.concatenate(residuals)


def _regime_runs(labels):
    """Lengths of the interior regime segments, by regime."""
    lengths = {}
    for sequence in labels.values():
        change = np.flatnonzero(sequence[1:] != sequence[:-1]) + 1
        bounds = np.concatenate(([0], change, [sequence.size]))
        for start, end in zip(bounds[1:-2], bounds[2:-1]):
            lengths.setdefault(sequence[start], []).append(end - start)
    return lengths


def test_default_config():
    config = default_config()
    assert config.regime_names == ("idle", "low-speed", "high-load", "transient")
    assert config.runs == 16 and config.run_length == 1800
    assert config.physics_mismatch == 5.0
    assert "EngTq" in config.attributes
    assert config.generator_constants() == config.physics.perturbed(5.0)
    assert config.initial_regime == "idle" and config.warm_up == 30
    assert len({r.params for r in config.regimes}) == 4


def test_generate_shapes(small_synth):
    dataset, labels = generate(small_synth)
    assert dataset.run_ids == tuple(f"run-{i:02d}" for i in range(1, 7))
    assert [run.route_id for run in dataset] == [f"route-{i % 3 + 1}" for i in range(6)]
    assert dataset.extras == ("EGRkgph", "EngTq")
    for run in dataset:
        assert len(run) == 300
        assert np.all(np.diff(run.t) == 1.0)
        assert set(labels[run.run_id]) <= set(small_synth.regime_names)
        assert labels[run.run_id].size == 300


def test_generate_is_deterministic(small_synth):
    first, first_labels = generate(small_synth)
    second, second_labels = generate(small_synth)
    assert first.equals(second)
    for run_id in first.run_ids:
        np.testing.assert_array_equal(first_labels[run_id], second_labels[run_id])
    other, _ = generate(dataclasses.replace(small_synth, seed=small_synth.seed + 100))
    assert not other.equals(first)


def test_runs_have_their_own_seed(small_synth):
    more, _ = generate(dataclasses.replace(small_synth, runs=7))
    fewer, _ = generate(small_synth)
    assert more.run("run-03").equals(fewer.run("run-03"))


def test_noiseless_target_follows_the_regime_law(small_synth):
    config = dataclasses.replace(small_synth, noise_stddev=0.0, runs=2)
    residuals = _residuals(config)
    assert residuals.size > 400
    np.testing.assert_allclose(residuals, 0.0, atol=1e-9)


@pytest.mark.parametrize("seed", [1, 2, 3, 4, 5])
def test_noise_is_centred_gaussian(small_synth, seed):
    config = dataclasses.replace(small_synth, runs=4, run_length=500, seed=seed)
    residuals = _residuals(config)
    sd = config.noise_stddev
    assert abs(residuals.mean()) < 4 * sd / np.sqrt(residuals.size)
    assert residuals.std() == pytest.approx(sd, rel=0.1)


def _transition_counts(labels, names, jumps_only=False):
    counts = np.zeros((len(names), len(names)), dtype=int)
    for sequence in labels.values():
        index = np.array([names.index(name) for name in sequence])
        source, target = index[:-1], index[1:]
        if jumps_only:
            moved = source != target
            source, target = source[moved], target[moved]
        np.add.at(counts, (source, target), 1)
    return counts


def _matrix_pvalue(counts, matrix):
    """Combined chi-square p-value of the rows of `counts` against `matrix`."""
    statistic, dof = 0.0, 0
    for row, probs in zip(counts, np.asarray(matrix)):
        assert row[probs == 0].sum() == 0
        allowed = probs > 0
        statistic += stats.chisquare(row[allowed], row.sum() * probs[allowed]).statistic
        dof += int(allowed.sum()) - 1
    return stats.chi2.sf(statistic, dof)


def test_transitions_follow_the_matrix(small_synth):
    regimes = [dataclasses.replace(r, mean_dwell=1.0) for r in small_synth.regimes]
    config = dataclasses.replace(
        small_synth, regimes=regimes, runs=4, run_length=5000, initial_regime=None, warm_up=0
    )
    _, labels = generate(config)
    counts = _transition_counts(labels, list(config.regime_names))
    assert counts.sum() == 4 * 4999
    assert _matrix_pvalue(counts, config.transition) > 0.01


def test_dwells_hide_the_matrix_from_step_counts():
    config = default_config()
    _, labels = generate(config)
    names = list(config.regime_names)
    # regime changes are the jumps of the matrix, the steps in between are dwell
    jumps = _transition_counts(labels, names, jumps_only=True)
    assert _matrix_pvalue(jumps, config.transition) > 0.01
    steps = _transition_counts(labels, names)
    idle = names.index("idle")
    assert config.transition[idle][idle] == 0
    assert steps[idle, idle] / steps[idle].sum() > 0.9


def test_runs_start_in_the_initial_regime():
    config = dataclasses.replace(default_config(), runs=5, run_length=200)
    _, labels = generate(config)
    for sequence in labels.values():
        assert set(sequence[: config.warm_up + 1 - config.delta]) == {"idle"}
    other = dataclasses.replace(config, initial_regime="transient", warm_up=50)
    _, labels = generate(other)
    for sequence in labels.values():
        assert set(sequence[:50]) == {"transient"}


def test_mean_dwell():
    _, labels = generate(default_config())
    lengths = {name: np.mean(values) for name, values in _regime_runs(labels).items()}
    for regime in default_config().regimes:
        assert regime.mean_dwell / 2 < lengths[regime.name] < regime.mean_dwell * 2
    assert lengths["idle"] > lengths["low-speed"] > lengths["high-load"] > lengths["transient"]


def test_config_dict_round_trip(small_synth, tmp_path):
    assert SynthConfig.from_dict(small_synth.to_dict()) == small_synth
    path = tmp_path / "synth.json"
    path.write_text(json.dumps(small_synth.to_dict()), encoding="utf-8")
    assert SynthConfig.from_file(path) == small_synth


def _regime(name="r", delta=1, **means):
    attributes = {
        "intake_air_flow": 600.0,
        "fuel_rate": 20.0,
        "rail_pressure": 1e8,
        "intake_pressure": 1.5e5,
        "intake_temp": 310.0,
        "engine_speed": 1200.0,
    }
    attributes.update(means)
    return RegimeSpec(name, PowerLawParams(1e-3, 2.0, 0.8, delta), attributes, {})


def test_config_validation():
    with pytest.raises(ConfigError):
        SynthConfig([], [])
    with pytest.raises(ConfigError):
        SynthConfig([_regime()], [[0.5]])
    with pytest.raises(ConfigError):
        SynthConfig([_regime(), _regime("s")], [[0.5, 0.5], [1.5, -0.5]])
    with pytest.raises(ConfigError):
        SynthConfig([_regime(), _regime("s", EngTq=5.0)], [[0, 1], [1, 0]])
    with pytest.raises(ConfigError):
        SynthConfig([_regime(**{TARGET: 1.0})], [[1.0]])
    with pytest.raises(ConfigError):
        SynthConfig([_regime(delta=2)], [[1.0]])
    with pytest.raises(ConfigError):
        SynthConfig([_regime()], [[1.0]], noise_stddev=-1.0)
    with pytest.raises(ConfigError):
        SynthConfig([_regime()], [[1.0]], warm_up=-1)
    with pytest.raises(ConfigError):
        SynthConfig([_regime()], [[1.0]], initial_regime="s")
    incomplete = _regime()
    del incomplete.attribute_means["fuel_rate"]
    with pytest.raises(ConfigError):
        SynthConfig([incomplete], [[1.0]])
    with pytest.raises(ConfigError):
        RegimeSpec("r", PowerLawParams(1e-3, 2.0, 0.8), {"x": 1.0}, {"y": 1.0})
    with pytest.raises(ConfigError):
        RegimeSpec("r", PowerLawParams(1e-3, 2.0, 0.8), {"x": 1.0}, {}, mean_dwell=0.5)
    with pytest.raises(ConfigError):
        SynthConfig.from_dict({"regimes": [], "transition": [], "speed": 1})
    with pytest.raises(ConfigError):
        SynthConfig.from_dict({"transition": []})


def test_constant_attributes_without_spread():
    config = SynthConfig([_regime()], [[1.0]], runs=1, run_length=20)
    dataset, labels = generate(config)
    run = dataset.run("run-01")
    assert np.all(run.column("engine_speed") == 1200.0)
    assert set(labels["run-01"]) == {"r"}


def test_write_labels_csv(small_synth):
    config = dataclasses.replace(small_synth, runs=2, run_length=10)
    dataset, labels = generate(config)
    sink = io.StringIO()
    write_labels_csv(dataset, labels, sink)
    table = pd.read_csv(io.StringIO(sink.getvalue()))
    assert list(table.columns) == ["t_s", "run_id", "regime"]
    assert len(table) == 20
    assert table["regime"].tolist()[:10] == labels["run-01"].tolist()


def _closed_loop(regimes, transition, **overrides):
    config = dataclasses.replace(
        default_config(),
        regimes=regimes,
        transition=transition,
        runs=3,
        run_length=400,
        noise_stddev=0.0,
        physics_mismatch=0.0,
        initial_regime=None,
        warm_up=0,
        **overrides,
    )
    dataset, labels = generate(config)
    features = compute_features(dataset, config.physics)
    samples = build_samples(features, dataset.series(TARGET), config.delta)
    return config, samples, samples.lookup(labels)


def test_one_regime_law_is_recovered():
    idle = default_config().regimes[0]
    config, samples, _ = _closed_loop([idle], [[1.0]])
    report = fit_power_law(samples)
    assert report.params.a == pytest.approx(idle.params.a, rel=1e-6)
    assert report.params.b == pytest.approx(idle.params.b, rel=1e-6)
    assert report.params.c == pytest.approx(idle.params.c, rel=1e-6)
    assert report.params.delta == config.delta


def test_two_regime_laws_are_recovered_per_label():
    regimes = default_config().regimes
    pair = [regimes[0], regimes[2]]
    _, samples, labels = _closed_loop(pair, [[0.0, 1.0], [1.0, 0.0]])
    for regime in pair:
        report = fit_power_law(samples.select(labels == regime.name))
        assert report.params.a == pytest.approx(regime.params.a, rel=1e-3)
        assert report.params.b == pytest.approx(regime.params.b, rel=1e-3)
        assert report.params.c == pytest.approx(regime.params.c, rel=1e-3)
    pooled = fit_power_law(samples)
    assert pooled.rmse > 1.0
