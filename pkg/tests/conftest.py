import dataclasses

import numpy as np
import pytest

from stvanox.confighelper import ExperimentConfig
from stvanox.obd.dataset import PHYSICS_ATTRIBUTES, TARGET, ObdDataset, ObdRun
from stvanox.obd.synthgen import default_config
from stvanox.physics import FeatureSeries, RunFeatures
from stvanox.regression import PowerLawParams, predict


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def _columns(rng, n):
    return {
        "intake_air_flow": rng.uniform(500.0, 700.0, n),
        "fuel_rate": rng.uniform(5.0, 40.0, n),
        "rail_pressure": rng.uniform(6e7, 1.5e8, n),
        "intake_pressure": rng.uniform(1.0e5, 2.0e5, n),
        "intake_temp": rng.uniform(290.0, 330.0, n),
        "engine_speed": rng.uniform(800.0, 1800.0, n),
        TARGET: rng.uniform(10.0, 100.0, n),
    }


@pytest.fixture
def make_run():
    """ObdRun factory with plausible engine attributes."""

    def factory(run_id="run-1", route_id="route-1", n=50, seed=0, extras=None, period=1.0):
        rng = np.random.default_rng(seed)
        columns = _columns(rng, n)
        for name in extras or ():
            columns[name] = rng.uniform(0.0, 100.0, n)
        return ObdRun(run_id, route_id, np.arange(n) * period, columns)

    return factory


@pytest.fixture
def make_dataset(make_run):
    def factory(n_runs=4, n=50, routes=2, extras=("EngTq",)):
        runs = [
            make_run(f"run-{i + 1}", f"route-{i % routes + 1}", n, seed=i, extras=extras)
            for i in range(n_runs)
        ]
        return ObdDataset(runs, 1.0, list(extras))

    return factory


@pytest.fixture
def make_features():
    """FeatureSeries factory with random, valid features in engine ranges."""

    def factory(n_runs=3, n=200, seed=0, invalid=0.0):
        rng = np.random.default_rng(seed)
        runs = []
        for i in range(n_runs):
            valid = rng.random(n) >= invalid
            t_adiab = np.where(valid, rng.uniform(1900.0, 2700.0, n), np.nan)
            t_comb = np.where(valid, rng.uniform(5e-4, 6e-3, n), np.nan)
            x_o2 = np.where(valid, rng.uniform(0.15, 0.21, n), np.nan)
            t = np.arange(n, dtype=float)
            runs.append(RunFeatures(f"run-{i + 1}", t, t_adiab, t_comb, x_o2, valid))
        return FeatureSeries(runs)

    return factory


@pytest.fixture
def law_observed():
    """Observed NOx following a power law, with optional Gaussian noise."""

    def factory(features, params, noise=0.0, seed=0):
        rng = np.random.default_rng(seed)
        observed = predict(params, features)
        if noise:
            observed = {k: v + rng.normal(0.0, noise, v.size) for k, v in observed.items()}
        return observed

    return factory


@pytest.fixture
def true_params():
    return PowerLawParams(7.3e-4, 2.0, 0.8, 1)


@pytest.fixture(scope="session")
def small_synth():
    return dataclasses.replace(default_config(), runs=6, run_length=300, seed=7)


@pytest.fixture
def small_config(small_synth):
    return ExperimentConfig(data=small_synth.to_dict(), n_patterns=2, workers=2)


@pytest.fixture
def physics_attributes():
    return PHYSICS_ATTRIBUTES
