# -*- coding: utf-8 -*-
#
#       Copyright (c) The stvanox developers 2024
#
#       This program is free software; you can redistribute it and/or modify
#       it under the terms of the GNU General Public License as published by
#       the Free Software Foundation; either version 3 of the License, or
#       (at your option) any later version.
#
#       This program is distributed in the hope that it will be useful,
#       but WITHOUT ANY WARRANTY; without even the implied warranty of
#       MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
#       GNU General Public License for more details.
#
#       You should have received a copy of the GNU General Public License
#       along with this program; if not, write to the Free Software
#       Foundation, Inc., 51 Franklin Street, Fifth Floor, Boston,
#       MA 02110-1301, USA.
#
"""Synthetic OBD runs with planted operating regimes.

Each run follows a semi-Markov regime process: a regime lasts a
geometric number of samples with its configured mean dwell, then the
next regime is drawn from the transition row. Attributes are
truncated-normal draws around the regime means, and the observed NOx
at k + delta is the regime power law applied to the physics features
at k, plus Gaussian noise.
"""
from __future__ import annotations

import dataclasses
import importlib.resources
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Mapping, Sequence

import numpy as np
import pandas as pd
from scipy import stats

from stvanox.errors import ConfigError
from stvanox.obd.dataset import PHYSICS_ATTRIBUTES, TARGET, ObdDataset, ObdRun, Series
from stvanox.physics import PhysicsConstants, derive_features
from stvanox.regression import PowerLawParams
from stvanox.util import FilePath, assert_file

logger = logging.getLogger(__name__)

DEFAULT_CONFIG = "synth_default.json"


@dataclass(frozen=True)
class RegimeSpec:
    name: str
    params: PowerLawParams
    attribute_means: Mapping[str, float]
    attribute_stddevs: Mapping[str, float]
    mean_dwell: float = 1.0

    def __post_init__(self) -> None:
        if not self.mean_dwell >= 1:
            raise ConfigError(f"regime {self.name}: mean_dwell must be >= 1")
        unknown = set(self.attribute_stddevs) - set(self.attribute_means)
        if unknown:
            raise ConfigError(f"regime {self.name}: stddevs without means: {sorted(unknown)}")
        if any(not v >= 0 for v in self.attribute_stddevs.values()):
            raise ConfigError(f"regime {self.name}: stddevs must be >= 0")

    def stddev(self, attribute: str) -> float:
        return float(self.attribute_stddevs.get(attribute, 0.0))

    def to_dict(self) -> dict:
        params = self.params.to_dict()
        del params["delta"]
        return {
            "name": self.name,
            "params": params,
            "mean_dwell": self.mean_dwell,
            "attribute_means": dict(self.attribute_means),
            "attribute_stddevs": dict(self.attribute_stddevs),
        }

    @classmethod
    def from_dict(cls, data: Mapping, delta: int = 1) -> RegimeSpec:
        params = data["params"]
        return cls(
            str(data["name"]),
            PowerLawParams(float(params["a"]), float(params["b"]), float(params["c"]), delta),
            dict(data["attribute_means"]),
            dict(data.get("attribute_stddevs", {})),
            float(data.get("mean_dwell", 1.0)),
        )


@dataclass(frozen=True)
class SynthConfig:
    """Generator settings.

    The regime process is semi-Markov. A regime lasts a geometric
    number of samples with its mean dwell, then row `transition[r]`
    gives the regime jumped to. A diagonal entry restarts the current
    regime with a fresh dwell, so the matrix is the law of the jumps,
    and the per-step transition frequencies equal it only when every
    mean dwell is 1.

    Runs start in `initial_regime` (drawn uniformly when None) and stay
    there at least `warm_up` samples before the process starts.

    `physics_mismatch` is a percentage: the generator then computes its
    features with constants shifted by that much, while fitting keeps
    the nominal ones.
    """

    regimes: Sequence[RegimeSpec]
    transition: Sequence[Sequence[float]]
    runs: int = 16
    run_length: int = 1800
    noise_stddev: float = 0.0
    seed: int = 0
    delta: int = 1
    routes: int = 3
    sample_period: float = 1.0
    physics_mismatch: float = 0.0
    initial_regime: str | None = None
    warm_up: int = 0
    physics: PhysicsConstants = field(default_factory=PhysicsConstants)

    def __post_init__(self) -> None:
        object.__setattr__(self, "regimes", tuple(self.regimes))
        transition = tuple(tuple(float(v) for v in row) for row in self.transition)
        object.__setattr__(self, "transition", transition)
        n = len(self.regimes)
        if n == 0:
            raise ConfigError("at least one regime is required")
        matrix = np.array(self.transition, dtype=float)
        if matrix.shape != (n, n):
            raise ConfigError(f"transition must be {n}x{n}, got shape {matrix.shape}")
        if np.any(matrix < 0) or np.any(np.abs(matrix.sum(axis=1) - 1.0) > 1e-9):
            raise ConfigError("transition rows must be non-negative and sum to 1")
        if self.runs < 1 or self.run_length < 1 or self.routes < 1:
            raise ConfigError("runs, run_length and routes must be >= 1")
        if not self.noise_stddev >= 0:
            raise ConfigError(f"noise_stddev must be >= 0, got {self.noise_stddev}")
        if not self.sample_period > 0:
            raise ConfigError(f"sample_period must be > 0, got {self.sample_period}")
        if int(self.delta) != self.delta or self.delta < 0:
            raise ConfigError(f"delta must be an integer >= 0, got {self.delta}")
        if int(self.warm_up) != self.warm_up or self.warm_up < 0:
            raise ConfigError(f"warm_up must be an integer >= 0, got {self.warm_up}")
        if self.initial_regime is not None and self.initial_regime not in self.regime_names:
            raise ConfigError(f"unknown initial regime {self.initial_regime!r}")
        attributes = set(self.regimes[0].attribute_means)
        for regime in self.regimes:
            if set(regime.attribute_means) != attributes:
                raise ConfigError(f"regime {regime.name} does not share the attribute set")
            if regime.params.delta != self.delta:
                raise ConfigError(f"regime {regime.name}: params delta differs from {self.delta}")
        missing = [a for a in PHYSICS_ATTRIBUTES if a not in attributes]
        if missing:
            raise ConfigError(f"regimes lack physics attributes {missing}")
        if TARGET in attributes:
            raise ConfigError(f"{TARGET} is generated, not drawn")

    @property
    def attributes(self) -> tuple[str, ...]:
        return tuple(sorted(self.regimes[0].attribute_means))

    @property
    def regime_names(self) -> tuple[str, ...]:
        return tuple(r.name for r in self.regimes)

    def generator_constants(self) -> PhysicsConstants:
        if self.physics_mismatch:
            return self.physics.perturbed(self.physics_mismatch)
        return self.physics

    def to_dict(self) -> dict:
        return {
            "regimes": [r.to_dict() for r in self.regimes],
            "transition": [list(row) for row in self.transition],
            "runs": self.runs,
            "run_length": self.run_length,
            "noise_stddev": self.noise_stddev,
            "seed": self.seed,
            "delta": self.delta,
            "routes": self.routes,
            "sample_period": self.sample_period,
            "physics_mismatch": self.physics_mismatch,
            "initial_regime": self.initial_regime,
            "warm_up": self.warm_up,
            "physics": self.physics.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> SynthConfig:
        data = dict(data)
        known = {f.name for f in dataclasses.fields(cls)}
        if set(data) - known:
            raise ConfigError(f"unknown synth config keys: {sorted(set(data) - known)}")
        for key in ("regimes", "transition"):
            if key not in data:
                raise ConfigError(f"synth config lacks {key!r}")
        delta = int(data.get("delta", 1))
        data["regimes"] = [RegimeSpec.from_dict(r, delta) for r in data["regimes"]]
        data["physics"] = PhysicsConstants.from_dict(data.get("physics"))
        return cls(**data)

    @classmethod
    def from_file(cls, path: FilePath) -> SynthConfig:
        with open(assert_file(Path(path)), encoding="utf-8") as stream:
            return cls.from_dict(json.load(stream))


def default_config() -> SynthConfig:
    """The shipped four-regime configuration."""
    text = (importlib.resources.files("stvanox") / "data" / DEFAULT_CONFIG).read_text()
    return SynthConfig.from_dict(json.loads(text))


def _regime_sequence(rng: np.random.Generator, config: SynthConfig, count: int) -> np.ndarray:
    n = len(config.regimes)
    matrix = np.array(config.transition)
    sequence = np.empty(count, dtype=np.int64)
    if config.initial_regime is None:
        state = int(rng.integers(n))
    else:
        state = config.regime_names.index(config.initial_regime)
    pos = 0
    while pos < count:
        dwell = int(rng.geometric(1.0 / config.regimes[state].mean_dwell))
        if pos == 0:
            dwell += int(config.warm_up)
        sequence[pos : pos + dwell] = state
        pos += dwell
        state = int(rng.choice(n, p=matrix[state]))
    return sequence


def _truncated_normal(rng: np.random.Generator, mean: np.ndarray, sd: np.ndarray) -> np.ndarray:
    # positive quantities: the normal is cut at 0
    spread = sd > 0
    scale = np.where(spread, sd, 1.0)
    lower = (0.0 - mean) / scale
    draws = stats.truncnorm.rvs(lower, np.inf, loc=mean, scale=scale, random_state=rng)
    return np.where(spread, draws, mean)


def _generate_run(config: SynthConfig, index: int) -> tuple[ObdRun, np.ndarray]:
    rng = np.random.default_rng(config.seed + index)
    delta = config.delta
    total = config.run_length + delta
    sequence = _regime_sequence(rng, config, total)

    columns = {}
    for name in config.attributes:
        means = np.array([r.attribute_means[name] for r in config.regimes], dtype=float)
        sds = np.array([r.stddev(name) for r in config.regimes], dtype=float)
        columns[name] = _truncated_normal(rng, means[sequence], sds[sequence])

    t_adiab, t_comb, _, valid = derive_features(columns, config.generator_constants())
    clean = np.zeros(total)
    for r, regime in enumerate(config.regimes):
        with np.errstate(invalid="ignore"):
            values = regime.params.evaluate(t_adiab, t_comb)
        clean = np.where(sequence == r, values, clean)
    clean = np.where(valid, clean, 0.0)
    noise = rng.normal(0.0, config.noise_stddev, config.run_length)

    kept = slice(delta, total)
    columns = {name: values[kept] for name, values in columns.items()}
    columns[TARGET] = clean[: config.run_length] + noise
    run = ObdRun(
        f"run-{index + 1:02d}",
        f"route-{index % config.routes + 1}",
        np.arange(config.run_length) * config.sample_period,
        columns,
    )
    labels = np.array(config.regime_names)[sequence[kept]]
    return run, labels


def generate(config: SynthConfig) -> tuple[ObdDataset, Series]:
    """Generate the runs and their per-timestep regime labels.

    Run i draws from its own generator seeded with ``seed + i``.
    """
    runs = []
    labels = {}
    for i in range(config.runs):
        run, run_labels = _generate_run(config, i)
        runs.append(run)
        labels[run.run_id] = run_labels
    extras = [a for a in config.attributes if a not in PHYSICS_ATTRIBUTES]
    dataset = ObdDataset(runs, config.sample_period, extras)
    logger.info(
        "generated %d runs of %d samples over %d regimes",
        config.runs,
        config.run_length,
        len(config.regimes),
    )
    return dataset, labels


def write_labels_csv(dataset: ObdDataset, labels: Series, sink: FilePath | IO[str]) -> None:
    frames = [
        pd.DataFrame({"t_s": run.t, "run_id": run.run_id, "regime": labels[run.run_id]})
        for run in dataset
    ]
    table = (
        pd.concat(frames, ignore_index=True)
        if frames
        else pd.DataFrame(columns=["t_s", "run_id", "regime"])
    )
    table.to_csv(sink, index=False, float_format="%.17g")
