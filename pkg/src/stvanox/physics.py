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
"""Low-order combustion features and the LOP comparison model.

Per timestep the six engine attributes give a compression temperature,
an adiabatic flame temperature ``t_adiab`` (K), a combustion duration
``t_comb`` (s, approximated by the injection duration) and an intake
oxygen mole fraction ``x_o2``. The constants are plain defaults for a
six cylinder four-stroke diesel and can be overridden from JSON.
"""
from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass
from typing import IO, Iterator, Mapping

import numpy as np
import pandas as pd

from stvanox.errors import CalibrationError, ConfigError
from stvanox.obd.dataset import ObdDataset, Series
from stvanox.util import FilePath

logger = logging.getLogger(__name__)

EGR_ATTRIBUTE = "EGRkgph"
REFERENCE_O2 = 0.21
MIN_ENGINE_SPEED = 100.0
MIN_CALIBRATION_SAMPLES = 10


@dataclass(frozen=True)
class PhysicsConstants:
    compression_ratio: float = 17.0
    gamma: float = 1.35
    lhv_fuel: float = 42.8e6
    cp_charge: float = 1200.0
    afr_stoich: float = 14.5
    n_cylinders: int = 6
    nozzle_area_total: float = 1.0e-7
    discharge_coeff: float = 0.70
    fuel_density: float = 840.0
    ambient_o2_fraction: float = 0.21
    pressure_floor: float = 1.0e4

    def __post_init__(self) -> None:
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if not (np.isfinite(value) and value > 0):
                raise ConfigError(f"physics constant {f.name} must be > 0, got {value}")
        if not self.gamma > 1:
            raise ConfigError(f"gamma must be > 1, got {self.gamma}")
        if self.ambient_o2_fraction > REFERENCE_O2:
            raise ConfigError("ambient_o2_fraction must lie in (0, 0.21]")

    def perturbed(self, percent: float) -> PhysicsConstants:
        """Constants shifted by `percent` to emulate a physics model error."""
        scale = percent / 100.0
        return dataclasses.replace(
            self,
            compression_ratio=self.compression_ratio * (1 + scale),
            lhv_fuel=self.lhv_fuel * (1 - scale),
            nozzle_area_total=self.nozzle_area_total * (1 + scale),
        )

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping | None) -> PhysicsConstants:
        return _from_dict(cls, data)


@dataclass(frozen=True)
class LopParams:
    amplitude: float = 1.0
    o2_exponent: float = 1.0
    tcomb_exponent: float = 0.5
    activation_temp: float = 38000.0

    def __post_init__(self) -> None:
        if not self.amplitude > 0:
            raise ConfigError(f"LOP amplitude must be > 0, got {self.amplitude}")
        if not self.activation_temp > 0:
            raise ConfigError(f"LOP activation_temp must be > 0, got {self.activation_temp}")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping | None) -> LopParams:
        return _from_dict(cls, data)


def _from_dict(cls, data):
    data = dict(data or {})
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**data)


@dataclass(frozen=True)
class RunFeatures:
    run_id: str
    t: np.ndarray
    t_adiab: np.ndarray
    t_comb: np.ndarray
    x_o2: np.ndarray
    valid: np.ndarray

    def __len__(self) -> int:
        return int(self.t.size)


class FeatureSeries:
    """Physics features of every run, in dataset order."""

    __slots__ = ("_runs",)

    def __init__(self, runs: list[RunFeatures]) -> None:
        self._runs = {run.run_id: run for run in runs}

    @property
    def run_ids(self) -> tuple[str, ...]:
        return tuple(self._runs)

    def run(self, run_id: str) -> RunFeatures:
        return self._runs[run_id]

    def subset(self, run_ids) -> FeatureSeries:
        wanted = set(run_ids)
        return FeatureSeries([r for r in self._runs.values() if r.run_id in wanted])

    @property
    def n_valid(self) -> int:
        return int(sum(r.valid.sum() for r in self._runs.values()))

    def __iter__(self) -> Iterator[RunFeatures]:
        return iter(self._runs.values())

    def __len__(self) -> int:
        return len(self._runs)

    def __contains__(self, run_id: str) -> bool:
        return run_id in self._runs


def derive_features(
    columns: Mapping[str, np.ndarray], constants: PhysicsConstants
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Compute (t_adiab, t_comb, x_o2, valid) from attribute arrays.

    Invalid timesteps (engine speed below 100 rev/min, or any derived
    quantity out of its physical range) carry NaN features.
    """
    speed = np.asarray(columns["engine_speed"], dtype=float)
    fuel = np.asarray(columns["fuel_rate"], dtype=float)
    air = np.asarray(columns["intake_air_flow"], dtype=float)
    rail = np.asarray(columns["rail_pressure"], dtype=float)
    intake = np.asarray(columns["intake_pressure"], dtype=float)
    temp = np.asarray(columns["intake_temp"], dtype=float)

    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        cycles_per_s = speed / 120.0
        m_fuel = (fuel / 3600.0) / (cycles_per_s * constants.n_cylinders)
        dp = np.maximum(rail - intake, constants.pressure_floor)
        mdot = (
            constants.discharge_coeff
            * constants.nozzle_area_total
            * np.sqrt(2.0 * constants.fuel_density * dp)
        )
        t_comb = m_fuel / mdot

        x_o2 = np.full(speed.shape, constants.ambient_o2_fraction)
        egr = columns.get(EGR_ATTRIBUTE)
        if egr is not None:
            egr = np.asarray(egr, dtype=float)
            diluted = np.isfinite(egr)
            x_o2[diluted] = (
                constants.ambient_o2_fraction * air[diluted] / (air[diluted] + egr[diluted])
            )

        t_comp = temp * constants.compression_ratio ** (constants.gamma - 1.0)
        rise = constants.lhv_fuel / (constants.cp_charge * (1.0 + constants.afr_stoich))
        t_adiab = t_comp + rise * (x_o2 / REFERENCE_O2)

    valid = (
        (speed >= MIN_ENGINE_SPEED)
        & np.isfinite(t_comb)
        & (t_comb > 0)
        & np.isfinite(t_adiab)
        & (t_adiab > 0)
        & (x_o2 > 0)
        & (x_o2 <= REFERENCE_O2)
    )
    t_adiab = np.where(valid, t_adiab, np.nan)
    t_comb = np.where(valid, t_comb, np.nan)
    x_o2 = np.where(valid, x_o2, np.nan)
    return t_adiab, t_comb, x_o2, valid


def compute_features(dataset: ObdDataset, constants: PhysicsConstants) -> FeatureSeries:
    runs = []
    for run in dataset:
        columns = {name: run.column(name) for name in run.attributes}
        t_adiab, t_comb, x_o2, valid = derive_features(columns, constants)
        runs.append(RunFeatures(run.run_id, run.t, t_adiab, t_comb, x_o2, valid))
    features = FeatureSeries(runs)
    logger.info(
        "computed features for %d runs, %d valid timesteps of %d",
        len(features),
        features.n_valid,
        dataset.n_samples,
    )
    return features


def _lop_shape(run: RunFeatures, params: LopParams) -> np.ndarray:
    with np.errstate(invalid="ignore", over="ignore", under="ignore"):
        shape = (
            run.x_o2**params.o2_exponent
            * run.t_comb**params.tcomb_exponent
            * np.exp(-params.activation_temp / run.t_adiab)
        )
    return np.where(run.valid, shape, np.nan)


def lop_predict(features: FeatureSeries, params: LopParams) -> Series:
    """LOP NOx prediction in ppm, NaN where the features are invalid.

    pred = amplitude * x_o2^o2_exponent * t_comb^tcomb_exponent
           * exp(-activation_temp / t_adiab)
    """
    return {run.run_id: params.amplitude * _lop_shape(run, params) for run in features}


def calibrate_lop(
    features: FeatureSeries, observed: Series, params: LopParams | None = None
) -> LopParams:
    """Least-squares amplitude of the LOP model, exponents held fixed.

    Raises:
        CalibrationError: fewer than 10 usable samples.
    """
    params = params or LopParams()
    num = 0.0
    den = 0.0
    count = 0
    for run in features:
        shape = _lop_shape(run, params)
        obs = np.asarray(observed[run.run_id], dtype=float)
        ok = np.isfinite(shape) & np.isfinite(obs)
        num += float(np.dot(obs[ok], shape[ok]))
        den += float(np.dot(shape[ok], shape[ok]))
        count += int(ok.sum())
    if count < MIN_CALIBRATION_SAMPLES or den <= 0:
        raise CalibrationError(
            f"LOP calibration needs {MIN_CALIBRATION_SAMPLES} valid samples, got {count}"
        )
    amplitude = num / den
    if not amplitude > 0:
        logger.warning("LOP amplitude %g clamped to the smallest positive float", amplitude)
        amplitude = float(np.finfo(float).tiny)
    logger.info("calibrated LOP amplitude %.6g on %d samples", amplitude, count)
    return dataclasses.replace(params, amplitude=amplitude)


def write_features_csv(features: FeatureSeries, sink: FilePath | IO[str]) -> None:
    frames = [
        pd.DataFrame(
            {
                "t_s": run.t,
                "run_id": run.run_id,
                "t_adiab_k": run.t_adiab,
                "t_comb_s": run.t_comb,
                "x_o2": run.x_o2,
                "valid": run.valid.astype(int),
            }
        )
        for run in features
    ]
    table = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(
        columns=["t_s", "run_id", "t_adiab_k", "t_comb_s", "x_o2", "valid"]
    )
    table.to_csv(sink, index=False, float_format="%.17g", na_rep="")
