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
"""Pattern-partitioned power-law model.

Timestep k belongs to partition i >= 1 when pattern i is the first, in
priority order, to match the window of L samples ending at k, and to
the default partition 0 otherwise. Each partition has its own
power-law parameters.
"""
from __future__ import annotations

import dataclasses
import json
import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from stvanox.errors import ConfigError, FitError, ModelError
from stvanox.miner import CoOccurrencePattern, Discretizer, SymbolTable, symbolize
from stvanox.obd.dataset import ObdDataset, Series
from stvanox.physics import FeatureSeries
from stvanox.regression import (
    FitReport,
    LmOptions,
    PowerLawParams,
    SampleSet,
    build_samples,
    fit_power_law,
    shift,
)

logger = logging.getLogger(__name__)

MIN_PARTITION_SAMPLES = 50


@dataclass(frozen=True)
class PartitionedModel:
    patterns: tuple[CoOccurrencePattern, ...]
    partition_params: tuple[PowerLawParams, ...]
    discretizer: Discretizer
    window_len: int
    delta: int
    fallbacks: frozenset[int] = frozenset()
    partition_counts: tuple[int, ...] = field(default=(), compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "patterns", tuple(self.patterns))
        object.__setattr__(self, "partition_params", tuple(self.partition_params))
        object.__setattr__(self, "fallbacks", frozenset(int(i) for i in self.fallbacks))
        if len(self.partition_params) != len(self.patterns) + 1:
            raise ConfigError(
                f"{len(self.patterns)} patterns need {len(self.patterns) + 1} parameter sets,"
                f" got {len(self.partition_params)}"
            )
        if any(p.delta != self.delta for p in self.partition_params):
            raise ConfigError("every partition must share the model delta")
        if self.window_len < 1:
            raise ConfigError(f"window_len must be >= 1, got {self.window_len}")
        if any(not 1 <= i <= len(self.patterns) for i in self.fallbacks):
            raise ConfigError(f"invalid fallback partitions {sorted(self.fallbacks)}")

    @property
    def n_partitions(self) -> int:
        return len(self.partition_params)

    def symbolize(self, dataset: ObdDataset) -> SymbolTable:
        """Symbols of `dataset` under the training discretizer."""
        return symbolize(dataset, self.discretizer)

    def to_dict(self) -> dict:
        return {
            "patterns": [p.to_dict() for p in self.patterns],
            "partition_params": [p.to_dict() for p in self.partition_params],
            "bin_edges": self.discretizer.to_dict(),
            "window_len": self.window_len,
            "delta": self.delta,
            "fallbacks": sorted(self.fallbacks),
            "partition_counts": list(self.partition_counts),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> PartitionedModel:
        return cls(
            tuple(CoOccurrencePattern.from_dict(p) for p in data["patterns"]),
            tuple(PowerLawParams.from_dict(p) for p in data["partition_params"]),
            Discretizer.from_dict(data["bin_edges"]),
            int(data["window_len"]),
            int(data["delta"]),
            frozenset(data.get("fallbacks", ())),
            tuple(data.get("partition_counts", ())),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> PartitionedModel:
        return cls.from_dict(json.loads(text))


def assign_partitions(
    symbols: SymbolTable, patterns: Sequence[CoOccurrencePattern], window_len: int
) -> Series:
    """Partition index of every timestep, keyed by run id.

    The first pattern matching the window ending at k wins; the first
    L - 1 steps of a run, and unmatched steps, go to partition 0.
    """
    result = {}
    for run_id in symbols.run_ids:
        partition = np.zeros(symbols.run_length(run_id), dtype=np.int64)
        for i, pattern in enumerate(patterns, start=1):
            ends = np.flatnonzero(symbols.matches(run_id, pattern.as_mapping(), window_len))
            ends += window_len - 1
            free = ends[partition[ends] == 0]
            partition[free] = i
        result[run_id] = partition
    return result


def partition_counts(assignments: Series, n_partitions: int) -> list[int]:
    counts = np.zeros(n_partitions, dtype=np.int64)
    for partition in assignments.values():
        counts += np.bincount(partition, minlength=n_partitions)
    return counts.tolist()


@dataclass(frozen=True)
class PstvaOptions:
    window_len: int = 3
    delta: int = 1
    min_partition_samples: int = MIN_PARTITION_SAMPLES
    lm: LmOptions = field(default_factory=LmOptions)

    def __post_init__(self) -> None:
        if self.window_len < 1:
            raise ConfigError(f"window_len must be >= 1, got {self.window_len}")
        if self.delta < 0:
            raise ConfigError(f"delta must be >= 0, got {self.delta}")
        if self.min_partition_samples < 1:
            raise ConfigError("min_partition_samples must be >= 1")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _fit_partition(samples: SampleSet, base: FitReport, opts: LmOptions) -> FitReport:
    # from the P-Base start the SSE can not end above the baseline SSE
    reports = []
    error: FitError | None = None
    for init in (None, base.params.abc):
        try:
            reports.append(fit_power_law(samples, opts, init))
        except FitError as e:
            error = e
    if not reports:
        raise error
    return min(reports, key=lambda r: r.sse_final)


def fit(
    features: FeatureSeries,
    observed: Series,
    symbols: SymbolTable,
    patterns: Sequence[CoOccurrencePattern],
    discretizer: Discretizer,
    options: PstvaOptions | None = None,
    base: FitReport | None = None,
) -> PartitionedModel:
    """Fit one power law per partition of the training samples.

    Partitions with fewer than `min_partition_samples` samples, or
    whose fit fails, join the default partition and share its
    parameters. `base` is the P-Base fit on the same samples, computed
    when not given.

    Raises:
        ModelError: the default partition can not be fitted.
    """
    options = options or PstvaOptions()
    patterns = tuple(patterns)
    samples = build_samples(features, observed, options.delta)
    if base is None:
        base = fit_power_law(samples, options.lm)
    n_parts = len(patterns) + 1
    routed = samples.lookup(assign_partitions(symbols, patterns, options.window_len))
    counts = np.bincount(routed, minlength=n_parts)

    params: dict[int, PowerLawParams] = {}
    fallbacks = set()
    for i in range(1, n_parts):
        if counts[i] < options.min_partition_samples:
            logger.warning(
                "partition %d has %d samples (< %d), using default parameters",
                i,
                counts[i],
                options.min_partition_samples,
            )
            fallbacks.add(i)
            continue
        try:
            params[i] = _fit_partition(samples.select(routed == i), base, options.lm).params
        except FitError as e:
            logger.warning("partition %d could not be fitted (%s), using default parameters", i, e)
            fallbacks.add(i)

    default = (routed == 0) | np.isin(routed, sorted(fallbacks))
    if default.all() or not default.any():
        # nothing left to fit on: unmatched timesteps get the baseline law
        default_report = base
    else:
        try:
            default_report = _fit_partition(samples.select(default), base, options.lm)
        except FitError as e:
            raise ModelError(f"default partition can not be fitted: {e}") from e
    params[0] = default_report.params
    for i in fallbacks:
        params[i] = params[0]

    logger.info(
        "fitted %d partitions, samples per partition %s, fallbacks %s",
        n_parts,
        counts.tolist(),
        sorted(fallbacks),
    )
    return PartitionedModel(
        patterns,
        tuple(params[i] for i in range(n_parts)),
        discretizer,
        options.window_len,
        options.delta,
        frozenset(fallbacks),
        tuple(int(c) for c in counts),
    )


def predict(model: PartitionedModel, features: FeatureSeries, symbols: SymbolTable) -> Series:
    """Routed predictions aligned at k + delta, NaN where undefined."""
    assignments = assign_partitions(symbols, model.patterns, model.window_len)
    result = {}
    for run in features:
        partition = assignments[run.run_id]
        values = np.full(len(run), np.nan)
        for i in np.unique(partition):
            with np.errstate(invalid="ignore", over="ignore"):
                routed = model.partition_params[i].evaluate(run.t_adiab, run.t_comb)
            values = np.where(partition == i, routed, values)
        result[run.run_id] = shift(np.where(run.valid, values, np.nan), model.delta)
    return result
