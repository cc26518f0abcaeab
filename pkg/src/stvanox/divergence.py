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
"""Divergent windows: stretches where the baseline model keeps missing."""
from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass
from typing import IO, Mapping

import numpy as np
import pandas as pd

from stvanox.errors import ConfigError
from stvanox.obd.dataset import ObdDataset, Series
from stvanox.util import FilePath

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DivergenceConfig:
    window_len_s: float = 3.0
    summation_threshold: float = 30.0

    def __post_init__(self) -> None:
        if not self.window_len_s > 0:
            raise ConfigError(f"window_len_s must be > 0, got {self.window_len_s}")
        if not self.summation_threshold > 0:
            raise ConfigError(
                f"summation_threshold must be > 0, got {self.summation_threshold}"
            )

    def window_samples(self, sample_period: float = 1.0) -> int:
        """Window length L in samples."""
        length = int(round(self.window_len_s / sample_period))
        if length < 1:
            raise ConfigError(
                f"window of {self.window_len_s} s is shorter than one {sample_period} s sample"
            )
        return length

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping | None) -> DivergenceConfig:
        data = dict(data or {})
        known = {f.name for f in dataclasses.fields(cls)}
        if set(data) - known:
            raise ConfigError(f"unknown divergence keys: {sorted(set(data) - known)}")
        return cls(**data)


@dataclass(frozen=True, order=True)
class DivergentWindow:
    run_id: str
    start_index: int
    end_index: int
    error_sum: float

    @property
    def length(self) -> int:
        return self.end_index - self.start_index + 1


@dataclass(frozen=True)
class Span:
    run_id: str
    start_index: int
    end_index: int


def per_step_errors(pred: Series, obs: Series) -> Series:
    """|obs - pred| per timestep, NaN where either side is undefined."""
    errors = {}
    for run_id, p in pred.items():
        with np.errstate(invalid="ignore"):
            errors[run_id] = np.abs(np.asarray(obs[run_id], dtype=float) - np.asarray(p))
    return errors


def window_sums(errors: np.ndarray, length: int) -> tuple[np.ndarray, np.ndarray]:
    """Sums of every stride-1 window and whether all its errors are defined.

    The sum is accumulated left to right within each window.
    """
    count = errors.size - length + 1
    if count <= 0:
        return np.empty(0), np.empty(0, dtype=bool)
    defined = np.isfinite(errors)
    filled = np.where(defined, errors, 0.0)
    sums = filled[:count].copy()
    complete = defined[:count].copy()
    for offset in range(1, length):
        sums += filled[offset : offset + count]
        complete &= defined[offset : offset + count]
    return sums, complete


def find_divergent_windows(
    errors: Series, config: DivergenceConfig, sample_period: float = 1.0
) -> list[DivergentWindow]:
    """Every window of L samples whose error sum exceeds the threshold.

    Windows are taken with stride 1 inside each run, overlap freely,
    and are skipped when any of their errors is undefined.
    """
    length = config.window_samples(sample_period)
    windows = []
    for run_id in sorted(errors):
        sums, complete = window_sums(np.asarray(errors[run_id], dtype=float), length)
        for start in np.flatnonzero(complete & (sums > config.summation_threshold)):
            windows.append(
                DivergentWindow(run_id, int(start), int(start) + length - 1, float(sums[start]))
            )
    logger.info(
        "found %d divergent windows (L=%d, threshold=%g)",
        len(windows),
        length,
        config.summation_threshold,
    )
    return windows


def merged_spans(windows: list[DivergentWindow]) -> list[Span]:
    """Overlapping windows of a run merged into maximal spans, for reporting."""
    spans: list[Span] = []
    for w in sorted(windows):
        last = spans[-1] if spans else None
        if last is not None and last.run_id == w.run_id and w.start_index <= last.end_index:
            spans[-1] = Span(w.run_id, last.start_index, max(last.end_index, w.end_index))
        else:
            spans.append(Span(w.run_id, w.start_index, w.end_index))
    return spans


def write_windows_csv(
    windows: list[DivergentWindow], dataset: ObdDataset, sink: FilePath | IO[str]
) -> None:
    rows = []
    for w in windows:
        t = dataset.run(w.run_id).t
        rows.append((w.run_id, t[w.start_index], t[w.end_index], w.error_sum))
    table = pd.DataFrame(rows, columns=["run_id", "start_t_s", "end_t_s", "error_sum_ppm"])
    table.to_csv(sink, index=False, float_format="%.17g")
