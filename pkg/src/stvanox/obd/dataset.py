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
"""OBD time series: data model, CSV ingestion, resampling and splitting."""
from __future__ import annotations

import io
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Dict, Iterable, Iterator, Mapping, Sequence, Union

import numpy as np
import pandas as pd

from stvanox.errors import ConfigError, DataError, EmptyDatasetError, SchemaError
from stvanox.util import FilePath, decode_text, read_source

logger = logging.getLogger(__name__)

PHYSICS_ATTRIBUTES = (
    "intake_air_flow",
    "fuel_rate",
    "rail_pressure",
    "intake_pressure",
    "intake_temp",
    "engine_speed",
)
TARGET = "nox_observed"

# csv column -> attribute
DEFAULT_SCHEMA: Dict[str, str] = {
    "run_id": "run_id",
    "route_id": "route_id",
    "t_s": "t",
    "intake_air_kgph": "intake_air_flow",
    "fuel_kgph": "fuel_rate",
    "rail_pressure_pa": "rail_pressure",
    "intake_pressure_pa": "intake_pressure",
    "intake_temp_k": "intake_temp",
    "engine_rpm": "engine_speed",
    "nox_ppm": TARGET,
}
MANDATORY_ATTRIBUTES = ("run_id", "route_id", "t", *PHYSICS_ATTRIBUTES, TARGET)
GAP_FACTOR = 5.0

Series = Dict[str, np.ndarray]
CsvSource = Union[FilePath, IO[bytes], bytes]


def _frozen(values: Iterable[float] | np.ndarray) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class ObdRecord:
    run_id: str
    route_id: str
    t: float
    intake_air_flow: float
    fuel_rate: float
    rail_pressure: float
    intake_pressure: float
    intake_temp: float
    engine_speed: float
    nox_observed: float
    extras: Mapping[str, float] = field(default_factory=dict)

    def is_valid(self) -> bool:
        values = [getattr(self, name) for name in (*PHYSICS_ATTRIBUTES, TARGET)]
        return bool(
            np.all(np.isfinite(values))
            and np.isfinite(self.t)
            and self.engine_speed >= 0
            and self.intake_temp > 0
            and self.rail_pressure > 0
            and self.intake_pressure > 0
        )


class ObdRun:
    """One run: an ordered time series of OBD attributes.

    Attribute arrays are read-only. Extras are stored as NaN
    where the logger did not record them.
    """

    __slots__ = ("_run_id", "_route_id", "_t", "_columns")

    def __init__(
        self,
        run_id: str,
        route_id: str,
        t: Sequence[float] | np.ndarray,
        columns: Mapping[str, Sequence[float] | np.ndarray],
    ) -> None:
        self._run_id = str(run_id)
        self._route_id = str(route_id)
        self._t = _frozen(t)
        self._columns = {name: _frozen(values) for name, values in columns.items()}
        for name in (*PHYSICS_ATTRIBUTES, TARGET):
            if name not in self._columns:
                raise SchemaError(name, f"run {run_id!r} lacks attribute {name!r}")
        for name, values in self._columns.items():
            if values.shape != self._t.shape:
                raise DataError(
                    f"run {run_id!r}: attribute {name!r} has {values.size} values"
                    f" for {self._t.size} timestamps"
                )

    @property
    def run_id(self) -> str:
        return self._run_id

    @property
    def route_id(self) -> str:
        return self._route_id

    @property
    def t(self) -> np.ndarray:
        return self._t

    @property
    def attributes(self) -> tuple[str, ...]:
        return tuple(self._columns)

    @property
    def extras(self) -> tuple[str, ...]:
        return tuple(n for n in self._columns if n not in (*PHYSICS_ATTRIBUTES, TARGET))

    def has(self, name: str) -> bool:
        return name in self._columns

    def column(self, name: str) -> np.ndarray:
        try:
            return self._columns[name]
        except KeyError:
            raise SchemaError(name, f"attribute {name!r} absent from run {self._run_id!r}")

    def record(self, index: int) -> ObdRecord:
        extras = {
            name: float(self._columns[name][index])
            for name in self.extras
            if np.isfinite(self._columns[name][index])
        }
        return ObdRecord(
            self._run_id,
            self._route_id,
            float(self._t[index]),
            *(float(self._columns[name][index]) for name in (*PHYSICS_ATTRIBUTES, TARGET)),
            extras=extras,
        )

    def records(self) -> Iterator[ObdRecord]:
        return (self.record(i) for i in range(len(self)))

    def renamed(self, run_id: str) -> ObdRun:
        return ObdRun(run_id, self._route_id, self._t, self._columns)

    def take(self, index: np.ndarray, t: np.ndarray | None = None) -> ObdRun:
        return ObdRun(
            self._run_id,
            self._route_id,
            self._t[index] if t is None else t,
            {name: values[index] for name, values in self._columns.items()},
        )

    def equals(self, other: ObdRun) -> bool:
        if (self._run_id, self._route_id) != (other.run_id, other.route_id):
            return False
        if set(self._columns) != set(other.attributes):
            return False
        if not np.array_equal(self._t, other.t):
            return False
        return all(
            np.array_equal(values, other.column(name), equal_nan=True)
            for name, values in self._columns.items()
        )

    def __len__(self) -> int:
        return int(self._t.size)

    def __repr__(self) -> str:
        return f"ObdRun({self._run_id!r}, route={self._route_id!r}, n={len(self)})"


class ObdDataset:
    """An immutable collection of runs sharing one sample period."""

    __slots__ = ("_runs", "_index", "_sample_period", "_extras")

    def __init__(
        self,
        runs: Iterable[ObdRun],
        sample_period: float = 1.0,
        extras: Sequence[str] | None = None,
    ) -> None:
        if not sample_period > 0:
            raise ConfigError(f"sample_period must be > 0, got {sample_period}")
        self._runs = tuple(runs)
        self._sample_period = float(sample_period)
        self._index = {}
        for i, run in enumerate(self._runs):
            if run.run_id in self._index:
                raise DataError(f"duplicate run_id {run.run_id!r}")
            self._index[run.run_id] = i
        if extras is None:
            names: list[str] = []
            for run in self._runs:
                names.extend(n for n in run.extras if n not in names)
            extras = names
        self._extras = tuple(extras)

    @property
    def runs(self) -> tuple[ObdRun, ...]:
        return self._runs

    @property
    def run_ids(self) -> tuple[str, ...]:
        return tuple(run.run_id for run in self._runs)

    @property
    def sample_period(self) -> float:
        return self._sample_period

    @property
    def extras(self) -> tuple[str, ...]:
        return self._extras

    @property
    def n_samples(self) -> int:
        return sum(len(run) for run in self._runs)

    def run(self, run_id: str) -> ObdRun:
        return self._runs[self._index[run_id]]

    def routes(self) -> dict[str, list[str]]:
        routes: dict[str, list[str]] = {}
        for run in self._runs:
            routes.setdefault(run.route_id, []).append(run.run_id)
        return routes

    def subset(self, run_ids: Iterable[str]) -> ObdDataset:
        wanted = set(run_ids)
        unknown = wanted - set(self._index)
        if unknown:
            raise DataError(f"unknown run ids: {sorted(unknown)}")
        return ObdDataset(
            (run for run in self._runs if run.run_id in wanted),
            self._sample_period,
            self._extras,
        )

    def series(self, attribute: str) -> Series:
        """Per-run arrays of one attribute, keyed by run id.

        Extras missing from a run come back as all-NaN arrays.
        """
        result = {}
        for run in self._runs:
            if run.has(attribute):
                result[run.run_id] = run.column(attribute)
            elif attribute in self._extras:
                result[run.run_id] = np.full(len(run), np.nan)
            else:
                raise SchemaError(attribute, f"attribute {attribute!r} absent from dataset")
        return result

    def equals(self, other: ObdDataset) -> bool:
        return (
            self.run_ids == other.run_ids
            and self._sample_period == other.sample_period
            and all(a.equals(b) for a, b in zip(self._runs, other.runs))
        )

    def __len__(self) -> int:
        return len(self._runs)

    def __iter__(self) -> Iterator[ObdRun]:
        return iter(self._runs)

    def __repr__(self) -> str:
        return (
            f"ObdDataset(runs={len(self)}, samples={self.n_samples},"
            f" period={self._sample_period})"
        )


@dataclass(frozen=True)
class SplitSpec:
    train_run_ids: frozenset
    test_run_ids: frozenset

    def __post_init__(self) -> None:
        if self.train_run_ids & self.test_run_ids:
            raise ConfigError("train and test run ids overlap")

    def to_dict(self) -> dict:
        return {
            "train_run_ids": sorted(self.train_run_ids),
            "test_run_ids": sorted(self.test_run_ids),
        }


@dataclass(frozen=True)
class IngestReport:
    rows_read: int
    rows_dropped: int
    runs: int
    per_run_counts: Mapping[str, int]

    def to_dict(self) -> dict:
        return {
            "rows_read": self.rows_read,
            "rows_dropped": self.rows_dropped,
            "runs": self.runs,
            "per_run_counts": dict(self.per_run_counts),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _valid_rows(frame: pd.DataFrame) -> np.ndarray:
    values = frame[[*PHYSICS_ATTRIBUTES, TARGET, "t"]].to_numpy(dtype=float)
    ok = np.all(np.isfinite(values), axis=1)
    ok &= frame["engine_speed"].to_numpy() >= 0
    for name in ("intake_temp", "rail_pressure", "intake_pressure"):
        ok &= frame[name].to_numpy() > 0
    ok &= (frame["run_id"] != "").to_numpy() & (frame["route_id"] != "").to_numpy()
    return ok


def parse_csv(
    source: CsvSource,
    schema: Mapping[str, str] | None = None,
    sample_period: float = 1.0,
) -> tuple[ObdDataset, IngestReport]:
    """Parse an OBD CSV export into a dataset.

    Args:
        source: path, binary stream or raw bytes of a UTF-8 CSV
        with a header row.
        schema: csv column -> attribute mapping, defaults
        to DEFAULT_SCHEMA. Columns not in the schema are kept as extras
        under their own name.
        sample_period: nominal sample period of the export in seconds.

    Returns:
        The dataset and an ingest report counting dropped rows.

    Raises:
        SchemaError: a mandatory column is missing.
        EmptyDatasetError: the file holds no data row.
    """
    schema = dict(DEFAULT_SCHEMA if schema is None else schema)
    text = decode_text(read_source(source))
    if not text.strip():
        raise EmptyDatasetError("empty CSV input")
    try:
        frame = pd.read_csv(
            io.StringIO(text),
            dtype=str,
            keep_default_na=False,
        )
    except pd.errors.EmptyDataError as e:
        raise EmptyDatasetError("empty CSV input") from e

    present = {schema[c]: c for c in frame.columns if c in schema}
    for attribute in MANDATORY_ATTRIBUTES:
        if attribute not in present:
            column = next((c for c, a in schema.items() if a == attribute), attribute)
            raise SchemaError(column)
    if frame.empty:
        raise EmptyDatasetError("CSV has a header but no data row")

    extras = [c for c in frame.columns if c not in schema]
    data = pd.DataFrame(
        {
            "run_id": frame[present["run_id"]].str.strip(),
            "route_id": frame[present["route_id"]].str.strip(),
        }
    )
    for attribute in ("t", *PHYSICS_ATTRIBUTES, TARGET):
        data[attribute] = _to_float(frame[present[attribute]])
    for name in extras:
        data[name] = _to_float(frame[name])

    rows_read = len(data)
    keep = _valid_rows(data)
    dropped = int(rows_read - keep.sum())
    if dropped:
        logger.info("dropped %d of %d rows failing validity checks", dropped, rows_read)
    data = data[keep]
    if data.empty:
        raise EmptyDatasetError(f"all {rows_read} rows failed validity checks")

    runs = []
    counts: dict[str, int] = {}
    for run_id, group in data.groupby("run_id", sort=False):
        group = group.sort_values("t", kind="mergesort")
        duplicated = group["t"].duplicated(keep="first").to_numpy()
        if duplicated.any():
            logger.warning("run %s: dropping %d duplicated timestamps", run_id, duplicated.sum())
            dropped += int(duplicated.sum())
            group = group[~duplicated]
        routes = group["route_id"].unique()
        if len(routes) > 1:
            logger.warning("run %s spans routes %s, keeping %s", run_id, list(routes), routes[0])
        columns = {name: group[name].to_numpy() for name in (*PHYSICS_ATTRIBUTES, TARGET)}
        columns.update({name: group[name].to_numpy() for name in extras})
        runs.append(ObdRun(str(run_id), str(routes[0]), group["t"].to_numpy(), columns))
        counts[str(run_id)] = len(group)

    dataset = ObdDataset(runs, sample_period, extras)
    report = IngestReport(rows_read, dropped, len(runs), counts)
    logger.info("ingested %d rows into %d runs", rows_read - dropped, len(runs))
    return dataset, report


def _to_float(column: pd.Series) -> pd.Series:
    # empty or malformed cells are absent values, not zeros
    return pd.to_numeric(column.str.strip(), errors="coerce").astype(float)


def write_csv(
    dataset: ObdDataset, sink: FilePath | IO[str], schema: Mapping[str, str] | None = None
) -> None:
    """Write a dataset in the standard CSV layout.

    Floats are written with 17 significant digits so that
    parsing the output gives back the very same values.
    """
    schema = dict(DEFAULT_SCHEMA if schema is None else schema)
    columns = {attribute: column for column, attribute in schema.items()}
    frames = []
    for run in dataset:
        frame = {
            columns["run_id"]: [run.run_id] * len(run),
            columns["route_id"]: [run.route_id] * len(run),
            columns["t"]: run.t,
        }
        for name in (*PHYSICS_ATTRIBUTES, TARGET):
            frame[columns[name]] = run.column(name)
        for name in dataset.extras:
            frame[name] = run.column(name) if run.has(name) else np.full(len(run), np.nan)
        frames.append(pd.DataFrame(frame))
    header = [
        columns[a] for a in ("run_id", "route_id", "t", *PHYSICS_ATTRIBUTES, TARGET)
    ] + list(dataset.extras)
    table = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=header)
    if isinstance(sink, (str, Path)):
        table.to_csv(sink, index=False, float_format="%.17g", na_rep="", encoding="utf-8")
    else:
        table.to_csv(sink, index=False, float_format="%.17g", na_rep="")


def resample_uniform(dataset: ObdDataset, period: float) -> ObdDataset:
    """Re-grid every run at a constant spacing.

    Values are carried forward from the previous sample (zero-order hold).
    A gap longer than 5 periods splits the run, the pieces being
    renamed ``<run_id>-1``, ``<run_id>-2``, ... When one of these names
    is already a run id, the pieces become ``<run_id>-split<j>-1``, ...
    with the smallest j that clashes with nothing.
    """
    if not period > 0:
        raise ConfigError(f"resampling period must be > 0, got {period}")
    runs = []
    taken = set(dataset.run_ids)
    for run in dataset:
        if len(run) < 2:
            runs.append(run)
            continue
        t = run.t
        breaks = np.flatnonzero(np.diff(t) > GAP_FACTOR * period) + 1
        bounds = np.concatenate(([0], breaks, [len(t)]))
        pieces = [_hold(run.take(np.arange(a, b)), period) for a, b in zip(bounds, bounds[1:])]
        if len(pieces) > 1:
            logger.info("run %s split into %d runs at recording gaps", run.run_id, len(pieces))
            names = _piece_names(run.run_id, len(pieces), taken)
            taken.update(names)
            pieces = [p.renamed(name) for p, name in zip(pieces, names)]
        runs.extend(pieces)
    return ObdDataset(runs, period, dataset.extras)


def _piece_names(run_id: str, count: int, taken: set[str]) -> list[str]:
    names = [f"{run_id}-{i}" for i in range(1, count + 1)]
    j = 0
    while taken.intersection(names):
        j += 1
        names = [f"{run_id}-split{j}-{i}" for i in range(1, count + 1)]
    if j:
        logger.warning("run ids %s-1.. already exist, pieces named %s", run_id, names[0])
    return names


def _hold(run: ObdRun, period: float) -> ObdRun:
    t = run.t
    count = int(np.floor((t[-1] - t[0]) / period + 1e-9)) + 1
    grid = t[0] + np.arange(count) * period
    source = np.searchsorted(t, grid + 1e-9 * period, side="right") - 1
    return run.take(source, t=grid)


def split_train_test(dataset: ObdDataset, seed: int) -> SplitSpec:
    """Route-stratified split of the runs into train and test sets.

    Runs of each route are shuffled with a seeded generator and dealt
    alternately, each route starting on the side that currently holds
    fewer runs. A route with a single run goes to the training side.
    """
    if len(dataset) < 2:
        raise DataError("at least 2 runs are required to split a dataset")
    rng = np.random.default_rng(seed)
    train: list[str] = []
    test: list[str] = []
    for route, run_ids in sorted(dataset.routes().items()):
        if len(run_ids) == 1:
            logger.warning("route %s has a single run, assigned to training", route)
            train.extend(run_ids)
            continue
        order = rng.permutation(sorted(run_ids))
        sides = (train, test) if len(train) <= len(test) else (test, train)
        for i, run_id in enumerate(order):
            sides[i % 2].append(str(run_id))
    return SplitSpec(frozenset(train), frozenset(test))
