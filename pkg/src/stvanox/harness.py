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
"""Experiment orchestration.

An experiment ingests the data, splits the runs, computes the physics
features, then trains and evaluates the three predictors:

- LOP, the low-order physics model with a calibrated amplitude,
- P-Base, one power law over all training samples,
- P-STVA, one power law per co-occurrence pattern partition.

Divergent windows and patterns come from the training runs only.
"""
from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Any, Iterator, Mapping, Sequence

import numpy as np
import pandas as pd

from stvanox import divergence, miner, pstva, regression
from stvanox.confighelper import SWEEP_AXES, ExperimentConfig
from stvanox.divergence import DivergentWindow
from stvanox.errors import ConfigError, MinerError, StageError, StvaError
from stvanox.miner import CoOccurrencePattern, SymbolTable
from stvanox.obd import synthgen
from stvanox.obd.dataset import (
    PHYSICS_ATTRIBUTES,
    TARGET,
    IngestReport,
    ObdDataset,
    Series,
    SplitSpec,
    parse_csv,
    split_train_test,
)
from stvanox.physics import FeatureSeries, LopParams, calibrate_lop, compute_features, lop_predict
from stvanox.pstva import PartitionedModel, PstvaOptions
from stvanox.regression import FitReport, Metrics
from stvanox.system import memory, memory_rss, worker_count
from stvanox.util import FilePath

logger = logging.getLogger(__name__)

LOP = "LOP"
P_BASE = "P-Base"
P_STVA = "P-STVA"
METHODS = (LOP, P_BASE, P_STVA)
SPLITS = ("train", "test")


@contextmanager
def _stage(name: str, timings: dict[str, float]) -> Iterator[None]:
    start = time.perf_counter()
    try:
        yield
    except StageError:
        raise
    except Exception as e:
        raise StageError(name, e) from e
    finally:
        timings[name] = time.perf_counter() - start
        logger.info("stage %s: %.3f s, rss %s", name, timings[name], memory_rss())


@dataclass
class SharedStages:
    """Results of the stages no sweep axis affects.

    Ingest, split, features, delta selection, LOP and P-Base only depend
    on the data source, the split seed and the fitting options, so sweep
    points computed from the same base config share them.
    """

    dataset: ObdDataset
    ingest: IngestReport | None
    labels: Series | None
    split: SplitSpec
    train: ObdDataset
    test: ObdDataset
    features: dict[str, FeatureSeries]
    observed: dict[str, Series]
    delta: int
    delta_scores: dict[int, float | None]
    lop: LopParams
    base: FitReport
    predictions: dict[str, dict[str, Series]]
    timings: dict[str, float] = field(default_factory=dict)


@dataclass
class Artifacts:
    """Intermediate results kept for the command line outputs."""

    shared: SharedStages
    windows: list[DivergentWindow]
    symbols: dict[str, SymbolTable]
    model: PartitionedModel
    predictions: dict[str, dict[str, Series]]


@dataclass
class ExperimentReport:
    """Metrics of every method on both splits, with what produced them."""

    metrics: dict[str, dict[str, Metrics]]
    patterns: list[CoOccurrencePattern] = field(default_factory=list)
    partition_counts: list[int] = field(default_factory=list)
    fallbacks: list[int] = field(default_factory=list)
    delta: int = 1
    delta_scores: dict[int, float | None] = field(default_factory=dict)
    n_divergent_windows: int = 0
    split: dict[str, list[str]] = field(default_factory=dict)
    lop: dict[str, float] = field(default_factory=dict)
    base: dict[str, Any] = field(default_factory=dict)
    ingest: dict[str, Any] | None = None
    config: dict[str, Any] = field(default_factory=dict)
    timings_s: dict[str, float] = field(default_factory=dict, compare=False)
    artifacts: Artifacts | None = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        if set(self.metrics) != set(METHODS):
            raise ConfigError(f"report needs metrics for {METHODS}, got {sorted(self.metrics)}")
        for method, per_split in self.metrics.items():
            if set(per_split) != set(SPLITS):
                raise ConfigError(f"{method}: report needs metrics for splits {SPLITS}")

    def to_dict(self, timings: bool = False) -> dict:
        data = {
            "metrics": {
                m: {s: self.metrics[m][s].to_dict() for s in SPLITS} for m in METHODS
            },
            "patterns": [p.to_dict() for p in self.patterns],
            "partition_counts": list(self.partition_counts),
            "fallbacks": list(self.fallbacks),
            "delta": self.delta,
            "delta_scores": {str(k): v for k, v in sorted(self.delta_scores.items())},
            "n_divergent_windows": self.n_divergent_windows,
            "split": self.split,
            "lop": self.lop,
            "base": self.base,
            "ingest": self.ingest,
            "config": self.config,
        }
        if timings:
            data["timings_s"] = dict(self.timings_s)
        return data

    def to_json(self) -> str:
        """Deterministic JSON form, timings excluded."""
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data: Mapping) -> ExperimentReport:
        return cls(
            {
                m: {s: Metrics.from_dict(v) for s, v in per_split.items()}
                for m, per_split in data["metrics"].items()
            },
            [CoOccurrencePattern.from_dict(p) for p in data.get("patterns", ())],
            list(data.get("partition_counts", ())),
            list(data.get("fallbacks", ())),
            int(data.get("delta", 1)),
            {int(k): v for k, v in data.get("delta_scores", {}).items()},
            int(data.get("n_divergent_windows", 0)),
            dict(data.get("split", {})),
            dict(data.get("lop", {})),
            dict(data.get("base", {})),
            data.get("ingest"),
            dict(data.get("config", {})),
            dict(data.get("timings_s", {})),
        )

    @classmethod
    def from_json(cls, text: str) -> ExperimentReport:
        return cls.from_dict(json.loads(text))


def load_dataset(
    config: ExperimentConfig,
) -> tuple[ObdDataset, IngestReport | None, Series | None]:
    """The dataset of `config`, with its ingest report or regime labels."""
    if config.is_synthetic:
        dataset, labels = synthgen.generate(config.synth_config())
        return dataset, None, labels
    with open(config.data, "rb") as stream:
        dataset, report = parse_csv(stream, sample_period=config.sample_period)
    return dataset, report, None


def prepare(config: ExperimentConfig, timings: dict[str, float] | None = None) -> SharedStages:
    """Run the stages shared by every sweep point of `config`."""
    timings = {} if timings is None else timings
    lm = config.lm_options()

    with _stage("ingest", timings):
        dataset, ingest, labels = load_dataset(config)
        split = split_train_test(dataset, config.split_seed)
        train = dataset.subset(sorted(split.train_run_ids))
        test = dataset.subset(sorted(split.test_run_ids))
        logger.info("split %d runs into %d train and %d test", len(dataset), len(train), len(test))

    with _stage("features", timings):
        constants = config.physics_constants()
        features = {s: compute_features(part, constants) for s, part in zip(SPLITS, (train, test))}
        observed = {"train": train.series(TARGET), "test": test.series(TARGET)}

    with _stage("lop", timings):
        lop = calibrate_lop(features["train"], observed["train"], config.lop_params())
        predictions = {s: {LOP: lop_predict(features[s], lop)} for s in SPLITS}

    with _stage("base", timings):
        if config.delta_candidates:
            delta, scores = regression.select_delta(
                features["train"], observed["train"], config.delta_candidates, lm
            )
        else:
            delta, scores = int(config.delta), {}
        samples = regression.build_samples(features["train"], observed["train"], delta)
        base = regression.fit_power_law(samples, lm)
        for s in SPLITS:
            predictions[s][P_BASE] = regression.predict(base.params, features[s])

    return SharedStages(
        dataset,
        ingest,
        labels,
        split,
        train,
        test,
        features,
        observed,
        delta,
        scores,
        lop,
        base,
        predictions,
        dict(timings),
    )


def mining_attributes(config: ExperimentConfig, dataset: ObdDataset) -> list[str]:
    present = set(PHYSICS_ATTRIBUTES) | set(dataset.extras)
    return [a for a in config.miner_config().mining_attributes if a in present]


def run_experiment(
    config: ExperimentConfig, shared: SharedStages | None = None
) -> ExperimentReport:
    """Train and evaluate LOP, P-Base and P-STVA.

    `shared` holds already computed shared stages of a config with the
    same data, split and fitting settings; they are computed otherwise.

    Raises:
        StageError: a stage failed, the original error is chained.
    """
    timings: dict[str, float] = {}
    if shared is None:
        shared = prepare(config, timings)
    divergence_config = config.divergence_config()
    period = shared.dataset.sample_period

    with _stage("divergence", timings):
        window_len = divergence_config.window_samples(period)
        errors = divergence.per_step_errors(
            shared.predictions["train"][P_BASE], shared.observed["train"]
        )
        windows = divergence.find_divergent_windows(errors, divergence_config, period)

    with _stage("mine", timings):
        discretizer = miner.fit_discretizer(shared.train, mining_attributes(config, shared.train))
        symbols = {"train": miner.symbolize(shared.train, discretizer)}
        if not windows:
            logger.warning("no divergent window in the training runs, no pattern mined")
            mined = []
        else:
            try:
                mined = miner.mine_patterns(
                    symbols["train"], windows, config.miner_config(), window_len
                )
            except MinerError as e:
                logger.warning("mining failed: %s", e)
                mined = []
        patterns = miner.select_top_n(mined, int(config.n_patterns))

    with _stage("pstva", timings):
        options = PstvaOptions(
            window_len, shared.delta, int(config.min_partition_samples), config.lm_options()
        )
        model = pstva.fit(
            shared.features["train"],
            shared.observed["train"],
            symbols["train"],
            patterns,
            discretizer,
            options,
            shared.base,
        )
        symbols["test"] = model.symbolize(shared.test)
        predictions = {s: dict(shared.predictions[s]) for s in SPLITS}
        for s in SPLITS:
            predictions[s][P_STVA] = pstva.predict(model, shared.features[s], symbols[s])

    with _stage("evaluate", timings):
        metrics = {
            m: {
                s: regression.compute_metrics(predictions[s][m], shared.observed[s])
                for s in SPLITS
            }
            for m in METHODS
        }
    report = ExperimentReport(
        metrics,
        list(patterns),
        list(model.partition_counts),
        sorted(model.fallbacks),
        shared.delta,
        dict(shared.delta_scores),
        len(windows),
        shared.split.to_dict(),
        shared.lop.to_dict(),
        shared.base.to_dict(),
        shared.ingest.to_dict() if shared.ingest is not None else None,
        config.as_dict(),
        {**shared.timings, **timings},
        Artifacts(shared, windows, symbols, model, predictions),
    )
    for s in SPLITS:
        logger.info(
            "%s rmse: %s",
            s,
            ", ".join(f"{m} {metrics[m][s].rmse:.4g}" for m in METHODS),
        )
    return report


@dataclass
class SweepPoint:
    axis: str
    value: float
    report: ExperimentReport | None = None
    error: str | None = None

    def rows(self) -> list[dict]:
        base = {"axis": self.axis, "value": self.value}
        if self.report is None:
            return [
                {**base, "split": s, "method": m, "error": self.error}
                for s in SPLITS
                for m in METHODS
            ]
        rows = []
        for s in SPLITS:
            for m in METHODS:
                metrics = self.report.metrics[m][s]
                rows.append(
                    {
                        **base,
                        "split": s,
                        "method": m,
                        "r2": metrics.r2,
                        "rmse": metrics.rmse,
                        "mae": metrics.mae,
                        "n": metrics.n,
                        "n_divergent_windows": self.report.n_divergent_windows,
                        "n_patterns": len(self.report.patterns),
                        "error": None,
                    }
                )
        return rows


def sensitivity_sweep(
    config: ExperimentConfig,
    axis: str,
    values: Sequence[float],
    reuse: bool = True,
    workers: int | None = None,
) -> list[SweepPoint]:
    """One experiment per value of `axis`, every other setting unchanged.

    Points run concurrently and come back in value order. A failing
    point keeps its error message and the sweep goes on.

    Raises:
        ConfigError: unknown axis or empty values.
        StageError: a shared stage failed.
    """
    if axis not in SWEEP_AXES:
        raise ConfigError(f"unknown sweep axis {axis!r}, expected one of {SWEEP_AXES}")
    if not values:
        raise ConfigError("a sweep needs at least one value")
    shared = prepare(config) if reuse else None

    def point(value: float) -> SweepPoint:
        try:
            report = run_experiment(config.with_axis(axis, value), shared)
        except StvaError as e:
            logger.warning("sweep %s=%s failed: %s", axis, value, e)
            return SweepPoint(axis, value, error=str(e))
        report.artifacts = None
        return SweepPoint(axis, value, report)

    count = worker_count(config.workers if workers is None else workers, len(values))
    logger.info(
        "sweeping %s over %d values with %d workers, %s available",
        axis,
        len(values),
        count,
        memory().available,
    )
    with ThreadPoolExecutor(max_workers=count) as executor:
        return list(executor.map(point, values))


def sweep_frame(points: Sequence[SweepPoint]) -> pd.DataFrame:
    """Long format table, one row per value, split and method."""
    columns = [
        "axis",
        "value",
        "split",
        "method",
        "r2",
        "rmse",
        "mae",
        "n",
        "n_divergent_windows",
        "n_patterns",
        "error",
    ]
    return pd.DataFrame([row for p in points for row in p.rows()], columns=columns)


def write_sweep_csv(points: Sequence[SweepPoint], sink: FilePath | IO[str]) -> None:
    sweep_frame(points).to_csv(sink, index=False, float_format="%.17g", na_rep="")


def sweep_optimum(
    points: Sequence[SweepPoint], split: str = "train", metric: str = "rmse", method: str = P_STVA
) -> float:
    """Swept value with the lowest metric, the smaller value on ties.

    R^2 is maximized, the error metrics minimized.

    Raises:
        ConfigError: no point succeeded.
    """
    if metric not in ("r2", "rmse", "mae"):
        raise ConfigError(f"unknown metric {metric!r}")
    scored = []
    for p in points:
        if p.report is None:
            continue
        value = getattr(p.report.metrics[method][split], metric)
        if value is None:
            continue
        scored.append((-value if metric == "r2" else value, p.value))
    if not scored:
        raise ConfigError("no successful sweep point")
    return min(scored)[1]


def _reduction(reference: float, value: float) -> float | None:
    if reference == 0:
        return None
    return 100.0 * (reference - value) / reference


def improvements(report: ExperimentReport) -> dict[str, dict[str, dict[str, float | None]]]:
    """Percentage RMSE and MAE reduction of P-Base over LOP and P-STVA over P-Base."""
    result = {}
    for s in SPLITS:
        result[s] = {}
        for new, reference in ((P_BASE, LOP), (P_STVA, P_BASE)):
            m_new = report.metrics[new][s]
            m_ref = report.metrics[reference][s]
            result[s][f"{new} vs {reference}"] = {
                "rmse_pct": _reduction(m_ref.rmse, m_new.rmse),
                "mae_pct": _reduction(m_ref.mae, m_new.mae),
            }
    return result


def format_metrics_table(report: ExperimentReport, split: str) -> str:
    """Method | R^2 | RMSE | MAE table of one split."""
    if split not in SPLITS:
        raise ConfigError(f"unknown split {split!r}")
    label = "training" if split == "train" else "testing"
    lines = [
        f"NOx predictive accuracy for {label} data",
        f"{'Prediction method':<20} {'R^2':>8} {'RMSE':>10} {'MAE':>10}",
    ]
    n = report.config.get("n_patterns", len(report.patterns))
    for m in METHODS:
        metrics = report.metrics[m][split]
        name = f"{m} n = {n}" if m == P_STVA else m
        r2 = "n/a" if metrics.r2 is None else f"{metrics.r2:.4f}"
        lines.append(f"{name:<20} {r2:>8} {metrics.rmse:>10.2f} {metrics.mae:>10.2f}")
    return "\n".join(lines)


def write_metrics_csv(report: ExperimentReport, sink: FilePath | IO[str]) -> None:
    rows = [
        {"split": s, "method": m, **report.metrics[m][s].to_dict()}
        for s in SPLITS
        for m in METHODS
    ]
    pd.DataFrame(rows, columns=["split", "method", "r2", "rmse", "mae", "n"]).to_csv(
        sink, index=False, float_format="%.17g", na_rep=""
    )


def emit_scatter(
    pred: Series,
    obs: Series,
    path: FilePath,
    t: Series | None = None,
    sample_period: float = 1.0,
) -> tuple[Path, Path]:
    """Observed against predicted points, plus a JSON summary.

    Writes the points defined in both series to `path` as CSV and the
    summary (count, y = x reference, common axis bounds, largest
    absolute residual) next to it with a ``.json`` suffix.

    Returns:
        The CSV and summary paths.
    """
    path = Path(path)
    frames = []
    for run_id in sorted(pred):
        p = np.asarray(pred[run_id], dtype=float)
        o = np.asarray(obs[run_id], dtype=float)
        times = np.asarray(t[run_id]) if t is not None else np.arange(p.size) * sample_period
        both = np.isfinite(p) & np.isfinite(o)
        frames.append(
            pd.DataFrame(
                {
                    "observed_ppm": o[both],
                    "predicted_ppm": p[both],
                    "run_id": run_id,
                    "t_s": times[both],
                }
            )
        )
    columns = ["observed_ppm", "predicted_ppm", "run_id", "t_s"]
    table = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=columns)
    table = table[columns]
    table.to_csv(path, index=False, float_format="%.17g")

    summary: dict[str, Any] = {"n": len(table), "reference": {"slope": 1.0, "intercept": 0.0}}
    if len(table):
        values = table[["observed_ppm", "predicted_ppm"]].to_numpy(dtype=float)
        summary["bounds"] = [float(values.min()), float(values.max())]
        residuals = np.abs(values[:, 1] - values[:, 0])
        summary["max_abs_residual"] = float(residuals.max())
    else:
        summary["bounds"] = None
        summary["max_abs_residual"] = None
    summary_path = path.with_suffix(".json")
    summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    logger.info("wrote %d scatter points to %s", summary["n"], path)
    return path, summary_path


def stage_failed_by_config(error: BaseException) -> bool:
    """True when `error` comes from an invalid configuration."""
    if isinstance(error, ConfigError):
        return True
    return isinstance(error, StageError) and error.is_config_error
