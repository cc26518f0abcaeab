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
"""Command line interface.

Every command reads the experiment config given by ``--config`` (the
shipped default otherwise) and writes its outputs under ``--out``.
Exit codes: 0 on success, 2 on a configuration error, 3 when the
pipeline fails.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Callable, Sequence

from stvanox import harness, miner
from stvanox.confighelper import SWEEP_AXES, ExperimentConfig
from stvanox.divergence import write_windows_csv
from stvanox.errors import ConfigError, StvaError
from stvanox.obd.dataset import parse_csv, write_csv
from stvanox.obd.synthgen import generate, write_labels_csv
from stvanox.physics import compute_features, write_features_csv
from stvanox.regression import write_predictions_csv
from stvanox.util import assert_dir

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PIPELINE = 3
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    if args.config is not None:
        config = ExperimentConfig.from_file(args.config)
    else:
        config = ExperimentConfig.default()
    if args.seed is not None:
        config = config.with_seed(args.seed)
    return config


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def cmd_synth(config: ExperimentConfig, out: Path, args: argparse.Namespace) -> None:
    """Write a synthetic dataset and its regime labels."""
    synth = config.synth_config()
    dataset, labels = generate(synth)
    write_csv(dataset, out / "obd.csv")
    write_labels_csv(dataset, labels, out / "labels.csv")
    _write_json(out / "synth_config.json", synth.to_dict())


def cmd_ingest(config: ExperimentConfig, out: Path, args: argparse.Namespace) -> None:
    """Parse an OBD export, write it back in standard form with its features."""
    source = args.csv or (None if config.is_synthetic else config.data)
    if source is None:
        raise ConfigError("ingest needs a CSV, from --csv or the config data")
    if not Path(source).is_file():
        raise ConfigError(f"data file not found: {source}")
    with open(source, "rb") as stream:
        dataset, report = parse_csv(stream, sample_period=config.sample_period)
    write_csv(dataset, out / "dataset.csv")
    write_features_csv(compute_features(dataset, config.physics_constants()), out / "features.csv")
    (out / "ingest.json").write_text(report.to_json() + "\n", encoding="utf-8")


def cmd_fit_base(config: ExperimentConfig, out: Path, args: argparse.Namespace) -> None:
    """Calibrate LOP and fit P-Base."""
    shared = harness.prepare(config)
    _write_json(
        out / "base.json",
        {
            "delta": shared.delta,
            "delta_scores": {str(k): v for k, v in sorted(shared.delta_scores.items())},
            "fit": shared.base.to_dict(),
            "lop": shared.lop.to_dict(),
        },
    )
    for split in harness.SPLITS:
        data = shared.train if split == "train" else shared.test
        write_predictions_csv(
            data, shared.predictions[split][harness.P_BASE], out / f"predictions_base_{split}.csv"
        )


def cmd_mine(config: ExperimentConfig, out: Path, args: argparse.Namespace) -> None:
    """Find divergent windows and mine the co-occurrence patterns."""
    report = harness.run_experiment(config)
    artifacts = report.artifacts
    write_windows_csv(artifacts.windows, artifacts.shared.train, out / "windows.csv")
    _write_json(out / "patterns.json", [p.to_dict() for p in report.patterns])
    print(miner.format_pattern_table(report.patterns))


def cmd_fit_pstva(config: ExperimentConfig, out: Path, args: argparse.Namespace) -> None:
    """Fit the partitioned model."""
    report = harness.run_experiment(config)
    (out / "model.json").write_text(report.artifacts.model.to_json() + "\n", encoding="utf-8")
    _write_json(out / "patterns.json", [p.to_dict() for p in report.patterns])


def cmd_evaluate(config: ExperimentConfig, out: Path, args: argparse.Namespace) -> None:
    """Run the whole experiment and write the report."""
    report = harness.run_experiment(config)
    (out / "report.json").write_text(report.to_json(), encoding="utf-8")
    _write_json(out / "timings.json", report.timings_s)
    harness.write_metrics_csv(report, out / "metrics.csv")
    _write_json(out / "patterns.json", [p.to_dict() for p in report.patterns])
    (out / "model.json").write_text(report.artifacts.model.to_json() + "\n", encoding="utf-8")
    for split in harness.SPLITS:
        print(harness.format_metrics_table(report, split))
        print()
    print(json.dumps(harness.improvements(report), indent=2))


def cmd_sweep(config: ExperimentConfig, out: Path, args: argparse.Namespace) -> None:
    """Sensitivity sweep over one axis."""
    points = harness.sensitivity_sweep(config, args.axis, args.values, reuse=not args.no_reuse)
    harness.write_sweep_csv(points, out / f"sweep_{args.axis}.csv")
    failed = [p.value for p in points if p.error is not None]
    if failed:
        logger.warning("sweep points failed: %s", failed)
    try:
        best = harness.sweep_optimum(points, "train")
    except ConfigError:
        print(f"{args.axis}: no successful point")
    else:
        print(f"{args.axis}: lowest training RMSE at {best:g}")


def cmd_scatter(config: ExperimentConfig, out: Path, args: argparse.Namespace) -> None:
    """Observed against predicted NOx for every method and split."""
    report = harness.run_experiment(config)
    artifacts = report.artifacts
    for split in harness.SPLITS:
        data = artifacts.shared.train if split == "train" else artifacts.shared.test
        for method in harness.METHODS:
            harness.emit_scatter(
                artifacts.predictions[split][method],
                artifacts.shared.observed[split],
                out / f"scatter_{method.lower().replace('-', '_')}_{split}.csv",
                {run.run_id: run.t for run in data},
            )


COMMANDS: dict[str, Callable[[ExperimentConfig, Path, argparse.Namespace], None]] = {
    "synth": cmd_synth,
    "ingest": cmd_ingest,
    "fit-base": cmd_fit_base,
    "mine": cmd_mine,
    "fit-pstva": cmd_fit_pstva,
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
    "scatter": cmd_scatter,
}


def _values(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"invalid value list {text!r}") from e


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stvanox", description="Variability-aware NOx prediction from OBD data."
    )
    parser.add_argument("--config", type=Path, help="experiment config (JSON)")
    parser.add_argument("--out", type=Path, default=Path("."), help="output directory")
    parser.add_argument(
        "--seed", type=int, help="split seed, and generator seed for synthetic data"
    )
    parser.add_argument(
        "--log-level",
        default="WARNING",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        type=str.upper,
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, func in COMMANDS.items():
        cmd = sub.add_parser(name, help=func.__doc__)
        if name == "ingest":
            cmd.add_argument("--csv", type=Path, help="CSV export, the config data otherwise")
        elif name == "sweep":
            cmd.add_argument("--axis", required=True, choices=SWEEP_AXES)
            cmd.add_argument("--values", required=True, type=_values, help="comma separated")
            cmd.add_argument(
                "--no-reuse", action="store_true", help="recompute the shared stages per point"
            )
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level, format=LOG_FORMAT)
    try:
        config = load_config(args)
        out = assert_dir(args.out, create=True)
        COMMANDS[args.command](config, out, args)
    except StvaError as e:
        logger.error("%s", e)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG if harness.stage_failed_by_config(e) else EXIT_PIPELINE
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_PIPELINE
    return EXIT_OK
