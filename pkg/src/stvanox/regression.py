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
"""Power-law NOx regression.

The model is ``y(k + delta) = a * t_adiab(k)**b * t_comb(k)**c`` in ppm,
fitted by Levenberg-Marquardt in linear space and initialised by
ordinary least squares in log space.
"""
from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass
from typing import IO, Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

from stvanox.errors import (
    BuildError,
    ConfigError,
    FitError,
    InitError,
    MetricsError,
    SelectionError,
)
from stvanox.obd.dataset import TARGET, ObdDataset, Series
from stvanox.physics import FeatureSeries
from stvanox.util import FilePath

logger = logging.getLogger(__name__)

MAX_HALVINGS = 60
MAX_DAMPING = 1e16


@dataclass(frozen=True)
class PowerLawParams:
    a: float
    b: float
    c: float
    delta: int = 1

    def __post_init__(self) -> None:
        if not all(math.isfinite(v) for v in (self.a, self.b, self.c)):
            raise ConfigError(f"power-law parameters must be finite: {self}")
        if not self.a > 0:
            raise ConfigError(f"power-law amplitude must be > 0, got {self.a}")
        if isinstance(self.delta, bool) or int(self.delta) != self.delta or self.delta < 0:
            raise ConfigError(f"delta must be an integer >= 0, got {self.delta!r}")
        object.__setattr__(self, "delta", int(self.delta))

    @property
    def abc(self) -> tuple[float, float, float]:
        return (self.a, self.b, self.c)

    def evaluate(self, t_adiab: np.ndarray, t_comb: np.ndarray) -> np.ndarray:
        return power_law(self.a, self.b, self.c, t_adiab, t_comb)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping) -> PowerLawParams:
        return cls(float(data["a"]), float(data["b"]), float(data["c"]), int(data["delta"]))


def power_law(a: float, b: float, c: float, t_adiab, t_comb):
    """a * t_adiab**b * t_comb**c, the single evaluation path of every predictor."""
    return a * np.power(t_adiab, b) * np.power(t_comb, c)


@dataclass(frozen=True)
class FitReport:
    params: PowerLawParams
    iterations: int
    converged: bool
    sse_initial: float
    sse_final: float
    n_samples: int
    stderr: tuple[float, float, float] | None = None

    @property
    def rmse(self) -> float:
        return math.sqrt(self.sse_final / self.n_samples)

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "iterations": self.iterations,
            "converged": self.converged,
            "sse_initial": self.sse_initial,
            "sse_final": self.sse_final,
            "n_samples": self.n_samples,
            "stderr": None if self.stderr is None else list(self.stderr),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> FitReport:
        stderr = data.get("stderr")
        return cls(
            PowerLawParams.from_dict(data["params"]),
            int(data["iterations"]),
            bool(data["converged"]),
            float(data["sse_initial"]),
            float(data["sse_final"]),
            int(data["n_samples"]),
            None if stderr is None else tuple(float(v) for v in stderr),
        )


@dataclass(frozen=True)
class Metrics:
    r2: float | None
    rmse: float
    mae: float
    n: int

    def __post_init__(self) -> None:
        if self.n < 1:
            raise MetricsError("metrics need at least one sample")
        if not self.rmse >= self.mae >= 0:
            raise MetricsError(f"inconsistent metrics rmse={self.rmse} mae={self.mae}")

    def to_dict(self) -> dict:
        return {"r2": self.r2, "rmse": self.rmse, "mae": self.mae, "n": self.n}

    @classmethod
    def from_dict(cls, data: Mapping) -> Metrics:
        r2 = data.get("r2")
        return cls(
            None if r2 is None else float(r2),
            float(data["rmse"]),
            float(data["mae"]),
            int(data["n"]),
        )


@dataclass(frozen=True)
class LmOptions:
    max_iterations: int = 200
    lambda_init: float = 1e-3
    lambda_up: float = 10.0
    lambda_down: float = 0.1
    rel_tol: float = 1e-10
    min_samples: int = 10

    def __post_init__(self) -> None:
        for f in dataclasses.fields(self):
            if not getattr(self, f.name) > 0:
                raise ConfigError(f"LM option {f.name} must be > 0")
        if not self.lambda_up > 1:
            raise ConfigError("lambda_up must be > 1")
        if not self.lambda_down < 1:
            raise ConfigError("lambda_down must be < 1")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping | None) -> LmOptions:
        data = dict(data or {})
        known = {f.name for f in dataclasses.fields(cls)}
        if set(data) - known:
            raise ConfigError(f"unknown LM options: {sorted(set(data) - known)}")
        return cls(**data)


class SampleSet:
    """Regression samples ``(t_adiab(k), t_comb(k)) -> y(k + delta)``.

    Samples are grouped by run in feature order; ``k`` holds the
    source timestep of each sample within its run.
    """

    __slots__ = ("_t_adiab", "_t_comb", "_y", "_k", "_spans", "_delta")

    def __init__(
        self,
        t_adiab: np.ndarray,
        t_comb: np.ndarray,
        y: np.ndarray,
        k: np.ndarray,
        spans: Mapping[str, slice],
        delta: int,
    ) -> None:
        self._t_adiab = np.asarray(t_adiab, dtype=float)
        self._t_comb = np.asarray(t_comb, dtype=float)
        self._y = np.asarray(y, dtype=float)
        self._k = np.asarray(k, dtype=int)
        self._spans = dict(spans)
        self._delta = int(delta)

    @property
    def t_adiab(self) -> np.ndarray:
        return self._t_adiab

    @property
    def t_comb(self) -> np.ndarray:
        return self._t_comb

    @property
    def y(self) -> np.ndarray:
        return self._y

    @property
    def k(self) -> np.ndarray:
        return self._k

    @property
    def delta(self) -> int:
        return self._delta

    @property
    def run_ids(self) -> tuple[str, ...]:
        return tuple(self._spans)

    def span(self, run_id: str) -> slice:
        return self._spans[run_id]

    def lookup(self, values: Series) -> np.ndarray:
        """Pick ``values[run][k]`` for every sample."""
        out = np.empty(len(self), dtype=np.asarray(next(iter(values.values()))).dtype)
        for run_id, span in self._spans.items():
            out[span] = np.asarray(values[run_id])[self._k[span]]
        return out

    def select(self, mask: np.ndarray) -> SampleSet:
        mask = np.asarray(mask, dtype=bool)
        spans = {}
        start = 0
        for run_id, span in self._spans.items():
            count = int(mask[span].sum())
            if count:
                spans[run_id] = slice(start, start + count)
            start += count
        return SampleSet(
            self._t_adiab[mask],
            self._t_comb[mask],
            self._y[mask],
            self._k[mask],
            spans,
            self._delta,
        )

    def __len__(self) -> int:
        return int(self._y.size)

    def __repr__(self) -> str:
        return f"SampleSet(n={len(self)}, runs={len(self._spans)}, delta={self._delta})"


def build_samples(features: FeatureSeries, observed: Series, delta: int) -> SampleSet:
    """Pair valid features at k with the observation at k + delta.

    Pairs never cross a run boundary.

    Raises:
        BuildError: no sample could be formed.
    """
    if int(delta) != delta or delta < 0:
        raise ConfigError(f"delta must be an integer >= 0, got {delta!r}")
    delta = int(delta)
    parts: list[tuple] = []
    spans = {}
    start = 0
    n_steps = 0
    n_valid = 0
    for run in features:
        n = len(run)
        n_steps += n
        n_valid += int(run.valid.sum())
        if n <= delta:
            continue
        y = np.asarray(observed[run.run_id], dtype=float)[delta:]
        k = np.flatnonzero(run.valid[: n - delta] & np.isfinite(y))
        if not k.size:
            continue
        parts.append((run.t_adiab[k], run.t_comb[k], y[k], k))
        spans[run.run_id] = slice(start, start + k.size)
        start += k.size
    if not parts:
        raise BuildError(
            f"no regression sample: {n_steps} timesteps, {n_valid} valid, delta={delta}"
        )
    columns = [np.concatenate(c) for c in zip(*parts)]
    samples = SampleSet(*columns, spans=spans, delta=delta)
    logger.debug("built %d samples from %d valid timesteps", len(samples), n_valid)
    return samples


def log_ols_init(samples: SampleSet, min_samples: int = 10) -> tuple[float, float, float]:
    """Initial (a, b, c) from least squares on the log of the model.

    Only samples with y > 0 take part. A constant regressor is
    dropped and its exponent set to 0.

    Raises:
        InitError: fewer than `min_samples` positive targets.
    """
    positive = samples.y > 0
    count = int(positive.sum())
    if count < min_samples:
        raise InitError(f"log-space init needs {min_samples} positive targets, got {count}")
    log_y = np.log(samples.y[positive])
    regressors = {
        "b": np.log(samples.t_adiab[positive]),
        "c": np.log(samples.t_comb[positive]),
    }
    kept = [name for name, col in regressors.items() if np.ptp(col) > 0]
    for name in regressors.keys() - set(kept):
        logger.info("log-space init: constant regressor, exponent %s set to 0", name)
    design = np.column_stack([np.ones(count), *(regressors[name] for name in kept)])
    coef, *_ = np.linalg.lstsq(design, log_y, rcond=None)
    exponents = dict.fromkeys(regressors, 0.0)
    exponents.update(zip(kept, coef[1:]))
    return float(np.exp(coef[0])), float(exponents["b"]), float(exponents["c"])


def jacobian(
    abc: Sequence[float], t_adiab: np.ndarray, t_comb: np.ndarray
) -> np.ndarray:
    """Partial derivatives of the model with respect to (a, b, c), one row per sample."""
    a, b, c = abc
    base = power_law(1.0, b, c, t_adiab, t_comb)
    return np.column_stack(
        [base, a * base * np.log(t_adiab), a * base * np.log(t_comb)]
    )


def _residuals(abc, samples: SampleSet) -> np.ndarray:
    return samples.y - power_law(*abc, samples.t_adiab, samples.t_comb)


def power_law_sse(params: PowerLawParams, samples: SampleSet) -> float:
    r = _residuals(params.abc, samples)
    return float(r @ r)


def fit_lm(
    samples: SampleSet, init: Sequence[float], opts: LmOptions | None = None
) -> FitReport:
    """Levenberg-Marquardt least squares fit of the power law.

    Damping is scaled by the diagonal of ``J^T J`` and multiplied by
    `lambda_down` on an accepted step, `lambda_up` on a rejected one.
    A step that would make ``a <= 0`` is halved until it does not.

    Raises:
        FitError: too few samples, or a non-finite residual at `init`.
    """
    opts = opts or LmOptions()
    if len(samples) < opts.min_samples:
        raise FitError(f"fit needs {opts.min_samples} samples, got {len(samples)}")
    p = np.array(init, dtype=float)
    if p.shape != (3,) or not np.all(np.isfinite(p)) or not p[0] > 0:
        raise FitError(f"invalid initial parameters {tuple(init)}")

    r = _residuals(p, samples)
    bad = np.flatnonzero(~np.isfinite(r))
    if bad.size:
        raise FitError(f"non-finite residual at sample {bad[0]}", index=int(bad[0]))
    sse = float(r @ r)
    sse_initial = sse
    damping = opts.lambda_init
    converged = sse == 0.0
    iterations = 0

    while not converged and iterations < opts.max_iterations:
        iterations += 1
        J = jacobian(p, samples.t_adiab, samples.t_comb)
        scale = np.sqrt(np.maximum(np.einsum("ij,ij->j", J, J), np.finfo(float).tiny))
        augmented = np.vstack([J, np.diag(math.sqrt(damping) * scale)])
        step, *_ = np.linalg.lstsq(augmented, np.concatenate([r, np.zeros(3)]), rcond=None)
        for _ in range(MAX_HALVINGS):
            if p[0] + step[0] > 0:
                break
            step = step / 2
        trial = p + step
        if np.array_equal(trial, p):
            converged = True
            break
        fitted = J @ step
        predicted = sse - float((r - fitted) @ (r - fitted))
        r_trial = _residuals(trial, samples)
        sse_trial = float(r_trial @ r_trial) if np.all(np.isfinite(r_trial)) else math.inf
        logger.debug(
            "lm iteration %d: sse=%.9g trial=%.9g lambda=%.3g", iterations, sse, sse_trial, damping
        )
        if trial[0] > 0 and sse_trial < sse:
            decrease = (sse - sse_trial) / sse
            p, r, sse = trial, r_trial, sse_trial
            damping *= opts.lambda_down
            converged = decrease < opts.rel_tol or sse == 0.0
        else:
            damping *= opts.lambda_up
            converged = predicted <= opts.rel_tol * sse or damping > MAX_DAMPING

    if not converged:
        logger.warning("LM fit stopped after %d iterations without converging", iterations)
    params = PowerLawParams(float(p[0]), float(p[1]), float(p[2]), samples.delta)
    return FitReport(
        params,
        iterations,
        converged,
        sse_initial,
        sse,
        len(samples),
        _stderr(p, samples, sse),
    )


def _stderr(p: np.ndarray, samples: SampleSet, sse: float) -> tuple[float, float, float] | None:
    dof = len(samples) - 3
    if dof <= 0:
        return None
    J = jacobian(p, samples.t_adiab, samples.t_comb)
    cov = sse / dof * np.linalg.pinv(J.T @ J)
    return tuple(float(v) for v in np.sqrt(np.clip(np.diag(cov), 0.0, None)))


def fit_power_law(
    samples: SampleSet,
    opts: LmOptions | None = None,
    init: Sequence[float] | None = None,
) -> FitReport:
    """Fit from the log-space initial guess, or from `init` when given."""
    opts = opts or LmOptions()
    if init is None:
        init = log_ols_init(samples, opts.min_samples)
    report = fit_lm(samples, init, opts)
    logger.info(
        "fitted a=%.6g b=%.6g c=%.6g on %d samples, rmse=%.6g",
        *report.params.abc,
        report.n_samples,
        report.rmse,
    )
    return report


def shift(values: np.ndarray, delta: int) -> np.ndarray:
    """Move per-timestep values from k to k + delta within one run."""
    out = np.full(values.shape, np.nan)
    if delta < values.size:
        out[delta:] = values[: values.size - delta]
    return out


def predict(params: PowerLawParams, features: FeatureSeries) -> Series:
    """Predictions aligned at k + delta, NaN where undefined."""
    result = {}
    for run in features:
        with np.errstate(invalid="ignore", over="ignore"):
            values = params.evaluate(run.t_adiab, run.t_comb)
        result[run.run_id] = shift(np.where(run.valid, values, np.nan), params.delta)
    return result


def _flatten(series: Series | np.ndarray, keys: Iterable[str] | None) -> np.ndarray:
    if isinstance(series, Mapping):
        return np.concatenate([np.asarray(series[k], dtype=float) for k in keys] or [[]])
    return np.asarray(series, dtype=float)


def compute_metrics(pred: Series | np.ndarray, obs: Series | np.ndarray) -> Metrics:
    """R^2, RMSE and MAE over the points where both series are defined.

    R^2 is reported as None when the observations are constant and
    the predictions miss them.

    Raises:
        MetricsError: the series share no defined point.
    """
    keys = list(pred) if isinstance(pred, Mapping) else None
    p = _flatten(pred, keys)
    o = _flatten(obs, keys)
    if p.shape != o.shape:
        raise MetricsError(f"misaligned series: {p.shape} vs {o.shape}")
    both = np.isfinite(p) & np.isfinite(o)
    n = int(both.sum())
    if n == 0:
        raise MetricsError("prediction and observation share no defined point")
    p, o = p[both], o[both]
    err = p - o
    ss_res = float(err @ err)
    rmse = math.sqrt(ss_res / n)
    mae = float(np.mean(np.abs(err)))
    dev = o - o.mean()
    ss_tot = float(dev @ dev)
    if ss_tot > 0:
        r2 = 1.0 - ss_res / ss_tot
    else:
        r2 = 1.0 if ss_res == 0 else None
    # sqrt(mean e^2) >= mean |e| holds exactly, rounding aside
    return Metrics(r2, max(rmse, mae), mae, n)


def select_delta(
    features: FeatureSeries,
    observed: Series,
    candidates: Sequence[int],
    opts: LmOptions | None = None,
) -> tuple[int, dict[int, float | None]]:
    """Pick the lag with the lowest training RMSE, the smaller lag on ties.

    Candidates whose fit fails are reported with a None RMSE.

    Raises:
        SelectionError: every candidate failed.
    """
    if not candidates:
        raise ConfigError("delta candidates must not be empty")
    scores: dict[int, float | None] = {}
    for delta in candidates:
        try:
            report = fit_power_law(build_samples(features, observed, delta), opts)
        except FitError as e:
            logger.warning("delta=%d: fit failed: %s", delta, e)
            scores[int(delta)] = None
            continue
        scores[int(delta)] = report.rmse
    ranked = sorted((rmse, delta) for delta, rmse in scores.items() if rmse is not None)
    if not ranked:
        raise SelectionError(f"no delta candidate could be fitted among {list(candidates)}")
    best = ranked[0][1]
    logger.info("selected delta=%d (train rmse %.6g)", best, ranked[0][0])
    return best, scores


def write_predictions_csv(
    dataset: ObdDataset, pred: Series, sink: FilePath | IO[str]
) -> None:
    frames = [
        pd.DataFrame(
            {
                "run_id": run.run_id,
                "t_s": run.t,
                "nox_pred_ppm": pred[run.run_id],
                "nox_obs_ppm": run.column(TARGET),
            }
        )
        for run in dataset
        if run.run_id in pred
    ]
    columns = ["run_id", "t_s", "nox_pred_ppm", "nox_obs_ppm"]
    table = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=columns)
    table.to_csv(sink, index=False, float_format="%.17g", na_rep="")
