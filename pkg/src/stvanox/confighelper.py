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
from __future__ import annotations

import copy
import importlib.resources
import json
import logging
import sys
from pathlib import Path
from typing import IO, Any, Iterator, Mapping

from stvanox.divergence import DivergenceConfig
from stvanox.errors import ConfigError
from stvanox.miner import MinerConfig
from stvanox.obd.synthgen import SynthConfig, default_config
from stvanox.physics import LopParams, PhysicsConstants
from stvanox.regression import LmOptions
from stvanox.util import FilePath, assert_file, decode_text

logger = logging.getLogger(__name__)

DEFAULT_CONFIG = "experiment_default.json"
SWEEP_AXES = ("n_patterns", "summation_threshold", "window_len")


class ConfigMapping:
    """Attribute style mapping over a closed set of settings.

    Subclasses declare their settings and defaults in `DEFAULTS`;
    setting any other name raises a ConfigError. `locked` names
    can not be reassigned once the mapping is built.
    """

    __slots__ = ("_lock", "_locked", "__dict__")
    DEFAULTS: dict[str, Any] = {}

    def __init__(self, **kwargs) -> None:
        self._lock = False
        self._locked: list[str] = []
        for key, value in self.DEFAULTS.items():
            self.__dict__[key] = copy.deepcopy(value)
        self.update(kwargs)
        self._lock = True

    def lock(self, *names: str) -> None:
        self._locked.extend(n for n in names if n not in self._locked)

    def get(self, key: str, default: Any = None) -> Any:
        return self.__dict__.get(key, default)

    def has(self, key: str) -> bool:
        return key in self.__dict__

    def copy(self) -> ConfigMapping:
        """Deep copy of this mapping, locks included."""
        duply = self.__class__.__new__(self.__class__)
        object.__setattr__(duply, "_lock", False)
        object.__setattr__(duply, "_locked", list(self._locked))
        for k, v in self.__dict__.items():
            duply.__dict__[k] = copy.deepcopy(v)
        object.__setattr__(duply, "_lock", True)
        return duply

    def update(self, other: ConfigMapping | Mapping[str, Any]) -> None:
        """Update the settings from another mapping.

        Raises:
            ConfigError: a key is unknown or locked.
        """
        if isinstance(other, ConfigMapping):
            other = other.as_dict()
        for key, value in other.items():
            self.__setattr__(key, value)

    def list(self) -> list[str]:
        return list(self.__dict__.keys())

    def __setattr__(self, name: str, value: Any) -> None:
        # __slots__ case
        for _cls in self.__class__.__mro__:
            if _cls is not object and name in getattr(_cls, "__slots__", ()):
                object.__setattr__(self, name, value)
                return
        if name not in self.DEFAULTS:
            raise ConfigError(f"unknown setting {name!r}")
        if name in self._locked and self._lock:
            raise ConfigError(f"{name} is locked and can't be set by assignement.")
        self.__dict__[name] = value

    def export_hook(self, data: dict) -> dict:
        """Called by `as_dict` on a working copy of the settings.

        Does nothing by default. Subclasses can override this method
        to reshape the exported settings.
        """
        return data

    def as_dict(self) -> dict[str, Any]:
        return self.export_hook(copy.deepcopy(dict(self.__dict__)))

    def dump(self, file: IO[str] = sys.stdout) -> None:
        """Write the settings as JSON to `file`."""
        json.dump(self.as_dict(), file, indent=2, sort_keys=True)
        file.write("\n")

    def __len__(self) -> int:
        return len(self.__dict__)

    def __getitem__(self, key: str) -> Any:
        return self.__dict__[key]

    def __setitem__(self, key: str, value: Any) -> None:
        self.__setattr__(key, value)

    def __iter__(self) -> Iterator[str]:
        return iter(self.__dict__)

    def __contains__(self, key: str) -> bool:
        return key in self.__dict__

    def __str__(self) -> str:
        return str(self.__dict__)

    def __or__(self, other: ConfigMapping | Mapping[str, Any]) -> ConfigMapping:
        res = self.copy()
        res.update(other)
        return res

    def __eq__(self, other: object) -> bool:
        if isinstance(other, ConfigMapping):
            return self.as_dict() == other.as_dict()
        if isinstance(other, Mapping):
            return self.as_dict() == dict(other)
        return NotImplemented

    def __ne__(self, other: object) -> bool:
        result = self.__eq__(other)
        return result if result is NotImplemented else not result


class ExperimentConfig(ConfigMapping):
    """Settings of one experiment.

    `data` is either the path of an OBD CSV export or a synthetic
    generator configuration; None stands for the shipped four-regime
    generator configuration. Nested parameter groups are kept as plain
    dicts and validated through their typed counterparts.
    """

    __slots__ = ()
    DEFAULTS = {
        "data": None,
        "split_seed": 0,
        "physics": {},
        "lop": {},
        "lm": {},
        "divergence": {},
        "miner": {},
        "n_patterns": 4,
        "delta": 1,
        "delta_candidates": None,
        "min_partition_samples": 50,
        "sample_period": 1.0,
        "workers": None,
    }

    def __init__(self, **kwargs) -> None:
        super().__init__(**kwargs)
        self.validate()

    def validate(self) -> None:
        """Build every typed parameter group once.

        Raises:
            ConfigError: a setting breaks its invariants.
        """
        try:
            self._check()
        except ConfigError:
            raise
        except (TypeError, ValueError) as e:
            raise ConfigError(f"invalid setting: {e}") from e

    def _check(self) -> None:
        if not self.sample_period > 0:
            raise ConfigError(f"sample_period must be > 0, got {self.sample_period}")
        self.physics_constants()
        self.lop_params()
        self.lm_options()
        self.divergence_config().window_samples(self.sample_period)
        self.miner_config()
        if isinstance(self.data, Mapping):
            self.synth_config()
        elif self.data is not None and not isinstance(self.data, str):
            raise ConfigError(f"data must be a CSV path or a synth config, got {self.data!r}")
        if int(self.n_patterns) != self.n_patterns or self.n_patterns < 0:
            raise ConfigError(f"n_patterns must be an integer >= 0, got {self.n_patterns}")
        if int(self.delta) != self.delta or self.delta < 0:
            raise ConfigError(f"delta must be an integer >= 0, got {self.delta}")
        candidates = self.delta_candidates
        if candidates is not None:
            if not candidates or any(int(d) != d or d < 0 for d in candidates):
                raise ConfigError(f"invalid delta candidates {candidates}")
        if int(self.min_partition_samples) != self.min_partition_samples or (
            self.min_partition_samples < 1
        ):
            raise ConfigError("min_partition_samples must be an integer >= 1")
        if self.workers is not None and self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")

    def physics_constants(self) -> PhysicsConstants:
        return PhysicsConstants.from_dict(self.physics)

    def lop_params(self) -> LopParams:
        return LopParams.from_dict(self.lop)

    def lm_options(self) -> LmOptions:
        return LmOptions.from_dict(self.lm)

    def divergence_config(self) -> DivergenceConfig:
        return DivergenceConfig.from_dict(self.divergence)

    def miner_config(self) -> MinerConfig:
        return MinerConfig.from_dict(self.miner)

    def synth_config(self) -> SynthConfig:
        if self.data is None:
            return default_config()
        if not isinstance(self.data, Mapping):
            raise ConfigError("data is not a synthetic generator configuration")
        try:
            return SynthConfig.from_dict(self.data)
        except (KeyError, TypeError) as e:
            raise ConfigError(f"invalid synth config: {e}") from e

    @property
    def is_synthetic(self) -> bool:
        return not isinstance(self.data, str)

    def with_axis(self, axis: str, value: Any) -> ExperimentConfig:
        """Copy of this config with one sweep axis set to `value`."""
        res = self.copy()
        if axis == "n_patterns":
            res.n_patterns = int(value)
        elif axis == "summation_threshold":
            res.divergence = {**res.divergence, "summation_threshold": float(value)}
        elif axis == "window_len":
            res.divergence = {**res.divergence, "window_len_s": float(value)}
        else:
            raise ConfigError(f"unknown sweep axis {axis!r}, expected one of {SWEEP_AXES}")
        res.validate()
        return res

    def with_seed(self, seed: int) -> ExperimentConfig:
        """Copy with `seed` as split seed, and generator seed for synthetic data."""
        res = self.copy()
        res.split_seed = int(seed)
        if self.is_synthetic:
            res.data = {**self.synth_config().to_dict(), "seed": int(seed)}
        return res

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> ExperimentConfig:
        return cls(**dict(data))

    @classmethod
    def default(cls) -> ExperimentConfig:
        """The shipped experiment config."""
        text = (importlib.resources.files("stvanox") / "data" / DEFAULT_CONFIG).read_text()
        return cls.from_dict(json.loads(text))

    @classmethod
    def from_file(cls, path: FilePath) -> ExperimentConfig:
        """Read a JSON config file.

        A relative CSV path in `data` is taken relative to the
        config file.

        Raises:
            ConfigError: unreadable JSON, unknown setting or
            missing data file.
        """
        path = Path(path)
        try:
            text = decode_text(assert_file(path).read_bytes())
            settings = json.loads(text)
        except (OSError, UnicodeDecodeError, json.JSONDecodeError) as e:
            raise ConfigError(f"can not read config {path}: {e}") from e
        if not isinstance(settings, dict):
            raise ConfigError(f"config {path} must hold a JSON object")
        source = settings.get("data")
        if isinstance(source, str):
            csv = Path(source)
            if not csv.is_absolute():
                csv = path.parent / csv
            try:
                settings["data"] = str(assert_file(csv))
            except FileNotFoundError as e:
                raise ConfigError(f"data file not found: {csv}") from e
        logger.info("loaded experiment config %s", path)
        return cls.from_dict(settings)
