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


class StvaError(Exception):
    """Base class of every error raised by stvanox."""


class ConfigError(StvaError, ValueError):
    """Invalid parameters, config file or command line flag."""


class DataError(StvaError, ValueError):
    pass


class SchemaError(DataError):
    """A mandatory column or attribute is missing."""

    def __init__(self, name: str, message: str | None = None) -> None:
        super().__init__(message or f"missing mandatory column: {name!r}")
        self.name = name


class EmptyDatasetError(DataError):
    pass


class FitError(StvaError, RuntimeError):
    """Raised when a regression can not be carried out.

    `index` holds the offending sample index when the failure
    comes from a non-finite residual.
    """

    def __init__(self, message: str, index: int | None = None) -> None:
        super().__init__(message)
        self.index = index


class InitError(FitError):
    pass


class BuildError(FitError):
    pass


class SelectionError(FitError):
    pass


class CalibrationError(FitError):
    pass


class ModelError(FitError):
    pass


class MetricsError(StvaError, ValueError):
    pass


class MinerError(StvaError, ValueError):
    pass


class StageError(StvaError, RuntimeError):
    """An error raised inside one stage of the experiment pipeline.

    The original exception is chained as ``__cause__``.
    """

    def __init__(self, stage: str, cause: BaseException) -> None:
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause

    @property
    def is_config_error(self) -> bool:
        return isinstance(self.cause, ConfigError)
