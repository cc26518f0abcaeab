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
"""Variability-aware NOx prediction from vehicle OBD data."""
try:
    from stvanox._version import version as __version__
except ImportError:  # pragma: no cover
    __version__ = "0.0.0"

from stvanox.confighelper import ExperimentConfig
from stvanox.errors import ConfigError, StageError, StvaError
from stvanox.harness import ExperimentReport, run_experiment, sensitivity_sweep

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "ExperimentReport",
    "StageError",
    "StvaError",
    "__version__",
    "run_experiment",
    "sensitivity_sweep",
]
