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
from stvanox.obd.dataset import (
    MANDATORY_ATTRIBUTES,
    PHYSICS_ATTRIBUTES,
    TARGET,
    ObdDataset,
    ObdRecord,
    ObdRun,
    Series,
    parse_csv,
    split_train_test,
    write_csv,
)

__all__ = [
    "MANDATORY_ATTRIBUTES",
    "PHYSICS_ATTRIBUTES",
    "TARGET",
    "ObdDataset",
    "ObdRecord",
    "ObdRun",
    "Series",
    "parse_csv",
    "split_train_test",
    "write_csv",
]
