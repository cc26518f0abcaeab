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

import logging
from collections import namedtuple

import psutil

from stvanox.util import format_bytes

logger = logging.getLogger(__name__)


def cpucount() -> int:
    return psutil.cpu_count(logical=False) or psutil.cpu_count(True) or 1


def worker_count(requested: int | None = None, jobs: int | None = None) -> int:
    """Number of workers for a pool of concurrent sweep points.

    Args:
        requested (int | None): explicit worker count, None means
        one worker per physical core.
        jobs (int | None): number of jobs to run, the pool is never
        larger than this.

    Returns:
        int: a worker count >= 1.
    """
    count = cpucount() if requested is None else max(1, int(requested))
    if jobs is not None:
        count = min(count, max(1, jobs))
    return count


def memory_rss() -> str:
    return format_bytes(psutil.Process().memory_info().rss)


def memory():
    mem = psutil.virtual_memory()
    sysmem = namedtuple("sys_memory", ["total", "used", "free", "available"])
    return sysmem(
        format_bytes(mem.total),
        format_bytes(mem.used),
        format_bytes(mem.free),
        format_bytes(mem.available),
    )
