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

import io
import logging
from pathlib import Path
from typing import IO, Any, Sequence, Union

from chardet.universaldetector import UniversalDetector

logger = logging.getLogger(__name__)
FilePath = Union[str, Path]  # Type Aliasing


def guess_encoding(data: bytes) -> str | None:
    """Guess the character encoding of a chunk of bytes.

    Feeds the data line by line to a chardet universal detector
    and stops as soon as the detector is confident.

    Args:
        data (bytes): raw content, typically a CSV export.

    Returns:
        str or None: The guessed encoding if successful,
        None if the encoding cannot be determined.

    Example:
        >>> guess_encoding("t_s,EngTq\\n0,12.5\\n".encode("utf-16"))
        'UTF-16'
    """
    detector = UniversalDetector()
    for line in io.BytesIO(data):
        detector.feed(line)
        if detector.done:
            break
    detector.close()
    return detector.result["encoding"] if detector.result else None


def decode_text(data: bytes, encoding: str = "utf-8") -> str:
    """Decode bytes, falling back on a guessed encoding.

    A leading BOM is stripped. When `data` is not valid in `encoding`
    the encoding is guessed with chardet and a warning is logged.
    """
    try:
        return data.decode(f"{encoding}-sig" if encoding == "utf-8" else encoding)
    except UnicodeDecodeError:
        guessed = guess_encoding(data)
        if guessed is None:
            raise
        logger.warning("input is not valid %s, decoding as %s", encoding, guessed)
        return data.decode(guessed)


def read_source(source: FilePath | IO[bytes] | bytes) -> bytes:
    if isinstance(source, bytes):
        return source
    if isinstance(source, (str, Path)):
        return assert_file(Path(source)).read_bytes()
    return source.read()


def assert_file(path: Path) -> Path:
    if not path.is_file():
        raise FileNotFoundError(f"File not found: {path}")
    return path


def assert_dir(path: Path, create: bool = False) -> Path:
    if create:
        path.mkdir(parents=True, exist_ok=True)
    if not path.is_dir():
        raise NotADirectoryError(f"Directory not found: {path}")
    return path


def format_bytes(
    nbytes: int, unit: str | None = None, suffix: str = "b", space: bool = True
) -> str:
    """Format bytes size.

    Scale bytes to its proper byte format.
    e.g: 1253656678 => '1.17 Gb'

    Args:
        nbytes (int): bytes size to format.
        unit (str | None): unit to convert bytes,
        if None unit will be search for best fit.
        suffix (str): Letter added just after the
        main unit letter (Mb, Kb, etc).Defaults to "b".
        space (bool): add space before the unit letter.
        Defaults to True.

    Returns:
        str: formated string.
    """
    units = ["B", "K", "M", "G", "T", "P", "E", "Z"]
    factor = 1024
    sep = " " if space else ""

    if unit:
        if unit not in units:
            raise ValueError(f"unit {unit} should be one of {units}")
        res = nbytes if unit == "B" else nbytes / factor ** (units.index(unit))
        return f"{res:.2f}{sep}{unit}{suffix}"
    units[0] = ""
    size = float(nbytes)
    for name in units:
        if size < factor:
            return f"{size:.2f}{sep}{name}{suffix}"
        size /= factor
    return f"{size:.2f}{sep}Y{suffix}"


def unique(seq: Sequence[Any], lifo: bool = False) -> list:
    """Returns a list of unique items from seq.

    Generate a list of unique elements from the input Sequence.
    By default first element will be kept at their index removing
    further duplicate occurrences. Setting lifo to True will inverse
    this behavior.

    Args:
        seq (Sequence[Any]): The input Sequence.
        lifo (bool, optional): If True, return the unique elements
        in Last-In-First-Out order. Defaults to False.

    Returns:
        list: A new list containing only unique elements.
    """
    result = []
    _lst = list(seq[::-1]) if lifo else list(seq)
    for v in _lst:
        if v not in result:
            result.append(v)
    return result[::-1] if lifo else result
