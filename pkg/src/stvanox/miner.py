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
"""Co-occurrence patterns of attribute levels in divergent windows.

Attributes are discretized in 11 equal-width levels. A pattern maps a
few attributes to an exact sequence of L levels; it occurs in a window
when every one of its attributes shows that very sequence there.
Patterns are mined level-wise (Apriori) on their support among all
windows and admitted on a cross-K ratio, the density of matching
windows among divergent windows over their density among all windows.
"""
from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from stvanox.divergence import DivergentWindow
from stvanox.errors import ConfigError, MinerError
from stvanox.obd.dataset import PHYSICS_ATTRIBUTES, ObdDataset
from stvanox.util import unique

logger = logging.getLogger(__name__)

N_LEVELS = 11
ABSENT = -1
DEFAULT_MINING_ATTRIBUTES = tuple(
    unique(["EngTq", "engine_speed", "EGRkgph", *PHYSICS_ATTRIBUTES])
)

_SCALE = ((0, 1, "very low"), (2, 4, "low"), (5, 7, "medium"), (8, 10, "high"))


def level_scale(level: int) -> str:
    """Verbal band of a level: very low, low, medium or high."""
    for low, high, name in _SCALE:
        if low <= level <= high:
            return name
    raise MinerError(f"level {level} outside 0..{N_LEVELS - 1}")


class Discretizer:
    """Equal-width binning of attributes in 11 levels.

    Each attribute has 12 ascending bin edges spanning its training
    range. Values out of the range clamp to level 0 or 10. An
    attribute with fewer than 2 distinct training values keeps a
    single edge and maps every value to level 0.
    """

    __slots__ = ("_edges",)

    def __init__(self, edges: Mapping[str, Sequence[float]]) -> None:
        self._edges = {}
        for name, values in edges.items():
            arr = np.array(values, dtype=float)
            if arr.size not in (1, N_LEVELS + 1) or not np.all(np.diff(arr) > 0):
                raise ConfigError(f"invalid bin edges for {name!r}: {values}")
            self._edges[name] = arr

    @property
    def attributes(self) -> tuple[str, ...]:
        return tuple(self._edges)

    @property
    def n_levels(self) -> int:
        return N_LEVELS

    def edges(self, attribute: str) -> np.ndarray:
        return self._edges[attribute]

    def level(self, attribute: str, values) -> np.ndarray:
        """Levels of `values`, ABSENT (-1) where a value is not finite."""
        values = np.asarray(values, dtype=float)
        edges = self._edges[attribute]
        if edges.size == 1:
            levels = np.zeros(values.shape, dtype=np.int64)
        else:
            levels = np.searchsorted(edges[1:-1], values, side="right").astype(np.int64)
        return np.where(np.isfinite(values), levels, ABSENT)

    def to_dict(self) -> dict:
        return {name: edges.tolist() for name, edges in self._edges.items()}

    @classmethod
    def from_dict(cls, data: Mapping[str, Sequence[float]]) -> Discretizer:
        return cls(data)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Discretizer):
            return NotImplemented
        return self.attributes == other.attributes and all(
            np.array_equal(self._edges[n], other.edges(n)) for n in self._edges
        )

    def __repr__(self) -> str:
        return f"Discretizer({list(self._edges)})"


def fit_discretizer(train: ObdDataset, attributes: Iterable[str]) -> Discretizer:
    """Bin edges over the training range of each attribute.

    Raises:
        SchemaError: an attribute is absent from the dataset.
    """
    edges = {}
    for name in attributes:
        series = train.series(name)
        values = np.concatenate([np.asarray(v, dtype=float) for v in series.values()])
        values = values[np.isfinite(values)]
        if np.unique(values).size < 2:
            logger.info("attribute %s is constant, single level", name)
            edges[name] = [float(values[0]) if values.size else 0.0]
        else:
            edges[name] = np.linspace(values.min(), values.max(), N_LEVELS + 1)
    return Discretizer(edges)


class SymbolTable:
    """Per-run level sequences of the discretized attributes."""

    __slots__ = ("_levels", "_attributes", "_lengths")

    def __init__(
        self,
        levels: Mapping[str, Mapping[str, np.ndarray]],
        attributes: Sequence[str],
        lengths: Mapping[str, int] | None = None,
    ) -> None:
        self._levels = {
            run_id: {name: np.asarray(columns[name], dtype=np.int64) for name in attributes}
            for run_id, columns in levels.items()
        }
        self._attributes = tuple(attributes)
        if lengths is None:
            lengths = {
                run_id: len(next(iter(columns.values()), ()))
                for run_id, columns in levels.items()
            }
        self._lengths = {run_id: int(lengths[run_id]) for run_id in self._levels}

    @property
    def attributes(self) -> tuple[str, ...]:
        return self._attributes

    @property
    def run_ids(self) -> tuple[str, ...]:
        return tuple(self._levels)

    def levels(self, run_id: str, attribute: str) -> np.ndarray:
        return self._levels[run_id][attribute]

    def run_length(self, run_id: str) -> int:
        return self._lengths[run_id]

    def window_codes(self, run_id: str, attribute: str, length: int) -> np.ndarray:
        return window_codes(self._levels[run_id][attribute], length)

    def matches(self, run_id: str, items: Mapping[str, Sequence[int]], length: int) -> np.ndarray:
        """Whether each stride-1 window of the run, by start index, shows `items`."""
        count = max(self.run_length(run_id) - length + 1, 0)
        mask = np.ones(count, dtype=bool)
        for name, sequence in items.items():
            if name not in self._levels[run_id]:
                raise MinerError(f"attribute {name!r} was not symbolized")
            mask &= self.window_codes(run_id, name, length) == encode(sequence)
        return mask

    def __len__(self) -> int:
        return len(self._levels)


def symbolize(dataset: ObdDataset, discretizer: Discretizer) -> SymbolTable:
    series = {name: dataset.series(name) for name in discretizer.attributes}
    levels = {
        run.run_id: {
            name: discretizer.level(name, values[run.run_id]) for name, values in series.items()
        }
        for run in dataset
    }
    return SymbolTable(levels, discretizer.attributes, {run.run_id: len(run) for run in dataset})


def encode(sequence: Sequence[int]) -> int:
    code = 0
    for level in sequence:
        code = code * N_LEVELS + int(level)
    return code


def decode(code: int, length: int) -> tuple[int, ...]:
    levels = []
    for _ in range(length):
        code, level = divmod(code, N_LEVELS)
        levels.append(level)
    return tuple(reversed(levels))


def window_codes(levels: np.ndarray, length: int) -> np.ndarray:
    """Base-11 code of the level sequence of each stride-1 window.

    Windows holding an absent level get ABSENT.
    """
    count = levels.size - length + 1
    if count <= 0:
        return np.empty(0, dtype=np.int64)
    codes = np.zeros(count, dtype=np.int64)
    complete = np.ones(count, dtype=bool)
    for offset in range(length):
        part = levels[offset : offset + count]
        codes = codes * N_LEVELS + np.maximum(part, 0)
        complete &= part >= 0
    return np.where(complete, codes, ABSENT)


@dataclass(frozen=True)
class MinerConfig:
    min_supp: float = 0.003
    epsilon: float = 2.0
    max_attributes: int = 3
    mining_attributes: tuple[str, ...] = DEFAULT_MINING_ATTRIBUTES

    def __post_init__(self) -> None:
        if not 0 < self.min_supp <= 1:
            raise ConfigError(f"min_supp must lie in (0, 1], got {self.min_supp}")
        if not self.epsilon > 0:
            raise ConfigError(f"epsilon must be > 0, got {self.epsilon}")
        if int(self.max_attributes) != self.max_attributes or self.max_attributes < 1:
            raise ConfigError(f"max_attributes must be an integer >= 1, got {self.max_attributes}")
        object.__setattr__(self, "mining_attributes", tuple(unique(list(self.mining_attributes))))
        if not self.mining_attributes:
            raise ConfigError("mining_attributes must not be empty")

    def to_dict(self) -> dict:
        data = dataclasses.asdict(self)
        data["mining_attributes"] = list(self.mining_attributes)
        return data

    @classmethod
    def from_dict(cls, data: Mapping | None) -> MinerConfig:
        data = dict(data or {})
        known = {f.name for f in dataclasses.fields(cls)}
        if set(data) - known:
            raise ConfigError(f"unknown miner keys: {sorted(set(data) - known)}")
        if "mining_attributes" in data:
            data["mining_attributes"] = tuple(data["mining_attributes"])
        return cls(**data)


Items = tuple[tuple[str, tuple[int, ...]], ...]


def _normalize_items(items) -> Items:
    pairs = items.items() if isinstance(items, Mapping) else items
    return tuple(sorted((str(name), tuple(int(v) for v in seq)) for name, seq in pairs))


@dataclass(frozen=True)
class CoOccurrencePattern:
    """Attributes with the exact level sequence they show together.

    `occurrence_count` is the number of divergent windows holding
    the pattern. `scenario_label` is free text left to the analyst.
    """

    items: Items
    support: float
    cross_k_ratio: float
    occurrence_count: int
    scenario_label: str | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "items", _normalize_items(self.items))
        if not self.items:
            raise ConfigError("a pattern needs at least one item")
        lengths = {len(seq) for _, seq in self.items}
        if len(lengths) != 1 or 0 in lengths:
            raise ConfigError(f"pattern sequences must share one length >= 1: {self.items}")
        if len({name for name, _ in self.items}) != len(self.items):
            raise ConfigError(f"duplicated attribute in pattern {self.items}")
        if not 0 <= self.support <= 1 or not self.cross_k_ratio >= 0:
            raise ConfigError(f"invalid pattern scores: {self}")

    @property
    def attributes(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.items)

    @property
    def window_len(self) -> int:
        return len(self.items[0][1])

    def as_mapping(self) -> dict[str, tuple[int, ...]]:
        return dict(self.items)

    def sort_key(self) -> tuple:
        return (-self.cross_k_ratio, -self.support, self.items)

    def subsumes(self, other: CoOccurrencePattern) -> bool:
        """True when `other` carries every item of this pattern."""
        return set(self.items) <= set(other.items)

    def describe(self) -> str:
        return ", ".join(
            f"{name}: {' '.join(str(v) for v in seq)}" for name, seq in self.items
        )

    def to_dict(self) -> dict:
        return {
            "items": {name: list(seq) for name, seq in self.items},
            "support": self.support,
            "cross_k_ratio": self.cross_k_ratio,
            "occurrences": self.occurrence_count,
            "scenario_label": self.scenario_label,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> CoOccurrencePattern:
        return cls(
            data["items"],
            float(data["support"]),
            float(data["cross_k_ratio"]),
            int(data["occurrences"]),
            data.get("scenario_label"),
        )


class WindowTable:
    """Every stride-1 window of a symbol table, with its divergence flag."""

    def __init__(
        self,
        symbols: SymbolTable,
        divergent_windows: Iterable[DivergentWindow],
        length: int,
        attributes: Sequence[str] | None = None,
    ) -> None:
        self.length = int(length)
        self.attributes = tuple(symbols.attributes if attributes is None else attributes)
        offsets = {}
        total = 0
        for run_id in symbols.run_ids:
            offsets[run_id] = total
            total += max(symbols.run_length(run_id) - self.length + 1, 0)
        self.n_windows = total
        self.codes = {
            name: np.concatenate(
                [symbols.window_codes(r, name, self.length) for r in symbols.run_ids]
                or [np.empty(0, dtype=np.int64)]
            )
            for name in self.attributes
        }
        divergent = np.zeros(total, dtype=bool)
        for w in divergent_windows:
            if w.length != self.length:
                raise MinerError(
                    f"divergent window of {w.length} samples, mining expects {self.length}"
                )
            if w.run_id not in offsets:
                raise MinerError(f"divergent window in unknown run {w.run_id!r}")
            divergent[offsets[w.run_id] + w.start_index] = True
        self.divergent = divergent
        self.divergent_index = np.flatnonzero(divergent)

    @property
    def n_divergent(self) -> int:
        return int(self.divergent_index.size)

    def match(self, items: Items) -> np.ndarray:
        mask = np.ones(self.n_windows, dtype=bool)
        for name, sequence in items:
            mask &= self.codes[name] == encode(sequence)
        return mask

    def ratio(self, divergent_matches: int, matches: int) -> float:
        if self.n_divergent == 0:
            raise MinerError("cross-K ratio needs at least one divergent window")
        if matches == 0:
            return 0.0
        # one rounding only: patterns held by divergent windows alone tie exactly
        return (int(divergent_matches) * self.n_windows) / (self.n_divergent * int(matches))


def cross_k_ratio(
    pattern: CoOccurrencePattern | Mapping[str, Sequence[int]],
    symbols: SymbolTable,
    divergent_windows: Sequence[DivergentWindow],
    window_len: int | None = None,
) -> float:
    """(D_P / D) / (W_P / W), 0 when the pattern matches no window.

    Raises:
        MinerError: there is no divergent window.
    """
    if isinstance(pattern, CoOccurrencePattern):
        items = pattern.items
    else:
        items = _normalize_items(pattern)
    length = window_len or len(items[0][1])
    table = WindowTable(symbols, divergent_windows, length, [name for name, _ in items])
    mask = table.match(items)
    return table.ratio(int(mask[table.divergent].sum()), int(mask.sum()))


@dataclass
class _Candidate:
    items: Items
    divergent_mask: np.ndarray

    @property
    def count(self) -> int:
        return int(self.divergent_mask.sum())


def _frequent_items(table: WindowTable, min_supp: float) -> list[_Candidate]:
    found = []
    for name in table.attributes:
        codes = table.codes[name][table.divergent_index]
        for code in np.unique(codes[codes != ABSENT]):
            mask = codes == code
            if mask.sum() / table.n_windows >= min_supp:
                found.append(_Candidate(((name, decode(int(code), table.length)),), mask))
    return found


def _join(level: list[_Candidate], min_supp: float, n_windows: int) -> Iterator[_Candidate]:
    frequent = {c.items for c in level}
    by_prefix: dict[Items, list[_Candidate]] = {}
    for c in level:
        by_prefix.setdefault(c.items[:-1], []).append(c)
    for group in by_prefix.values():
        for left, right in combinations(sorted(group, key=lambda c: c.items), 2):
            if left.items[-1][0] == right.items[-1][0]:
                continue
            items = left.items + right.items[-1:]
            if any(items[:i] + items[i + 1 :] not in frequent for i in range(len(items))):
                continue
            mask = left.divergent_mask & right.divergent_mask
            if mask.any() and mask.sum() / n_windows >= min_supp:
                yield _Candidate(items, mask)


def mine_patterns(
    symbols: SymbolTable,
    divergent_windows: Sequence[DivergentWindow],
    config: MinerConfig,
    window_len: int,
) -> list[CoOccurrencePattern]:
    """Frequent co-occurrence patterns concentrated in divergent windows.

    Support is the number of divergent windows holding a pattern over
    the number of stride-1 windows of the whole series. Patterns with
    support >= min_supp and a cross-K ratio >= epsilon are returned,
    sorted by ratio, then support (both descending), then items.

    Raises:
        MinerError: no divergent window to mine.
    """
    if not divergent_windows:
        raise MinerError("no divergent window to mine")
    attributes = [a for a in config.mining_attributes if a in symbols.attributes]
    missing = [a for a in config.mining_attributes if a not in symbols.attributes]
    if missing:
        logger.warning("mining attributes not symbolized, skipped: %s", missing)
    if not attributes:
        raise MinerError("none of the mining attributes was symbolized")

    table = WindowTable(symbols, divergent_windows, window_len, attributes)
    level = _frequent_items(table, config.min_supp)
    frequent = list(level)
    logger.debug("level 1: %d frequent items", len(level))
    for size in range(2, config.max_attributes + 1):
        if not level:
            break
        level = list(_join(level, config.min_supp, table.n_windows))
        logger.debug("level %d: %d frequent patterns", size, len(level))
        frequent.extend(level)

    patterns = []
    for c in frequent:
        ratio = table.ratio(c.count, int(table.match(c.items).sum()))
        if ratio >= config.epsilon:
            patterns.append(
                CoOccurrencePattern(c.items, c.count / table.n_windows, ratio, c.count)
            )
    patterns.sort(key=CoOccurrencePattern.sort_key)
    logger.info(
        "mined %d patterns from %d frequent candidates (%d of %d windows divergent)",
        len(patterns),
        len(frequent),
        table.n_divergent,
        table.n_windows,
    )
    return patterns


def select_top_n(patterns: Sequence[CoOccurrencePattern], n: int) -> list[CoOccurrencePattern]:
    """The n best patterns, skipping any that extends an already selected one."""
    if n < 0:
        raise ConfigError(f"n must be >= 0, got {n}")
    selected: list[CoOccurrencePattern] = []
    for pattern in sorted(patterns, key=CoOccurrencePattern.sort_key):
        if len(selected) >= n:
            break
        if any(s.subsumes(pattern) for s in selected):
            continue
        selected.append(pattern)
    if len(selected) < n:
        logger.warning("only %d patterns available, %d requested", len(selected), n)
    return selected


def format_pattern_table(patterns: Sequence[CoOccurrencePattern]) -> str:
    """Plain-text table of patterns, one attribute per line."""
    lines = [f"{'#':>2}  {'pattern':<40} {'support':>9} {'cross-K':>8}  scenario"]
    for rank, pattern in enumerate(patterns, start=1):
        for i, (name, seq) in enumerate(pattern.items):
            cells = f"{name}: {' '.join(str(v) for v in seq)} ({level_scale(max(seq))})"
            if i == 0:
                label = pattern.scenario_label or ""
                lines.append(
                    f"{rank:>2}  {cells:<40} {pattern.support:>9.4f}"
                    f" {pattern.cross_k_ratio:>8.3f}  {label}".rstrip()
                )
            else:
                lines.append(f"{'':>2}  {cells}")
    return "\n".join(lines)
