"""Long-format CSV loading, gap filling, frame construction and backtest folds."""
from __future__ import annotations

import csv
import datetime as dt
import logging
import math
import re
from collections.abc import Iterable, Mapping
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .hierarchy import Hierarchy, aggregate_bottom_up

logger = logging.getLogger(__name__)

FREQUENCIES = ("daily", "quarterly")
FILL_POLICIES = ("zero", "linear")
CALENDAR_PERIOD = {"daily": 7, "quarterly": 4}

_QUARTER = re.compile(r"^(\d{4})-?Q([1-4])$", re.IGNORECASE)


class IngestionError(ValueError):
    pass


class Record(NamedTuple):
    series_id: str
    time: int
    value: float


def parse_timestamp(text: str, frequency: str) -> int:
    """Map a timestamp to an integer step ordinal for the given frequency.

    Daily: ISO-8601 date -> proleptic Gregorian ordinal (``ordinal % 7`` is the
    weekday). Quarterly: ``YYYY-Qn`` -> ``4 * year + n - 1``.
    """
    text = text.strip()
    if frequency == "daily":
        return dt.date.fromisoformat(text[:10]).toordinal()
    if frequency == "quarterly":
        m = _QUARTER.match(text)
        if not m:
            raise ValueError(f"not a YYYY-Qn quarter: {text!r}")
        return 4 * int(m.group(1)) + int(m.group(2)) - 1
    raise ValueError(f"unknown frequency {frequency!r}")


def format_timestamp(ordinal: int, frequency: str) -> str:
    if frequency == "daily":
        return dt.date.fromordinal(int(ordinal)).isoformat()
    if frequency == "quarterly":
        year, q = divmod(int(ordinal), 4)
        return f"{year}-Q{q + 1}"
    raise ValueError(f"unknown frequency {frequency!r}")


def load_long_csv(
    path: str | Path,
    id_column: str = "series_id",
    time_column: str = "timestamp",
    value_column: str = "value",
    frequency: str = "daily",
) -> list[Record]:
    path = Path(path)
    if frequency not in FREQUENCIES:
        raise IngestionError(f"frequency must be one of {FREQUENCIES}, got {frequency!r}")
    records = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise IngestionError(f"{path}: no records (empty file)")
        header = [h.strip() for h in header]
        try:
            cols = [header.index(c) for c in (id_column, time_column, value_column)]
        except ValueError:
            raise IngestionError(
                f"{path}: header {header} lacks one of "
                f"{[id_column, time_column, value_column]}"
            ) from None
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) < len(header):
                raise IngestionError(f"{path}:{lineno}: malformed row {row}")
            sid, ts, raw = (row[c].strip() for c in cols)
            if not sid:
                raise IngestionError(f"{path}:{lineno}: empty series id")
            try:
                t = parse_timestamp(ts, frequency)
            except ValueError as exc:
                raise IngestionError(f"{path}:{lineno}: unparseable timestamp {ts!r} ({exc})") from None
            try:
                value = float(raw)
            except ValueError:
                raise IngestionError(f"{path}:{lineno}: non-numeric value {raw!r}") from None
            if not math.isfinite(value):
                raise IngestionError(f"{path}:{lineno}: non-finite value {raw!r}")
            records.append(Record(sid, t, value))
    if not records:
        raise IngestionError(f"{path}: no records")
    return records


@dataclass(frozen=True, eq=False)
class SeriesFrame:
    """Coherent node histories on a shared, gap-free step index."""

    hierarchy: Hierarchy
    time_index: np.ndarray
    values: Mapping[str, np.ndarray]
    fill_mask: Mapping[str, np.ndarray]
    frequency: str = "daily"

    @property
    def T(self) -> int:
        return len(self.time_index)

    @property
    def calendar_period(self) -> int | None:
        return CALENDAR_PERIOD.get(self.frequency)

    def window(self, start: int, stop: int) -> SeriesFrame:
        sl = slice(start, stop)
        return SeriesFrame(
            hierarchy=self.hierarchy,
            time_index=self.time_index[sl],
            values={n: v[sl] for n, v in self.values.items()},
            fill_mask={n: m[sl] for n, m in self.fill_mask.items()},
            frequency=self.frequency,
        )

    def matrix(self, nodes: Iterable[str] | None = None) -> np.ndarray:
        nodes = self.hierarchy.nodes if nodes is None else nodes
        return np.vstack([self.values[n] for n in nodes])


def build_series_frame(
    records: Iterable[Record],
    h: Hierarchy,
    fill_policy: str = "zero",
    frequency: str = "daily",
) -> SeriesFrame:
    """Align leaf records on the union step index, fill gaps, aggregate upward."""
    if fill_policy not in FILL_POLICIES:
        raise IngestionError(f"fill_policy must be one of {FILL_POLICIES}, got {fill_policy!r}")
    leaves = set(h.leaves)
    by_leaf: dict[str, dict[int, float]] = {}
    for rec in records:
        if rec.series_id not in leaves:
            raise IngestionError(f"unknown leaf id {rec.series_id!r}")
        obs = by_leaf.setdefault(rec.series_id, {})
        if rec.time in obs:
            raise IngestionError(f"duplicate observation for {rec.series_id!r} at step {rec.time}")
        obs[rec.time] = rec.value
    if not by_leaf:
        raise IngestionError("no records")

    starts = [min(obs) for obs in by_leaf.values()]
    ends = [max(obs) for obs in by_leaf.values()]
    if max(starts) > min(ends):
        raise IngestionError("empty intersection of leaf time ranges")
    t0, t1 = min(starts), max(ends)
    index = np.arange(t0, t1 + 1, dtype=np.int64)
    n = len(index)

    leaf_values = {}
    masks = {}
    for leaf in h.leaves:
        obs = by_leaf.get(leaf)
        v = np.zeros(n)
        observed = np.zeros(n, dtype=bool)
        if obs is None:
            logger.warning("leaf %r has no observations; filled entirely", leaf)
        else:
            pos = np.fromiter((t - t0 for t in obs), dtype=np.int64, count=len(obs))
            v[pos] = np.fromiter(obs.values(), dtype=np.float64, count=len(obs))
            observed[pos] = True
            if fill_policy == "linear" and not observed.all():
                where = np.flatnonzero(observed)
                gaps = np.flatnonzero(~observed)
                v[gaps] = np.interp(gaps, where, v[where])
        leaf_values[leaf] = v
        masks[leaf] = ~observed

    values = aggregate_bottom_up(h, leaf_values)
    for arr in values.values():
        arr.setflags(write=False)
    return SeriesFrame(h, index, values, masks, frequency)


@dataclass(frozen=True)
class BacktestFold:
    """Contiguous ``train | validation | test`` layout; ranges are half-open."""

    fold_id: int
    train_stop: int
    horizon: int

    @property
    def train(self) -> tuple[int, int]:
        return (0, self.train_stop)

    @property
    def validation(self) -> tuple[int, int]:
        return (self.train_stop, self.train_stop + self.horizon)

    @property
    def test(self) -> tuple[int, int]:
        return (self.train_stop + self.horizon, self.train_stop + 2 * self.horizon)


def make_folds(
    frame: SeriesFrame | int, h_steps: int, V: int, min_train: int | None = None
) -> list[BacktestFold]:
    """Folds whose test blocks tile the final ``V * h_steps`` steps.

    Fold ``v`` tests on ``[T - (V - v + 1) h, T - (V - v) h)`` with the
    validation block directly before it and training on everything earlier.
    Requires ``T >= V * h_steps + min_train`` (``min_train`` defaults to
    ``2 * h_steps`` and covers fold 1's train plus validation span).
    """
    T = frame if isinstance(frame, int) else frame.T
    if h_steps < 1 or V < 1:
        raise IngestionError("h_steps and V must be >= 1")
    min_train = 2 * h_steps if min_train is None else min_train
    if T < V * h_steps + min_train or T - V * h_steps - h_steps < 1:
        raise IngestionError(
            f"series too short: T={T} < V*h + min_train = {V}*{h_steps} + {min_train}"
        )
    folds = []
    for v in range(1, V + 1):
        test_end = T - (V - v) * h_steps
        folds.append(BacktestFold(v, test_end - 2 * h_steps, h_steps))
    return folds


def origin_folds(history_len: int, h_steps: int, V: int) -> list[BacktestFold]:
    """Folds whose *validation* blocks tile the last ``V * h_steps`` steps of a history.

    Used when forecasting past the end of the data: the final fold's test block
    is the (unobserved) forecast window.
    """
    return make_folds(history_len + h_steps, h_steps, V)
