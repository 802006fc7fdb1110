"""Loading, alignment and repair of raw hourly CSV sources.

The raw inputs are per-source CSVs (traffic counters, weather observations)
with one timestamp column and one column per measured variable. They are
loaded individually, placed on a single complete hourly grid, and repaired
into an analysis-ready frame with no missing cells.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from datetime import datetime

import numpy as np

from .errors import (
    AllMissingColumnError,
    ColumnCollisionError,
    DuplicateTimestampError,
    EmptyRangeError,
    MalformedHeaderError,
    UnparseableTimestampError,
)
from .frame import HOUR, TimeSeriesFrame, format_timestamp, hourly_range, require_contiguous

SOURCE_KINDS = ("traffic", "weather")
LONG_GAP_STRATEGIES = ("hour_of_week_mean", "forward_fill", "drop_rows")

_MISSING_TOKENS = {"", "na", "nan", "null", "none"}


@dataclass(frozen=True)
class RawSource:
    """One CSV input: where it lives and which columns to read from it."""

    path: str
    kind: str
    timestamp_column: str
    value_columns: tuple[str, ...]
    timestamp_format: str = "%Y-%m-%d %H:%M:%S"

    def __post_init__(self) -> None:
        object.__setattr__(self, "value_columns", tuple(self.value_columns))
        if self.kind not in SOURCE_KINDS:
            raise ValueError(f"kind must be one of {SOURCE_KINDS}, got {self.kind!r}")
        if not self.value_columns:
            raise ValueError("value_columns must be non-empty")
        if self.timestamp_column in self.value_columns:
            raise ValueError("timestamp_column cannot also be a value column")
        if len(set(self.value_columns)) != len(self.value_columns):
            raise ValueError("value_columns contains duplicates")


@dataclass(frozen=True)
class ImputationPolicy:
    """How gaps are repaired: short gaps interpolated, long gaps by strategy."""

    max_gap_interpolate: int = 3
    long_gap_strategy: str = "hour_of_week_mean"
    drop_column_missing_fraction: float = 0.2

    def __post_init__(self) -> None:
        if self.max_gap_interpolate < 1:
            raise ValueError("max_gap_interpolate must be >= 1")
        if self.long_gap_strategy not in LONG_GAP_STRATEGIES:
            raise ValueError(
                f"long_gap_strategy must be one of {LONG_GAP_STRATEGIES}, "
                f"got {self.long_gap_strategy!r}"
            )
        if not 0.0 <= self.drop_column_missing_fraction <= 1.0:
            raise ValueError("drop_column_missing_fraction must lie in [0, 1]")


@dataclass(frozen=True)
class ImputationEntry:
    column: str
    timestamp: datetime
    method: str
    value: float


@dataclass
class ImputationLog:
    """Record of every repaired cell plus any dropped columns or rows."""

    entries: list[ImputationEntry] = field(default_factory=list)
    dropped_columns: list[str] = field(default_factory=list)
    dropped_rows: list[datetime] = field(default_factory=list)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["column", "timestamp", "method", "value"])
            for e in self.entries:
                writer.writerow(
                    [e.column, format_timestamp(e.timestamp), e.method, repr(float(e.value))]
                )


def load_csv(source: RawSource) -> TimeSeriesFrame:
    """Read one raw source into a frame, sorted ascending by timestamp.

    Cells that are empty or read NA/NaN/null become missing markers; rows may
    cover an incomplete hour set (alignment fills the grid later).
    """
    with open(source.path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MalformedHeaderError(f"{source.path}: file has no header row") from None
        positions = {name: i for i, name in enumerate(header)}
        for name in (source.timestamp_column, *source.value_columns):
            if name not in positions:
                raise MalformedHeaderError(f"{source.path}: column {name!r} not in header")
        ts_pos = positions[source.timestamp_column]
        value_pos = [positions[name] for name in source.value_columns]

        stamps: list[datetime] = []
        data: list[list[float]] = []
        for line_no, row in enumerate(reader, start=2):
            raw_ts = row[ts_pos] if ts_pos < len(row) else ""
            try:
                ts = datetime.strptime(raw_ts, source.timestamp_format)
            except ValueError:
                raise UnparseableTimestampError(
                    f"{source.path}:{line_no}: cannot parse timestamp {raw_ts!r} "
                    f"with format {source.timestamp_format!r}"
                ) from None
            stamps.append(ts)
            data.append([_parse_cell(row, pos, source.path, line_no) for pos in value_pos])

    order = np.argsort(np.array(stamps, dtype="datetime64[s]"), kind="stable")
    stamps = [stamps[i] for i in order]
    for prev, cur in zip(stamps, stamps[1:]):
        if cur == prev:
            raise DuplicateTimestampError(f"{source.path}: duplicate timestamp {cur}")
    values = np.array(data, dtype=float).reshape(len(stamps), len(source.value_columns))[order]
    return TimeSeriesFrame(tuple(stamps), source.value_columns, values)


def _parse_cell(row: list[str], pos: int, path: str, line_no: int) -> float:
    cell = row[pos].strip() if pos < len(row) else ""
    if cell.lower() in _MISSING_TOKENS:
        return math.nan
    try:
        return float(cell)
    except ValueError:
        raise ValueError(f"{path}:{line_no}: cannot parse value {cell!r} as a number") from None


def align_hourly(
    frames: list[TimeSeriesFrame], start: datetime, end: datetime
) -> TimeSeriesFrame:
    """Place all frames on the complete hourly grid [start, end].

    Columns are concatenated in input order; grid slots a source does not
    cover become missing markers. Rows outside the range are dropped.
    """
    if start >= end:
        raise EmptyRangeError(f"empty alignment range [{start}, {end}]")
    grid = hourly_range(start, end)
    slot = {ts: i for i, ts in enumerate(grid)}

    columns: list[str] = []
    for frame in frames:
        for name in frame.columns:
            if name in columns:
                raise ColumnCollisionError(f"column {name!r} appears in more than one source")
            columns.append(name)

    values = np.full((len(grid), len(columns)), math.nan)
    col_offset = 0
    for frame in frames:
        for i, ts in enumerate(frame.index):
            if ts < start or ts > end:
                continue
            if ts not in slot:
                raise ValueError(f"timestamp {ts} is not on the hourly grid from {start}")
            values[slot[ts], col_offset : col_offset + frame.n_columns] = frame.values[i]
        col_offset += frame.n_columns
    return TimeSeriesFrame(tuple(grid), tuple(columns), values)


def impute(
    frame: TimeSeriesFrame, policy: ImputationPolicy
) -> tuple[TimeSeriesFrame, ImputationLog]:
    """Repair missing cells per the policy; returns the frame and a repair log.

    Columns missing more than ``drop_column_missing_fraction`` of their cells
    are removed. Interior gaps up to ``max_gap_interpolate`` hours are linearly
    interpolated; anything longer (and leading/trailing runs, which have no
    interpolation anchor) uses the long-gap strategy.
    """
    log = ImputationLog()
    mask_any = np.isnan(frame.values).any()
    if not mask_any:
        return frame, log
    require_contiguous(frame, "impute")

    keep: list[int] = []
    for j, name in enumerate(frame.columns):
        missing_fraction = float(np.isnan(frame.values[:, j]).mean())
        if missing_fraction > policy.drop_column_missing_fraction:
            log.dropped_columns.append(name)
        else:
            keep.append(j)

    columns = tuple(frame.columns[j] for j in keep)
    values = np.array(frame.values[:, keep])
    index = frame.index

    drop_row_mask = np.zeros(len(index), dtype=bool)
    for j, name in enumerate(columns):
        col = values[:, j]
        observed = ~np.isnan(col)
        if not observed.any():
            raise AllMissingColumnError(f"column {name!r} has no observed values")
        how_means = _hour_of_week_means(index, col, observed)
        for run_start, run_stop in _missing_runs(observed):
            interior = run_start > 0 and run_stop < len(col)
            length = run_stop - run_start
            if interior and length <= policy.max_gap_interpolate:
                left, right = col[run_start - 1], col[run_stop]
                for k in range(run_start, run_stop):
                    t = (k - (run_start - 1)) / (run_stop - (run_start - 1))
                    col[k] = left + t * (right - left)
                    log.entries.append(
                        ImputationEntry(name, index[k], "linear", float(col[k]))
                    )
            elif policy.long_gap_strategy == "drop_rows":
                drop_row_mask[run_start:run_stop] = True
            else:
                for k in range(run_start, run_stop):
                    col[k], method = _long_gap_value(
                        policy.long_gap_strategy, col, observed, index, k, how_means
                    )
                    log.entries.append(ImputationEntry(name, index[k], method, float(col[k])))
        values[:, j] = col

    if drop_row_mask.any():
        log.dropped_rows.extend(ts for ts, d in zip(index, drop_row_mask) if d)
        values = values[~drop_row_mask]
        index = tuple(ts for ts, d in zip(index, drop_row_mask) if not d)
    return TimeSeriesFrame(index, columns, values), log


def _missing_runs(observed: np.ndarray) -> list[tuple[int, int]]:
    """Maximal [start, stop) runs of missing cells."""
    runs = []
    start = None
    for i, obs in enumerate(observed):
        if not obs and start is None:
            start = i
        elif obs and start is not None:
            runs.append((start, i))
            start = None
    if start is not None:
        runs.append((start, len(observed)))
    return runs


def _hour_of_week_means(
    index: tuple[datetime, ...], col: np.ndarray, observed: np.ndarray
) -> dict[tuple[int, int], float]:
    sums: dict[tuple[int, int], float] = {}
    counts: dict[tuple[int, int], int] = {}
    for ts, v, obs in zip(index, col, observed):
        if obs:
            key = (ts.weekday(), ts.hour)
            sums[key] = sums.get(key, 0.0) + float(v)
            counts[key] = counts.get(key, 0) + 1
    return {key: sums[key] / counts[key] for key in sums}


def _long_gap_value(
    strategy: str,
    col: np.ndarray,
    observed: np.ndarray,
    index: tuple[datetime, ...],
    k: int,
    how_means: dict[tuple[int, int], float],
) -> tuple[float, str]:
    if strategy == "hour_of_week_mean":
        key = (index[k].weekday(), index[k].hour)
        if key in how_means:
            return how_means[key], "hour_of_week_mean"
        # no observation shares this weekday/hour; fall back to the column mean
        return float(col[observed].mean()), "column_mean"
    # forward_fill: nearest earlier observation, or backfill at the leading edge
    earlier = np.nonzero(observed[:k])[0]
    if earlier.size:
        return float(col[earlier[-1]]), "forward_fill"
    later = np.nonzero(observed[k:])[0]
    return float(col[k + later[0]]), "backfill"
