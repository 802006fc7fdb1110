"""Timestamp-indexed multivariate series plus the shared frame operations.

``TimeSeriesFrame`` is the data carrier used everywhere in the package: an
ordered hourly timestamp index, named columns and a ``(T, K)`` float matrix.
Frames are immutable once built; every operation returns a new frame.

Frames produced by raw CSV loading or row-dropping repair can have holes in
the hourly grid, so contiguity is checked by the operations that need it
(differencing, imputation, model fitting) rather than at construction.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    AnchorMismatchError,
    DegenerateSplitError,
    InsufficientLengthError,
    MissingColumnError,
    NonContiguousError,
    ShapeMismatchError,
)

HOUR = timedelta(hours=1)

TIMESTAMP_FORMAT = "%Y-%m-%d %H:%M:%S"


def format_timestamp(ts: datetime) -> str:
    return ts.strftime(TIMESTAMP_FORMAT)


def parse_timestamp(text: str) -> datetime:
    return datetime.strptime(text, TIMESTAMP_FORMAT)


def hourly_range(start: datetime, end: datetime) -> list[datetime]:
    """Complete hourly grid from start to end, both inclusive."""
    n = int((end - start) / HOUR)
    return [start + i * HOUR for i in range(n + 1)]


@dataclass(frozen=True, eq=False)
class TimeSeriesFrame:
    """Immutable (T, K) matrix of hourly observations with named columns.

    Invariants checked at construction: index strictly ascending, column
    names unique, value matrix shaped ``(len(index), len(columns))``.
    """

    index: tuple[datetime, ...]
    columns: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "index", tuple(self.index))
        object.__setattr__(self, "columns", tuple(str(c) for c in self.columns))
        values = np.array(self.values, dtype=float)
        if values.ndim == 1:
            values = values.reshape(-1, 1)
        if values.ndim != 2:
            raise ValueError("values must be a 2-D matrix")
        if values.shape != (len(self.index), len(self.columns)):
            raise ValueError(
                f"values shape {values.shape} does not match "
                f"{len(self.index)} rows x {len(self.columns)} columns"
            )
        if len(set(self.columns)) != len(self.columns):
            raise ValueError("column names must be unique")
        for prev, cur in zip(self.index, self.index[1:]):
            if cur <= prev:
                raise ValueError(f"index not strictly ascending at {cur}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return len(self.index)

    @property
    def n_columns(self) -> int:
        return len(self.columns)

    @property
    def start(self) -> datetime:
        return self.index[0]

    @property
    def end(self) -> datetime:
        return self.index[-1]

    @property
    def is_contiguous_hourly(self) -> bool:
        return all(b - a == HOUR for a, b in zip(self.index, self.index[1:]))

    def column(self, name: str) -> np.ndarray:
        if name not in self.columns:
            raise MissingColumnError(f"column {name!r} not in frame")
        return self.values[:, self.columns.index(name)]

    def select(self, names: Sequence[str]) -> "TimeSeriesFrame":
        idx = [self.columns.index(n) if n in self.columns else -1 for n in names]
        for n, i in zip(names, idx):
            if i < 0:
                raise MissingColumnError(f"column {n!r} not in frame")
        return TimeSeriesFrame(self.index, tuple(names), self.values[:, idx])

    def rows(self, start: int, stop: int | None = None) -> "TimeSeriesFrame":
        sl = slice(start, stop)
        return TimeSeriesFrame(self.index[sl], self.columns, self.values[sl])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["timestamp", *self.columns])
            for ts, row in zip(self.index, self.values):
                cells = ["" if math.isnan(v) else repr(float(v)) for v in row]
                writer.writerow([format_timestamp(ts), *cells])

    @classmethod
    def from_csv(cls, path) -> "TimeSeriesFrame":
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if not header or header[0] != "timestamp":
                raise ValueError(f"{path}: first header cell must be 'timestamp'")
            columns = tuple(header[1:])
            index: list[datetime] = []
            data: list[list[float]] = []
            for row in reader:
                index.append(parse_timestamp(row[0]))
                data.append([float(c) if c != "" else math.nan for c in row[1:]])
        return cls(tuple(index), columns, np.array(data, dtype=float).reshape(len(index), len(columns)))


def require_contiguous(frame: TimeSeriesFrame, what: str) -> None:
    if not frame.is_contiguous_hourly:
        raise NonContiguousError(f"{what} requires a complete hourly index")


def difference(frame: TimeSeriesFrame, order: int = 1) -> TimeSeriesFrame:
    """Apply 1-lag differencing ``order`` times; output keeps the trailing stamps."""
    if order < 1:
        raise ValueError("order must be >= 1")
    if len(frame) <= order:
        raise InsufficientLengthError(
            f"need more than {order} rows to difference, have {len(frame)}"
        )
    require_contiguous(frame, "difference")
    return TimeSeriesFrame(
        frame.index[order:], frame.columns, np.diff(frame.values, n=order, axis=0)
    )


def invert_difference(diffed: TimeSeriesFrame, anchors: TimeSeriesFrame) -> TimeSeriesFrame:
    """Undo ``difference`` using the original-level rows immediately preceding it.

    ``anchors`` must hold the last ``order`` undifferenced rows before
    ``diffed`` starts, on the same columns and hourly-contiguous with it.
    """
    order = len(anchors)
    if order < 1:
        raise AnchorMismatchError("anchors frame is empty")
    if anchors.columns != diffed.columns:
        raise AnchorMismatchError(
            f"anchor columns {anchors.columns} != differenced columns {diffed.columns}"
        )
    joined = anchors.index + diffed.index
    if any(b - a != HOUR for a, b in zip(joined, joined[1:])):
        raise AnchorMismatchError("anchors must immediately precede the differenced rows")

    values = diffed.values
    anchor_values = anchors.values
    for level in range(order, 0, -1):
        head = np.diff(anchor_values, n=level - 1, axis=0)[-1] if level > 1 else anchor_values[-1]
        values = np.cumsum(values, axis=0) + head
    return TimeSeriesFrame(diffed.index, diffed.columns, values)


@dataclass(frozen=True)
class SplitSpec:
    """Boundary for a chronological train/test split."""

    test_start: datetime


def split(frame: TimeSeriesFrame, spec: SplitSpec) -> tuple[TimeSeriesFrame, TimeSeriesFrame]:
    """Rows strictly before ``test_start`` go to train, the rest to test."""
    cut = sum(1 for ts in frame.index if ts < spec.test_start)
    if cut == 0 or cut == len(frame):
        raise DegenerateSplitError(
            f"test_start {spec.test_start} leaves an empty side of the split"
        )
    return frame.rows(0, cut), frame.rows(cut)


@dataclass(frozen=True)
class MetricsReport:
    """Per-variable and averaged MAE / MSE / RMSE scores."""

    per_variable: Mapping[str, Mapping[str, float]]
    average: Mapping[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "per_variable": {k: dict(v) for k, v in self.per_variable.items()},
            "average": dict(self.average),
        }


def evaluate(actual: TimeSeriesFrame, predicted: TimeSeriesFrame) -> MetricsReport:
    """Score predictions against truth on an identical index and column set."""
    if actual.columns != predicted.columns or actual.index != predicted.index:
        raise ShapeMismatchError("actual and predicted frames must share index and columns")
    err = predicted.values - actual.values
    per_variable = {}
    for j, name in enumerate(actual.columns):
        mae = float(np.mean(np.abs(err[:, j])))
        mse = float(np.mean(err[:, j] ** 2))
        per_variable[name] = {"mae": mae, "mse": mse, "rmse": math.sqrt(mse)}
    average = {
        key: float(np.mean([per_variable[c][key] for c in actual.columns]))
        for key in ("mae", "mse", "rmse")
    }
    return MetricsReport(per_variable=per_variable, average=average)


def frames_equal(a: TimeSeriesFrame, b: TimeSeriesFrame, *, rtol: float = 0.0, atol: float = 0.0) -> bool:
    """Exact (default) or tolerant equality of two frames."""
    if a.index != b.index or a.columns != b.columns:
        return False
    if rtol == 0.0 and atol == 0.0:
        return bool(np.array_equal(a.values, b.values, equal_nan=True))
    return bool(np.allclose(a.values, b.values, rtol=rtol, atol=atol, equal_nan=True))
