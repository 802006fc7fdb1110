import csv
from datetime import datetime, timedelta

import numpy as np
import pytest

from varpipe.frame import HOUR, TimeSeriesFrame, hourly_range

# a Monday at midnight, so weekday/hour bookkeeping is easy to reason about
START = datetime(2020, 1, 6)


def make_frame(values, columns=None, start=START) -> TimeSeriesFrame:
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    index = hourly_range(start, start + (len(values) - 1) * HOUR)
    if columns is None:
        columns = tuple(f"x{i + 1}" for i in range(values.shape[1]))
    return TimeSeriesFrame(tuple(index), tuple(columns), values)


def simulate_var(lag_matrices, intercept, T, rng, burn=200, noise_scale=1.0):
    """Draw T rows from a VAR with Gaussian shocks, discarding a burn-in."""
    lag_matrices = [np.asarray(a, dtype=float) for a in lag_matrices]
    intercept = np.asarray(intercept, dtype=float)
    k = intercept.size
    p = len(lag_matrices)
    y = np.zeros((T + burn, k))
    for t in range(p, T + burn):
        row = intercept.copy()
        for i, a in enumerate(lag_matrices, start=1):
            row += a @ y[t - i]
        y[t] = row + noise_scale * rng.standard_normal(k)
    return y[burn:]


def write_source_csv(path, index, columns, values, timestamp_column="ts"):
    values = np.asarray(values, dtype=float)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([timestamp_column, *columns])
        for ts, row in zip(index, values):
            cells = ["" if np.isnan(v) else f"{v:.6f}" for v in row]
            writer.writerow([ts.strftime("%Y-%m-%d %H:%M:%S"), *cells])


@pytest.fixture
def rng():
    return np.random.default_rng(20240301)
