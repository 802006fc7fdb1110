"""VAR(p) estimation by equation-wise least squares, forecasting, grid search.

Each variable is regressed on p lags of every variable plus deterministic
terms chosen by a trend code: ``n`` none, ``c`` intercept, ``ct`` intercept +
linear time, ``ctt`` intercept + linear + quadratic time. The trend's time
index counts 1, 2, ... from the first fitted row and keeps counting through
forecasts.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime

import numpy as np

from .errors import (
    InsufficientObservationsError,
    ShapeMismatchError,
    SingularDesignError,
    VarPipeError,
)
from .frame import HOUR, TimeSeriesFrame, evaluate, require_contiguous

TRENDS = ("n", "c", "ct", "ctt")

_RANK_TOL = 1e-10


def trend_term_count(trend: str) -> int:
    if trend not in TRENDS:
        raise ValueError(f"trend must be one of {TRENDS}, got {trend!r}")
    return TRENDS.index(trend)


def deterministic_terms(t_index: np.ndarray, trend: str) -> np.ndarray:
    """Columns [1, t, t^2][:m] evaluated at the given time indices."""
    m = trend_term_count(trend)
    t = np.asarray(t_index, dtype=float)
    cols = [np.ones_like(t), t, t**2][:m]
    if not cols:
        return np.empty((t.size, 0))
    return np.column_stack(cols)


def build_design(
    frame: TimeSeriesFrame, p: int, trend: str
) -> tuple[np.ndarray, np.ndarray]:
    """Stack regressor rows [det terms | y_{t-1} | ... | y_{t-p}] and targets y_t."""
    if p < 1:
        raise ValueError("lag order p must be >= 1")
    m = trend_term_count(trend)
    T, K = len(frame), frame.n_columns
    n_params = K * p + m
    if T <= n_params or T <= p:
        raise InsufficientObservationsError(
            f"{T} rows cannot identify a VAR({p}) with trend {trend!r} on {K} variables"
        )
    require_contiguous(frame, "VAR design")
    if not np.isfinite(frame.values).all():
        raise ValueError("frame contains non-finite values")

    rows = T - p
    det = deterministic_terms(np.arange(1, rows + 1), trend)
    lag_blocks = [frame.values[p - i : T - i] for i in range(1, p + 1)]
    regressors = np.hstack([det, *lag_blocks])
    targets = frame.values[p:]
    return regressors, targets


@dataclass
class FittedVar:
    """Estimated VAR: lag coefficient matrices, trend terms and residual stats.

    ``lag_matrices[i]`` maps y_{t-i-1} into the prediction of y_t;
    ``trend_coeffs`` is (K, m) over the deterministic columns. ``t_offset`` is
    the trend time index of the first fitted row and ``n_obs`` the number of
    fitted rows, so forecasts continue the index at ``t_offset + n_obs``.
    """

    p: int
    trend: str
    columns: tuple[str, ...]
    lag_matrices: np.ndarray
    trend_coeffs: np.ndarray
    sigma_u: np.ndarray
    train_tail: np.ndarray
    t_offset: int = 1
    n_obs: int = 0
    train_end: datetime = datetime(2000, 1, 1)
    residuals: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.columns = tuple(self.columns)
        k = len(self.columns)
        m = trend_term_count(self.trend)
        # contiguous copies so fitted and reloaded models take identical BLAS
        # paths (bit-identical forecasts)
        self.lag_matrices = np.ascontiguousarray(
            np.asarray(self.lag_matrices, dtype=float).reshape(self.p, k, k)
        )
        self.trend_coeffs = np.ascontiguousarray(
            np.asarray(self.trend_coeffs, dtype=float).reshape(k, m)
        )
        self.sigma_u = np.ascontiguousarray(
            np.asarray(self.sigma_u, dtype=float).reshape(k, k)
        )
        self.train_tail = np.ascontiguousarray(
            np.asarray(self.train_tail, dtype=float).reshape(self.p, k)
        )

    @property
    def n_columns(self) -> int:
        return len(self.columns)

    def companion_matrix(self) -> np.ndarray:
        k, p = self.n_columns, self.p
        companion = np.zeros((k * p, k * p))
        for i in range(p):
            companion[:k, i * k : (i + 1) * k] = self.lag_matrices[i]
        if p > 1:
            companion[k:, :-k] = np.eye(k * (p - 1))
        return companion

    def to_dict(self) -> dict:
        return {
            "p": self.p,
            "trend": self.trend,
            "columns": list(self.columns),
            "lag_matrices": self.lag_matrices.tolist(),
            "trend_coeffs": self.trend_coeffs.tolist(),
            "sigma_u": self.sigma_u.tolist(),
            "train_tail": self.train_tail.tolist(),
            "t_offset": self.t_offset,
            "n_obs": self.n_obs,
            "train_end": self.train_end.strftime("%Y-%m-%d %H:%M:%S"),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "FittedVar":
        return cls(
            p=int(payload["p"]),
            trend=payload["trend"],
            columns=tuple(payload["columns"]),
            lag_matrices=np.array(payload["lag_matrices"], dtype=float),
            trend_coeffs=np.array(payload["trend_coeffs"], dtype=float),
            sigma_u=np.array(payload["sigma_u"], dtype=float),
            train_tail=np.array(payload["train_tail"], dtype=float),
            t_offset=int(payload["t_offset"]),
            n_obs=int(payload["n_obs"]),
            train_end=datetime.strptime(payload["train_end"], "%Y-%m-%d %H:%M:%S"),
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "FittedVar":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def fit(frame: TimeSeriesFrame, p: int, trend: str = "c") -> FittedVar:
    """Least-squares VAR(p) estimate; all K equations share one regressor matrix."""
    m = trend_term_count(trend)
    if len(frame) - p <= frame.n_columns * p + m:
        raise InsufficientObservationsError(
            f"{len(frame)} rows leave no residual degrees of freedom for a "
            f"VAR({p}) with trend {trend!r} on {frame.n_columns} variables"
        )
    regressors, targets = build_design(frame, p, trend)
    coef, _, rank, _ = np.linalg.lstsq(regressors, targets, rcond=_RANK_TOL)
    if rank < regressors.shape[1]:
        raise SingularDesignError(
            f"design matrix rank {rank} < {regressors.shape[1]} columns"
        )
    residuals = targets - regressors @ coef

    K = frame.n_columns
    m = trend_term_count(trend)
    rows = targets.shape[0]
    dof = rows - (K * p + m)
    sigma_u = residuals.T @ residuals / dof
    lag_matrices = np.stack(
        [coef[m + i * K : m + (i + 1) * K, :].T for i in range(p)]
    )
    return FittedVar(
        p=p,
        trend=trend,
        columns=frame.columns,
        lag_matrices=lag_matrices,
        trend_coeffs=coef[:m, :].T,
        sigma_u=sigma_u,
        train_tail=frame.values[-p:],
        t_offset=1,
        n_obs=rows,
        train_end=frame.end,
        residuals=residuals,
    )


def forecast(model: FittedVar, steps: int) -> TimeSeriesFrame:
    """Iterative plug-in forecast; later steps reuse earlier forecast rows."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    history = [row.copy() for row in model.train_tail]
    t_next = model.t_offset + model.n_obs
    out = np.empty((steps, model.n_columns))
    for s in range(steps):
        det = deterministic_terms(np.array([t_next + s]), model.trend)[0]
        y = model.trend_coeffs @ det
        for i in range(model.p):
            y = y + model.lag_matrices[i] @ history[-1 - i]
        out[s] = y
        history.append(y)
    index = tuple(model.train_end + (s + 1) * HOUR for s in range(steps))
    return TimeSeriesFrame(index, model.columns, out)


@dataclass
class GridSearchReport:
    """Validation RMSE for every (lag order, trend) cell and the winner."""

    cells: dict[tuple[int, str], float]
    best: tuple[int, str]
    errors: dict[tuple[int, str], str] = field(default_factory=dict)
    metric: str = "average_rmse"

    @property
    def best_score(self) -> float:
        return self.cells[self.best]

    def to_dict(self) -> dict:
        return {
            "metric": self.metric,
            "best": {"p": self.best[0], "trend": self.best[1], "rmse": self.best_score},
            "cells": [
                {"p": p, "trend": trend, "rmse": rmse}
                for (p, trend), rmse in sorted(
                    self.cells.items(), key=lambda kv: (kv[0][0], TRENDS.index(kv[0][1]))
                )
            ],
            "failed_cells": [
                {"p": p, "trend": trend, "error": msg}
                for (p, trend), msg in sorted(
                    self.errors.items(), key=lambda kv: (kv[0][0], TRENDS.index(kv[0][1]))
                )
            ],
        }

    def to_csv(self, path) -> None:
        import csv

        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["p", "trend", "rmse", "error"])
            keys = sorted(
                list(self.cells) + list(self.errors),
                key=lambda k: (k[0], TRENDS.index(k[1])),
            )
            for key in keys:
                if key in self.cells:
                    writer.writerow([key[0], key[1], repr(float(self.cells[key])), ""])
                else:
                    writer.writerow([key[0], key[1], "", self.errors[key]])


def select_best(cells: dict[tuple[int, str], float]) -> tuple[int, str]:
    """Argmin cell; ties go to the smaller p, then trend order n < c < ct < ctt."""
    return min(cells, key=lambda k: (cells[k], k[0], TRENDS.index(k[1])))


def grid_search(
    train: TimeSeriesFrame,
    validation: TimeSeriesFrame,
    lags: list[int],
    trends: list[str],
) -> GridSearchReport:
    """Fit every (p, trend) on train, score average forecast RMSE on validation.

    Validation must immediately follow train on the hourly grid. Cells that
    fail to fit are recorded, not fatal, unless every cell fails. Ties break
    toward the smaller lag order, then trend order n < c < ct < ctt.
    """
    if not lags or not trends:
        raise ValueError("lags and trends must be non-empty")
    if validation.columns != train.columns:
        raise ShapeMismatchError("validation columns differ from train columns")
    if validation.start - train.end != HOUR:
        raise ShapeMismatchError("validation must immediately follow train")

    cells: dict[tuple[int, str], float] = {}
    errors: dict[tuple[int, str], str] = {}
    for p in lags:
        for trend in trends:
            try:
                model = fit(train, p, trend)
                predicted = forecast(model, len(validation))
                cells[(p, trend)] = evaluate(validation, predicted).average["rmse"]
            except (VarPipeError, ValueError) as exc:
                errors[(p, trend)] = str(exc)
    if not cells:
        raise InsufficientObservationsError(
            "every grid cell failed: " + "; ".join(sorted(errors.values()))
        )
    return GridSearchReport(cells=cells, best=select_best(cells), errors=errors)
