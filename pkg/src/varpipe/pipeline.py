"""End-to-end batch pipeline: ingest, diagnose, select, fit, forecast, decompose.

Stages run in a fixed order and each writes its report into the output
directory. Test rows are produced by the split stage and are only touched
again by evaluation and plot emission; every stage in between sees training
data only. Warnings (non-stationary columns, failed grid cells, non-normal
residuals, instability) are recorded in the manifest without stopping the run.
"""
from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

import numpy as np

from ._version import __version__
from .diagnostics import (
    DiagnosticsReport,
    adf_test,
    durbin_watson,
    granger_matrix,
    granger_pvalues_to_csv,
    jarque_bera,
    stability_check,
)
from .errors import ConfigError, InsufficientObservationsError, ShapeMismatchError
from .fevd import decompose
from .frame import (
    SplitSpec,
    TimeSeriesFrame,
    difference,
    evaluate,
    format_timestamp,
    invert_difference,
    split,
)
from .ingest import ImputationPolicy, RawSource, align_hourly, impute, load_csv
from .var import TRENDS, FittedVar, fit, forecast, grid_search

VALIDATION_HOURS = 24


@dataclass(frozen=True)
class PipelineConfig:
    """Everything a run needs: sources, repair policy, split point, search grid."""

    sources: tuple[RawSource, ...]
    test_start: datetime
    output_dir: Path
    imputation: ImputationPolicy = ImputationPolicy()
    grid_lags: tuple[int, ...] = (12, 24, 36, 48)
    grid_trends: tuple[str, ...] = ("c", "ct", "ctt", "n")
    granger_lag: int = 24
    fevd_horizon: int = 36
    seed: int = 0
    auto_difference: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "sources", tuple(self.sources))
        object.__setattr__(self, "grid_lags", tuple(int(p) for p in self.grid_lags))
        object.__setattr__(self, "grid_trends", tuple(self.grid_trends))
        object.__setattr__(self, "output_dir", Path(self.output_dir))
        if not self.sources:
            raise ConfigError("config declares no sources")
        if not self.grid_lags or any(p < 1 for p in self.grid_lags):
            raise ConfigError("grid_lags must be non-empty positive integers")
        bad = [t for t in self.grid_trends if t not in TRENDS]
        if not self.grid_trends or bad:
            raise ConfigError(f"grid_trends must be drawn from {TRENDS}, bad: {bad}")
        if self.granger_lag < 1:
            raise ConfigError("granger_lag must be >= 1")
        if self.fevd_horizon < 1:
            raise ConfigError("fevd_horizon must be >= 1")

    def to_dict(self) -> dict:
        return {
            "sources": [
                {
                    "path": str(s.path),
                    "kind": s.kind,
                    "timestamp_column": s.timestamp_column,
                    "value_columns": list(s.value_columns),
                    "timestamp_format": s.timestamp_format,
                }
                for s in self.sources
            ],
            "imputation": {
                "max_gap_interpolate": self.imputation.max_gap_interpolate,
                "long_gap_strategy": self.imputation.long_gap_strategy,
                "drop_column_missing_fraction": self.imputation.drop_column_missing_fraction,
            },
            "test_start": format_timestamp(self.test_start),
            "output_dir": str(self.output_dir),
            "grid_lags": list(self.grid_lags),
            "grid_trends": list(self.grid_trends),
            "granger_lag": self.granger_lag,
            "fevd_horizon": self.fevd_horizon,
            "seed": self.seed,
            "auto_difference": self.auto_difference,
        }

    @classmethod
    def from_dict(cls, payload: dict, base_dir: Path | None = None) -> "PipelineConfig":
        def _resolve(p: str) -> str:
            path = Path(p)
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            return str(path)

        try:
            sources = tuple(
                RawSource(
                    path=_resolve(s["path"]),
                    kind=s["kind"],
                    timestamp_column=s["timestamp_column"],
                    value_columns=tuple(s["value_columns"]),
                    timestamp_format=s.get("timestamp_format", "%Y-%m-%d %H:%M:%S"),
                )
                for s in payload["sources"]
            )
            imputation = ImputationPolicy(**payload.get("imputation", {}))
            return cls(
                sources=sources,
                test_start=datetime.fromisoformat(payload["test_start"]),
                output_dir=Path(_resolve(payload["output_dir"])),
                imputation=imputation,
                grid_lags=tuple(payload.get("grid_lags", (12, 24, 36, 48))),
                grid_trends=tuple(payload.get("grid_trends", ("c", "ct", "ctt", "n"))),
                granger_lag=int(payload.get("granger_lag", 24)),
                fevd_horizon=int(payload.get("fevd_horizon", 36)),
                seed=int(payload.get("seed", 0)),
                auto_difference=bool(payload.get("auto_difference", False)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid pipeline config: {exc}") from exc

    def config_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(canonical).hexdigest()


@dataclass
class RunManifest:
    """What a run produced: inputs, timings, artifacts, warnings."""

    config_hash: str
    input_checksums: dict[str, str] = field(default_factory=dict)
    stage_timings: dict[str, float] = field(default_factory=dict)
    artifacts: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    tool_version: str = __version__

    def to_dict(self) -> dict:
        return {
            "config_hash": self.config_hash,
            "input_checksums": dict(self.input_checksums),
            "stage_timings": dict(self.stage_timings),
            "artifacts": list(self.artifacts),
            "warnings": list(self.warnings),
            "tool_version": self.tool_version,
        }


def emit_plot_data(
    actual: TimeSeriesFrame, predicted: TimeSeriesFrame, station: str, path
) -> None:
    """CSV of (timestamp, actual, forecast) for one column, chart-ready."""
    import csv

    a = actual.column(station)
    f = predicted.column(station)
    shared = [ts for ts in actual.index if ts in set(predicted.index)]
    if not shared:
        raise ShapeMismatchError("actual and forecast share no timestamps")
    a_pos = {ts: i for i, ts in enumerate(actual.index)}
    f_pos = {ts: i for i, ts in enumerate(predicted.index)}
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["timestamp", "actual", "forecast"])
        for ts in shared:
            writer.writerow(
                [
                    format_timestamp(ts),
                    repr(float(a[a_pos[ts]])),
                    repr(float(f[f_pos[ts]])),
                ]
            )


class Pipeline:
    """Stores stage outputs and writes one report file per stage."""

    def __init__(self, config: PipelineConfig):
        self.config = config
        self.manifest = RunManifest(config_hash=config.config_hash())
        self.out = Path(config.output_dir)

        self.combined: TimeSeriesFrame | None = None
        self.traffic_columns: list[str] = []
        self.train: TimeSeriesFrame | None = None
        self.test: TimeSeriesFrame | None = None
        self.work_train: TimeSeriesFrame | None = None
        self.diff_order = 0
        self.adf_results: dict | None = None
        self.non_stationary: list[str] = []
        self.granger_results: dict | None = None
        self.grid_report = None
        self.model: FittedVar | None = None
        self.residual_report: DiagnosticsReport | None = None
        self.forecast_frame: TimeSeriesFrame | None = None
        self.level_forecast: TimeSeriesFrame | None = None
        self.metrics = None
        self.fevd_table = None

    # -- helpers ---------------------------------------------------------

    def _artifact(self, rel: str) -> Path:
        path = self.out / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        if rel not in self.manifest.artifacts:
            self.manifest.artifacts.append(rel)
        return path

    def _write_json(self, rel: str, payload: dict) -> None:
        path = self._artifact(rel)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")

    def _timed(self, name: str, fn) -> None:
        started = time.perf_counter()
        fn()
        self.manifest.stage_timings[name] = time.perf_counter() - started

    def _warn(self, message: str) -> None:
        self.manifest.warnings.append(message)

    # -- stages ----------------------------------------------------------

    def stage_ingest(self) -> None:
        if self.combined is not None:
            return
        frames = []
        for source in self.config.sources:
            self.manifest.input_checksums[str(source.path)] = _sha256(source.path)
            frames.append(load_csv(source))
        start = min(f.start for f in frames)
        end = max(f.end for f in frames)
        aligned = align_hourly(frames, start, end)
        combined, log = impute(aligned, self.config.imputation)
        if log.dropped_columns:
            self._warn("dropped sparse columns: " + ", ".join(log.dropped_columns))
        if log.dropped_rows:
            self._warn(f"dropped {len(log.dropped_rows)} rows with unrepaired gaps")
        self.combined = combined
        self.traffic_columns = [
            c
            for s in self.config.sources
            if s.kind == "traffic"
            for c in s.value_columns
            if c in combined.columns
        ]
        combined.to_csv(self._artifact("combined.csv"))
        log.to_csv(self._artifact("imputation_log.csv"))

    def stage_split(self) -> None:
        if self.train is not None:
            return
        self.stage_ingest()
        self.train, self.test = split(self.combined, SplitSpec(self.config.test_start))

    def stage_adf(self) -> None:
        if self.adf_results is not None:
            return
        self.stage_split()
        results = {}
        for name in self.train.columns:
            results[name] = adf_test(self.train.column(name))
        self.adf_results = results
        self.non_stationary = [
            name for name, r in results.items() if not r.rejects_unit_root_at_5pct
        ]
        if self.non_stationary:
            self._warn(
                "non-stationary columns at 5%: " + ", ".join(self.non_stationary)
            )
        self.work_train = self.train
        if self.config.auto_difference and self.non_stationary:
            self.work_train = difference(self.train, 1)
            self.diff_order = 1

    def stage_granger(self) -> None:
        if self.granger_results is not None:
            return
        self.stage_adf()
        self.granger_results = granger_matrix(self.work_train, self.config.granger_lag)
        report = DiagnosticsReport(adf=self.adf_results, granger=self.granger_results)
        payload = report.to_dict()
        payload["non_stationary_columns"] = list(self.non_stationary)
        payload["auto_differenced"] = self.diff_order > 0
        self._write_json("diagnostics.json", payload)
        granger_pvalues_to_csv(
            self.granger_results,
            self.work_train.columns,
            self._artifact("granger_pvalues.csv"),
        )

    def stage_gridsearch(self) -> None:
        if self.grid_report is not None:
            return
        self.stage_adf()
        inner = self.work_train
        if len(inner) <= VALIDATION_HOURS:
            raise InsufficientObservationsError(
                f"train range of {len(inner)} rows cannot spare a "
                f"{VALIDATION_HOURS}-hour validation slice"
            )
        fit_train = inner.rows(0, len(inner) - VALIDATION_HOURS)
        validation = inner.rows(len(inner) - VALIDATION_HOURS)
        self.grid_report = grid_search(
            fit_train, validation, list(self.config.grid_lags), list(self.config.grid_trends)
        )
        for (p, trend), message in sorted(self.grid_report.errors.items()):
            self._warn(f"grid cell (p={p}, trend={trend}) failed: {message}")
        self.grid_report.to_csv(self._artifact("grid_search.csv"))
        self._write_json("grid_search.json", self.grid_report.to_dict())

    def stage_fit(self) -> None:
        if self.model is not None:
            return
        self.stage_gridsearch()
        p, trend = self.grid_report.best
        self.model = fit(self.work_train, p, trend)
        self.model.save(self._artifact("model.json"))

    def stage_residuals(self) -> None:
        if self.residual_report is not None:
            return
        self.stage_fit()
        residuals = self.model.residuals
        dw = {
            name: durbin_watson(residuals[:, j])
            for j, name in enumerate(self.model.columns)
        }
        jb = jarque_bera(residuals.ravel())
        stability = stability_check(self.model)
        if jb.p_value < 0.05:
            self._warn(f"residuals fail normality (JB p={jb.p_value:.3g})")
        if not stability.is_stable:
            self._warn("fitted model is not stable (a characteristic root is on or inside the unit circle)")
        self.residual_report = DiagnosticsReport(
            durbin_watson=dw, jarque_bera=jb, stability=stability
        )
        self._write_json("residual_diagnostics.json", self.residual_report.to_dict())

    def stage_forecast(self) -> None:
        if self.level_forecast is not None:
            return
        self.stage_fit()
        steps = len(self.test)
        self.forecast_frame = forecast(self.model, steps)
        if self.diff_order:
            anchors = self.train.rows(len(self.train) - self.diff_order)
            self.level_forecast = invert_difference(self.forecast_frame, anchors)
        else:
            self.level_forecast = self.forecast_frame
        self.level_forecast.to_csv(self._artifact("forecast.csv"))

    def stage_evaluate(self) -> None:
        if self.metrics is not None:
            return
        self.stage_forecast()
        self.metrics = evaluate(self.test, self.level_forecast)
        self._write_json("metrics.json", self.metrics.to_dict())

    def stage_fevd(self) -> None:
        if self.fevd_table is not None:
            return
        self.stage_fit()
        self.fevd_table = decompose(self.model, self.config.fevd_horizon)
        if self.fevd_table.applied_jitter:
            self._warn(
                f"residual covariance needed a diagonal jitter of "
                f"{self.fevd_table.applied_jitter:.3g} before factorization"
            )
        self.fevd_table.to_csv(self._artifact("fevd.csv"))
        self._write_json("fevd_summary.json", self.fevd_table.final_horizon_summary())

    def stage_plots(self) -> None:
        self.stage_forecast()
        columns = self.traffic_columns or list(self.level_forecast.columns)
        for name in columns:
            emit_plot_data(
                self.test, self.level_forecast, name, self._artifact(f"plots/{name}.csv")
            )

    def stage_summary(self) -> None:
        path = self._artifact("summary.txt")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self._render_summary())

    def run(self) -> RunManifest:
        self._timed("ingest", self.stage_ingest)
        self._timed("split", self.stage_split)
        self._timed("adf", self.stage_adf)
        self._timed("granger", self.stage_granger)
        self._timed("gridsearch", self.stage_gridsearch)
        self._timed("fit", self.stage_fit)
        self._timed("residuals", self.stage_residuals)
        self._timed("forecast", self.stage_forecast)
        self._timed("evaluate", self.stage_evaluate)
        self._timed("fevd", self.stage_fevd)
        self._timed("plots", self.stage_plots)
        self._timed("summary", self.stage_summary)
        manifest_path = self._artifact("manifest.json")
        with open(manifest_path, "w", encoding="utf-8") as fh:
            json.dump(self.manifest.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        return self.manifest

    # -- human summary ----------------------------------------------------

    def _render_summary(self) -> str:
        lines: list[str] = []
        lines.append("varpipe run summary")
        lines.append("===================")
        lines.append("")

        cv5 = next(iter(self.adf_results.values())).critical_values["5%"]
        lines.append(f"Stationarity (ADF, 5% critical value {cv5})")
        lines.append(f"  {'column':<16}{'statistic':>12}{'approx p':>10}{'lag':>6}")
        for name, r in self.adf_results.items():
            lines.append(
                f"  {name:<16}{r.statistic:>12.4f}{r.approx_p_value:>10.3f}{r.lag_used:>6d}"
            )
        ns = ", ".join(self.non_stationary) if self.non_stationary else "none"
        lines.append(f"  non-stationary at 5%: {ns}")
        lines.append("")

        lag = self.config.granger_lag
        significant = sum(1 for r in self.granger_results.values() if r.p_value < 0.05)
        lines.append(f"Granger causality (lag {lag})")
        lines.append(
            f"  {significant} of {len(self.granger_results)} ordered pairs significant at 5%"
        )
        idle = [
            c
            for c in self.work_train.columns
            if not any(
                r.p_value < 0.05
                for (cause, _), r in self.granger_results.items()
                if cause == c
            )
        ]
        lines.append(
            "  columns causing no other column at 5%: " + (", ".join(idle) if idle else "none")
        )
        lines.append("")

        lines.append(f"Grid search ({self.grid_report.metric})")
        trends = [t for t in TRENDS if any(k[1] == t for k in self.grid_report.cells)]
        header = "  " + f"{'p':<6}" + "".join(f"{t:>12}" for t in trends)
        lines.append(header)
        for p in sorted({k[0] for k in self.grid_report.cells}):
            row = f"  {p:<6}"
            for t in trends:
                value = self.grid_report.cells.get((p, t))
                row += f"{value:>12.2f}" if value is not None else f"{'-':>12}"
            lines.append(row)
        best_p, best_trend = self.grid_report.best
        lines.append(
            f"  best: p={best_p}, trend={best_trend} "
            f"(RMSE {self.grid_report.best_score:.4f})"
        )
        lines.append("")

        report = self.residual_report
        lines.append("Residual diagnostics")
        lines.append("  Durbin-Watson per equation:")
        for name, d in report.durbin_watson.items():
            lines.append(f"    {name:<16}{d:>8.2f}")
        jb = report.jarque_bera
        verdict = "reject normality" if jb.p_value < 0.05 else "consistent with normality"
        lines.append(f"  Jarque-Bera: statistic={jb.jb_statistic:.4g}, p={jb.p_value:.3f} ({verdict})")
        lines.append(f"  Stability: {'stable' if report.stability.is_stable else 'NOT stable'}")
        lines.append("")

        lines.append(f"Forecast evaluation ({len(self.test)} steps)")
        lines.append(f"  {'variable':<16}{'MAE':>12}{'MSE':>16}{'RMSE':>12}")
        for name, m in self.metrics.per_variable.items():
            lines.append(
                f"  {name:<16}{m['mae']:>12.4f}{m['mse']:>16.4f}{m['rmse']:>12.4f}"
            )
        avg = self.metrics.average
        lines.append(
            f"  {'average':<16}{avg['mae']:>12.4f}{avg['mse']:>16.4f}{avg['rmse']:>12.4f}"
        )
        lines.append("")

        table = self.fevd_table
        last = len(table.horizons) - 1
        lines.append(f"Variance decomposition at horizon {table.horizons[last]} (top shocks)")
        for j, variable in enumerate(table.columns):
            order = np.argsort(table.shares[last, j])[::-1][:3]
            tops = ", ".join(
                f"{table.columns[k]} {table.shares[last, j, k] * 100:.1f}%" for k in order
            )
            lines.append(f"  {variable:<16}<- {tops}")
        lines.append("")
        return "\n".join(lines)


def run_pipeline(config: PipelineConfig) -> RunManifest:
    """Execute every stage in order and return the manifest."""
    return Pipeline(config).run()


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()
