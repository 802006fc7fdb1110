"""Multivariate hourly time-series toolkit: VAR estimation, diagnostics,
forecasting and forecast-error variance decomposition, plus a batch CLI."""

from ._version import __version__
from .diagnostics import (
    ADF_CRITICAL_VALUES,
    AdfResult,
    DiagnosticsReport,
    GrangerResult,
    NormalityResult,
    StabilityResult,
    adf_test,
    durbin_watson,
    granger_matrix,
    granger_test,
    jarque_bera,
    stability_check,
)
from .errors import VarPipeError
from .fevd import FevdTable, decompose, ma_representation, orthogonalize
from .frame import (
    MetricsReport,
    SplitSpec,
    TimeSeriesFrame,
    difference,
    evaluate,
    invert_difference,
    split,
)
from .ingest import (
    ImputationLog,
    ImputationPolicy,
    RawSource,
    align_hourly,
    impute,
    load_csv,
)
from .pipeline import Pipeline, PipelineConfig, RunManifest, emit_plot_data, run_pipeline
from .var import (
    FittedVar,
    GridSearchReport,
    build_design,
    fit,
    forecast,
    grid_search,
)

__all__ = [
    "__version__",
    "ADF_CRITICAL_VALUES",
    "AdfResult",
    "DiagnosticsReport",
    "FevdTable",
    "FittedVar",
    "GrangerResult",
    "GridSearchReport",
    "ImputationLog",
    "ImputationPolicy",
    "MetricsReport",
    "NormalityResult",
    "Pipeline",
    "PipelineConfig",
    "RawSource",
    "RunManifest",
    "SplitSpec",
    "StabilityResult",
    "TimeSeriesFrame",
    "VarPipeError",
    "adf_test",
    "align_hourly",
    "build_design",
    "decompose",
    "difference",
    "durbin_watson",
    "emit_plot_data",
    "evaluate",
    "fit",
    "forecast",
    "granger_matrix",
    "granger_test",
    "grid_search",
    "impute",
    "invert_difference",
    "jarque_bera",
    "load_csv",
    "ma_representation",
    "orthogonalize",
    "run_pipeline",
    "split",
    "stability_check",
]
