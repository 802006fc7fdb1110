"""Statistical test battery: unit roots, causality and residual checks.

All tests are estimated from scratch on top of a shared QR least-squares
helper; only the reference tail distributions (F, chi-squared) come from
scipy.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats
from scipy.linalg import solve_triangular

from .errors import (
    ConstantSeriesError,
    InsufficientLengthError,
    SingularDesignError,
    ZeroResidualsError,
    ZeroVarianceError,
)
from .frame import TimeSeriesFrame
from .var import FittedVar

REGRESSION_TERMS = ("constant", "constant_trend")

# Tabulated large-sample Dickey-Fuller critical values per regression kind.
ADF_CRITICAL_VALUES = {
    "constant": {"1%": -3.43, "5%": -2.862, "10%": -2.567},
    "constant_trend": {"1%": -3.96, "5%": -3.41, "10%": -3.12},
}

_RANK_TOL = 1e-10
_UNIT_CIRCLE_TOL = 1e-8


def _ols(X: np.ndarray, y: np.ndarray, with_stderr: bool = False):
    """QR least squares returning (beta, ssr, dof[, stderr])."""
    n, k = X.shape
    if n <= k:
        raise InsufficientLengthError(f"{n} rows cannot identify {k} parameters")
    Q, R = np.linalg.qr(X)
    diag = np.abs(np.diag(R))
    if diag.min() <= _RANK_TOL * diag.max():
        raise SingularDesignError("design matrix is rank deficient")
    beta = solve_triangular(R, Q.T @ y)
    resid = y - X @ beta
    ssr = float(resid @ resid)
    dof = n - k
    if not with_stderr:
        return beta, ssr, dof
    if ssr <= 0.0:
        raise SingularDesignError("zero residual variance, t-ratios undefined")
    r_inv = solve_triangular(R, np.eye(k))
    stderr = np.sqrt(ssr / dof * np.sum(r_inv**2, axis=1))
    return beta, ssr, dof, stderr


# ---------------------------------------------------------------------------
# Augmented Dickey-Fuller unit-root test
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AdfResult:
    statistic: float
    approx_p_value: float
    critical_values: dict[str, float]
    lag_used: int
    regression_terms: str
    ic: str = "aic"

    @property
    def rejects_unit_root_at_5pct(self) -> bool:
        return self.statistic < self.critical_values["5%"]

    def to_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "approx_p_value": self.approx_p_value,
            "critical_values": dict(self.critical_values),
            "lag_used": self.lag_used,
            "regression_terms": self.regression_terms,
            "ic": self.ic,
        }


def default_adf_max_lag(n: int) -> int:
    """Truncated 12 * (n/100)^0.25 rule."""
    return int(12.0 * (n / 100.0) ** 0.25)


def adf_test(series, max_lag: int | None = None, terms: str = "constant") -> AdfResult:
    """Unit-root t-test on the lagged level in an augmented DF regression.

    The augmentation lag is chosen by minimising AIC over 0..max_lag on a
    common sample, then the statistic comes from a final regression using
    every row available at the chosen lag. The reported p-value is a
    piecewise-linear interpolation of the tabulated critical values, clamped
    to [0.001, 0.999].
    """
    if terms not in REGRESSION_TERMS:
        raise ValueError(f"terms must be one of {REGRESSION_TERMS}, got {terms!r}")
    x = np.asarray(series, dtype=float).ravel()
    n = x.size
    if not np.isfinite(x).all():
        raise ValueError("series contains non-finite values")
    if n >= 1 and x.max() == x.min():
        raise ConstantSeriesError("series is constant")

    n_det = 1 if terms == "constant" else 2
    cap = (n - n_det - 3) // 2
    if max_lag is None:
        max_lag = max(0, min(default_adf_max_lag(n), cap))
    if max_lag < 0:
        raise ValueError("max_lag must be >= 0")
    if n <= max_lag + 2 or max_lag > cap:
        raise InsufficientLengthError(
            f"series of length {n} is too short for max_lag={max_lag}"
        )

    # lag selection on the common sample so AIC values are comparable
    best_lag, best_aic = 0, math.inf
    for lag in range(max_lag + 1):
        X, y, _ = _adf_design(x, lag, max_lag, terms)
        _, ssr, _ = _ols(X, y)
        rows = y.size
        aic = rows * math.log(ssr / rows) if ssr > 0 else -math.inf
        aic += 2 * X.shape[1]
        if aic < best_aic:
            best_lag, best_aic = lag, aic

    X, y, level_idx = _adf_design(x, best_lag, best_lag, terms)
    beta, _, _, stderr = _ols(X, y, with_stderr=True)
    statistic = float(beta[level_idx] / stderr[level_idx])
    table = ADF_CRITICAL_VALUES[terms]
    return AdfResult(
        statistic=statistic,
        approx_p_value=_interpolate_p_value(statistic, table),
        critical_values=dict(table),
        lag_used=best_lag,
        regression_terms=terms,
    )


def _adf_design(x: np.ndarray, lag: int, rows_from: int, terms: str):
    """Regression of the first difference on [det | level lag | diff lags].

    ``rows_from`` fixes the first usable difference row, so candidate lags can
    share one sample during selection.
    """
    d = np.diff(x)
    y = d[rows_from:]
    rows = y.size
    cols = [np.ones(rows)]
    if terms == "constant_trend":
        cols.append(np.arange(1.0, rows + 1.0))
    level_idx = len(cols)
    cols.append(x[rows_from : x.size - 1])
    for j in range(1, lag + 1):
        cols.append(d[rows_from - j : d.size - j])
    return np.column_stack(cols), y, level_idx


def _interpolate_p_value(statistic: float, table: dict[str, float]) -> float:
    anchors = sorted(((table["1%"], 0.01), (table["5%"], 0.05), (table["10%"], 0.10)))
    xs = [a[0] for a in anchors]
    ps = [a[1] for a in anchors]
    if statistic <= xs[0]:
        slope = (ps[1] - ps[0]) / (xs[1] - xs[0])
        p = ps[0] + slope * (statistic - xs[0])
    elif statistic >= xs[-1]:
        slope = (ps[-1] - ps[-2]) / (xs[-1] - xs[-2])
        p = ps[-1] + slope * (statistic - xs[-1])
    else:
        p = float(np.interp(statistic, xs, ps))
    return min(max(p, 0.001), 0.999)


# ---------------------------------------------------------------------------
# Pairwise Granger causality
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GrangerResult:
    cause: str
    effect: str
    lag: int
    f_statistic: float
    p_value: float
    dof: tuple[int, int]

    def to_dict(self) -> dict:
        return {
            "cause": self.cause,
            "effect": self.effect,
            "lag": self.lag,
            "f_statistic": self.f_statistic,
            "p_value": self.p_value,
            "dof": list(self.dof),
        }


def granger_test(frame: TimeSeriesFrame, cause: str, effect: str, lag: int) -> GrangerResult:
    """F-test of whether lags of ``cause`` improve the prediction of ``effect``.

    Compares the restricted regression of the effect on an intercept and its
    own lags against the unrestricted one that adds the cause's lags.
    """
    if lag < 1:
        raise ValueError("lag must be >= 1")
    x = frame.column(cause)
    y = frame.column(effect)
    T = len(frame)
    if T <= 2 * lag + 2:
        raise InsufficientLengthError(f"{T} rows are too few for a lag-{lag} causality test")
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise ValueError("series contain non-finite values")

    target = y[lag:]
    rows = target.size
    y_lags = np.column_stack([y[lag - j : T - j] for j in range(1, lag + 1)])
    x_lags = np.column_stack([x[lag - j : T - j] for j in range(1, lag + 1)])
    ones = np.ones((rows, 1))
    df_den = rows - (2 * lag + 1)
    if df_den < 1:
        raise InsufficientLengthError(
            f"{T} rows leave no residual degrees of freedom at lag {lag}"
        )

    _, ssr_r, _ = _ols(np.hstack([ones, y_lags]), target)
    _, ssr_u, _ = _ols(np.hstack([ones, y_lags, x_lags]), target)
    if ssr_u <= 0.0:
        raise SingularDesignError("unrestricted regression fits perfectly")
    f_stat = max(0.0, ((ssr_r - ssr_u) / lag) / (ssr_u / df_den))
    return GrangerResult(
        cause=cause,
        effect=effect,
        lag=lag,
        f_statistic=float(f_stat),
        p_value=float(stats.f.sf(f_stat, lag, df_den)),
        dof=(lag, df_den),
    )


def granger_matrix(
    frame: TimeSeriesFrame, lag: int
) -> dict[tuple[str, str], GrangerResult]:
    """Granger test for every ordered (cause, effect) pair, diagonal omitted."""
    if frame.n_columns < 2:
        raise ValueError("causality matrix needs at least two columns")
    results = {}
    for cause in frame.columns:
        for effect in frame.columns:
            if cause != effect:
                results[(cause, effect)] = granger_test(frame, cause, effect, lag)
    return results


def granger_pvalues_to_csv(
    results: dict[tuple[str, str], GrangerResult], columns: Sequence[str], path
) -> None:
    """Matrix CSV of p-values, rows = cause, columns = effect."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["cause", *columns])
        for cause in columns:
            row = [cause]
            for effect in columns:
                if cause == effect:
                    row.append("")
                else:
                    row.append(repr(float(results[(cause, effect)].p_value)))
            writer.writerow(row)


# ---------------------------------------------------------------------------
# Residual diagnostics
# ---------------------------------------------------------------------------

def durbin_watson(residuals) -> float:
    """Ratio of squared successive differences to squared residuals, in [0, 4]."""
    e = np.asarray(residuals, dtype=float).ravel()
    if e.size < 2:
        raise InsufficientLengthError("need at least two residuals")
    denom = float(e @ e)
    if denom == 0.0:
        raise ZeroResidualsError("residuals are identically zero")
    return float(np.sum(np.diff(e) ** 2) / denom)


@dataclass(frozen=True)
class NormalityResult:
    jb_statistic: float
    p_value: float
    skewness: float
    excess_kurtosis: float
    n: int

    def to_dict(self) -> dict:
        return {
            "jb_statistic": self.jb_statistic,
            "p_value": self.p_value,
            "skewness": self.skewness,
            "excess_kurtosis": self.excess_kurtosis,
            "n": self.n,
        }


def jarque_bera(residuals) -> NormalityResult:
    """Skewness/kurtosis normality test, chi-squared with 2 dof under the null."""
    e = np.asarray(residuals, dtype=float).ravel()
    n = e.size
    if n < 4:
        raise InsufficientLengthError("need at least four observations")
    centred = e - e.mean()
    m2 = float(np.mean(centred**2))
    if m2 == 0.0:
        raise ZeroVarianceError("sample variance is zero")
    skew = float(np.mean(centred**3) / m2**1.5)
    kurt = float(np.mean(centred**4) / m2**2)
    jb = n / 6.0 * (skew**2 + (kurt - 3.0) ** 2 / 4.0)
    return NormalityResult(
        jb_statistic=float(jb),
        p_value=float(stats.chi2.sf(jb, 2)),
        skewness=skew,
        excess_kurtosis=kurt - 3.0,
        n=n,
    )


@dataclass(frozen=True)
class StabilityResult:
    """Characteristic-root moduli (1/|eigenvalue|) and the stability verdict."""

    root_moduli: tuple[float, ...]
    is_stable: bool

    def to_dict(self) -> dict:
        return {"root_moduli": list(self.root_moduli), "is_stable": self.is_stable}


def stability_check(model: FittedVar) -> StabilityResult:
    """Stable iff every companion-matrix eigenvalue lies inside the unit circle."""
    eigvals = np.linalg.eigvals(model.companion_matrix())
    moduli = np.abs(eigvals)
    roots = tuple(sorted(float(1.0 / m) for m in moduli if m > 1e-12))
    return StabilityResult(
        root_moduli=roots,
        is_stable=bool(moduli.max(initial=0.0) < 1.0 - _UNIT_CIRCLE_TOL),
    )


# ---------------------------------------------------------------------------
# Aggregate report
# ---------------------------------------------------------------------------

@dataclass
class DiagnosticsReport:
    """Bundle of test results for a dataset or a fitted model."""

    adf: dict[str, AdfResult] = field(default_factory=dict)
    granger: dict[tuple[str, str], GrangerResult] = field(default_factory=dict)
    durbin_watson: dict[str, float] = field(default_factory=dict)
    jarque_bera: NormalityResult | None = None
    stability: StabilityResult | None = None

    def to_dict(self) -> dict:
        out: dict = {}
        if self.adf:
            out["adf"] = {name: r.to_dict() for name, r in self.adf.items()}
        if self.granger:
            out["granger"] = {
                f"{cause}->{effect}": r.to_dict()
                for (cause, effect), r in self.granger.items()
            }
        if self.durbin_watson:
            out["durbin_watson"] = dict(self.durbin_watson)
        if self.jarque_bera is not None:
            out["jarque_bera"] = self.jarque_bera.to_dict()
        if self.stability is not None:
            out["stability"] = self.stability.to_dict()
        return out
