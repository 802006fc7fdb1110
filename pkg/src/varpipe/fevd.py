"""Forecast-error variance decomposition of a fitted VAR.

Moving-average coefficients are accumulated from the lag matrices, shocks are
orthogonalized through a lower-triangular factor of the residual covariance,
and each variable's forecast-error variance is split into per-shock shares at
every horizon.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import BadPermutationError, NotPositiveDefiniteError
from .var import FittedVar


def ma_representation(model: FittedVar, horizons: int) -> np.ndarray:
    """Matrices Phi_0..Phi_{h-1} of the moving-average form; Phi_0 = identity."""
    if horizons < 1:
        raise ValueError("horizons must be >= 1")
    k = model.n_columns
    phi = np.zeros((horizons, k, k))
    phi[0] = np.eye(k)
    for s in range(1, horizons):
        for i in range(1, min(s, model.p) + 1):
            phi[s] += model.lag_matrices[i - 1] @ phi[s - i]
    return phi


def orthogonalize(sigma_u: np.ndarray) -> np.ndarray:
    """Lower-triangular factor P with positive diagonal and P @ P.T = sigma_u."""
    sigma = np.asarray(sigma_u, dtype=float)
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise ValueError("covariance must be square")
    scale = np.abs(sigma).max()
    if scale > 0 and np.abs(sigma - sigma.T).max() > 1e-8 * scale:
        raise NotPositiveDefiniteError("covariance is not symmetric")
    sigma = (sigma + sigma.T) / 2.0
    try:
        return np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        raise NotPositiveDefiniteError("covariance is not positive definite") from None


@dataclass
class FevdTable:
    """Per-horizon share of each variable's forecast-error variance by shock.

    ``shares[i][j][k]`` is the fraction of variable j's (i+1)-step
    forecast-error variance attributed to shock k; ``mse[i][j]`` the total.
    ``order`` records the shock orthogonalization ordering used.
    """

    horizons: tuple[int, ...]
    columns: tuple[str, ...]
    order: tuple[str, ...]
    shares: np.ndarray
    mse: np.ndarray
    applied_jitter: float = 0.0

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["horizon", "variable", "shock", "share"])
            for i, horizon in enumerate(self.horizons):
                for j, variable in enumerate(self.columns):
                    for k, shock in enumerate(self.columns):
                        writer.writerow(
                            [horizon, variable, shock, repr(float(self.shares[i, j, k]))]
                        )

    def final_horizon_summary(self) -> dict:
        last = len(self.horizons) - 1
        return {
            "horizon": self.horizons[last],
            "order": list(self.order),
            "applied_jitter": self.applied_jitter,
            "shares": {
                variable: {
                    shock: float(self.shares[last, j, k])
                    for k, shock in enumerate(self.columns)
                }
                for j, variable in enumerate(self.columns)
            },
        }


def decompose(
    model: FittedVar, horizons: int, variable_order: list[str] | None = None
) -> FevdTable:
    """Variance shares per Cholesky-orthogonalized shock at horizons 1..h.

    ``variable_order`` sets the orthogonalization ordering (default: model
    column order); shares stay indexed by the model's columns either way. If
    the residual covariance is not positive definite, one diagonal jitter of
    1e-10 * trace/K is applied and reported in the table.
    """
    if horizons < 1:
        raise ValueError("horizons must be >= 1")
    columns = model.columns
    if variable_order is None:
        variable_order = list(columns)
    if sorted(variable_order) != sorted(columns):
        raise BadPermutationError(
            f"{variable_order!r} is not a permutation of {columns!r}"
        )

    k = model.n_columns
    perm = [columns.index(name) for name in variable_order]
    sigma = np.array(model.sigma_u, dtype=float)
    applied_jitter = 0.0
    try:
        factor_perm = orthogonalize(sigma[np.ix_(perm, perm)])
    except NotPositiveDefiniteError:
        applied_jitter = 1e-10 * float(np.trace(sigma)) / k
        sigma = sigma + applied_jitter * np.eye(k)
        factor_perm = orthogonalize(sigma[np.ix_(perm, perm)])

    # map the factor back to model column order: P[perm[a], perm[b]] = P_perm[a, b]
    factor = np.zeros_like(factor_perm)
    for a in range(k):
        for b in range(k):
            factor[perm[a], perm[b]] = factor_perm[a, b]

    phi = ma_representation(model, horizons)
    theta = phi @ factor
    # cumulative squared orthogonalized responses and total forecast-error variance
    shares_num = np.cumsum(theta**2, axis=0)
    step_var = np.einsum("hjk,kl,hjl->hj", phi, sigma, phi)
    mse = np.cumsum(step_var, axis=0)
    shares = shares_num / mse[:, :, None]
    return FevdTable(
        horizons=tuple(range(1, horizons + 1)),
        columns=columns,
        order=tuple(variable_order),
        shares=shares,
        mse=mse,
        applied_jitter=applied_jitter,
    )
