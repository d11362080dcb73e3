"""Unit-root and residual-based cointegration tests, and the batch classifier."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import optimize

from . import _mackinnon
from .volcore import RatioSeries, VolSeries

MIN_OBS = 25
DEFAULT_ALPHA = 0.05


class DegenerateRegressorError(ValueError):
    pass


@dataclass
class AdfResult:
    test_statistic: float
    pvalue: float
    lags_used: int
    n_obs: int
    critical_value: float
    alpha_level: float
    decision: str  # "stationary", "unit_root" or "dropped"

    @property
    def dropped(self) -> bool:
        return self.decision == "dropped"

    @property
    def stationary(self) -> bool:
        return self.decision == "stationary"


@dataclass
class CointResult:
    alpha_hat: float
    beta_hat: float
    residual_adf: AdfResult
    decision: str  # "cointegrated", "not_cointegrated" or "dropped"

    @property
    def cointegrated(self) -> bool:
        return self.decision == "cointegrated"


def default_max_lags(n: int) -> int:
    return int(np.floor(12.0 * (n / 100.0) ** 0.25))


def critical_value(alpha: float, n_series: int, regression: str, nobs: int) -> float:
    """Critical value at ``alpha``; tabulated levels use the response surface directly."""
    for level, cv in zip(_mackinnon.CRIT_LEVELS, _mackinnon.critical_values(n_series, regression, nobs)):
        if abs(alpha - level) < 1e-12:
            return float(cv)
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    return float(optimize.brentq(lambda s: _mackinnon.pvalue(s, n_series, regression) - alpha, -15.0, 2.5))


def _lag_design(x: np.ndarray, lags: int, start: int, constant: bool):
    """Regression of dx_t on x_{t-1}, lagged differences and an optional constant for t >= start."""
    dx = np.diff(x)
    # dx[t-1] is the change into x[t]; rows are t = start..n-1
    rows = np.arange(start, x.shape[0])
    cols = [x[rows - 1]]
    for j in range(1, lags + 1):
        cols.append(dx[rows - 1 - j])
    if constant:
        cols.append(np.ones(rows.shape[0]))
    return dx[rows - 1], np.column_stack(cols)


def _ols_t(y, X):
    coef, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    n, k = X.shape
    ssr = float(resid @ resid)
    s2 = ssr / (n - k)
    xtx_inv = np.linalg.pinv(X.T @ X)
    se = np.sqrt(s2 * xtx_inv[0, 0])
    return coef[0] / se if se > 0 else -np.inf, ssr, n, k


def adf_test(
    x,
    regression: str = "c",
    max_lags: int | None = None,
    autolag: bool = True,
    alpha: float = DEFAULT_ALPHA,
    n_series: int = 1,
) -> AdfResult:
    """Augmented Dickey-Fuller t-test of a unit root in ``x``.

    ``regression`` is ``"c"`` (constant) or ``"n"`` (none). With ``autolag``
    the lag order minimizing AIC over 0..max_lags is chosen on a common
    sample, then the regression is re-run on all usable rows. Series shorter
    than 25 points come back with decision ``"dropped"``.

    ``n_series`` > 1 switches to Engle-Granger critical values (for residuals
    of a cointegrating regression with a constant).
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    if regression not in ("c", "n"):
        raise ValueError(f"regression must be 'c' or 'n', got {regression!r}")
    if n < MIN_OBS:
        return AdfResult(np.nan, np.nan, 0, n, np.nan, alpha, "dropped")
    constant = regression == "c"
    if max_lags is None:
        max_lags = default_max_lags(n)
    # keep enough rows for the largest regression
    max_lags = int(max(0, min(max_lags, n // 2 - 2 - int(constant))))
    if autolag and max_lags > 0:
        best_aic, lags = np.inf, 0
        for p in range(max_lags + 1):
            y, X = _lag_design(x, p, max_lags + 1, constant)
            _, ssr, nobs, k = _ols_t(y, X)
            aic = nobs * np.log(ssr / nobs) + 2 * k
            if aic < best_aic - 1e-12:
                best_aic, lags = aic, p
    else:
        lags = max_lags
    y, X = _lag_design(x, lags, lags + 1, constant)
    stat, _, nobs, _ = _ols_t(y, X)
    stat = float(stat)
    cv = critical_value(alpha, n_series, "c" if n_series > 1 else regression, nobs)
    pval = _mackinnon.pvalue(stat, n_series, "c" if n_series > 1 else regression)
    return AdfResult(stat, pval, lags, nobs, cv, alpha, "stationary" if stat < cv else "unit_root")


def engle_granger(
    asset: VolSeries | np.ndarray,
    market: VolSeries | np.ndarray,
    alpha: float = DEFAULT_ALPHA,
    max_lags: int | None = None,
) -> CointResult:
    """Two-step test: OLS of asset vol on market vol with intercept, then ADF on residuals.

    The residual test has no deterministic terms and uses Engle-Granger
    critical values for two variables.
    """
    if isinstance(asset, VolSeries) and isinstance(market, VolSeries):
        common, ia, ib = np.intersect1d(asset.times, market.times, assume_unique=True, return_indices=True)
        y, x = asset.sigma[ia], market.sigma[ib]
    else:
        y, x = np.asarray(asset, dtype=float), np.asarray(market, dtype=float)
        if y.shape != x.shape:
            raise ValueError("series lengths differ")
    if y.shape[0] < MIN_OBS:
        adf = AdfResult(np.nan, np.nan, 0, y.shape[0], np.nan, alpha, "dropped")
        return CointResult(np.nan, np.nan, adf, "dropped")
    xc = x - x.mean()
    sxx = float(xc @ xc)
    if sxx <= 1e-14 * max(1.0, float(x @ x)):
        raise DegenerateRegressorError("market volatility has zero variance")
    b = float(xc @ (y - y.mean())) / sxx
    a = float(y.mean() - b * x.mean())
    resid = y - a - b * x
    adf = adf_test(resid, regression="n", max_lags=max_lags, alpha=alpha, n_series=2)
    return CointResult(a, b, adf, "cointegrated" if adf.stationary else "not_cointegrated")


# ---------------------------------------------------------------------------


@dataclass
class BatchSummary:
    horizon: str
    pct_stationary: float
    pct_cointegrated: float
    n_tested: int
    n_dropped: int

    def row(self) -> list:
        return [self.horizon, f"{self.pct_stationary:.2f}", f"{self.pct_cointegrated:.2f}", self.n_tested, self.n_dropped]


BATCH_COLUMNS = ["horizon", "stationary_pct", "cointegrated_pct", "n_tested", "n_dropped"]
BATCH_LABELS = ["Horizon", "Stationary (%)", "Cointegrated (%)"]


def batch_classify(
    items: list[tuple[RatioSeries, VolSeries, VolSeries]],
    horizon: str,
    alpha: float = DEFAULT_ALPHA,
    max_lags: int | None = None,
) -> BatchSummary:
    """ADF on each HVR and Engle-Granger on each (asset vol, market vol) pair.

    An item is dropped when either its HVR or its aligned volatility pair has
    fewer than 25 points; percentages are over the remaining items.
    """
    if not items:
        raise ValueError("empty panel")
    n_stat = n_coint = n_tested = n_dropped = 0
    for ratio, asset_vol, market_vol in items:
        adf = adf_test(ratio.ratio, "c", max_lags=max_lags, alpha=alpha)
        try:
            eg = engle_granger(asset_vol, market_vol, alpha=alpha, max_lags=max_lags)
        except DegenerateRegressorError:
            eg = None
        if adf.dropped or eg is None or eg.decision == "dropped":
            n_dropped += 1
            continue
        n_tested += 1
        n_stat += adf.stationary
        n_coint += eg.cointegrated
    pct = (lambda k: 100.0 * k / n_tested) if n_tested else (lambda k: float("nan"))
    return BatchSummary(horizon, pct(n_stat), pct(n_coint), n_tested, n_dropped)


def write_batch_csv(path: str | Path, rows: list[BatchSummary], counts: bool = True) -> None:
    """One row per horizon; ``counts=False`` drops the tested/dropped columns (published layout)."""
    ncol = len(BATCH_COLUMNS) if counts else 3
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(BATCH_COLUMNS if counts else BATCH_LABELS)
        for r in rows:
            w.writerow(r.row()[:ncol])
