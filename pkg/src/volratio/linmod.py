"""Single-regressor least squares and the naive volatility models built on it."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from .volcore import VolSeries


class RegressionError(ValueError):
    pass


@dataclass
class OlsFit:
    intercept: float | None
    slope: float
    stderrs: np.ndarray
    t_stats: np.ndarray
    p_values: np.ndarray
    r2: float
    adj_r2: float
    log_likelihood: float
    aic: float
    bic: float
    n_obs: int
    residuals: np.ndarray = field(repr=False)
    fitted: np.ndarray = field(repr=False)

    @property
    def slope_pvalue(self) -> float:
        return float(self.p_values[-1])


def ols(y, x, intercept: bool = True) -> OlsFit:
    """Closed-form OLS of ``y`` on ``x``.

    Coefficient order in stderrs/t_stats/p_values is (intercept, slope) or
    (slope,). R^2 is centered with an intercept and uncentered without one.
    AIC and BIC count the error variance as a parameter.
    """
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    if y.shape != x.shape:
        raise RegressionError(f"length mismatch: {y.shape[0]} vs {x.shape[0]}")
    n = y.shape[0]
    if n < 3:
        raise RegressionError("need at least 3 observations")
    if intercept:
        xm, ym = x.mean(), y.mean()
        xc = x - xm
        sxx = float(xc @ xc)
        if sxx <= 1e-14 * max(1.0, float(x @ x)):
            raise RegressionError("regressor is constant")
        b = float(xc @ (y - ym)) / sxx
        a = float(ym - b * xm)
        fitted = a + b * x
        k = 2
        xtx_inv = np.linalg.inv(np.array([[n, x.sum()], [x.sum(), x @ x]]))
        tss = float(((y - ym) ** 2).sum())
    else:
        sxx = float(x @ x)
        if sxx == 0:
            raise RegressionError("regressor is identically zero")
        b = float(x @ y) / sxx
        a = None
        fitted = b * x
        k = 1
        xtx_inv = np.array([[1.0 / sxx]])
        tss = float(y @ y)
    resid = y - fitted
    ssr = float(resid @ resid)
    df = n - k
    s2 = ssr / df
    se = np.sqrt(s2 * np.diag(xtx_inv))
    coefs = np.array([a, b]) if intercept else np.array([b])
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(se > 0, coefs / se, np.copysign(np.inf, coefs))
    p = 2.0 * stats.t.sf(np.abs(t), df)
    r2 = 1.0 - ssr / tss if tss > 0 else 1.0
    adj = 1.0 - (1.0 - r2) * (n - int(intercept)) / df
    sigma2_ml = ssr / n
    if sigma2_ml > 0:
        loglik = -0.5 * n * (np.log(2.0 * np.pi) + np.log(sigma2_ml) + 1.0)
    else:
        loglik = np.inf
    n_params = k + 1
    return OlsFit(
        intercept=a,
        slope=b,
        stderrs=se,
        t_stats=t,
        p_values=p,
        r2=float(r2),
        adj_r2=float(adj),
        log_likelihood=float(loglik),
        aic=float(2 * n_params - 2 * loglik),
        bic=float(n_params * np.log(n) - 2 * loglik),
        n_obs=n,
        residuals=resid,
        fitted=fitted,
    )


def mape_detail(actual, predicted) -> tuple[float, int]:
    """MAPE in percent and the number of points dropped for a zero actual."""
    a = np.asarray(actual, dtype=float)
    p = np.asarray(predicted, dtype=float)
    if a.shape != p.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {p.shape}")
    keep = a != 0
    if not keep.any():
        raise ValueError("every actual value is zero")
    return float(100.0 * np.mean(np.abs(a[keep] - p[keep]) / np.abs(a[keep]))), int(np.count_nonzero(~keep))


def mape(actual, predicted) -> float:
    return mape_detail(actual, predicted)[0]


def rmse(actual, predicted) -> float:
    d = np.asarray(actual, dtype=float) - np.asarray(predicted, dtype=float)
    return float(np.sqrt(np.mean(d * d)))


# ---------------------------------------------------------------------------


@dataclass
class ModelComparison:
    model: str  # "M1" (no intercept) or "M2"
    horizon: str
    pct_beta_significant: float
    mean_adj_r2: float
    mean_mape: float
    mean_aic: float
    mean_bic: float
    n_assets: int
    n_mape_excluded: int = 0


def naive_model_battery(
    panel: list[tuple[VolSeries, VolSeries]],
    horizon: str,
    model: str = "M1",
    level: float = 0.05,
) -> ModelComparison:
    """Regress each asset's volatility on the index volatility and average the fit statistics.

    ``M1`` has no intercept, ``M2`` has one. Adj-R^2 and MAPE are percentages.
    MAPE is NaN when some asset's actual series contains a zero, which is how
    the published tables leave those cells empty.
    """
    if model not in ("M1", "M2"):
        raise ValueError(f"model must be M1 or M2, got {model!r}")
    if not panel:
        raise ValueError("empty panel")
    sig, adj, mapes, aic, bic = [], [], [], [], []
    excluded = 0
    for asset, market in panel:
        common, ia, ib = np.intersect1d(asset.times, market.times, assume_unique=True, return_indices=True)
        fit = ols(asset.sigma[ia], market.sigma[ib], intercept=model == "M2")
        sig.append(fit.slope_pvalue < level)
        adj.append(fit.adj_r2)
        m, nx = mape_detail(asset.sigma[ia], fit.fitted)
        excluded += nx
        mapes.append(m)
        aic.append(fit.aic)
        bic.append(fit.bic)
    return ModelComparison(
        model=model,
        horizon=horizon,
        pct_beta_significant=100.0 * float(np.mean(sig)),
        mean_adj_r2=100.0 * float(np.mean(adj)),
        mean_mape=float(np.mean(mapes)) if excluded == 0 else float("nan"),
        mean_aic=float(np.mean(aic)),
        mean_bic=float(np.mean(bic)),
        n_assets=len(panel),
        n_mape_excluded=excluded,
    )


MODEL_LABELS = {"M1": "Model 1: No intercept", "M2": "Model 2: With intercept"}
STAT_ROWS = [
    ("% beta significant (p<0.05)", "pct_beta_significant", "{:.0f}%"),
    ("Mean Adj. R2 (%)", "mean_adj_r2", "{:.1f}"),
    ("Mean MAPE (%)", "mean_mape", "{:.1f}"),
    ("Average AIC", "mean_aic", "{:.1f}"),
    ("Average BIC", "mean_bic", "{:.1f}"),
]


def write_model_table(path: str | Path, comparisons: list[ModelComparison]) -> None:
    """Published layout: a column per horizon, an M1 block then an M2 block, each led by a title row."""
    horizons = list(dict.fromkeys(c.horizon for c in comparisons))
    by_key = {(c.model, c.horizon): c for c in comparisons}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["", *horizons])
        for model in ("M1", "M2"):
            if not any((model, h) in by_key for h in horizons):
                continue
            w.writerow([MODEL_LABELS[model]] + [""] * len(horizons))
            for label, attr, fmt in STAT_ROWS:
                cells = []
                for h in horizons:
                    c = by_key.get((model, h))
                    v = None if c is None else getattr(c, attr)
                    cells.append("--" if v is None or not np.isfinite(v) else fmt.format(v))
                w.writerow([label, *cells])
