"""Portfolio volatility: classical covariance, VECM forecast path, ratio-based covariance and beta."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import vecm as vecm_mod


class PortfolioError(ValueError):
    pass


@dataclass
class PortfolioSpec:
    asset_ids: list[str]
    weights: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if len(self.asset_ids) < 2:
            raise PortfolioError("a portfolio needs at least 2 assets")
        if self.weights.shape != (len(self.asset_ids),):
            raise PortfolioError("one weight per asset required")
        if np.any(self.weights <= 0) or np.any(self.weights >= 1):
            raise PortfolioError("weights must lie in (0, 1)")

    def normalized(self) -> "PortfolioSpec":
        return PortfolioSpec(list(self.asset_ids), self.weights / self.weights.sum())


@dataclass
class CorrelationMatrix:
    R: np.ndarray
    window: int | None = None
    end_index: int | None = None

    def __post_init__(self):
        self.R = np.asarray(self.R, dtype=float)
        check_correlation(self.R)

    @classmethod
    def from_returns(cls, returns: np.ndarray, end_index: int | None = None) -> "CorrelationMatrix":
        r = np.asarray(returns, dtype=float)
        return cls(correlation(r), r.shape[0], end_index)


def _as_matrix(R) -> np.ndarray:
    return R.R if isinstance(R, CorrelationMatrix) else np.asarray(R, dtype=float)


@dataclass
class ForecastResult:
    method: str  # "VECM", "Classical", "HVR-recon", "DVR-recon"
    step_variances: np.ndarray
    aggregate: float
    guardrail_triggered: bool = False
    raw_aggregate: float | None = None
    trailing_average: float | None = None
    unstable: bool = False
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "step_variances": [float(v) for v in self.step_variances],
            "aggregate": float(self.aggregate),
            "guardrail_triggered": bool(self.guardrail_triggered),
            "raw_aggregate": None if self.raw_aggregate is None else float(self.raw_aggregate),
            "trailing_average": None if self.trailing_average is None else float(self.trailing_average),
            "unstable": bool(self.unstable),
            "diagnostics": self.diagnostics,
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")


def correlation(returns: np.ndarray) -> np.ndarray:
    """Sample correlation of the columns of ``returns`` with an exact unit diagonal."""
    r = np.asarray(returns, dtype=float)
    cov = np.cov(r, rowvar=False, ddof=1)
    sd = np.sqrt(np.diag(cov))
    if np.any(sd == 0):
        raise PortfolioError("a return column has zero variance")
    R = cov / np.outer(sd, sd)
    R = 0.5 * (R + R.T)
    np.fill_diagonal(R, 1.0)
    return R


def check_correlation(R: np.ndarray, tol: float = 1e-8) -> None:
    R = np.asarray(R, dtype=float)
    if R.ndim != 2 or R.shape[0] != R.shape[1]:
        raise PortfolioError("correlation matrix must be square")
    if not np.allclose(R, R.T, atol=1e-12):
        raise PortfolioError("correlation matrix is not symmetric")
    if not np.allclose(np.diag(R), 1.0, atol=1e-12):
        raise PortfolioError("correlation matrix needs a unit diagonal")
    if np.linalg.eigvalsh(R).min() < -tol:
        raise PortfolioError("correlation matrix is not positive semidefinite")


def quadratic_vol(w: np.ndarray, vols: np.ndarray, R: np.ndarray) -> float:
    """sqrt(w' D R D w) with D = diag(vols)."""
    wd = np.asarray(w) * np.asarray(vols)
    R = _as_matrix(R)
    return float(np.sqrt(max(wd @ R @ wd, 0.0)))


def classical_vol(returns: np.ndarray, spec: PortfolioSpec, window: int | None = None) -> float:
    """sqrt(w' S w) with S the sample covariance of the last ``window`` rows of ``returns``."""
    r = np.asarray(returns, dtype=float)
    if r.ndim != 2 or r.shape[1] != len(spec.asset_ids):
        raise PortfolioError("returns must have one column per portfolio asset")
    if window is None:
        window = r.shape[0]
    if window > r.shape[0]:
        raise PortfolioError(f"window {window} exceeds the {r.shape[0]} rows available")
    if window < 2:
        raise PortfolioError("window must be >= 2")
    S = np.cov(r[-window:], rowvar=False, ddof=1)
    return float(np.sqrt(max(spec.weights @ S @ spec.weights, 0.0)))


def classical_forecast(returns: np.ndarray, spec: PortfolioSpec, h: int, window: int | None = None) -> ForecastResult:
    vol = classical_vol(returns, spec, window)
    return ForecastResult("Classical", np.full(h, vol * vol), vol)


def guardrail(forecast_vol: float, trailing_avg: float, multiplier: float = 3.0) -> tuple[float, bool]:
    """Replace a forecast above ``multiplier`` x the trailing average by that average.

    The comparison is strict; a non-finite forecast also trips the guardrail.
    """
    if not trailing_avg > 0:
        raise PortfolioError(f"trailing average must be positive, got {trailing_avg}")
    if not np.isfinite(forecast_vol) or forecast_vol > multiplier * trailing_avg:
        return float(trailing_avg), True
    return float(forecast_vol), False


def aggregate_vol(step_variances: np.ndarray) -> float:
    return float(np.sqrt(np.mean(step_variances)))


def vecm_portfolio_forecast(
    model: vecm_mod.VecmModel,
    logvol_panel,
    spec: PortfolioSpec,
    h: int,
    R: np.ndarray,
    trailing_avg: float | None = None,
    multiplier: float = 3.0,
    bias_correct: bool = False,
) -> ForecastResult:
    """Forecast asset vols with the VECM, combine them with a fixed correlation, average over h steps.

    With ``trailing_avg`` given, the guardrail is applied to the aggregate;
    an unstable VECM forecast always falls back to the trailing average.
    """
    if h < 1:
        raise PortfolioError("h must be >= 1")
    R = _as_matrix(R)
    if R.shape != (model.n, model.n):
        raise PortfolioError("correlation dimension does not match the model")
    fc = vecm_mod.forecast_logvol(model, logvol_panel, h, bias_correct=bias_correct)
    diag = {"vecm_lag": model.lag, "vecm_rank": model.rank, **{k: v for k, v in model.diagnostics.items() if k != "pi_singular_values"}}
    if fc.unstable:
        step_var = np.full(h, np.nan)
        raw = float("nan")
    else:
        wd = spec.weights[None, :] * fc.vols
        step_var = np.einsum("ij,jk,ik->i", wd, R, wd)
        raw = aggregate_vol(step_var)
    if trailing_avg is None:
        if fc.unstable:
            raise PortfolioError("VECM forecast is unstable and no trailing average was supplied")
        return ForecastResult("VECM", step_var, raw, False, raw, None, False, diag)
    final, hit = guardrail(raw, trailing_avg, multiplier)
    return ForecastResult("VECM", step_var, final, hit, raw, float(trailing_avg), fc.unstable, diag)


def covariance_reconstruct(ratios, market_vol: float, R: np.ndarray) -> np.ndarray:
    """Sigma = market_vol^2 * (ratios ratios') o R (element-wise product)."""
    k = np.asarray(ratios, dtype=float)
    R = _as_matrix(R)
    if R.shape != (k.size, k.size):
        raise PortfolioError(f"ratio vector of length {k.size} does not match R of shape {R.shape}")
    if np.any(k <= 0):
        raise PortfolioError("ratios must be positive")
    return market_vol**2 * np.outer(k, k) * R


def capm_beta(corr_im: float, hvr_i: float) -> float:
    if not -1.0 <= corr_im <= 1.0:
        raise PortfolioError("correlation must lie in [-1, 1]")
    if hvr_i <= 0:
        raise PortfolioError("HVR must be positive")
    return corr_im * hvr_i
