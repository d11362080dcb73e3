"""Realized and conditional volatility, volatility ratios and their cross-sectional distribution."""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from scipy import optimize, stats

from . import kernels
from .ingest import ReturnSeries

MIN_GARCH_OBS = 100
PERSISTENCE_CAP = 0.9999


class VolError(ValueError):
    pass


class GarchConvergenceError(RuntimeError):
    def __init__(self, message: str, grad_norm: float):
        super().__init__(f"{message} (final gradient norm {grad_norm:.3g})")
        self.grad_norm = grad_norm


@dataclass
class VolSeries:
    asset_id: str
    window: int
    times: np.ndarray
    sigma: np.ndarray
    frequency: str = "day"

    def __len__(self):
        return self.sigma.shape[0]


@dataclass
class RatioSeries:
    asset_id: str
    benchmark_id: str
    kind: str  # "HVR" or "DVR"
    window: int
    times: np.ndarray
    ratio: np.ndarray
    n_excluded: int = 0
    frequency: str = "day"

    def __len__(self):
        return self.ratio.shape[0]


def rolling_vol(r: ReturnSeries, k: int) -> VolSeries:
    """Sample standard deviation (divisor k-1) of the trailing ``k`` returns, not annualized."""
    if k < 2:
        raise VolError(f"window must be >= 2, got {k}")
    if len(r) < k:
        raise VolError(f"{r.asset_id}: {len(r)} returns is shorter than window {k}")
    sigma = kernels.rolling_std(np.ascontiguousarray(r.returns, dtype=float), k)
    return VolSeries(r.asset_id, k, r.times[k - 1 :].copy(), sigma, r.frequency)


def _common(a_times, b_times):
    common, ia, ib = np.intersect1d(a_times, b_times, assume_unique=True, return_indices=True)
    return common, ia, ib


def hvr(asset: VolSeries, market: VolSeries) -> RatioSeries:
    """Historical volatility ratio at the shared timestamps.

    Points where either volatility is zero are dropped and counted in
    ``n_excluded``; the ratio is undefined (or zero) there.
    """
    if asset.window != market.window:
        raise VolError(f"window mismatch: {asset.window} vs {market.window}")
    if asset.frequency != market.frequency:
        raise VolError("frequency mismatch")
    common, ia, ib = _common(asset.times, market.times)
    if common.size == 0:
        raise VolError(f"{asset.asset_id} and {market.asset_id} do not overlap")
    si, sm = asset.sigma[ia], market.sigma[ib]
    ok = (sm > 0) & (si > 0)
    return RatioSeries(
        asset.asset_id,
        market.asset_id,
        "HVR",
        asset.window,
        common[ok],
        si[ok] / sm[ok],
        int(np.count_nonzero(~ok)),
        asset.frequency,
    )


# ---------------------------------------------------------------------------
# GARCH(1,1)


@dataclass
class GarchModel:
    omega: float
    alpha: float
    beta: float
    log_likelihood: float
    n_obs: int
    last_return: float
    last_variance: float
    grad_norm: float = 0.0
    asset_id: str = ""

    @property
    def persistence(self) -> float:
        return self.alpha + self.beta

    @property
    def unconditional_variance(self) -> float:
        return self.omega / (1.0 - self.persistence)

    def one_step_variance(self) -> float:
        return self.omega + self.alpha * self.last_return**2 + self.beta * self.last_variance

    def forecast_variance(self, h: int) -> np.ndarray:
        """Variance forecasts for steps 1..h by iterating the recursion in expectation."""
        if h < 1:
            raise VolError("h must be >= 1")
        out = np.empty(h)
        out[0] = self.one_step_variance()
        for j in range(1, h):
            out[j] = self.omega + self.persistence * out[j - 1]
        return out

    def conditional_variance(self, r: np.ndarray) -> np.ndarray:
        """Filtered variances for ``r`` started from its sample variance (n + 1 values)."""
        r = np.ascontiguousarray(r, dtype=float)
        return kernels.garch_filter(r, self.omega, self.alpha, self.beta, float(np.var(r)))


def _garch_start(x, s0):
    best = None
    for a in (0.02, 0.05, 0.1, 0.2):
        for b in (0.0, 0.5, 0.75, 0.85, 0.9, 0.95):
            if a + b >= PERSISTENCE_CAP:
                continue
            w = s0 * (1.0 - a - b)
            f = kernels.garch_nll(x, w, a, b, s0)
            if best is None or f < best[0]:
                best = (f, np.array([w, a, b]))
    return best[1]


def fit_garch11(r: ReturnSeries | np.ndarray, tol: float = 1e-9, lr_crit: float = 2.706) -> GarchModel:
    """Gaussian quasi-maximum likelihood for sigma2_t = omega + alpha r_{t-1}^2 + beta sigma2_{t-1}.

    Returns are used as given (no mean is removed). The fit runs on returns
    divided by their standard deviation; omega is mapped back afterwards.
    Beta is not identified when alpha is zero, so when the likelihood-ratio
    statistic against the constant-variance model is below ``lr_crit``
    (one-sided 5% by default) the constant-variance model is returned.
    """
    asset_id = r.asset_id if isinstance(r, ReturnSeries) else ""
    x = np.asarray(r.returns if isinstance(r, ReturnSeries) else r, dtype=float)
    n = x.shape[0]
    if n < MIN_GARCH_OBS:
        raise VolError(f"GARCH needs at least {MIN_GARCH_OBS} observations, got {n}")
    scale = float(np.std(x))
    if scale == 0:
        raise VolError("constant return series")
    z = np.ascontiguousarray(x / scale)
    s0 = float(np.var(z))

    def nll(theta):
        return kernels.garch_nll(z, theta[0], theta[1], theta[2], s0) / n

    start = _garch_start(z, s0)
    with warnings.catch_warnings():
        # SLSQP's line search may step marginally past a bound; it is clipped
        warnings.filterwarnings("ignore", "Values in x were outside bounds", RuntimeWarning)
        res = optimize.minimize(
            nll,
            start,
            method="SLSQP",
            bounds=[(1e-8, 10.0), (0.0, 1.0), (0.0, 1.0)],
            constraints=[{"type": "ineq", "fun": lambda t: PERSISTENCE_CAP - t[1] - t[2]}],
            options={"ftol": tol, "maxiter": 500},
        )
    grad = optimize.approx_fprime(res.x, nll, 1e-7)
    if not res.success:
        raise GarchConvergenceError(f"GARCH optimizer failed: {res.message}", float(np.linalg.norm(grad)))
    w, a, b = (float(v) for v in res.x)
    m2 = float(np.mean(z * z))
    if 2.0 * (kernels.garch_nll(z, m2, 0.0, 0.0, s0) - res.fun * n) < lr_crit:
        w, a, b = m2, 0.0, 0.0
    s2 = kernels.garch_filter(z, w, a, b, s0)
    loglik = -kernels.garch_nll(z, w, a, b, s0) - n * np.log(scale)
    return GarchModel(
        omega=w * scale**2,
        alpha=a,
        beta=b,
        log_likelihood=float(loglik),
        n_obs=n,
        last_return=float(x[-1]),
        last_variance=float(s2[-2]) * scale**2,
        grad_norm=float(np.linalg.norm(grad)),
        asset_id=asset_id,
    )


def dvr(asset_model: GarchModel, market_model: GarchModel, h: int = 1) -> float | np.ndarray:
    """Dynamic volatility ratio from GARCH forecasts.

    ``h == 1`` gives the one-step ratio as a float; larger ``h`` returns the
    ratio path for steps 1..h.
    """
    if asset_model.n_obs != market_model.n_obs:
        raise VolError("models were fitted on samples of different length")
    if h == 1:
        m = market_model.one_step_variance()
        if not m > 0:
            raise VolError("market one-step variance is not positive")
        return float(np.sqrt(asset_model.one_step_variance() / m))
    return np.sqrt(asset_model.forecast_variance(h) / market_model.forecast_variance(h))


def dvr_from_arima(ratios: RatioSeries, order=None, h: int = 1) -> np.ndarray:
    """DVR as the ARIMA forecast of the HVR series itself (no GARCH step)."""
    from . import arima

    x = ratios.ratio
    if order is None:
        order = arima.auto_order(x)
    model = arima.fit_arima(x, order, intercept=order[1] == 0)
    fc, _ = arima.forecast(model, x, h)
    return fc


# ---------------------------------------------------------------------------
# Cross-sectional HVR distribution


@dataclass
class DistDiagnostics:
    sample_mean: float
    sample_std: float
    skewness: float
    excess_kurtosis: float
    fitted_t_dof: float
    fitted_t_loc: float
    fitted_t_scale: float
    qq_points: np.ndarray = field(repr=False)  # (n, 2): theoretical, sample

    def to_dict(self) -> dict:
        d = {k: float(getattr(self, k)) for k in (
            "sample_mean", "sample_std", "skewness", "excess_kurtosis",
            "fitted_t_dof", "fitted_t_loc", "fitted_t_scale")}
        d["qq_points"] = self.qq_points.tolist()
        return d


def hvr_distribution(values, max_dof: float = 1e4) -> DistDiagnostics:
    """Moments, normal QQ points and a location-scale t fit for the logs of ``values``."""
    v = np.asarray(values, dtype=float)
    if v.size < 8:
        raise VolError(f"need at least 8 values, got {v.size}")
    if np.any(v <= 0):
        raise VolError("ratios must be positive")
    x = np.log(v)
    n = x.size
    srt = np.sort(x)
    theo = stats.norm.ppf((np.arange(1, n + 1) - 0.5) / n)
    mu, sd = float(x.mean()), float(x.std(ddof=1))
    dof, loc, scale = _fit_t(x, mu, sd, max_dof)
    return DistDiagnostics(
        sample_mean=mu,
        sample_std=sd,
        skewness=float(stats.skew(x)),
        excess_kurtosis=float(stats.kurtosis(x)),
        fitted_t_dof=dof,
        fitted_t_loc=loc,
        fitted_t_scale=scale,
        qq_points=np.column_stack([theo, srt]),
    )


def _fit_t(x, mu, sd, max_dof):
    # log-dof parametrization keeps the search well conditioned; dof is capped
    # because the likelihood is flat once the data look Gaussian
    def nll(theta):
        dof = np.exp(theta[0])
        return -np.sum(stats.t.logpdf(x, dof, loc=theta[1], scale=np.exp(theta[2])))

    best = None
    for d0 in (3.0, 10.0, 100.0):
        res = optimize.minimize(
            nll,
            [np.log(d0), mu, np.log(sd)],
            method="L-BFGS-B",
            bounds=[(np.log(0.5), np.log(max_dof)), (None, None), (None, None)],
        )
        if best is None or res.fun < best.fun:
            best = res
    return float(np.exp(best.x[0])), float(best.x[1]), float(np.exp(best.x[2]))


# ---------------------------------------------------------------------------
# serialization


def _iso(ts: int) -> str:
    return datetime.fromtimestamp(int(ts), tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def write_series_csv(path, times, values) -> None:
    with open(path, "w") as fh:
        fh.write("timestamp,value\n")
        for t, v in zip(times, values):
            fh.write(f"{_iso(t)},{float(v)!r}\n")


def ratio_report(series: RatioSeries) -> dict:
    return {
        "asset": series.asset_id,
        "benchmark": series.benchmark_id,
        "kind": series.kind,
        "k": series.window,
        "frequency": series.frequency,
        "n_points": len(series),
        "exclusion_count": series.n_excluded,
    }


def vol_report(series: VolSeries) -> dict:
    return {
        "asset": series.asset_id,
        "k": series.window,
        "frequency": series.frequency,
        "n_points": len(series),
    }


def save_ratio(series: RatioSeries, stem: str | Path) -> tuple[Path, Path]:
    stem = Path(stem)
    csv_path, json_path = stem.with_suffix(".csv"), stem.with_suffix(".json")
    write_series_csv(csv_path, series.times, series.ratio)
    json_path.write_text(json.dumps(ratio_report(series), indent=2, sort_keys=True) + "\n")
    return csv_path, json_path


def save_vol(series: VolSeries, stem: str | Path) -> tuple[Path, Path]:
    stem = Path(stem)
    csv_path, json_path = stem.with_suffix(".csv"), stem.with_suffix(".json")
    write_series_csv(csv_path, series.times, series.sigma)
    json_path.write_text(json.dumps(vol_report(series), indent=2, sort_keys=True) + "\n")
    return csv_path, json_path
