"""ARIMA estimation, stepwise order selection and forecasting for HVR series."""
from __future__ import annotations

import csv
import warnings
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import linalg, optimize

from . import kernels
from .linmod import mape_detail, rmse

MIN_OBS = 25
KPSS_CRIT = ((0.10, 0.347), (0.05, 0.463), (0.025, 0.574), (0.01, 0.739))
_U_BOUND = 7.0  # tanh(7) ~ 1 - 1.7e-6, keeps roots strictly off the unit circle
_EMPTY = np.empty(0)


class ArimaError(ValueError):
    pass


class ArimaFitError(RuntimeError):
    pass


@dataclass
class ArimaModel:
    order: tuple[int, int, int]
    ar: np.ndarray
    ma: np.ndarray
    intercept: float
    include_intercept: bool
    sigma2: float
    log_likelihood: float
    n_obs: int

    @property
    def n_params(self) -> int:
        p, _, q = self.order
        return p + q + int(self.include_intercept) + 1

    @property
    def aic(self) -> float:
        return -2.0 * self.log_likelihood + 2.0 * self.n_params

    @property
    def bic(self) -> float:
        return -2.0 * self.log_likelihood + np.log(self.n_obs) * self.n_params

    @property
    def aicc(self) -> float:
        k = self.n_params
        return self.aic + 2.0 * k * (k + 1) / max(self.n_obs - k - 1, 1)

    def criterion(self, ic: str) -> float:
        return {"aic": self.aic, "aicc": self.aicc, "bic": self.bic}[ic]


# ---------------------------------------------------------------------------
# parameter transforms


def pacf_to_coeffs(r: np.ndarray) -> np.ndarray:
    """Map partial autocorrelations in (-1, 1) to stationary AR coefficients (Durbin-Levinson)."""
    phi = np.zeros(0)
    for k, rk in enumerate(r):
        new = np.empty(k + 1)
        new[:k] = phi - rk * phi[::-1]
        new[k] = rk
        phi = new
    return phi


def coeffs_to_pacf(phi: np.ndarray) -> np.ndarray:
    phi = np.array(phi, dtype=float)
    p = phi.shape[0]
    r = np.zeros(p)
    for k in range(p - 1, -1, -1):
        rk = phi[k]
        r[k] = rk
        if k == 0:
            break
        if abs(rk) >= 1:
            raise ArimaError("coefficients are not stationary")
        phi = (phi[:k] + rk * phi[:k][::-1]) / (1.0 - rk * rk)
    return r


def _is_stationary(phi) -> bool:
    if len(phi) == 0:
        return True
    roots = np.roots(np.r_[-np.asarray(phi)[::-1], 1.0])
    return bool(np.all(np.abs(roots) > 1.0 + 1e-8))


def _unpack(u, p, q):
    phi = pacf_to_coeffs(np.tanh(u[:p]))
    theta = -pacf_to_coeffs(np.tanh(u[p : p + q]))
    return phi, theta


def _pack(phi, theta):
    rp = np.clip(coeffs_to_pacf(phi), -0.999, 0.999)
    rq = np.clip(coeffs_to_pacf(-np.asarray(theta)), -0.999, 0.999)
    return np.r_[np.arctanh(rp), np.arctanh(rq)]


# ---------------------------------------------------------------------------
# likelihood


def _state_space(phi, theta):
    p, q = phi.shape[0], theta.shape[0]
    m = max(p, q + 1)
    T = np.zeros((m, m))
    T[:p, 0] = phi
    T[: m - 1, 1:] = np.eye(m - 1)
    R = np.zeros(m)
    R[0] = 1.0
    R[1 : q + 1] = theta
    if m == 1:
        P0 = np.array([[1.0 / (1.0 - T[0, 0] ** 2)]])
    else:
        P0 = linalg.solve_discrete_lyapunov(T, np.outer(R, R))
    return T, R, P0


def _kalman(w, phi, theta, innov=_EMPTY):
    T, R, P0 = _state_space(phi, theta)
    return kernels.arma_kalman(np.ascontiguousarray(w), T, R, P0, 1e-11, innov)


def arma_loglik(w, phi, theta, mu=0.0):
    """Exact Gaussian log-likelihood with the innovation variance concentrated out.

    Returns ``(loglik, sigma2)``.
    """
    n = w.shape[0]
    ssq, sumlog, _, _ = _kalman(w - mu, np.asarray(phi, float), np.asarray(theta, float))
    sigma2 = ssq / n
    return -0.5 * n * (np.log(2.0 * np.pi * sigma2) + 1.0) - 0.5 * sumlog, sigma2


def _css_start(w, p, q, mu0, use_mu):
    """Conditional-sum-of-squares estimates used to start the exact ML search."""
    if p + q == 0:
        return np.zeros(0), mu0

    def resid(theta):
        mu = theta[-1] if use_mu else 0.0
        return kernels.arma_css_residuals(
            np.ascontiguousarray(w - mu), np.ascontiguousarray(theta[:p]), np.ascontiguousarray(theta[p : p + q])
        )

    x0 = np.r_[np.zeros(p + q), [mu0] if use_mu else []]
    try:
        sol = optimize.least_squares(resid, x0, method="lm", max_nfev=200 * (p + q + 1))
        est = sol.x
    except (ValueError, np.linalg.LinAlgError):
        est = x0
    phi, theta = est[:p], est[p : p + q]
    if not (_is_stationary(phi) and _is_stationary(-theta)) or not np.all(np.isfinite(est)):
        phi, theta = np.zeros(p), np.zeros(q)
    return np.r_[phi, theta], (est[-1] if use_mu else 0.0)


def fit_arima(x, order: tuple[int, int, int], intercept: bool = True) -> ArimaModel:
    """Exact maximum likelihood ARIMA(p, d, q) fit.

    ``intercept`` is the mean of the differenced series (a drift when d >= 1).
    AR and MA parts are estimated through their partial autocorrelations, so
    the fitted model is always stationary and invertible.
    """
    x = np.asarray(x, dtype=float)
    p, d, q = (int(v) for v in order)
    if min(p, d, q) < 0:
        raise ArimaError(f"invalid order {order}")
    if x.shape[0] < MIN_OBS + p + d + q:
        raise ArimaError(f"series of length {x.shape[0]} too short for order {order}")
    w = np.diff(x, n=d) if d else x.copy()
    n = w.shape[0]
    mu0 = float(w.mean()) if intercept else 0.0

    if p + q == 0:
        sigma2 = float(np.mean((w - mu0) ** 2))
        if sigma2 <= 0:
            raise ArimaFitError("differenced series is constant")
        ll = -0.5 * n * (np.log(2.0 * np.pi * sigma2) + 1.0)
        return ArimaModel((p, d, q), np.zeros(0), np.zeros(0), mu0, intercept, sigma2, float(ll), n)

    scale = float(np.std(w)) or 1.0
    ws = w / scale
    start_coef, start_mu = _css_start(ws, p, q, mu0 / scale, intercept)

    def negll(u):
        phi, theta = _unpack(u, p, q)
        mu = u[-1] if intercept else 0.0
        ll, _ = arma_loglik(ws, phi, theta, mu)
        return -ll / n if np.isfinite(ll) else 1e10

    bounds = [(-_U_BOUND, _U_BOUND)] * (p + q) + ([(None, None)] if intercept else [])
    u0 = np.r_[_pack(start_coef[:p], start_coef[p:]), [start_mu] if intercept else []]
    best = None
    rng = np.random.default_rng(12345)
    for attempt in range(3):
        start = u0 if attempt == 0 else u0 + rng.normal(scale=0.3, size=u0.shape)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            res = optimize.minimize(negll, start, method="L-BFGS-B", bounds=bounds)
        if np.isfinite(res.fun) and (best is None or res.fun < best.fun):
            best = res
        if res.success and np.isfinite(res.fun):
            break
    if best is None or not np.isfinite(best.fun) or best.fun >= 1e10:
        raise ArimaFitError(f"likelihood optimization failed for order {order}")
    phi, theta = _unpack(best.x, p, q)
    mu_s = best.x[-1] if intercept else 0.0
    ll_s, sigma2_s = arma_loglik(ws, phi, theta, mu_s)
    return ArimaModel(
        (p, d, q),
        phi,
        theta,
        float(mu_s * scale) if intercept else 0.0,
        intercept,
        float(sigma2_s * scale**2),
        float(ll_s - n * np.log(scale)),
        n,
    )


def css_loglik(x, order: tuple[int, int, int], intercept: bool, n_cond: int | None = None):
    """Conditional-sum-of-squares fit; returns ``(loglik, n_used)`` or None when it fails.

    Residuals are summed from index ``n_cond`` of the differenced series
    (default p) so that candidates with different p can share one sample.
    Fits whose AR or MA part lands outside the stationary/invertible region
    are rejected.
    """
    x = np.asarray(x, dtype=float)
    p, d, q = order
    w = np.diff(x, n=d) if d else x
    n_cond = p if n_cond is None else n_cond
    n_used = w.shape[0] - n_cond
    if n_used < MIN_OBS:
        return None
    scale = float(np.std(w)) or 1.0
    ws = np.ascontiguousarray(w / scale)
    mu0 = float(ws.mean()) if intercept else 0.0
    if p + q == 0:
        e = ws[n_cond:] - mu0
    else:
        coef, mu = _css_start(ws, p, q, mu0, intercept)
        if not np.any(coef) and p + q > 0:
            return None
        e = kernels.arma_css_residuals(
            np.ascontiguousarray(ws - mu), np.ascontiguousarray(coef[:p]), np.ascontiguousarray(coef[p:])
        )[n_cond - p :]
    sigma2 = float(e @ e) / n_used
    if not sigma2 > 0:
        return None
    return -0.5 * n_used * (np.log(2.0 * np.pi * sigma2) + 1.0) - n_used * np.log(scale), n_used


# ---------------------------------------------------------------------------
# forecasting


def _psi_weights(phi, theta, h):
    psi = np.zeros(h)
    psi[0] = 1.0
    for j in range(1, h):
        acc = theta[j - 1] if j - 1 < len(theta) else 0.0
        for i in range(min(j, len(phi))):
            acc += phi[i] * psi[j - 1 - i]
        psi[j] = acc
    return psi


def forecast(m: ArimaModel, x, h: int) -> tuple[np.ndarray, np.ndarray]:
    """Point forecasts and standard errors for steps 1..h on the scale of ``x``.

    ``x`` is the series the model was fitted on (its end supplies the state).
    Standard errors come from the psi-weights of the integrated model.
    """
    if h < 1:
        raise ArimaError("h must be >= 1")
    x = np.asarray(x, dtype=float)
    p, d, q = m.order
    w = np.diff(x, n=d) if d else x
    _, _, state, _ = _kalman(w - m.intercept, m.ar, m.ma)
    T, _, _ = _state_space(m.ar, m.ma)
    fc_w = np.empty(h)
    a = state
    for j in range(h):
        fc_w[j] = a[0] + m.intercept
        a = T @ a
    # undo differencing
    fc = fc_w
    tails = [x]
    for _ in range(d - 1):
        tails.append(np.diff(tails[-1]))
    for level in range(d - 1, -1, -1):
        fc = tails[level][-1] + np.cumsum(fc)
    # psi weights of (1 - B)^-d phi(B)^-1 theta(B)
    ar_full = np.array([1.0])
    for _ in range(d):
        ar_full = np.convolve(ar_full, [1.0, -1.0])
    ar_full = np.convolve(ar_full, np.r_[1.0, -m.ar])
    psi = _psi_weights(-ar_full[1:], m.ma, h)
    se = np.sqrt(m.sigma2 * np.cumsum(psi * psi))
    return fc, se


def fitted_values(m: ArimaModel, x) -> np.ndarray:
    """One-step-ahead in-sample predictions of ``x[d:]`` on the level scale."""
    x = np.asarray(x, dtype=float)
    d = m.order[1]
    w = np.diff(x, n=d) if d else x
    innov = np.empty(w.shape[0])
    _kalman(w - m.intercept, m.ar, m.ma, innov)
    return x[d:] - innov


# ---------------------------------------------------------------------------
# order selection


def kpss_stat(x) -> float:
    """Level-stationarity KPSS statistic with a Bartlett window of trunc(3 sqrt(n) / 13) lags."""
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    e = x - x.mean()
    s = np.cumsum(e)
    eta = float(s @ s) / n**2
    lags = int(3 * np.sqrt(n) / 13)
    lrv = float(e @ e) / n
    for j in range(1, lags + 1):
        lrv += 2.0 * (1.0 - j / (lags + 1.0)) * float(e[j:] @ e[:-j]) / n
    return eta / lrv if lrv > 0 else np.inf


def kpss_critical(alpha: float) -> float:
    levels = np.array([c[0] for c in KPSS_CRIT])
    crits = np.array([c[1] for c in KPSS_CRIT])
    if not levels.min() <= alpha <= levels.max():
        raise ArimaError(f"KPSS alpha must lie in [0.01, 0.10], got {alpha}")
    return float(np.interp(-alpha, -levels, crits))


def ndiffs(x, alpha: float = 0.05, max_d: int = 2) -> int:
    """Number of differences needed before KPSS stops rejecting level stationarity."""
    x = np.asarray(x, dtype=float)
    crit = kpss_critical(alpha)
    d = 0
    while d < max_d:
        if np.ptp(x) == 0 or x.shape[0] < 3 or kpss_stat(x) <= crit:
            break
        x = np.diff(x)
        d += 1
    return d


def _better(a, b):
    """True when candidate ``a`` ranks ahead of ``b``: lower IC, then lower p+q, then lower q."""
    (ica, pa, qa), (icb, pb, qb) = a, b
    if ica < icb - 1e-9:
        return True
    if ica > icb + 1e-9:
        return False
    return (pa + qa, qa) < (pb + qb, qb)


def auto_order(
    x,
    max_p: int = 5,
    max_d: int = 2,
    max_q: int = 5,
    ic: str = "bic",
    alpha: float = 0.05,
    max_models: int = 94,
    approximation: bool | None = None,
    return_model: bool = False,
):
    """Stepwise order search in the Hyndman-Khandakar style.

    d comes from repeated KPSS tests; (p, q) and the constant are chosen by a
    stepwise information-criterion search starting from (2,2), (0,0), (1,0),
    (0,1). A constant is only considered for d <= 1. With ``approximation``
    (default: more than 150 points) the search scores candidates by
    conditional sum of squares on a common sample and only the winner is
    re-estimated by exact maximum likelihood.
    """
    if ic not in ("aic", "aicc", "bic"):
        raise ArimaError(f"unknown criterion {ic!r}")
    x = np.asarray(x, dtype=float)
    d = ndiffs(x, alpha, max_d)
    allow_const = d <= 1
    if approximation is None:
        approximation = x.shape[0] > 150
    cache: dict[tuple[int, int, bool], float | None] = {}
    models: dict[tuple[int, int, bool], ArimaModel] = {}

    def penalized(loglik, k, n):
        if ic == "aic":
            return -2.0 * loglik + 2.0 * k
        if ic == "bic":
            return -2.0 * loglik + np.log(n) * k
        return -2.0 * loglik + 2.0 * k + 2.0 * k * (k + 1) / max(n - k - 1, 1)

    def score(p, q, c):
        key = (p, q, c)
        if key not in cache:
            if len(cache) >= max_models:
                return None
            k = p + q + int(c) + 1
            if approximation:
                out = css_loglik(x, (p, d, q), c, n_cond=max_p)
                cache[key] = None if out is None else penalized(out[0], k, out[1])
            else:
                try:
                    mdl = fit_arima(x, (p, d, q), intercept=c)
                except (ArimaError, ArimaFitError, np.linalg.LinAlgError):
                    cache[key] = None
                else:
                    models[key] = mdl
                    cache[key] = mdl.criterion(ic)
        return cache[key]

    best = None  # (ic, p, q, c)

    def consider(p, q, c):
        nonlocal best
        if p > max_p or q > max_q or p < 0 or q < 0 or (c and not allow_const):
            return False
        s = score(p, q, c)
        if s is None:
            return False
        if best is None or _better((s, p, q), best[:3]):
            best = (s, p, q, c)
            return True
        return False

    for p, q in ((2, 2), (0, 0), (1, 0), (0, 1)):
        consider(min(p, max_p), min(q, max_q), allow_const)
    if allow_const:
        consider(0, 0, False)
    if best is None:
        raise ArimaFitError("every starting model failed")

    improved = True
    while improved:
        improved = False
        _, p, q, c = best
        moves = [
            (p - 1, q, c), (p + 1, q, c), (p, q - 1, c), (p, q + 1, c),
            (p - 1, q - 1, c), (p + 1, q + 1, c), (p - 1, q + 1, c), (p + 1, q - 1, c),
            (p, q, not c),
        ]
        for mp, mq, mc in moves:
            if consider(mp, mq, mc):
                improved = True
                break
    _, p, q, c = best
    if return_model:
        mdl = models.get((p, q, c)) or fit_arima(x, (p, d, q), intercept=c)
        return (p, d, q), mdl
    return (p, d, q)


# ---------------------------------------------------------------------------


@dataclass
class OrderCensus:
    horizon: str
    modal_p: int
    modal_p_pct: float
    modal_d: int
    modal_d_pct: float
    modal_q: int
    modal_q_pct: float
    best_triple: tuple[int, int, int]
    coverage_pct: float
    mean_mape: float
    mean_rmse: float
    n_series: int
    n_failed: int = 0
    orders: list | None = None

    def row(self) -> list:
        fmt = lambda v, spec: "--" if not np.isfinite(v) else format(v, spec)
        return [
            self.horizon,
            f"p={self.modal_p} ({self.modal_p_pct:.1f})",
            f"d={self.modal_d} ({self.modal_d_pct:.1f})",
            f"q={self.modal_q} ({self.modal_q_pct:.1f})",
            "({},{},{})".format(*self.best_triple),
            f"{self.coverage_pct:.1f}",
            fmt(self.mean_mape, ".2f"),
            fmt(self.mean_rmse, ".3f"),
        ]


CENSUS_COLUMNS = ["horizon", "modal_p_pct", "modal_d_pct", "modal_q_pct", "best_pdq", "coverage_pct", "mape_pct", "rmse"]
CENSUS_LABELS = ["Horizon", "Modal p (%)", "Modal d (%)", "Modal q (%)", "Best (p,d,q)", "Coverage (%)", "MAPE (%)", "RMSE"]


def _modal(values):
    counts = Counter(values)
    top = max(counts.items(), key=lambda kv: (kv[1], -kv[0]))
    return top[0], 100.0 * top[1] / len(values)


def order_census(series: list, horizon: str, ic: str = "bic", **auto_kw) -> OrderCensus:
    """Tabulate auto-selected orders over a panel and score the most common triple on every series.

    Ties between equally frequent values go to the smaller value; between
    equally frequent triples, to the lexicographically smaller triple. Series
    containing a zero make the MAPE/RMSE cells undefined.
    """
    if not series:
        raise ArimaError("empty panel")
    orders = []
    failed = 0
    for s in series:
        try:
            orders.append(auto_order(s, ic=ic, **auto_kw))
        except (ArimaError, ArimaFitError):
            failed += 1
    if not orders:
        raise ArimaFitError("order selection failed on every series")
    mp, mp_pct = _modal([o[0] for o in orders])
    md, md_pct = _modal([o[1] for o in orders])
    mq, mq_pct = _modal([o[2] for o in orders])
    triple_counts = Counter(orders)
    best, best_n = min(triple_counts.items(), key=lambda kv: (-kv[1], kv[0]))
    coverage = 100.0 * best_n / len(orders)
    mapes, rmses = [], []
    undefined = False
    for s in series:
        s = np.asarray(s, dtype=float)
        try:
            mdl = fit_arima(s, best, intercept=best[1] == 0)
        except (ArimaError, ArimaFitError):
            continue
        actual = s[best[1]:]
        pred = fitted_values(mdl, s)
        if np.any(actual == 0):
            undefined = True
        else:
            mapes.append(mape_detail(actual, pred)[0])
        rmses.append(rmse(actual, pred))
    return OrderCensus(
        horizon=horizon,
        modal_p=int(mp), modal_p_pct=mp_pct,
        modal_d=int(md), modal_d_pct=md_pct,
        modal_q=int(mq), modal_q_pct=mq_pct,
        best_triple=tuple(int(v) for v in best),
        coverage_pct=coverage,
        mean_mape=float("nan") if undefined or not mapes else float(np.mean(mapes)),
        mean_rmse=float("nan") if undefined or not rmses else float(np.mean(rmses)),
        n_series=len(series),
        n_failed=failed,
        orders=orders,
    )


def write_census_csv(path: str | Path, rows: list[OrderCensus], labels: bool = False) -> None:
    """One row per horizon; ``labels`` swaps the machine header for the published one."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CENSUS_LABELS if labels else CENSUS_COLUMNS)
        for r in rows:
            w.writerow(r.row())
