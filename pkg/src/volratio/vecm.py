"""Reduced-rank vector error correction model on log-volatilities.

    dh_t = alpha (beta' h_{t-1} + c) + sum_{j=1}^{p-1} Gamma_j dh_{t-j} + e_t

The constant is restricted to the cointegrating space. Estimation is the
Johansen reduced-rank regression; beta is normalized so that its leading
r x r block is the identity.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import linalg

from .volcore import VolSeries

MIN_ROWS = 50


class VecmError(ValueError):
    pass


@dataclass
class LogVolPanel:
    asset_ids: list[str]
    times: np.ndarray
    values: np.ndarray  # rows = time, columns = assets
    n_excluded: int = 0

    @property
    def n(self) -> int:
        return self.values.shape[1]

    def __len__(self):
        return self.values.shape[0]


def build_panel(vol_series: list[VolSeries]) -> LogVolPanel:
    """Log volatilities on the common timestamps; rows with a non-positive volatility are dropped."""
    if len(vol_series) < 2:
        raise VecmError("need at least 2 volatility series")
    common = vol_series[0].times
    for s in vol_series[1:]:
        common = np.intersect1d(common, s.times, assume_unique=True)
    cols = [s.sigma[np.searchsorted(s.times, common)] for s in vol_series]
    mat = np.column_stack(cols) if common.size else np.empty((0, len(vol_series)))
    ok = np.all(mat > 0, axis=1)
    if not ok.any():
        raise VecmError("no rows with all volatilities positive")
    return LogVolPanel(
        [s.asset_id for s in vol_series], common[ok], np.log(mat[ok]), int(np.count_nonzero(~ok))
    )


def panel_from_array(vols: np.ndarray, asset_ids=None) -> LogVolPanel:
    vols = np.asarray(vols, dtype=float)
    ok = np.all(vols > 0, axis=1)
    ids = list(asset_ids) if asset_ids is not None else [f"a{i}" for i in range(vols.shape[1])]
    return LogVolPanel(ids, np.arange(vols.shape[0])[ok], np.log(vols[ok]), int(np.count_nonzero(~ok)))


@dataclass
class VecmModel:
    n: int
    rank: int
    lag: int  # p, the VAR order in levels
    alpha: np.ndarray  # n x r
    beta: np.ndarray  # n x r, leading r x r block = I
    const: np.ndarray  # r, restricted constant inside beta' h + const
    gamma: list[np.ndarray]  # p - 1 matrices, n x n
    residual_cov: np.ndarray
    eigenvalues: np.ndarray
    deterministic: str = "restricted_constant"
    asset_ids: list[str] = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    @property
    def pi(self) -> np.ndarray:
        return self.alpha @ self.beta.T

    def error_correction(self, h: np.ndarray) -> np.ndarray:
        """beta' h_t + c for each row of ``h`` (T x n) -> T x r."""
        return h @ self.beta + self.const

    def step(self, level: np.ndarray, diffs: list[np.ndarray]) -> np.ndarray:
        """Expected change given the last level and the most recent p-1 changes (newest first)."""
        out = self.alpha @ (self.beta.T @ level + self.const)
        for g, dh in zip(self.gamma, diffs):
            out = out + g @ dh
        return out

    def fitted_changes(self, h: np.ndarray) -> np.ndarray:
        """One-step predictions of dh_t for t = p..T-1 of an in-sample panel ``h``."""
        dh = np.diff(h, axis=0)
        p = self.lag
        rows = []
        for t in range(p, h.shape[0]):
            rows.append(self.step(h[t - 1], [dh[t - 1 - j] for j in range(1, p)]))
        return np.array(rows)

    def var_coefficients(self) -> list[np.ndarray]:
        """Levels VAR(p) matrices A_1..A_p implied by the error-correction form."""
        n, p = self.n, self.lag
        g = self.gamma + [np.zeros((n, n))]
        A = [np.eye(n) + self.pi + (g[0] if p > 1 else 0.0)]
        for i in range(1, p):
            A.append(g[i] - g[i - 1])
        return A

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "rank": self.rank,
            "lag": self.lag,
            "deterministic": self.deterministic,
            "normalization": "beta leading rank x rank block is identity",
            "asset_ids": list(self.asset_ids),
            "alpha": self.alpha.tolist(),
            "beta": self.beta.tolist(),
            "const": self.const.tolist(),
            "gamma": [g.tolist() for g in self.gamma],
            "residual_cov": self.residual_cov.tolist(),
            "eigenvalues": self.eigenvalues.tolist(),
            "diagnostics": self.diagnostics,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "VecmModel":
        n = int(d["n"])
        arr = lambda v, shape: np.array(v, dtype=float).reshape(shape)
        r = int(d["rank"])
        return cls(
            n=n,
            rank=r,
            lag=int(d["lag"]),
            alpha=arr(d["alpha"], (n, r)),
            beta=arr(d["beta"], (n, r)),
            const=arr(d["const"], (r,)),
            gamma=[arr(g, (n, n)) for g in d["gamma"]],
            residual_cov=arr(d["residual_cov"], (n, n)),
            eigenvalues=np.array(d["eigenvalues"], dtype=float),
            deterministic=d.get("deterministic", "restricted_constant"),
            asset_ids=list(d.get("asset_ids", [])),
            diagnostics=dict(d.get("diagnostics", {})),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "VecmModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _values(panel) -> tuple[np.ndarray, list[str]]:
    if isinstance(panel, LogVolPanel):
        return np.asarray(panel.values, dtype=float), list(panel.asset_ids)
    h = np.asarray(panel, dtype=float)
    return h, [f"a{i}" for i in range(h.shape[1])]


def _resid(y, X):
    if X.shape[1] == 0:
        return y
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    return y - X @ coef


def _lagged_diffs(dh, p, start):
    """Columns [dh_{t-1}, ..., dh_{t-p+1}] for rows t = start.. (indices into h)."""
    T = dh.shape[0] + 1
    cols = [dh[start - 1 - j : T - 1 - j] for j in range(1, p)]
    return np.hstack(cols) if cols else np.empty((T - start, 0))


def johansen_eig(h: np.ndarray, p: int):
    """Reduced-rank regression pieces: eigenvalues (descending), eigenvectors, S01, moment matrices."""
    T, n = h.shape
    dh = np.diff(h, axis=0)
    y0 = dh[p - 1 :]  # dh_t for t = p..T-1
    z1 = np.column_stack([h[p - 1 : T - 1], np.ones(T - p)])
    z2 = _lagged_diffs(dh, p, p)
    r0 = _resid(y0, z2)
    r1 = _resid(z1, z2)
    m = r0.shape[0]
    s00 = r0.T @ r0 / m
    s11 = r1.T @ r1 / m
    s01 = r0.T @ r1 / m
    a = s01.T @ linalg.solve(s00, s01, assume_a="pos")
    a = 0.5 * (a + a.T)
    vals, vecs = linalg.eigh(a, s11)
    order = np.argsort(vals)[::-1]
    return vals[order], vecs[:, order], s00, s11, s01, (y0, z1, z2)


def fit_vecm(panel, lag: int | None = 2, rank: int | None = None, max_lag: int = 5) -> VecmModel:
    """Johansen estimation with imposed rank (default n - 1).

    ``lag`` is the order p of the levels VAR, so there are p - 1 short-run
    matrices; ``None`` selects it with :func:`select_lag`.
    """
    h, ids = _values(panel)
    T, n = h.shape
    if n < 2:
        raise VecmError("need at least 2 series")
    if rank is None:
        rank = n - 1
    if not 1 <= rank <= n - 1:
        raise VecmError(f"rank must be in [1, {n - 1}], got {rank}")
    if lag is None:
        lag = select_lag(h, max_lag)
    if lag < 1:
        raise VecmError("lag must be >= 1")
    if T < MIN_ROWS + n * lag:
        raise VecmError(f"{T} rows is below the estimation floor {MIN_ROWS + n * lag}")
    if not np.all(np.isfinite(h)):
        raise VecmError("panel contains non-finite values")

    vals, vecs, s00, s11, s01, (y0, z1, z2) = johansen_eig(h, lag)
    b_star = vecs[:, :rank]  # (n + 1) x r, normalized b' S11 b = I
    a_star = s01 @ b_star
    lead = b_star[:rank, :rank]
    cond_lead = np.linalg.cond(lead)
    if not np.isfinite(cond_lead) or cond_lead > 1e12:
        raise VecmError(f"cannot normalize beta: leading block condition number {cond_lead:.3g}")
    lead_inv = np.linalg.inv(lead)
    beta_full = b_star @ lead_inv
    alpha = a_star @ lead.T
    beta = beta_full[:n]
    const = beta_full[n]
    ect = z1 @ beta_full
    rest = y0 - ect @ alpha.T
    if z2.shape[1]:
        g_coef, *_ = np.linalg.lstsq(z2, rest, rcond=None)
        gamma = [g_coef[j * n : (j + 1) * n].T for j in range(lag - 1)]
        resid = rest - z2 @ g_coef
    else:
        gamma = []
        resid = rest
    cov = resid.T @ resid / resid.shape[0]
    cov = 0.5 * (cov + cov.T)
    pi = alpha @ beta.T
    sv = np.linalg.svd(pi, compute_uv=False)
    num_rank = int(np.sum(sv > 1e-8 * max(sv[0], 1e-300)))
    diagnostics = {
        "cond_s00": float(np.linalg.cond(s00)),
        "cond_s11": float(np.linalg.cond(s11)),
        "cond_beta_lead": float(cond_lead),
        "pi_singular_values": sv.tolist(),
        "pi_numerical_rank": num_rank,
        "n_obs": int(y0.shape[0]),
    }
    return VecmModel(
        n=n,
        rank=rank,
        lag=lag,
        alpha=alpha,
        beta=beta,
        const=const,
        gamma=gamma,
        residual_cov=cov,
        eigenvalues=vals[: n + 1],
        asset_ids=ids,
        diagnostics=diagnostics,
    )


def select_lag(panel, max_p: int = 5) -> int:
    """AIC choice of the levels-VAR order p in [2, max_p] on a common sample.

    ``max_p == 1`` returns 1 (no short-run terms) with a warning.
    """
    h, _ = _values(panel)
    if max_p < 1:
        raise VecmError(f"max_p must be >= 1, got {max_p}")
    if max_p == 1:
        warnings.warn("max_p = 1 leaves the VECM without short-run terms", stacklevel=2)
        return 1
    T, n = h.shape
    best, best_p = np.inf, 2
    rows = np.arange(max_p, T)
    if rows.size <= n * max_p + 1:
        raise VecmError("panel too short for the requested max_p")
    y = h[rows]
    for p in range(2, max_p + 1):
        X = np.column_stack([np.ones(rows.size)] + [h[rows - j] for j in range(1, p + 1)])
        coef, *_ = np.linalg.lstsq(X, y, rcond=None)
        e = y - X @ coef
        sign, logdet = np.linalg.slogdet(e.T @ e / rows.size)
        if sign <= 0:
            continue
        aic = logdet + 2.0 * (p * n * n + n) / rows.size
        if aic < best - 1e-12:
            best, best_p = aic, p
    return best_p


@dataclass
class VolForecast:
    horizon: int
    logvol: np.ndarray  # h x n
    vols: np.ndarray  # h x n, standard-deviation units
    unstable: bool = False
    message: str = ""


def forecast_mse(m: VecmModel, h: int) -> np.ndarray:
    """Diagonal of the h-step log-vol forecast error covariance for steps 1..h (h x n)."""
    A = m.var_coefficients()
    n = m.n
    psi = [np.eye(n)]
    for i in range(1, h):
        acc = np.zeros((n, n))
        for j, a in enumerate(A, start=1):
            if i - j >= 0:
                acc += a @ psi[i - j]
        psi.append(acc)
    out = np.empty((h, n))
    cum = np.zeros((n, n))
    for i in range(h):
        cum = cum + psi[i] @ m.residual_cov @ psi[i].T
        out[i] = np.diag(cum)
    return out


def forecast_logvol(m: VecmModel, panel, h: int, bias_correct: bool = False) -> VolForecast:
    """Iterate the fitted recursion h steps from the end of ``panel`` with zero innovations.

    Volatilities are exp of the log forecasts; ``bias_correct`` multiplies by
    exp(s^2 / 2) with s^2 the forecast error variance. Overflow or
    non-finite values mark the forecast unstable instead of raising.
    """
    if h < 1:
        raise VecmError("h must be >= 1")
    hist, _ = _values(panel)
    if hist.shape[0] < m.lag:
        raise VecmError(f"need {m.lag} rows of state, got {hist.shape[0]}")
    level = hist[-1].copy()
    diffs = [hist[-j] - hist[-j - 1] for j in range(1, m.lag)]
    out = np.empty((h, m.n))
    unstable = False
    with np.errstate(over="ignore", invalid="ignore"):
        for j in range(h):
            dh = m.step(level, diffs)
            level = level + dh
            out[j] = level
            if m.lag > 1:
                diffs = [dh] + diffs[:-1]
            if not np.all(np.isfinite(level)):
                unstable = True
        log_out = out.copy()
        if bias_correct and not unstable:
            log_out = out + 0.5 * forecast_mse(m, h)
        vols = np.exp(log_out)
    if not np.all(np.isfinite(vols)) or np.any(vols <= 0):
        unstable = True
    return VolForecast(h, out, vols, unstable, "non-finite forecast" if unstable else "")
