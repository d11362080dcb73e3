"""Random-portfolio backtest of VECM against sample-covariance volatility forecasts.

Also home to the synthetic cointegrated-volatility generator used as a
correctly specified test bed.
"""
from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import kernels
from . import portfolio as pf
from . import vecm as vecm_mod
from .ingest import FREQUENCIES, ReturnPanel

logger = logging.getLogger(__name__)

METHODS = ("VECM", "Classical")
TABLE5_COLUMNS = ["horizon", "N", "V", "C", "delta", "win_pct"]
TABLE6_COLUMNS = ["horizon", "N", "guardrail_hits"]


class BenchError(ValueError):
    pass


def horizon_label(h: int, frequency: str) -> str:
    unit = "minute" if frequency == "minute" else "day"
    return f"{h} {unit}{'s' if h != 1 else ''}"


# ---------------------------------------------------------------------------
# configuration and results


@dataclass
class BenchConfig:
    sizes: tuple[int, ...] = (10, 30, 50, 80)
    horizons: tuple[int, ...] = (5, 10, 30, 90)
    frequency: str = "day"
    n_portfolios: int = 100
    estimation_window: int = 1000
    seed: int = 0
    vol_window: int | None = None  # rolling-vol window; None means k = h
    lag: int = 2
    rank: int | None = None  # None means N - 1
    guardrail_mult: float = 3.0
    split: str = "fixed"  # "fixed" or "rolling"
    normalize_weights: bool = False
    bias_correct: bool = False
    workers: int = 1

    def __post_init__(self):
        self.sizes = tuple(int(s) for s in self.sizes)
        self.horizons = tuple(int(h) for h in self.horizons)
        if not self.sizes or min(self.sizes) < 2:
            raise BenchError("portfolio sizes must be >= 2")
        if not self.horizons or min(self.horizons) < 1:
            raise BenchError("horizons must be >= 1")
        if self.n_portfolios < 1:
            raise BenchError("n_portfolios must be >= 1")
        if self.estimation_window <= max(self.horizons):
            raise BenchError("estimation_window must exceed the largest horizon")
        if self.frequency not in FREQUENCIES:
            raise BenchError(f"unknown frequency {self.frequency!r}")
        if self.split not in ("fixed", "rolling"):
            raise BenchError(f"split must be 'fixed' or 'rolling', got {self.split!r}")
        if self.vol_window is not None and self.vol_window < 2:
            raise BenchError("vol_window must be >= 2")
        if self.guardrail_mult <= 0:
            raise BenchError("guardrail_mult must be positive")

    def window_for(self, h: int) -> int:
        return self.vol_window if self.vol_window is not None else max(h, 2)


@dataclass
class BenchRecord:
    portfolio_id: int
    n_assets: int
    horizon: int
    mape_vecm: float
    mape_classical: float
    guardrail_hit: bool
    unstable: bool = False
    origin: int = 0
    forecast_vecm: float = float("nan")
    forecast_vecm_raw: float = float("nan")
    forecast_classical: float = float("nan")
    realized: float = float("nan")
    trailing_average: float = float("nan")
    assets: list[str] = field(default_factory=list)
    weights: list[float] = field(default_factory=list)

    @property
    def vecm_wins(self) -> bool:
        return _strict_win(self.mape_vecm, self.mape_classical)


def _strict_win(v: float, c: float) -> bool:
    # equal to output precision counts as a classical win
    return bool(v < c and not np.isclose(v, c, rtol=1e-12, atol=1e-12))


@dataclass
class BenchRow:
    horizon: int
    n_assets: int
    V: float
    C: float
    delta: float
    win_pct: float
    n_portfolios: int
    guardrail_hits: int


@dataclass
class BenchTable:
    frequency: str
    rows: list[BenchRow]

    def row(self, n_assets: int, horizon: int) -> BenchRow:
        for r in self.rows:
            if r.n_assets == n_assets and r.horizon == horizon:
                return r
        raise KeyError((n_assets, horizon))


def summarize(records: list[BenchRecord], frequency: str = "day") -> BenchTable:
    """Mean MAPEs, C - V and strict win share for every (N, horizon)."""
    groups: dict[tuple[int, int], list[BenchRecord]] = {}
    for r in records:
        groups.setdefault((r.n_assets, r.horizon), []).append(r)
    rows = []
    for (n_assets, h) in sorted(groups):
        g = sorted(groups[(n_assets, h)], key=lambda r: r.portfolio_id)
        V = float(np.mean([r.mape_vecm for r in g]))
        C = float(np.mean([r.mape_classical for r in g]))
        wins = sum(r.vecm_wins for r in g)
        rows.append(
            BenchRow(h, n_assets, V, C, C - V, 100.0 * wins / len(g), len(g), sum(r.guardrail_hit for r in g))
        )
    return BenchTable(frequency, rows)


def guardrail_census(records: list[BenchRecord]) -> dict[tuple[int, int], int]:
    """Triggered-guardrail counts keyed by (N, horizon)."""
    out: dict[tuple[int, int], int] = {}
    for r in records:
        key = (r.n_assets, r.horizon)
        out[key] = out.get(key, 0) + int(r.guardrail_hit)
    return dict(sorted(out.items()))


# ---------------------------------------------------------------------------
# boxplot summaries


def box_stats(values) -> dict:
    """Type-7 quartiles, whiskers at the most extreme points within 1.5 IQR, and the outliers."""
    x = np.sort(np.asarray(values, dtype=float))
    if x.size == 0:
        raise BenchError("empty group")
    q1, med, q3 = np.quantile(x, [0.25, 0.5, 0.75], method="linear")
    iqr = q3 - q1
    lo_fence, hi_fence = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    inside = x[(x >= lo_fence) & (x <= hi_fence)]
    return {
        "n": int(x.size),
        "median": float(med),
        "q1": float(q1),
        "q3": float(q3),
        "whisker_low": float(inside.min()),
        "whisker_high": float(inside.max()),
        "outliers": [float(v) for v in x[(x < lo_fence) | (x > hi_fence)]],
    }


def ape_boxplot_data(records: list[BenchRecord]) -> dict[tuple[str, int, int], dict]:
    groups: dict[tuple[str, int, int], list[float]] = {}
    for r in records:
        groups.setdefault(("VECM", r.n_assets, r.horizon), []).append(r.mape_vecm)
        groups.setdefault(("Classical", r.n_assets, r.horizon), []).append(r.mape_classical)
    if not groups:
        raise BenchError("no records")
    return {k: box_stats(v) for k, v in sorted(groups.items())}


# ---------------------------------------------------------------------------
# output


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def table5_cells(row: BenchRow) -> tuple[str, str, str, str]:
    """V, C, delta and Win% as printed; delta is C - V of the printed values."""
    V, C = round(row.V, 2), round(row.C, 2)
    return _fmt(V), _fmt(C), _fmt(C - V), f"{row.win_pct:.1f}"


def write_table5_csv(path: str | Path, table: BenchTable) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TABLE5_COLUMNS)
        for r in table.rows:
            w.writerow([horizon_label(r.horizon, table.frequency), r.n_assets, *table5_cells(r)])


def write_table6_csv(path: str | Path, table: BenchTable) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TABLE6_COLUMNS)
        for r in table.rows:
            w.writerow([horizon_label(r.horizon, table.frequency), r.n_assets, r.guardrail_hits])


def write_table5_wide(path: str | Path, tables: list[BenchTable]) -> None:
    """Published layout: one line per horizon, a V/C/delta/Win% block per portfolio size."""
    sizes = sorted({r.n_assets for t in tables for r in t.rows})
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["Horizon", *[f"N={n} {c}" for n in sizes for c in ("V", "C", "Delta", "Win%")]])
        for t in tables:
            for h in sorted({r.horizon for r in t.rows}):
                cells = []
                for n in sizes:
                    try:
                        cells.extend(table5_cells(t.row(n, h)))
                    except KeyError:
                        cells.extend(["--"] * 4)
                w.writerow([horizon_label(h, t.frequency), *cells])


def write_table6_wide(path: str | Path, tables: list[BenchTable]) -> None:
    sizes = sorted({r.n_assets for t in tables for r in t.rows})
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["Horizon", *[f"N={n}" for n in sizes]])
        for t in tables:
            for h in sorted({r.horizon for r in t.rows}):
                cells = []
                for n in sizes:
                    try:
                        cells.append(f"{t.row(n, h).guardrail_hits:.2f}")
                    except KeyError:
                        cells.append("--")
                w.writerow([horizon_label(h, t.frequency), *cells])


def write_boxplot_json(path: str | Path, boxes: dict) -> None:
    out = [{"method": m, "N": n, "horizon": h, **stats} for (m, n, h), stats in boxes.items()]
    Path(path).write_text(json.dumps(out, indent=2, sort_keys=True) + "\n")


def write_records_csv(path: str | Path, records: list[BenchRecord]) -> None:
    cols = [
        "portfolio_id", "n_assets", "horizon", "origin", "mape_vecm", "mape_classical",
        "guardrail_hit", "unstable", "forecast_vecm", "forecast_vecm_raw",
        "forecast_classical", "realized", "trailing_average",
    ]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in records:
            d = asdict(r)
            w.writerow([repr(d[c]) if isinstance(d[c], float) else int(d[c]) if isinstance(d[c], bool) else d[c] for c in cols])


# ---------------------------------------------------------------------------
# the backtest


def _origins(T: int, cfg: BenchConfig) -> np.ndarray:
    """Last in-sample index for each portfolio."""
    kmax = max(cfg.window_for(h) for h in cfg.horizons)
    hmax = max(cfg.horizons)
    lo = cfg.estimation_window + kmax - 2
    hi = T - 1 - hmax
    if hi < lo:
        need = cfg.estimation_window + kmax - 1 + hmax
        raise BenchError(f"panel has {T} rows, need at least {need}")
    if cfg.split == "fixed":
        return np.full(cfg.n_portfolios, hi, dtype=np.int64)
    return np.round(np.linspace(lo, hi, cfg.n_portfolios)).astype(np.int64)


def _ape(forecast: float, actual: float) -> float:
    return 100.0 * abs(forecast - actual) / actual


def _draw(seed: int, n_assets: int, pid: int, n_total: int):
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(n_assets, pid)))
    idx = rng.choice(n_total, size=n_assets, replace=False)
    w = rng.uniform(np.nextafter(0.0, 1.0), 1.0, size=n_assets)
    return idx, w


def _evaluate(values, ids, vol_cache, cfg: BenchConfig, n_assets: int, pid: int, t0: int) -> list[BenchRecord]:
    idx, w = _draw(cfg.seed, n_assets, pid, values.shape[1])
    spec = pf.PortfolioSpec([ids[i] for i in idx], w)
    if cfg.normalize_weights:
        spec = spec.normalized()
    E = cfg.estimation_window
    r_in = values[t0 - E + 1 : t0 + 1][:, idx]
    R = pf.CorrelationMatrix.from_returns(r_in, end_index=t0)
    classical = pf.classical_vol(r_in, spec)
    port = values[:, idx] @ spec.weights
    out = []
    for h in cfg.horizons:
        k = cfg.window_for(h)
        vols = vol_cache[k][t0 - E + 1 - (k - 1) : t0 + 1 - (k - 1)][:, idx]
        realized = float(np.std(port[t0 + 1 : t0 + 1 + h], ddof=1)) if h > 1 else float(abs(port[t0 + 1]))
        trailing = float(np.std(port[t0 - h + 1 : t0 + 1], ddof=1)) if h > 1 else float(abs(port[t0]))
        if realized <= 0:
            raise BenchError(f"portfolio {pid}: realized volatility is zero at origin {t0}")
        if trailing <= 0:
            raise BenchError(f"portfolio {pid}: trailing volatility is zero at origin {t0}")
        panel = vecm_mod.panel_from_array(vols, spec.asset_ids)
        try:
            model = vecm_mod.fit_vecm(panel, lag=cfg.lag, rank=cfg.rank)
            res = pf.vecm_portfolio_forecast(
                model, panel, spec, h, R, trailing, cfg.guardrail_mult, cfg.bias_correct
            )
            raw, final, hit, unstable = res.raw_aggregate, res.aggregate, res.guardrail_triggered, res.unstable
        except (vecm_mod.VecmError, np.linalg.LinAlgError) as exc:
            logger.warning("portfolio %d N=%d h=%d: VECM failed (%s), using trailing average", pid, n_assets, h, exc)
            raw, final, hit, unstable = float("nan"), trailing, True, True
        out.append(
            BenchRecord(
                portfolio_id=pid,
                n_assets=n_assets,
                horizon=h,
                mape_vecm=_ape(final, realized),
                mape_classical=_ape(classical, realized),
                guardrail_hit=hit,
                unstable=unstable,
                origin=int(t0),
                forecast_vecm=final,
                forecast_vecm_raw=raw,
                forecast_classical=classical,
                realized=realized,
                trailing_average=trailing,
                assets=list(spec.asset_ids),
                weights=[float(x) for x in spec.weights],
            )
        )
    return out


def run_benchmark(panel: ReturnPanel | np.ndarray, cfg: BenchConfig) -> tuple[list[BenchRecord], BenchTable]:
    """Backtest ``cfg.n_portfolios`` random portfolios per size.

    Each portfolio draws its assets (without replacement) and weights from
    its own seed substream, so results do not depend on evaluation order or
    on ``cfg.workers``. Both methods use the ``estimation_window`` rows up to
    the origin; the target is the sample std of portfolio returns over the
    next h rows.
    """
    if isinstance(panel, ReturnPanel):
        values, ids = np.asarray(panel.values, dtype=float), list(panel.asset_ids)
    else:
        values = np.asarray(panel, dtype=float)
        ids = [f"a{i}" for i in range(values.shape[1])]
    if values.ndim != 2:
        raise BenchError("return panel must be two-dimensional")
    if max(cfg.sizes) > values.shape[1]:
        raise BenchError(f"portfolio size {max(cfg.sizes)} exceeds the {values.shape[1]} assets available")
    if not np.all(np.isfinite(values)):
        raise BenchError("return panel contains non-finite values")
    origins = _origins(values.shape[0], cfg)
    vol_cache = {}
    for k in {cfg.window_for(h) for h in cfg.horizons}:
        vol_cache[k] = np.column_stack([kernels.rolling_std(np.ascontiguousarray(values[:, j]), k) for j in range(values.shape[1])])
    jobs = [(n, pid) for n in cfg.sizes for pid in range(cfg.n_portfolios)]

    def run(job):
        n, pid = job
        return _evaluate(values, ids, vol_cache, cfg, n, pid, int(origins[pid]))

    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as ex:
            results = list(ex.map(run, jobs))
    else:
        results = [run(j) for j in jobs]
    records = [r for chunk in results for r in chunk]
    records.sort(key=lambda r: (r.n_assets, r.horizon, r.portfolio_id))
    return records, summarize(records, cfg.frequency)


# ---------------------------------------------------------------------------
# synthetic data


@dataclass
class SyntheticSpec:
    """Log-volatilities from a VECM with cointegrating rank ``rank``; returns with fixed correlation.

    The cointegrating vectors are e_i - mean of the last n - rank unit
    vectors (i < rank); assets i < rank revert toward that common anchor at
    speed ``ec_speed`` per step. ``trend_sd`` drives a random-walk shock
    shared by every asset and ``idio_sd`` adds independent shocks. With
    rank 0 the common shock is dropped, leaving independent random walks.
    """

    n_assets: int = 10
    rank: int | None = None  # None means n - 1
    length: int = 3000
    seed: int = 0
    ec_speed: float = 0.1
    trend_sd: float = 0.04
    idio_sd: float = 0.02
    mean_log_vol: float = float(np.log(0.01))
    level_dispersion: float = 0.3
    correlation: float = 0.3
    frequency: str = "day"

    def __post_init__(self):
        if self.rank is None:
            self.rank = self.n_assets - 1
        if self.n_assets < 2:
            raise BenchError("need at least 2 assets")
        if not 0 <= self.rank < self.n_assets:
            raise BenchError(f"rank must be in [0, {self.n_assets - 1}], got {self.rank}")
        if self.length < 2:
            raise BenchError("length must be >= 2")
        if not 0 < self.ec_speed < 2:
            raise BenchError("ec_speed must lie in (0, 2)")
        if min(self.trend_sd, self.idio_sd, self.level_dispersion) < 0:
            raise BenchError("scales must be non-negative")
        if not -1.0 / (self.n_assets - 1) < self.correlation < 1.0:
            raise BenchError("equicorrelation outside the positive-definite range")
        if self.frequency not in FREQUENCIES:
            raise BenchError(f"unknown frequency {self.frequency!r}")

    def beta(self) -> np.ndarray:
        n, r = self.n_assets, self.rank
        return np.vstack([np.eye(r), -np.ones((n - r, r)) / (n - r)])

    def alpha(self) -> np.ndarray:
        n, r = self.n_assets, self.rank
        return np.vstack([-self.ec_speed * np.eye(r), np.zeros((n - r, r))])

    def correlation_matrix(self) -> np.ndarray:
        n = self.n_assets
        return np.full((n, n), self.correlation) + (1.0 - self.correlation) * np.eye(n)


@dataclass
class SyntheticPanel:
    returns: ReturnPanel
    log_vol: np.ndarray  # true conditional log-vols, aligned with returns rows
    levels: np.ndarray  # equilibrium log-vol per asset
    spec: SyntheticSpec


def _synthetic_times(length: int, frequency: str) -> np.ndarray:
    start = int(datetime(2000, 1, 3, tzinfo=timezone.utc).timestamp())
    if frequency == "day":
        return start + 86400 * np.arange(length, dtype=np.int64)
    # minute data: 390-minute sessions, so no return crosses a UTC date
    day, minute = np.divmod(np.arange(length, dtype=np.int64), 390)
    return start + 86400 * day + 14 * 3600 + 30 * 60 + 60 * minute


def generate_synthetic(spec: SyntheticSpec) -> SyntheticPanel:
    rng = np.random.default_rng(spec.seed)
    n, r, T = spec.n_assets, spec.rank, spec.length
    levels = spec.mean_log_vol + spec.level_dispersion * rng.standard_normal(n)
    trend_sd = spec.trend_sd if r > 0 else 0.0
    shocks = spec.idio_sd * rng.standard_normal((T, n)) + trend_sd * rng.standard_normal((T, 1))
    z = rng.standard_normal((T, n)) @ np.linalg.cholesky(spec.correlation_matrix()).T
    h = np.empty((T, n))
    if r > 0:
        alpha, beta = spec.alpha(), spec.beta()
        mu = beta.T @ levels
        cur = levels.copy()
        for t in range(T):
            cur = cur + alpha @ (beta.T @ cur - mu) + shocks[t]
            h[t] = cur
    else:
        h = levels + np.cumsum(shocks, axis=0)
    ids = [f"S{i:03d}" for i in range(n)]
    returns = np.exp(h) * z
    panel = ReturnPanel(ids, _synthetic_times(T, spec.frequency), returns, spec.frequency)
    return SyntheticPanel(panel, h, levels, spec)


def _stamps(times: np.ndarray, frequency: str) -> list[str]:
    """ISO stamps for a price series: one step before the first return, then each return time."""
    step = 86400 if frequency == "day" else 60
    fmt = "%Y-%m-%dT%H:%M:%SZ"
    ts = [int(times[0]) - step, *(int(t) for t in times)]
    return [datetime.fromtimestamp(t, tz=timezone.utc).strftime(fmt) for t in ts]


def write_price_csv(path: str | Path, times: np.ndarray, returns: np.ndarray, frequency: str = "day") -> Path:
    """``timestamp,price`` file whose log-returns are ``returns``; the price starts at 100."""
    prices = 100.0 * np.exp(np.concatenate([[0.0], np.cumsum(returns)]))
    path = Path(path)
    with open(path, "w") as fh:
        fh.write("timestamp,price\n")
        for s, v in zip(_stamps(times, frequency), prices):
            fh.write(f"{s},{float(v)!r}\n")
    return path


def write_synthetic(sp: SyntheticPanel, out_dir: str | Path) -> list[Path]:
    """One price CSV per asset, the true log-vols under ``truth/`` and the generator settings as JSON."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    freq = sp.spec.frequency
    paths = [
        write_price_csv(out_dir / f"{aid}.csv", sp.returns.times, sp.returns.values[:, j], freq)
        for j, aid in enumerate(sp.returns.asset_ids)
    ]
    # kept out of out_dir itself so a directory load sees only prices
    (out_dir / "truth").mkdir(exist_ok=True)
    truth = out_dir / "truth" / "logvol.csv"
    with open(truth, "w") as fh:
        fh.write("timestamp," + ",".join(sp.returns.asset_ids) + "\n")
        for s, row in zip(_stamps(sp.returns.times, freq)[1:], sp.log_vol):
            fh.write(s + "," + ",".join(repr(float(v)) for v in row) + "\n")
    meta = out_dir / "synthetic.json"
    meta.write_text(json.dumps(asdict(sp.spec), indent=2, sort_keys=True) + "\n")
    return paths + [truth, meta]


def stress_fixture(
    n_assets: int = 4,
    horizon: int = 10,
    estimation_window: int = 1000,
    quiet_scale: float = 1e-4,
    seed: int = 0,
) -> tuple[np.ndarray, BenchConfig]:
    """Returns whose last ``horizon`` in-sample rows collapse to near-zero volatility.

    The rolling-vol window is twice the horizon, so the VECM still sees the
    pre-collapse level while the trailing portfolio volatility is tiny,
    which is the regime the guardrail is meant for.
    """
    sp = generate_synthetic(
        SyntheticSpec(n_assets=n_assets, length=estimation_window + 4 * horizon + 10, seed=seed)
    )
    values = sp.returns.values.copy()
    hi = values.shape[0] - 1 - horizon
    values[hi - horizon + 1 : hi + 1] *= quiet_scale
    cfg = BenchConfig(
        sizes=(n_assets,),
        horizons=(horizon,),
        n_portfolios=5,
        estimation_window=estimation_window,
        seed=seed,
        vol_window=2 * horizon,
    )
    return values, cfg
