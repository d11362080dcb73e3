"""Loading price files and turning them into aligned log-return panels."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

FREQUENCIES = ("minute", "day")


class IngestError(ValueError):
    """Raised for unreadable files and violated series invariants."""


@dataclass(frozen=True)
class CsvSchema:
    timestamp_col: str = "timestamp"
    price_col: str = "price"
    timestamp_format: str = "iso"  # "iso", "epoch" or a strptime pattern
    frequency: str = "day"

    @classmethod
    def from_file(cls, path: str | Path) -> "CsvSchema":
        """Read a ``key=value`` schema file; unknown keys are rejected."""
        values = read_key_value(path)
        unknown = set(values) - {"timestamp_col", "price_col", "timestamp_format", "frequency"}
        if unknown:
            raise IngestError(f"unknown schema keys: {sorted(unknown)}")
        return cls(**values)


def read_key_value(path: str | Path) -> dict[str, str]:
    out: dict[str, str] = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise IngestError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


@dataclass
class PriceSeries:
    asset_id: str
    times: np.ndarray  # int64 epoch seconds, UTC
    prices: np.ndarray
    frequency: str = "day"
    rejected: list[tuple[int, str]] = field(default_factory=list)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.int64)
        self.prices = np.asarray(self.prices, dtype=float)
        _check_times(self.asset_id, self.times, self.frequency)
        if self.prices.shape != self.times.shape:
            raise IngestError(f"{self.asset_id}: times and prices differ in length")
        if np.any(~(self.prices > 0)):
            raise IngestError(f"{self.asset_id}: prices must be positive")

    def __len__(self):
        return self.times.shape[0]


@dataclass
class ReturnSeries:
    asset_id: str
    times: np.ndarray
    returns: np.ndarray
    frequency: str = "day"

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.int64)
        self.returns = np.asarray(self.returns, dtype=float)
        _check_times(self.asset_id, self.times, self.frequency)
        if self.returns.shape != self.times.shape:
            raise IngestError(f"{self.asset_id}: times and returns differ in length")
        if not np.all(np.isfinite(self.returns)):
            raise IngestError(f"{self.asset_id}: returns must be finite")

    def __len__(self):
        return self.times.shape[0]


@dataclass
class ReturnPanel:
    """Return series sharing one timestamp vector; ``values`` is time x asset."""

    asset_ids: list[str]
    times: np.ndarray
    values: np.ndarray
    frequency: str = "day"

    def column(self, asset_id: str) -> ReturnSeries:
        j = self.asset_ids.index(asset_id)
        return ReturnSeries(asset_id, self.times, self.values[:, j], self.frequency)

    def series(self) -> list[ReturnSeries]:
        return [self.column(a) for a in self.asset_ids]


def _check_times(asset_id, times, frequency):
    if frequency not in FREQUENCIES:
        raise IngestError(f"{asset_id}: unknown frequency {frequency!r}")
    if times.ndim != 1:
        raise IngestError(f"{asset_id}: timestamps must be one-dimensional")
    if times.size > 1 and np.any(np.diff(times) <= 0):
        raise IngestError(f"{asset_id}: timestamps must be strictly increasing")


def parse_timestamp(text: str, fmt: str = "iso") -> int:
    """Return epoch seconds (UTC). Naive timestamps are taken to be UTC."""
    text = text.strip()
    if fmt == "epoch":
        return int(float(text))
    if fmt == "iso":
        dt = datetime.fromisoformat(text.replace("Z", "+00:00"))
    else:
        dt = datetime.strptime(text, fmt)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def load_csv(path: str | Path, schema: CsvSchema | None = None, asset_id: str | None = None) -> PriceSeries:
    """Load one instrument's prices.

    Rows with an unparseable timestamp or a non-positive/non-numeric price are
    skipped and listed in ``PriceSeries.rejected`` as ``(line number, reason)``.
    A repeated timestamp is an error.
    """
    schema = schema or CsvSchema()
    path = Path(path)
    if not path.is_file():
        raise IngestError(f"no such file: {path}")
    asset_id = asset_id or path.stem
    rows: list[tuple[int, float]] = []
    rejected: list[tuple[int, str]] = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise IngestError(f"{path}: empty file")
        for col in (schema.timestamp_col, schema.price_col):
            if col not in reader.fieldnames:
                raise IngestError(f"{path}: missing column {col!r}")
        for lineno, rec in enumerate(reader, start=2):
            try:
                ts = parse_timestamp(rec[schema.timestamp_col], schema.timestamp_format)
            except (ValueError, TypeError, OverflowError):
                rejected.append((lineno, f"unparseable timestamp {rec[schema.timestamp_col]!r}"))
                continue
            try:
                price = float(rec[schema.price_col])
            except (ValueError, TypeError):
                rejected.append((lineno, f"unparseable price {rec[schema.price_col]!r}"))
                continue
            if not math.isfinite(price) or price <= 0:
                rejected.append((lineno, f"non-positive price {price!r}"))
                continue
            rows.append((ts, price))
    rows.sort(key=lambda r: r[0])
    times = np.array([r[0] for r in rows], dtype=np.int64)
    if times.size > 1:
        dup = np.flatnonzero(np.diff(times) == 0)
        if dup.size:
            stamp = datetime.fromtimestamp(int(times[dup[0]]), tz=timezone.utc).isoformat()
            raise IngestError(f"{path}: duplicate timestamp {stamp}")
    if rejected:
        lineno, reason = rejected[0]
        logger.warning("%s: %d rows rejected (first: line %d, %s)", path, len(rejected), lineno, reason)
    return PriceSeries(
        asset_id,
        times,
        np.array([r[1] for r in rows], dtype=float),
        schema.frequency,
        rejected,
    )


def to_log_returns(p: PriceSeries, drop_overnight: bool = True) -> ReturnSeries:
    """Log-returns of consecutive prices.

    For minute data, pairs straddling a UTC calendar-day boundary are dropped
    unless ``drop_overnight`` is False.
    """
    if len(p) < 2:
        raise IngestError(f"{p.asset_id}: need at least 2 prices, got {len(p)}")
    r = np.diff(np.log(p.prices))
    times = p.times[1:]
    if p.frequency == "minute" and drop_overnight:
        same_day = (p.times[1:] // 86400) == (p.times[:-1] // 86400)
        r, times = r[same_day], times[same_day]
    return ReturnSeries(p.asset_id, times, r, p.frequency)


def align(series: list[ReturnSeries]) -> ReturnPanel:
    """Restrict every series to the timestamps they all share."""
    if len(series) < 2:
        raise IngestError("align needs at least 2 series")
    freqs = {s.frequency for s in series}
    if len(freqs) > 1:
        raise IngestError(f"mixed frequencies: {sorted(freqs)}")
    common = series[0].times
    for s in series[1:]:
        common = np.intersect1d(common, s.times, assume_unique=True)
    if common.size == 0:
        raise IngestError("series have no timestamps in common")
    cols = []
    for s in series:
        idx = np.searchsorted(s.times, common)
        cols.append(s.returns[idx])
    return ReturnPanel([s.asset_id for s in series], common, np.column_stack(cols), freqs.pop())


def load_directory(
    data_dir: str | Path,
    schema: CsvSchema | None = None,
    drop_overnight: bool = True,
) -> dict[str, ReturnSeries]:
    """Load every ``*.csv`` under ``data_dir`` keyed by file stem, in sorted order."""
    out = {}
    for path in sorted(Path(data_dir).glob("*.csv")):
        out[path.stem] = to_log_returns(load_csv(path, schema), drop_overnight)
    if not out:
        raise IngestError(f"no CSV files in {data_dir}")
    return out
