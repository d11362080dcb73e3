"""Command-line entry point: ``volratio {hvr,tests,bench,synth,report}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from . import arima, bench, linmod, stattests, volcore
from .ingest import CsvSchema, IngestError, ReturnSeries, align, load_csv, read_key_value, to_log_returns

logger = logging.getLogger("volratio")

EXIT_OK, EXIT_COMPUTE, EXIT_INPUT = 0, 1, 2
FIXED_CLOCK = "2000-01-01T00:00:00Z"


class ConfigError(ValueError):
    pass


def _int_list(text: str) -> list[int]:
    try:
        vals = [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not vals or min(vals) < 1:
        raise argparse.ArgumentTypeError(f"values must be positive integers, got {text!r}")
    return vals


# ---------------------------------------------------------------------------
# argument parsing


def _common(p: argparse.ArgumentParser, data: bool = True) -> None:
    p.add_argument("--config", help="key=value file; command-line flags take precedence")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--frequency", choices=["minute", "day"], default="day")
    p.add_argument("--fixed-clock", action="store_true", help="stamp metadata with a constant time")
    if data:
        p.add_argument("--data-dir", help="directory of timestamp,price CSV files")
        p.add_argument("--benchmark", help="benchmark id (file stem in --data-dir) or CSV path")
        p.add_argument("--schema", help="key=value CSV schema file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="volratio", description="Volatility ratios, cointegration and portfolio risk.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("hvr", help="write historical volatility ratio series")
    _common(p)
    p.add_argument("--windows", type=_int_list, default=[5, 10, 30, 90])

    p = sub.add_parser("tests", help="ADF / Engle-Granger share table")
    _common(p)
    p.add_argument("--windows", type=_int_list, default=[5, 10, 30, 90])
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--max-lags", type=int, default=None)

    p = sub.add_parser("bench", help="VECM vs classical random-portfolio backtest")
    _common(p)
    _bench_flags(p)
    p.add_argument("--synthetic", action="store_true", help="run on a generated panel instead of --data-dir")
    p.add_argument("--assets", type=int, default=10, help="assets in the generated panel")
    p.add_argument("--length", type=int, default=3000, help="rows in the generated panel")

    p = sub.add_parser("synth", help="write a synthetic cointegrated-volatility dataset")
    _common(p, data=False)
    p.add_argument("--assets", type=int, default=10)
    p.add_argument("--length", type=int, default=3000)
    p.add_argument("--rank", type=int, default=None)
    p.add_argument("--ec-speed", type=float, default=0.1)
    p.add_argument("--trend-sd", type=float, default=0.04)
    p.add_argument("--idio-sd", type=float, default=0.02)
    p.add_argument("--correlation", type=float, default=0.3)
    p.add_argument("--benchmark", default="MKT", help="id of the equal-weight index file to add ('' for none)")

    p = sub.add_parser("report", help="emit Tables 1-6 for minute and/or daily data")
    _common(p)
    p.add_argument("--minute-dir", help="minute-frequency data directory")
    p.add_argument("--day-dir", help="daily data directory")
    p.add_argument("--windows", type=_int_list, default=[5, 10, 30, 90])
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--max-lags", type=int, default=None)
    p.add_argument("--ic", choices=["aic", "aicc", "bic"], default="bic")
    p.add_argument("--reference", help="CSV in the table5 long format to compare against")
    _bench_flags(p)
    return parser


def _bench_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--horizon", type=_int_list, default=[5, 10, 30, 90], help="forecast horizons, comma-separated")
    p.add_argument("--sizes", type=_int_list, default=[10, 30, 50, 80], help="portfolio sizes")
    p.add_argument("--portfolios", type=int, default=100)
    p.add_argument("--estimation-window", type=int, default=1000)
    p.add_argument("--vol-window", type=int, default=None, help="rolling-vol window (default: the horizon)")
    p.add_argument("--rank", type=int, default=None, help="cointegration rank (default: N - 1)")
    p.add_argument("--lag", type=int, default=2)
    p.add_argument("--guardrail-mult", type=float, default=3.0)
    p.add_argument("--split", choices=["fixed", "rolling"], default="fixed")
    p.add_argument("--normalize-weights", action="store_true")
    p.add_argument("--bias-correct", action="store_true")
    p.add_argument("--workers", type=int, default=1)


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    """Parse twice: once to find --config, then with its values as defaults."""
    args = parser.parse_args(argv)
    if not getattr(args, "config", None):
        return args
    try:
        values = read_key_value(args.config)
    except OSError as exc:
        raise ConfigError(f"cannot read config {args.config}: {exc}")
    sub = parser._subparsers._group_actions[0].choices[args.command]
    known = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, raw in values.items():
        dest = key.replace("-", "_")
        if dest not in known or dest in ("config", "help"):
            raise ConfigError(f"{args.config}: unknown key {key!r} for command {args.command!r}")
        action = known[dest]
        if isinstance(action, (argparse._StoreTrueAction,)):
            defaults[dest] = raw.lower() in ("1", "true", "yes", "on")
        elif action.type is not None:
            try:
                defaults[dest] = action.type(raw)
            except (ValueError, argparse.ArgumentTypeError) as exc:
                raise ConfigError(f"{args.config}: bad value for {key!r}: {exc}")
        else:
            if action.choices is not None and raw not in action.choices:
                raise ConfigError(f"{args.config}: {key!r} must be one of {list(action.choices)}")
            defaults[dest] = raw
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


# ---------------------------------------------------------------------------
# helpers


def _clock(args) -> str:
    if args.fixed_clock:
        return FIXED_CLOCK
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _schema(args, frequency: str | None = None) -> CsvSchema:
    freq = frequency or args.frequency
    if getattr(args, "schema", None):
        base = CsvSchema.from_file(args.schema)
        return CsvSchema(base.timestamp_col, base.price_col, base.timestamp_format, freq)
    return CsvSchema(frequency=freq)


def _benchmark_path(data_dir: Path | None, benchmark: str) -> Path:
    p = Path(benchmark)
    if p.suffix == ".csv" or data_dir is None:
        return p
    return data_dir / f"{benchmark}.csv"


def load_inputs(data_dir, benchmark, schema: CsvSchema) -> tuple[dict[str, ReturnSeries], ReturnSeries | None]:
    """Asset return series keyed by file stem, plus the benchmark's (excluded from the assets)."""
    if not data_dir:
        raise ConfigError("--data-dir is required")
    data_dir = Path(data_dir)
    if not data_dir.is_dir():
        raise IngestError(f"data directory not found: {data_dir}")
    market = None
    bpath = None
    if benchmark:
        bpath = _benchmark_path(data_dir, benchmark)
        if not bpath.is_file():
            raise IngestError(f"benchmark file not found: {bpath}")
        market = to_log_returns(load_csv(bpath, schema))
    assets = {}
    for path in sorted(data_dir.glob("*.csv")):
        if bpath is not None and path.resolve() == bpath.resolve():
            continue
        assets[path.stem] = to_log_returns(load_csv(path, schema))
    if not assets:
        raise IngestError(f"no asset CSV files in {data_dir}")
    return assets, market


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _vols(assets: dict[str, ReturnSeries], market: ReturnSeries, k: int):
    """(hvr, asset vol, market vol) per asset with enough data for window k."""
    mv = volcore.rolling_vol(market, k)
    out = []
    for aid, r in assets.items():
        if len(r) < k:
            logger.warning("%s: %d returns, shorter than window %d; skipped", aid, len(r), k)
            continue
        av = volcore.rolling_vol(r, k)
        try:
            ratio = volcore.hvr(av, mv)
        except volcore.VolError as exc:
            logger.warning("%s: %s; skipped", aid, exc)
            continue
        out.append((ratio, av, mv))
    return out


# ---------------------------------------------------------------------------
# commands


def cmd_hvr(args) -> int:
    if not args.benchmark:
        raise ConfigError("--benchmark is required")
    assets, market = load_inputs(args.data_dir, args.benchmark, _schema(args))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    n = 0
    for k in args.windows:
        for ratio, _, _ in _vols(assets, market, k):
            volcore.save_ratio(ratio, out / f"hvr_{ratio.asset_id}_k{k}")
            n += 1
    print(f"wrote {n} ratio series to {out}")
    return EXIT_OK


def _table3(assets, market, windows, frequency, alpha, max_lags):
    rows = []
    for k in windows:
        items = _vols(assets, market, k)
        if not items:
            raise IngestError(f"no series long enough for window {k}")
        rows.append(stattests.batch_classify(items, bench.horizon_label(k, frequency), alpha=alpha, max_lags=max_lags))
    return rows


def cmd_tests(args) -> int:
    if not args.benchmark:
        raise ConfigError("--benchmark is required")
    assets, market = load_inputs(args.data_dir, args.benchmark, _schema(args))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = _table3(assets, market, args.windows, args.frequency, args.alpha, args.max_lags)
    stattests.write_batch_csv(out / "table3.csv", rows)
    for r in rows:
        print(f"{r.horizon:>12}  stationary {r.pct_stationary:6.2f}%  cointegrated {r.pct_cointegrated:6.2f}%  (n={r.n_tested}, dropped {r.n_dropped})")
    return EXIT_OK


def _bench_config(args, frequency: str) -> bench.BenchConfig:
    return bench.BenchConfig(
        sizes=tuple(args.sizes),
        horizons=tuple(args.horizon),
        frequency=frequency,
        n_portfolios=args.portfolios,
        estimation_window=args.estimation_window,
        seed=args.seed,
        vol_window=args.vol_window,
        lag=args.lag,
        rank=args.rank,
        guardrail_mult=args.guardrail_mult,
        split=args.split,
        normalize_weights=args.normalize_weights,
        bias_correct=args.bias_correct,
        workers=args.workers,
    )


def _bench_panel(assets: dict[str, ReturnSeries]):
    if len(assets) < 2:
        raise IngestError("need at least 2 assets for the backtest")
    return align(list(assets.values()))


def _write_bench(out: Path, records, table, args, cfg, extra: dict | None = None) -> None:
    bench.write_table5_csv(out / "table5.csv", table)
    bench.write_table6_csv(out / "table6.csv", table)
    bench.write_boxplot_json(out / "boxplot.json", bench.ape_boxplot_data(records))
    bench.write_records_csv(out / "records.csv", records)
    meta = {"created": _clock(args), "config": asdict(cfg), "n_records": len(records)}
    meta.update(extra or {})
    _write_json(out / "bench.json", meta)


def _print_table5(table) -> None:
    for r in table.rows:
        V, C, d, win = bench.table5_cells(r)
        print(f"{bench.horizon_label(r.horizon, table.frequency):>12}  N={r.n_assets:<3} V={V:>8} C={C:>8} delta={d:>8} win%={win:>5} hits={r.guardrail_hits}")


def cmd_bench(args) -> int:
    cfg = _bench_config(args, args.frequency)
    extra = {}
    if args.synthetic:
        spec = bench.SyntheticSpec(n_assets=args.assets, length=args.length, seed=args.seed, frequency=args.frequency)
        panel = bench.generate_synthetic(spec).returns
        extra["synthetic"] = asdict(spec)
    else:
        assets, _ = load_inputs(args.data_dir, args.benchmark, _schema(args))
        panel = _bench_panel(assets)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    records, table = bench.run_benchmark(panel, cfg)
    _write_bench(out, records, table, args, cfg, extra)
    _print_table5(table)
    return EXIT_OK


def cmd_synth(args) -> int:
    spec = bench.SyntheticSpec(
        n_assets=args.assets,
        rank=args.rank,
        length=args.length,
        seed=args.seed,
        ec_speed=args.ec_speed,
        trend_sd=args.trend_sd,
        idio_sd=args.idio_sd,
        correlation=args.correlation,
        frequency=args.frequency,
    )
    sp = bench.generate_synthetic(spec)
    out = Path(args.out)
    paths = bench.write_synthetic(sp, out)
    if args.benchmark:
        index = np.log(np.exp(sp.returns.values).mean(axis=1))
        paths.append(bench.write_price_csv(out / f"{args.benchmark}.csv", sp.returns.times, index, spec.frequency))
    print(f"wrote {len(paths)} files to {out}")
    return EXIT_OK


def _reference_rows(path: str) -> dict[tuple[str, int], tuple[float, float, float, float]]:
    import csv

    out = {}
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            out[(rec["horizon"], int(rec["N"]))] = tuple(float(rec[c]) for c in ("V", "C", "delta", "win_pct"))
    return out


def cmd_report(args) -> int:
    dirs = {}
    if args.minute_dir:
        dirs["minute"] = args.minute_dir
    if args.day_dir:
        dirs["day"] = args.day_dir
    if args.data_dir:
        dirs.setdefault(args.frequency, args.data_dir)
    if not dirs:
        raise ConfigError("give --minute-dir and/or --day-dir (or --data-dir with --frequency)")
    if not args.benchmark:
        raise ConfigError("--benchmark is required")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    table3, table4, tables56 = [], [], []
    for freq in ("minute", "day"):
        if freq not in dirs:
            continue
        assets, market = load_inputs(dirs[freq], args.benchmark, _schema(args, freq))
        comparisons = []
        for k in args.windows:
            items = _vols(assets, market, k)
            label = bench.horizon_label(k, freq)
            pairs = [(av, mv) for _, av, mv in items]
            for model in ("M1", "M2"):
                comparisons.append(linmod.naive_model_battery(pairs, label, model, level=args.alpha))
            table4.append(arima.order_census([r.ratio for r, _, _ in items], label, ic=args.ic))
        linmod.write_model_table(out / ("table1.csv" if freq == "minute" else "table2.csv"), comparisons)
        table3.extend(_table3(assets, market, args.windows, freq, args.alpha, args.max_lags))
        cfg = _bench_config(args, freq)
        records, table = bench.run_benchmark(_bench_panel(assets), cfg)
        tables56.append(table)
        bench.write_table5_csv(out / f"table5_{freq}.csv", table)
        bench.write_table6_csv(out / f"table6_{freq}.csv", table)
        bench.write_records_csv(out / f"records_{freq}.csv", records)
        bench.write_boxplot_json(out / f"boxplot_{freq}.json", bench.ape_boxplot_data(records))
        _print_table5(table)
    stattests.write_batch_csv(out / "table3.csv", table3, counts=False)
    stattests.write_batch_csv(out / "table3_counts.csv", table3)
    arima.write_census_csv(out / "table4.csv", table4, labels=True)
    bench.write_table5_wide(out / "table5.csv", tables56)
    bench.write_table6_wide(out / "table6.csv", tables56)
    meta = {"created": _clock(args), "frequencies": sorted(dirs), "windows": args.windows}
    if args.reference:
        ref = _reference_rows(args.reference)
        diffs = []
        for t in tables56:
            for r in t.rows:
                key = (bench.horizon_label(r.horizon, t.frequency), r.n_assets)
                if key in ref:
                    V, C, d, w = ref[key]
                    diffs.append({"horizon": key[0], "N": key[1], "V": r.V - V, "C": r.C - C, "delta": r.delta - d, "win_pct": r.win_pct - w})
        meta["reference_differences"] = diffs
        print(f"compared {len(diffs)} Table 5 cells against {args.reference}")
    _write_json(out / "report.json", meta)
    print(f"wrote Tables 1-6 to {out}")
    return EXIT_OK


COMMANDS = {"hvr": cmd_hvr, "tests": cmd_tests, "bench": cmd_bench, "synth": cmd_synth, "report": cmd_report}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = _apply_config(parser, argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, IngestError, bench.BenchError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # computation failures
        logger.debug("computation failed", exc_info=True)
        print(f"error: computation failed: {exc}", file=sys.stderr)
        return EXIT_COMPUTE


if __name__ == "__main__":
    sys.exit(main())
