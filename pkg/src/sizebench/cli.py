"""Command-line entry point.

Subcommands write their outputs under ``--out`` and nothing else. Exit
codes: 0 success, 1 invalid input or configuration, 2 runtime failure.
Log messages go to standard error; ``SIZEBENCH_LOG`` (error, info, debug)
sets the level.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__, engine, indicators, market_data as md, vartests
from .errors import ComputationError, ValidationError
from .market_data import ReturnSeries
from .risk import VarConfig, hit_sequence, rolling_var
from .sizing import SizingPolicy

log = logging.getLogger("sizebench")

LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}


class ConfigInvalid(ValidationError):
    def __init__(self, path, reason: str):
        super().__init__(f"{path}: {reason}")
        self.path = path
        self.reason = reason


class UnknownSubcommand(ValidationError):
    pass


class _HelpFormatter(argparse.ArgumentDefaultsHelpFormatter):
    """Show defaults, except for required arguments and flags without one."""

    def _get_help_string(self, action):
        if action.default is None or action.required:
            return action.help
        return super()._get_help_string(action)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UnknownSubcommand(f"{self.prog}: {message}")


# --------------------------------------------------------------------------
# Run config
# --------------------------------------------------------------------------
_POLICY = {
    "type": "object",
    "additionalProperties": False,
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["fixed_fraction", "kelly", "min_variance"]},
        "long_pct": {"type": "number", "minimum": 0, "maximum": 1},
        "short_pct": {"type": "number", "minimum": 0, "maximum": 1},
        "gross_cap": {"type": "number", "exclusiveMinimum": 0},
        "params": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kelly_p": {"type": "number", "exclusiveMinimum": 0.5, "maximum": 1},
                "cov_lookback": {"type": "integer", "minimum": 2},
            },
        },
    },
}

RUN_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "additionalProperties": False,
    "required": ["universe", "policy"],
    "properties": {
        "universe": {
            "oneOf": [
                {"type": "array", "minItems": 1, "items": {"type": "string"}},
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["spec"],
                    "properties": {"spec": {"type": "string"}},
                },
            ]
        },
        "benchmark": {"type": ["string", "null"]},
        "policy": _POLICY,
        "capital": {"type": "number", "exclusiveMinimum": 0},
        "commission_bps": {"type": "number", "minimum": 0},
        "rebalance": {"enum": list(engine.REBALANCE)},
        "beta_method": {"enum": ["ols", "kalman"]},
        "quantiles": {"type": "integer", "minimum": 1},
        "horizons": {"type": "array", "minItems": 1, "items": {"type": "integer", "minimum": 1}},
        "vol_window": {"type": "integer", "minimum": 2},
        "risk_free": {"type": "number"},
        "var": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "alpha": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 0.5},
                "window": {"type": "integer", "minimum": 30},
                "method": {"enum": ["parametric", "historical"]},
            },
        },
        "seed": {"type": "integer", "minimum": 0},
    },
    # a generated universe is random, so it needs a seed
    "if": {"properties": {"universe": {"type": "object"}}},
    "then": {"required": ["seed"]},
}


def load_run_config(path: str | Path) -> dict:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(path, f"not valid JSON ({exc})") from None
    errors = sorted(jsonschema.Draft7Validator(RUN_SCHEMA).iter_errors(doc), key=lambda e: list(e.path))
    if errors:
        e = errors[0]
        where = "/".join(str(p) for p in e.path) or "<root>"
        raise ConfigInvalid(path, f"{where}: {e.message}")
    return doc


def _spec_doc(spec: str) -> dict:
    p = Path(spec)
    if p.exists():
        return json.loads(p.read_text())
    try:
        return md.load_builtin_spec(spec)
    except FileNotFoundError:
        raise ValidationError(f"no spec file or built-in spec named {spec!r}") from None


def _load_universe(paths) -> dict[str, md.BarSeries]:
    out = {}
    for p in paths:
        s = md.ingest_csv(p)
        if s.ticker in out:
            raise ValidationError(f"duplicate ticker {s.ticker!r}")
        out[s.ticker] = s
    return out


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n")


# --------------------------------------------------------------------------
# Subcommands
# --------------------------------------------------------------------------
def cmd_generate(args, out: Path) -> None:
    doc = _spec_doc(args.spec)
    if "universe" in doc:
        series = md.generate_universe(md.universe_spec_from_dict(doc), args.seed)
    else:
        series = {args.ticker: md.generate_synthetic(md.regime_spec_from_dict(doc), args.seed,
                                                     args.ticker)}
    for ticker in sorted(series):
        md.write_csv(series[ticker], out / f"{ticker}.csv")
    log.info("generated %d series", len(series))


def cmd_screen(args, out: Path) -> None:
    results = []
    for path in args.data:
        results.extend(md.screen_series(md.ingest_csv(path), args.windows, args.price_field))
    md.write_ks_table(results, out / "ks_table.csv")


def cmd_indicators(args, out: Path) -> None:
    try:
        params = json.loads(args.params) if args.params else {}
    except json.JSONDecodeError as exc:
        raise ValidationError(f"--params is not valid JSON ({exc})") from None
    kinds = indicators.ALL_KINDS if args.kind == "all" else (args.kind,)
    if args.kind == "all" and params:
        raise ValidationError("--params cannot be combined with --kind all")
    for path in args.data:
        s = md.ingest_csv(path)
        for kind in kinds:
            indicators.indicator_by_name(kind, s, params).to_csv(out / f"{s.ticker}_{kind}.csv")


def _factor_outputs(panel: engine.FactorPanel, fa: engine.FactorAnalytics, out: Path) -> None:
    d = panel.dates.astype(str)
    engine._write_rows(out / "factor.csv", ["date"] + list(panel.tickers),
                       ([d[i]] + panel.values[i].tolist() for i in range(d.size)))
    hs = sorted(fa.ic)
    engine._write_rows(out / "ic_series.csv", ["date"] + [f"ic_{h}" for h in hs],
                       zip(d, *(fa.ic[h] for h in hs)))
    rows = []
    for h in hs:
        theo, emp = fa.qq[h]
        rows.extend((h, a, b) for a, b in zip(theo, emp))
    engine._write_rows(out / "ic_qq.csv", ["horizon", "normal_quantile", "ic"], rows)
    _write_json(out / "factor_summary.json", {"horizons": fa.summary(), "flags": list(fa.flags)})


def cmd_factor(args, out: Path) -> None:
    uni = _load_universe(args.data)
    uni.pop(args.benchmark, None)
    panel = engine.default_factor(uni, quantiles=args.quantiles, horizons=tuple(args.horizons))
    _, aligned = md.align_universe(uni)
    closes = np.column_stack([aligned[t].close for t in panel.tickers])
    fa = engine.factor_analysis(panel, {h: engine.forward_returns(closes, h) for h in panel.horizons})
    _factor_outputs(panel, fa, out)


def _run_from_config(doc: dict, base: Path):
    u = doc["universe"]
    if isinstance(u, dict):
        spec = u["spec"]
        if not Path(spec).is_absolute() and (base / spec).exists():
            spec = str(base / spec)
        uni = md.generate_universe(md.universe_spec_from_dict(_spec_doc(spec)), doc["seed"])
    else:
        uni = _load_universe([p if Path(p).is_absolute() else base / p for p in u])
    benchmark = doc.get("benchmark", "SPY")
    pol = doc["policy"]
    policy = SizingPolicy(pol["kind"], pol.get("long_pct", 0.1), pol.get("short_pct", 0.1),
                          dict(pol.get("params", {})), pol.get("gross_cap", 1.5))
    var = doc.get("var", {})
    cfg = engine.RunConfig(
        capital=doc.get("capital", engine.INITIAL_CAPITAL),
        commission_bps=doc.get("commission_bps", 0.0),
        rebalance=doc.get("rebalance", "weekly"),
        var_alpha=var.get("alpha", 0.05), var_window=var.get("window", 250),
        var_method=var.get("method", "parametric"),
        vol_window=doc.get("vol_window", 126), beta_method=doc.get("beta_method", "ols"),
        benchmark=benchmark if benchmark in uni else None, risk_free=doc.get("risk_free", 0.0),
    )
    tradable = {t: s for t, s in uni.items() if t != cfg.benchmark}
    factor = engine.default_factor(tradable, quantiles=doc.get("quantiles", 10),
                                   horizons=tuple(doc.get("horizons", (1, 5, 10))))
    return engine.run_backtest(uni, factor, policy, cfg)


def cmd_backtest(args, out: Path) -> None:
    doc = load_run_config(args.config)
    report = _run_from_config(doc, Path(args.config).resolve().parent)
    report.write(out)
    log.info("max rolling VaR %s", report.max_var)


def _read_returns(path: str | Path) -> ReturnSeries:
    path = Path(path)
    with path.open(newline="") as fh:
        header = [h.strip().lower() for h in next(csv.reader(fh), [])]
    if "close" in header:
        s = md.ingest_csv(path)
        field = "adj_close" if "adj_close" in header else "close"
        return md.compute_returns(s, "simple", field)
    if "date" not in header or "return" not in header:
        raise ValidationError(f"{path}: need date,return columns or an OHLCV file")
    dates, vals = [], []
    with path.open(newline="") as fh:
        for line_no, row in enumerate(csv.DictReader(fh, fieldnames=header), start=1):
            if line_no == 1:
                continue
            try:
                dates.append(np.datetime64(row["date"].strip(), "D"))
                vals.append(float(row["return"]))
            except (ValueError, AttributeError) as exc:
                raise md.MalformedRow(line_no, str(exc)) from None
    order = np.argsort(np.array(dates, dtype="datetime64[D]"), kind="stable")
    return ReturnSeries(path.stem, np.array(dates, dtype="datetime64[D]")[order],
                        np.array(vals)[order])


def cmd_vartest(args, out: Path) -> None:
    rets = _read_returns(args.returns)
    cfg = VarConfig(alpha=args.alpha, side=args.side, method=args.method, window=args.window)
    vs = rolling_var(rets, cfg)
    hits = hit_sequence(rets, vs)
    results = vartests.run_all(hits, vs, max_lag=args.max_lag, order=args.order)
    doc = {"alpha": args.alpha, "window": args.window, "side": args.side, "method": args.method,
           "n": len(hits), "violations": hits.count, "tests": results,
           "degenerate_windows": int(vs.degenerate.sum()) if vs.degenerate is not None else 0}
    _write_json(out / "vartests.json", engine._clean(doc))
    y = rets.values[np.searchsorted(rets.dates, vs.dates)]
    engine._write_rows(out / "var_series.csv", ["date", "return", "var", "hit"],
                       zip(vs.dates.astype(str), y, vs.var_values, hits.hits))


REPORT_METRICS = ("total_return", "specific_return", "sharpe", "sortino", "max_drawdown", "volatility")


def cmd_report(args, out: Path) -> None:
    rows, summary = [], {}
    for d in args.inputs:
        path = Path(d) / "report.json"
        try:
            rep = json.loads(path.read_text())
        except FileNotFoundError:
            raise ValidationError(f"{path} not found") from None
        name = Path(d).resolve().name
        if name in summary:
            raise ValidationError(f"duplicate run name {name!r}")
        tests = rep.get("test_results", {})
        verdict = {k: v.get("reject_5pct") for k, v in tests.items() if isinstance(v, dict)}
        summary[name] = {"max_var": rep.get("max_var"),
                         **{m: rep["metrics"].get(m) for m in REPORT_METRICS},
                         "reject_5pct": verdict}
        rows.append([name, rep.get("max_var")] + [rep["metrics"].get(m) for m in REPORT_METRICS])
    ranked = sorted(summary, key=lambda k: (summary[k]["max_var"] is None, summary[k]["max_var"] or 0.0))
    _write_json(out / "summary.json", {"runs": summary, "ranked_by_max_var": ranked})
    engine._write_rows(out / "summary.csv", ["run", "max_var"] + list(REPORT_METRICS),
                       ([x if x is not None else float("nan") for x in r] for r in rows))


# --------------------------------------------------------------------------
# Parser and dispatch
# --------------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    fmt = _HelpFormatter
    p = _Parser(prog="sizebench", description="Long/short sizing backtests and VaR diagnostics.",
                formatter_class=fmt)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    def add(name, help_text, func):
        sp = sub.add_parser(name, help=help_text, description=help_text, formatter_class=fmt)
        sp.add_argument("--out", required=True, help="output directory (created if missing)")
        sp.set_defaults(func=func)
        return sp

    sp = add("generate", "Generate synthetic OHLCV CSVs from a regime spec.", cmd_generate)
    sp.add_argument("--spec", required=True, help="spec JSON path or built-in name (crash)")
    sp.add_argument("--seed", type=int, required=True, help="random seed")
    sp.add_argument("--ticker", default="SYN", help="ticker for single-series specs")

    sp = add("screen", "Kolmogorov-Smirnov normality screen on signal-filtered returns.", cmd_screen)
    sp.add_argument("--data", nargs="+", required=True, help="OHLCV CSV files")
    sp.add_argument("--windows", nargs="+", type=int, default=[5, 10, 20], help="rolling windows")
    sp.add_argument("--price-field", default="adj_close", choices=["close", "adj_close"],
                    help="price used for returns")

    sp = add("indicators", "Compute technical indicators per ticker.", cmd_indicators)
    sp.add_argument("--data", nargs="+", required=True, help="OHLCV CSV files")
    sp.add_argument("--kind", default="all", choices=("all",) + indicators.ALL_KINDS,
                    help="indicator to compute")
    sp.add_argument("--params", default=None, help="JSON object of indicator parameters")

    sp = add("factor", "Default composite factor with IC and quantile analytics.", cmd_factor)
    sp.add_argument("--data", nargs="+", required=True, help="OHLCV CSV files")
    sp.add_argument("--benchmark", default="SPY", help="ticker excluded from the cross-section")
    sp.add_argument("--quantiles", type=int, default=10, help="number of quantile buckets")
    sp.add_argument("--horizons", nargs="+", type=int, default=[1, 5, 10],
                    help="forward-return horizons in days")

    sp = add("backtest", "Run a backtest described by a JSON run config.", cmd_backtest)
    sp.add_argument("--config", required=True, help="run config JSON")

    sp = add("vartest", "Rolling VaR and the four hit-sequence backtests.", cmd_vartest)
    sp.add_argument("--returns", required=True, help="CSV with date,return columns or OHLCV")
    sp.add_argument("--alpha", type=float, default=0.05, help="VaR tail probability")
    sp.add_argument("--window", type=int, default=250, help="estimation window in days")
    sp.add_argument("--side", default="long", choices=["long", "short"], help="position side")
    sp.add_argument("--method", default="parametric", choices=["parametric", "historical"],
                    help="VaR estimator")
    sp.add_argument("--max-lag", type=int, default=5, help="portmanteau lags")
    sp.add_argument("--order", type=int, default=1, help="Markov test order")

    sp = add("report", "Compare backtest output directories.", cmd_report)
    sp.add_argument("--inputs", nargs="+", required=True, help="backtest --out directories")
    return p


def _setup_logging() -> None:
    level = os.environ.get("SIZEBENCH_LOG", "info").strip().lower()
    if level not in LOG_LEVELS:
        level = "info"
    log.handlers.clear()
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    log.addHandler(handler)
    log.setLevel(LOG_LEVELS[level])
    log.propagate = False


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "command", None):
            raise UnknownSubcommand("a subcommand is required; see --help")
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        args.func(args, out)
    except (ValueError, KeyError) as exc:  # ValidationError is a ValueError
        log.error("%s", exc)
        return 1
    except (ComputationError, OSError, ArithmeticError) as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return 2
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
