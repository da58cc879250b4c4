"""Command line entry point: ``trendlab optimize|backtest|compare|synth``."""

from __future__ import annotations

import argparse
import datetime as dt
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from .data import SplitSpec, SynthSpec, save_csv, synth_series
from .errors import ConfigError, DataError, TrendlabError
from .instrument import resolve_instrument
from .pipeline import RunConfig, cmd_backtest, cmd_compare, cmd_optimize

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_OTHER = 0, 2, 3, 1

log = logging.getLogger("trendlab")


def _date(text: str) -> dt.date:
    try:
        return dt.date.fromisoformat(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an ISO date: {text!r}") from None


def _add_common(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--data", type=Path, help="CSV with date,open,high,low,close[,volume]")
    src.add_argument("--synth", help="synthetic series, e.g. 'sine_plus_drift:n=252,period=30'")
    p.add_argument("--train-start", type=_date)
    p.add_argument("--train-end", type=_date)
    p.add_argument("--test-end", type=_date)
    p.add_argument("--strategy", choices=("kf", "ma"), default="kf")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=Path("out"))
    p.add_argument("--instrument", default="EP", help="instrument preset name (default EP)")
    p.add_argument("--instrument-file", type=Path, help="JSON or TOML file with extra presets")
    p.add_argument("--commission", type=float, help="per-side commission override")
    p.add_argument("--k-ref", type=float, help="constant reference level for the control term")
    p.add_argument("--capital", type=float, default=100_000.0)
    p.add_argument("--no-plots", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="trendlab", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("optimize", help="fit strategy parameters on the train split")
    _add_common(p)
    p.add_argument("--evals", type=int, default=2000)
    p.add_argument("--l1", type=float, default=0.0, help="L1 weight on p1..p15")
    p.add_argument("--sigma0", type=float, default=1.0)
    p.add_argument("--popsize", type=int)

    p = sub.add_parser("backtest", help="evaluate a parameters file on both splits")
    _add_common(p)
    p.add_argument("--params", type=Path, required=True)

    p = sub.add_parser("compare", help="Kalman filter versus SMA crossover on the test split")
    _add_common(p)
    p.add_argument("--params-kf", type=Path, required=True)
    p.add_argument("--params-ma", type=Path, required=True)

    p = sub.add_parser("synth", help="write a synthetic bar series to CSV")
    p.add_argument("--synth", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True, help="output CSV path")
    return parser


def _config(args) -> RunConfig:
    instrument = resolve_instrument(args.instrument, args.instrument_file)
    if args.commission is not None:
        instrument = type(instrument)(instrument.tick_size, instrument.tick_value,
                                      args.commission, instrument.currency)
    dates = (args.train_start, args.train_end, args.test_end)
    if any(d is not None for d in dates) and not all(d is not None for d in dates):
        raise ConfigError("--train-start, --train-end and --test-end go together")
    split_spec = SplitSpec(*dates) if dates[0] is not None else None
    return RunConfig(
        out=args.out,
        data=args.data,
        synth=SynthSpec.parse(args.synth) if args.synth else None,
        split=split_spec,
        instrument=instrument,
        strategy=args.strategy,
        seed=args.seed,
        evals=getattr(args, "evals", 2000),
        l1=getattr(args, "l1", 0.0),
        sigma0=getattr(args, "sigma0", 1.0),
        popsize=getattr(args, "popsize", None),
        k_ref=args.k_ref,
        initial_capital=args.capital,
        plots=not args.no_plots,
    )


def run(args) -> None:
    if args.command == "synth":
        spec = SynthSpec.parse(args.synth)
        save_csv(synth_series(spec.kind, spec.params, seed=args.seed), args.out)
        print(args.out)
        return
    config = _config(args)
    if args.command == "optimize":
        res = cmd_optimize(config)
        train, test = res["splits"]["train"].report, res["splits"]["test"].report
        print(f"termination: {res['result'].history.termination}, "
              f"evals: {res['result'].state.eval_count}")
        print(f"train net profit {train.net_profit:.2f}, sharpe {train.sharpe}")
        print(f"test  net profit {test.net_profit:.2f}, sharpe {test.sharpe}")
    elif args.command == "backtest":
        res = cmd_backtest(config, args.params)
        for name, sr in res["splits"].items():
            print(f"{name}: net profit {sr.report.net_profit:.2f}, trades {sr.report.n_trades}, "
                  f"sharpe {sr.report.sharpe}")
    elif args.command == "compare":
        for row in cmd_compare(config, args.params_kf, args.params_ma):
            print(f"{row['Algo']}: test net profit {row['Total Net Profit']:.2f}, "
                  f"train net profit {row['Train: Total Net Profit']:.2f}")
    print(f"artifacts in {config.out}")


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TrendlabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_OTHER
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
