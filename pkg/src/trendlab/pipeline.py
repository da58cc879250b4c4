"""End-to-end runs: optimize on the train split, evaluate on both splits,
compare the Kalman strategy with the SMA crossover baseline.

Every command writes its artifacts into ``RunConfig.out``:

=====================  ====================================================
``best_params.json``   optimized parameters (``optimize`` only)
``history.csv``        generation, evals, best, median, sigma
``report_*.json/.csv`` performance report per split; ``report.csv`` has both
``equity_*.csv``       daily marked-to-market equity per split
``trades_*.csv``       trade list per split
``*.png``              equity / price figures (unless ``plots=False``)
``compare.csv/.json``  one row per algorithm (``compare`` only)
=====================  ====================================================
"""

from __future__ import annotations

import csv
import datetime as dt
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import cmaes
from .data import BarSeries, SplitSpec, SynthSpec, load_csv, split, synth_series
from .errors import ConfigError, InvalidPeriod
from .instrument import InstrumentSpec
from .metrics import (
    INITIAL_CAPITAL,
    SENTINEL,
    EquityCurve,
    PerfReport,
    backtest,
    objective_sharpe,
    reports_to_csv,
)
from .params import SearchSpace, decode, read_params, space_for, write_params
from .strategy import StrategyParams, Trade

log = logging.getLogger(__name__)


@dataclass
class RunConfig:
    out: Path
    data: Optional[Path] = None
    synth: Optional[SynthSpec] = None
    split: Optional[SplitSpec] = None  # default: halves of the series
    instrument: InstrumentSpec = field(default_factory=InstrumentSpec)
    strategy: str = "kf"
    seed: int = 0
    evals: int = 2000
    l1: float = 0.0
    sigma0: float = 1.0
    popsize: Optional[int] = None
    k_ref: Optional[float] = None
    initial_capital: float = INITIAL_CAPITAL
    plots: bool = True

    def __post_init__(self):
        if (self.data is None) == (self.synth is None):
            raise ConfigError("give exactly one data source: a CSV path or a synth spec")
        if self.strategy not in ("kf", "ma"):
            raise ConfigError(f"strategy must be 'kf' or 'ma', got {self.strategy!r}")
        if self.evals < 1:
            raise ConfigError("evals must be positive")
        if self.l1 < 0:
            raise ConfigError("l1 weight must be >= 0")
        self.out = Path(self.out)


def load_series(config: RunConfig) -> BarSeries:
    if config.data is not None:
        return load_csv(config.data, tick_size=config.instrument.tick_size)
    return synth_series(config.synth.kind, config.synth.params, seed=config.seed)


def default_split(series: BarSeries) -> SplitSpec:
    mid = len(series) // 2
    return SplitSpec(
        train_start=series.dates[0],
        train_end=series.dates[mid],
        test_end=series.dates[-1] + dt.timedelta(days=1),
    )


def load_splits(config: RunConfig) -> tuple[BarSeries, BarSeries]:
    series = load_series(config)
    spec = config.split or default_split(series)
    return split(series, spec)


def make_objective(train: BarSeries, instrument: InstrumentSpec, space: SearchSpace,
                   k_ref: Optional[float] = None, initial_capital: float = INITIAL_CAPITAL):
    """Train-split Sharpe of a (clamped) search vector; unusable parameter
    combinations score :data:`SENTINEL`."""

    def objective(x: np.ndarray) -> float:
        try:
            params = decode(space.kind, space.clamp(x), k_ref=k_ref)
        except (ValueError, InvalidPeriod):
            return SENTINEL
        with np.errstate(all="ignore"):
            return objective_sharpe(train, instrument, params, initial_capital)

    return objective


def optimize_params(
    train: BarSeries,
    instrument: InstrumentSpec,
    kind: str,
    seed: int = 0,
    evals: int = 2000,
    l1: float = 0.0,
    sigma0: float = 1.0,
    popsize: Optional[int] = None,
    k_ref: Optional[float] = None,
    initial_capital: float = INITIAL_CAPITAL,
) -> tuple[StrategyParams, cmaes.OptimizeResult]:
    """Maximize the penalized train Sharpe with CMA-ES."""
    space = space_for(kind)
    overrides = {} if popsize is None else {"lam": popsize}
    config = cmaes.default_config(
        space.n,
        space.mean0,
        sigma0,
        seed=seed,
        max_evals=evals,
        l1_weight=l1,
        l1_mask=space.l1_mask,
        lower=space.lower,
        upper=space.upper,
        scales=space.scales,
        **overrides,
    )
    objective = make_objective(train, instrument, space, k_ref, initial_capital)
    result = cmaes.optimize(objective, config)
    best = decode(kind, space.clamp(result.x), k_ref=k_ref)
    return best, result


def write_trades(trades: list[Trade], path: Path) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["direction", "entry_date", "entry_price", "exit_date", "exit_price",
                    "exit_reason", "pnl"])
        for t in trades:
            w.writerow([t.direction, t.entry_date.isoformat(), repr(t.entry_price),
                        t.exit_date.isoformat(), repr(t.exit_price), t.exit_reason,
                        repr(t.pnl_currency)])


@dataclass
class SplitResult:
    bars: BarSeries
    trades: list[Trade]
    curve: EquityCurve
    report: PerfReport


def evaluate(config: RunConfig, params: StrategyParams, train: BarSeries,
             test: BarSeries) -> dict[str, SplitResult]:
    """Backtest fixed parameters on both splits. The test split is
    evaluated with the train bars as indicator/filter warm-up."""
    out = {}
    for name, bars, warmup in (("train", train, None), ("test", test, train)):
        trades, curve, report = backtest(bars, config.instrument, params,
                                         config.initial_capital, warmup=warmup)
        out[name] = SplitResult(bars, trades, curve, report)
    return out


def write_reports(config: RunConfig, results: dict[str, SplitResult], label: str = "") -> None:
    out = config.out
    for name, res in results.items():
        (out / f"report_{name}.json").write_text(res.report.to_json() + "\n")
        with (out / f"report_{name}.csv").open("w", newline="") as fh:
            reports_to_csv([(name.capitalize(), res.report)], fh)
        with (out / f"equity_{name}.csv").open("w", newline="") as fh:
            res.curve.to_csv(fh)
        write_trades(res.trades, out / f"trades_{name}.csv")
    with (out / "report.csv").open("w", newline="") as fh:
        reports_to_csv([(n.capitalize(), r.report) for n, r in results.items()], fh)
    if config.plots:
        from .plots import save_backtest_figure

        for name, res in results.items():
            title = f"{label or 'strategy'} on {name} split"
            save_backtest_figure(res.bars, res.trades, res.curve, out / f"equity_{name}.png", title)


def cmd_optimize(config: RunConfig) -> dict:
    config.out.mkdir(parents=True, exist_ok=True)
    train, test = load_splits(config)
    log.info("optimizing %s on %d train bars (%d evals)", config.strategy, len(train), config.evals)
    params, result = optimize_params(
        train, config.instrument, config.strategy, config.seed, config.evals, config.l1,
        config.sigma0, config.popsize, config.k_ref, config.initial_capital,
    )
    fitness = result.fitness if math.isfinite(result.fitness) else None
    write_params(params, config.out / "best_params.json", extra={
        "penalized_fitness": fitness,
        "evaluations": result.state.eval_count,
        "termination": result.history.termination,
        "seed": config.seed,
    })
    with (config.out / "history.csv").open("w", newline="") as fh:
        result.history.to_csv(fh)
    results = evaluate(config, params, train, test)
    write_reports(config, results, label=_label(config.strategy))
    if config.plots:
        from .plots import save_history_figure

        save_history_figure(result.history, config.out / "history.png")
    return {"params": params, "result": result, "splits": results}


def cmd_backtest(config: RunConfig, params_file: Path) -> dict:
    params = read_params(params_file, expected_kind=config.strategy)
    config.out.mkdir(parents=True, exist_ok=True)
    train, test = load_splits(config)
    results = evaluate(config, params, train, test)
    write_reports(config, results, label=_label(params.kind))
    return {"params": params, "splits": results}


COMPARE_COLUMNS = [
    "Algo", "Total Net Profit", "Recovery Factor", "Profit Factor", "Max. Drawdown",
    "Sharpe Ratio", "Total # of Trades", "Percent Profitable", "Train: Total Net Profit",
]


def _label(kind: str) -> str:
    return "Kalman filter" if kind == "kf" else "MA Cross over"


def comparison_row(label: str, test: PerfReport, train: PerfReport) -> dict:
    return {
        "Algo": label,
        "Total Net Profit": test.net_profit,
        "Recovery Factor": test.recovery_factor,
        "Profit Factor": test.profit_factor,
        "Max. Drawdown": test.max_drawdown,
        "Sharpe Ratio": test.sharpe,
        "Total # of Trades": test.n_trades,
        "Percent Profitable": test.percent_profitable,
        "Train: Total Net Profit": train.net_profit,
    }


def cmd_compare(config: RunConfig, params_kf: Path, params_ma: Path) -> list[dict]:
    """Test-split comparison rows, MA first as in the published table."""
    ma = read_params(params_ma, expected_kind="ma")
    kf = read_params(params_kf, expected_kind="kf")
    config.out.mkdir(parents=True, exist_ok=True)
    train, test = load_splits(config)
    rows = []
    for params in (ma, kf):
        res = evaluate(config, params, train, test)
        rows.append(comparison_row(_label(params.kind), res["test"].report, res["train"].report))
    with (config.out / "compare.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COMPARE_COLUMNS)
        for row in rows:
            w.writerow(["" if row[c] is None else (repr(row[c]) if isinstance(row[c], float)
                        else row[c]) for c in COMPARE_COLUMNS])
    (config.out / "compare.json").write_text(json.dumps(rows, indent=2) + "\n")
    return rows
