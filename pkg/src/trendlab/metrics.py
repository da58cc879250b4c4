"""Equity curves, the Sharpe objective and the performance report.

Conventions: 252 trading days per year, sample (n - 1) standard
deviations, zero minimal acceptable return for the Sortino ratio. Ratios
that are undefined (no losses, zero variance, no trades) are ``None``
rather than ``inf``/``nan``.

Two Sharpe ratios are reported. ``sharpe`` is computed on daily P&L in
currency (what the optimizer maximizes; independent of the capital base and
of the tick value), ``daily_sharpe`` on daily percentage returns of the
equity curve.
"""

from __future__ import annotations

import csv
import datetime as dt
import json
import math
from dataclasses import asdict, dataclass
from typing import Optional, Sequence, TextIO

import numpy as np

from .data import BarSeries, concat
from .errors import NonPositiveEquity
from .instrument import InstrumentSpec
from .strategy import StrategyParams, Trade, signals_for, simulate

PERIODS_PER_YEAR = 252
INITIAL_CAPITAL = 100_000.0
SENTINEL = -1e9


@dataclass(frozen=True)
class EquityCurve:
    dates: tuple
    equity: np.ndarray
    initial_capital: float = INITIAL_CAPITAL

    @property
    def daily_pnl(self) -> np.ndarray:
        return np.diff(self.equity)

    def to_csv(self, fh: TextIO) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "equity"])
        for d, e in zip(self.dates, self.equity):
            w.writerow([d.isoformat(), repr(float(e))])


def equity_curve(
    bars: BarSeries,
    trades: Sequence[Trade],
    spec: InstrumentSpec,
    initial_capital: float = INITIAL_CAPITAL,
) -> EquityCurve:
    """Daily marked-to-market equity.

    Open positions are marked at the close. The entry-side commission is
    booked on the entry bar, the exit side on the exit bar. Once every trade
    is closed the final equity equals capital plus the summed trade P&L.
    """
    n = len(bars)
    closes = bars.close
    realized = np.zeros(n)
    value = np.zeros(n)
    for tr in trades:
        realized[tr.exit_index] += tr.pnl_currency
        held = slice(tr.entry_index, tr.exit_index)
        value[held] += (
            tr.sign * (closes[held] - tr.entry_price) / spec.tick_size * spec.tick_value
            - spec.commission
        )
    value += np.cumsum(realized)
    equity = initial_capital + value
    return EquityCurve(dates=tuple(bars.dates), equity=equity, initial_capital=initial_capital)


def daily_returns(curve: EquityCurve) -> np.ndarray:
    eq = np.asarray(curve.equity, dtype=float)
    if np.any(eq <= 0):
        raise NonPositiveEquity("equity must stay positive to compute returns")
    return eq[1:] / eq[:-1] - 1.0


def _mean_std(values: Sequence[float]) -> tuple[float, float]:
    """Mean and sample standard deviation from correctly rounded sums, so
    the result does not depend on summation order."""
    v = [float(x) for x in values]
    mean = math.fsum(v) / len(v)
    var = math.fsum((x - mean) ** 2 for x in v) / (len(v) - 1)
    return mean, math.sqrt(var)


def sharpe(returns: Sequence[float], periods_per_year: int = PERIODS_PER_YEAR) -> Optional[float]:
    """Annualized mean over sample standard deviation; ``None`` when the
    series is shorter than 2 or has zero variance."""
    r = np.asarray(returns, dtype=float)
    if len(r) < 2 or np.ptp(r) == 0:
        return None
    mean, sd = _mean_std(r)
    if sd == 0 or not math.isfinite(sd):
        return None
    return mean / sd * math.sqrt(periods_per_year)


def sortino(returns: Sequence[float], periods_per_year: int = PERIODS_PER_YEAR) -> Optional[float]:
    """Mean over downside deviation (root mean square of the negative
    returns, zero target); ``None`` without any negative return."""
    r = [float(x) for x in returns]
    if len(r) < 2:
        return None
    downside = math.sqrt(math.fsum(min(x, 0.0) ** 2 for x in r) / len(r))
    if downside == 0:
        return None
    return math.fsum(r) / len(r) / downside * math.sqrt(periods_per_year)


def annualized_vol_pct(returns: Sequence[float], periods_per_year: int) -> Optional[float]:
    r = np.asarray(returns, dtype=float)
    if len(r) < 2 or np.ptp(r) == 0:
        return None
    return 100.0 * _mean_std(r)[1] * math.sqrt(periods_per_year)


def max_drawdown(curve) -> float:
    """Worst decline from a running peak (<= 0). Accepts a curve or an array."""
    eq = np.asarray(getattr(curve, "equity", curve), dtype=float)
    if len(eq) == 0:
        raise ValueError("empty equity curve")
    return float(np.min(eq - np.maximum.accumulate(eq)))


def time_to_recover_days(dates: Sequence[dt.date], equity: Sequence[float]) -> int:
    """Longest calendar span from a peak to the first bar back at or above
    it. A drawdown still open at the end counts up to the last date."""
    if len(equity) == 0:
        return 0
    longest = 0
    peak, peak_date = equity[0], dates[0]
    under = False
    for d, e in zip(dates, equity):
        if e >= peak:
            if under:
                longest = max(longest, (d - peak_date).days)
                under = False
            peak, peak_date = e, d
        else:
            under = True
    if under:
        longest = max(longest, (dates[-1] - peak_date).days)
    return longest


def _max_run(flags: Sequence[bool]) -> int:
    best = cur = 0
    for f in flags:
        cur = cur + 1 if f else 0
        best = max(best, cur)
    return best


def monthly_returns(curve: EquityCurve) -> np.ndarray:
    """Returns between successive calendar-month closing equities, the
    first measured from the initial capital."""
    month_end = {}
    for d, e in zip(curve.dates, curve.equity):
        month_end[(d.year, d.month)] = float(e)
    levels = np.array([curve.initial_capital] + list(month_end.values()))
    return levels[1:] / levels[:-1] - 1.0


@dataclass
class PerfReport:
    net_profit: float = 0.0
    gross_profit: float = 0.0
    gross_loss: float = 0.0
    n_trades: int = 0
    n_contracts: int = 0
    avg_trade: Optional[float] = None
    total_net_profit_pct: float = 0.0
    ann_net_profit_pct: Optional[float] = None
    vol_ann_pct: Optional[float] = None
    sharpe: Optional[float] = None
    daily_sharpe: Optional[float] = None
    daily_sortino: Optional[float] = None
    trades_per_day: float = 0.0
    avg_time_in_market_days: Optional[float] = None
    max_drawdown: float = 0.0
    recovery_factor: Optional[float] = None
    commission_total: float = 0.0
    percent_profitable: Optional[float] = None
    profit_factor: Optional[float] = None
    n_winners: int = 0
    avg_winner: Optional[float] = None
    max_consec_winners: int = 0
    largest_winner: Optional[float] = None
    n_losers: int = 0
    avg_loser: Optional[float] = None
    max_consec_losers: int = 0
    largest_loser: Optional[float] = None
    avg_win_over_avg_loss: Optional[float] = None
    avg_bars_in_trade: Optional[float] = None
    time_to_recover_days: int = 0
    monthly_vol_ann_pct: Optional[float] = None

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


# Column labels as in the published train/test statistics tables.
REPORT_COLUMNS: list[tuple[str, str]] = [
    ("Net Profit", "net_profit"),
    ("Gross Profit", "gross_profit"),
    ("Gross Loss", "gross_loss"),
    ("# of Trades", "n_trades"),
    ("# of Contracts", "n_contracts"),
    ("Avg. Trade", "avg_trade"),
    ("Tot. Net Profit (%)", "total_net_profit_pct"),
    ("Ann. Net Profit (%)", "ann_net_profit_pct"),
    ("Vol", "vol_ann_pct"),
    ("Sharpe Ratio", "sharpe"),
    ("Trades per Day", "trades_per_day"),
    ("Avg. Time in Market", "avg_time_in_market_days"),
    ("Max. Drawdown", "max_drawdown"),
    ("Recovery Factor", "recovery_factor"),
    ("Daily Ann. Vol", "vol_ann_pct"),
    ("Monthly Ann. Vol", "monthly_vol_ann_pct"),
    ("Daily Sharpe Ratio", "daily_sharpe"),
    ("Daily Sortino Ratio", "daily_sortino"),
    ("Commission", "commission_total"),
    ("Percent Profitable", "percent_profitable"),
    ("Profit Factor", "profit_factor"),
    ("# of Winning Trades", "n_winners"),
    ("Avg. Winning Trade", "avg_winner"),
    ("Max. conseq. Winners", "max_consec_winners"),
    ("Largest Winning Trade", "largest_winner"),
    ("# of Losing Trades", "n_losers"),
    ("Avg. Losing Trade", "avg_loser"),
    ("Max. conseq. Losers", "max_consec_losers"),
    ("Largest Losing Trade", "largest_loser"),
    ("Avg. Win/Avg. Loss", "avg_win_over_avg_loss"),
    ("Avg. Bars in Trade", "avg_bars_in_trade"),
    ("Time to Recover", "time_to_recover_days"),
]


def format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def reports_to_csv(rows: Sequence[tuple[str, PerfReport]], fh: TextIO) -> None:
    """One row per (label, report), e.g. ``[("Train", r1), ("Test", r2)]``."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["Performance"] + [label for label, _ in REPORT_COLUMNS])
    for label, rep in rows:
        w.writerow([label] + [format_cell(getattr(rep, attr)) for _, attr in REPORT_COLUMNS])


def _ratio(num: float, den: float) -> Optional[float]:
    return num / den if den else None


def full_report(
    trades: Sequence[Trade],
    curve: EquityCurve,
    commission_per_side: float = 0.0,
) -> PerfReport:
    """Trade and equity statistics; trades must be the ones ``curve`` was
    built from."""
    ordered = sorted(trades, key=lambda t: t.entry_index)
    pnls = [t.pnl_currency for t in ordered]
    wins = [p for p in pnls if p > 0]
    losses = [p for p in pnls if p < 0]
    n = len(pnls)
    n_bars = len(curve.equity)
    capital = curve.initial_capital

    gross_profit = math.fsum(wins)
    gross_loss = math.fsum(losses)
    net = gross_profit + gross_loss
    mdd = max_drawdown(curve) if n_bars else 0.0

    rep = PerfReport(
        net_profit=net,
        gross_profit=gross_profit,
        gross_loss=gross_loss,
        n_trades=n,
        n_contracts=n,
        total_net_profit_pct=100.0 * net / capital,
        trades_per_day=n / n_bars if n_bars else 0.0,
        max_drawdown=mdd,
        commission_total=2.0 * commission_per_side * n,
        n_winners=len(wins),
        n_losers=len(losses),
        max_consec_winners=_max_run([p > 0 for p in pnls]),
        max_consec_losers=_max_run([p < 0 for p in pnls]),
        time_to_recover_days=time_to_recover_days(curve.dates, curve.equity),
    )
    if n:
        rep.avg_trade = net / n
        rep.percent_profitable = len(wins) / n
        rep.avg_time_in_market_days = sum((t.exit_date - t.entry_date).days for t in ordered) / n
        rep.avg_bars_in_trade = sum(t.bars_held for t in ordered) / n
    if wins:
        rep.avg_winner = gross_profit / len(wins)
        rep.largest_winner = max(wins)
    if losses:
        rep.avg_loser = gross_loss / len(losses)
        rep.largest_loser = min(losses)
        rep.profit_factor = gross_profit / abs(gross_loss)
    if rep.avg_winner is not None and rep.avg_loser is not None:
        rep.avg_win_over_avg_loss = rep.avg_winner / abs(rep.avg_loser)
    if mdd < 0:
        rep.recovery_factor = net / abs(mdd)

    if n_bars >= 2:
        days = (curve.dates[-1] - curve.dates[0]).days
        growth = 1.0 + net / capital
        if days > 0 and growth > 0:
            rep.ann_net_profit_pct = 100.0 * (growth ** (365.0 / days) - 1.0)
        rep.sharpe = sharpe(curve.daily_pnl)
        if np.all(curve.equity > 0):
            r = daily_returns(curve)
            rep.vol_ann_pct = annualized_vol_pct(r, PERIODS_PER_YEAR)
            rep.daily_sharpe = sharpe(r)
            rep.daily_sortino = sortino(r)
            rep.monthly_vol_ann_pct = annualized_vol_pct(monthly_returns(curve), 12)
    return rep


def segment_trades(
    bars: BarSeries,
    spec: InstrumentSpec,
    params: StrategyParams,
    warmup: Optional[BarSeries] = None,
) -> list[Trade]:
    """Trades on ``bars``. Signals are computed over ``warmup + bars`` so
    indicators and the filter start the segment with history; trades only
    open and close within ``bars``."""
    if warmup is None or len(warmup) == 0:
        return simulate(bars, spec, params, signals_for(bars, spec, params))
    context = concat(warmup, bars)
    signals = signals_for(context, spec, params)[len(warmup):]
    return simulate(bars, spec, params, signals)


def backtest(
    bars: BarSeries,
    spec: InstrumentSpec,
    params: StrategyParams,
    initial_capital: float = INITIAL_CAPITAL,
    warmup: Optional[BarSeries] = None,
) -> tuple[list[Trade], EquityCurve, PerfReport]:
    trades = segment_trades(bars, spec, params, warmup)
    curve = equity_curve(bars, trades, spec, initial_capital)
    return trades, curve, full_report(trades, curve, spec.commission)


def objective_sharpe(
    bars: BarSeries,
    spec: InstrumentSpec,
    params: StrategyParams,
    initial_capital: float = INITIAL_CAPITAL,
) -> float:
    """Annualized Sharpe of daily P&L, or :data:`SENTINEL` with fewer than
    two trades or a zero-variance P&L."""
    trades = simulate(bars, spec, params, signals_for(bars, spec, params))
    if len(trades) < 2:
        return SENTINEL
    curve = equity_curve(bars, trades, spec, initial_capital)
    value = sharpe(curve.daily_pnl)
    return SENTINEL if value is None else value
