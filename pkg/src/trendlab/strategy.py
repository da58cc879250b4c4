"""Trend-following strategies and the single-position backtest engine.

Two signal sources feed the same engine:

* Kalman trend following: go long when the one-step forecast exceeds the
  last close by at least ``offset_mu`` ticks, short when it falls at least
  ``offset_mu`` ticks below.
* SMA crossover: long when the short average is above the long average by
  more than the offset, short when below by more than the offset.

A signal seen on bar ``t``'s close is filled at bar ``t + 1``'s open. Each
trade carries a profit target and a stop loss a fixed number of ticks away
from the fill, and is otherwise held until the last bar.
"""

from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass
from enum import IntEnum
from typing import Optional, Sequence

import numpy as np

from .data import BarSeries
from .errors import EmptySeries, InvalidPeriod
from .instrument import PRESETS, InstrumentSpec
from .kalman import KalmanParams, filter_and_forecast

__all__ = [
    "InstrumentSpec",
    "PRESETS",
    "Signal",
    "StrategyParams",
    "Trade",
    "sma",
    "kf_signal",
    "ma_signal",
    "kf_signals",
    "ma_signals",
    "signals_for",
    "simulate",
    "run_strategy",
]


class Signal(IntEnum):
    SHORT = -1
    FLAT = 0
    LONG = 1


@dataclass(frozen=True)
class StrategyParams:
    offset_mu: float
    stop_ticks: int
    target_ticks: int
    kalman: Optional[KalmanParams] = None
    short_period: Optional[int] = None
    long_period: Optional[int] = None
    k_ref: Optional[float] = None

    def __post_init__(self):
        if not (math.isfinite(self.offset_mu) and self.offset_mu >= 0):
            raise ValueError(f"offset_mu must be >= 0, got {self.offset_mu}")
        if int(self.stop_ticks) < 1 or int(self.target_ticks) < 1:
            raise ValueError("stop_ticks and target_ticks must be >= 1")
        if self.kalman is None:
            if self.short_period is None or self.long_period is None:
                raise ValueError("give either Kalman params or both SMA periods")
            if self.short_period < 1 or not self.short_period < self.long_period:
                raise InvalidPeriod(
                    f"need 1 <= short < long, got {self.short_period}, {self.long_period}"
                )

    @property
    def kind(self) -> str:
        return "kf" if self.kalman is not None else "ma"


@dataclass(frozen=True)
class Trade:
    direction: str  # "long" | "short"
    entry_date: dt.date
    exit_date: dt.date
    entry_price: float
    exit_price: float
    exit_reason: str  # "target" | "stop" | "end_of_data"
    pnl_currency: float
    entry_index: int
    exit_index: int
    gap_fill: bool = False

    @property
    def sign(self) -> int:
        return 1 if self.direction == "long" else -1

    @property
    def bars_held(self) -> int:
        return self.exit_index - self.entry_index + 1


def sma(closes: Sequence[float], d: int) -> np.ndarray:
    """Simple moving average; NaN where fewer than ``d`` closes are available."""
    if d < 1:
        raise InvalidPeriod(f"period must be >= 1, got {d}")
    x = np.asarray(closes, dtype=float)
    out = np.full(len(x), np.nan)
    if len(x) >= d:
        out[d - 1:] = np.lib.stride_tricks.sliding_window_view(x, d).mean(axis=1)
    return out


def kf_signal(forecast: float, prev_close: float, offset_mu_ticks: float, tick_size: float) -> Signal:
    """Forecast versus last close with a symmetric band of ``offset_mu_ticks``.

    A forecast that is not a positive finite number cannot be a price and
    gives no signal.
    """
    if not (forecast > 0 and math.isfinite(forecast)):
        return Signal.FLAT
    band = offset_mu_ticks * tick_size
    if forecast >= prev_close + band:
        return Signal.LONG
    if forecast <= prev_close - band:
        return Signal.SHORT
    return Signal.FLAT


def ma_signal(sma_short: float, sma_long: float, offset: float) -> Signal:
    if sma_short > sma_long + offset:
        return Signal.LONG
    if sma_short < sma_long - offset:
        return Signal.SHORT
    return Signal.FLAT


def kf_signals(bars: BarSeries, spec: InstrumentSpec, params: StrategyParams) -> np.ndarray:
    """Signal per bar from the Kalman forecast of the next close.

    The last bar has no next bar to fill on and is always flat, as are
    non-positive or non-finite forecasts (see :func:`kf_signal`).
    """
    closes = bars.close
    out = np.zeros(len(closes), dtype=np.int8)
    if len(closes) < 2:
        return out
    fc = filter_and_forecast(params.kalman, closes, params.k_ref).z_hat
    prev = closes[:-1]
    band = params.offset_mu * spec.tick_size
    with np.errstate(invalid="ignore"):
        valid = np.isfinite(fc) & (fc > 0)
        raw = np.where(fc >= prev + band, 1, np.where(fc <= prev - band, -1, 0))
        out[:-1] = np.where(valid, raw, 0)
    return out


def ma_signals(bars: BarSeries, spec: InstrumentSpec, params: StrategyParams) -> np.ndarray:
    """SMA crossover signals; ``offset_mu`` is in ticks. Flat until both
    averages exist."""
    s = sma(bars.close, params.short_period)
    l = sma(bars.close, params.long_period)
    off = params.offset_mu * spec.tick_size
    with np.errstate(invalid="ignore"):
        out = np.where(s > l + off, 1, np.where(s < l - off, -1, 0)).astype(np.int8)
    return out


def signals_for(bars: BarSeries, spec: InstrumentSpec, params: StrategyParams) -> np.ndarray:
    if params.kind == "kf":
        return kf_signals(bars, spec, params)
    return ma_signals(bars, spec, params)


def _snap(price: float, tick: float) -> float:
    return round(price / tick) * tick


def simulate(
    bars: BarSeries,
    spec: InstrumentSpec,
    params: StrategyParams,
    signals: Sequence[int],
) -> list[Trade]:
    """Run the single-position engine over ``bars``.

    Args:
        bars: daily bars, oldest first.
        spec: contract specification; fills are snapped to its tick grid.
        params: exit levels in ticks (the signal parameters are not used here).
        signals: one entry per bar, +1 long / -1 short / 0 flat, computed
            from information up to that bar's close.

    Rules: one contract at a time. When flat, a non-flat signal on bar t
    enters at bar t+1's open. Exits are checked from the entry bar on: an
    open beyond a level (after the entry bar) fills at the open; otherwise a
    bar whose range touches the stop exits at the stop, even if it also
    touches the target. A position still open after the last bar is closed
    at the last close.
    """
    n = len(bars)
    if n < 2:
        raise EmptySeries("need at least 2 bars to simulate")
    if len(signals) != n:
        raise ValueError(f"{len(signals)} signals for {n} bars")

    tick = spec.tick_size
    stop_dist = int(params.stop_ticks) * tick
    target_dist = int(params.target_ticks) * tick
    opens = bars.open.tolist()
    highs = bars.high.tolist()
    lows = bars.low.tolist()
    closes = bars.close.tolist()
    sig = [int(s) for s in signals]
    dates = bars.dates

    trades: list[Trade] = []
    pending = 0
    pos = 0
    entry = stop_lvl = target_lvl = 0.0
    entry_idx = 0

    def close_trade(t: int, price: float, reason: str, gap: bool = False) -> None:
        ticks = round((price - entry) / tick)
        pnl = pos * ticks * spec.tick_value - 2 * spec.commission
        trades.append(Trade(
            direction="long" if pos > 0 else "short",
            entry_date=dates[entry_idx],
            exit_date=dates[t],
            entry_price=entry,
            exit_price=price,
            exit_reason=reason,
            pnl_currency=pnl,
            entry_index=entry_idx,
            exit_index=t,
            gap_fill=gap,
        ))

    for t in range(n):
        if pending and not pos:
            pos = pending
            pending = 0
            entry = _snap(opens[t], tick)
            entry_idx = t
            if pos > 0:
                stop_lvl, target_lvl = entry - stop_dist, entry + target_dist
            else:
                stop_lvl, target_lvl = entry + stop_dist, entry - target_dist

        if pos:
            o, h, l = opens[t], highs[t], lows[t]
            exit_px = reason = None
            gap = False
            if pos > 0:
                if t > entry_idx and o <= stop_lvl:
                    exit_px, reason, gap = _snap(o, tick), "stop", True
                elif t > entry_idx and o >= target_lvl:
                    exit_px, reason, gap = _snap(o, tick), "target", True
                elif l <= stop_lvl:
                    exit_px, reason = stop_lvl, "stop"
                elif h >= target_lvl:
                    exit_px, reason = target_lvl, "target"
            else:
                if t > entry_idx and o >= stop_lvl:
                    exit_px, reason, gap = _snap(o, tick), "stop", True
                elif t > entry_idx and o <= target_lvl:
                    exit_px, reason, gap = _snap(o, tick), "target", True
                elif h >= stop_lvl:
                    exit_px, reason = stop_lvl, "stop"
                elif l <= target_lvl:
                    exit_px, reason = target_lvl, "target"
            if reason is not None:
                close_trade(t, exit_px, reason, gap)
                pos = 0
            elif t == n - 1:
                close_trade(t, _snap(closes[t], tick), "end_of_data")
                pos = 0

        if not pos and t < n - 1 and sig[t]:
            pending = 1 if sig[t] > 0 else -1

    return trades


def run_strategy(bars: BarSeries, spec: InstrumentSpec, params: StrategyParams) -> list[Trade]:
    return simulate(bars, spec, params, signals_for(bars, spec, params))
