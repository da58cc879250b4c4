"""Hand-built data shared by the unit and acceptance tests."""

import datetime as dt

from trendlab.data import BarSeries, business_days
from trendlab.instrument import InstrumentSpec
from trendlab.strategy import StrategyParams

# tick 0.25, 12.5 per tick, 1.5 per side -> 3.0 per round trip
LEDGER_SPEC = InstrumentSpec(tick_size=0.25, tick_value=12.5, commission=1.5)
LEDGER_PARAMS = StrategyParams(offset_mu=0.0, stop_ticks=8, target_ticks=4,
                               short_period=1, long_period=2)

#        open    high   low    close
_ROWS = [
    (100.0, 100.5, 99.5, 100.0),   # 0 signal long
    (100.1, 100.6, 99.6, 100.4),   # 1 long fills at 100.00 (snapped), no level touched
    (100.5, 101.2, 100.2, 101.0),  # 2 target 101.00 touched; signal short
    (101.0, 103.5, 99.5, 102.0),   # 3 short at 101.00, bar spans stop 103 and target 100 -> stop
    (102.0, 102.5, 101.5, 102.2),  # 4 long at 102.00, nothing touched
    (99.0, 99.6, 98.8, 99.2),      # 5 opens below stop 100.00 -> gap stop at 99.00; signal short
    (99.0, 101.5, 98.6, 100.1),    # 6 short at 99.00, high reaches stop 101.00; signal short
    (100.0, 100.2, 99.5, 99.8),    # 7 short at 100.00, nothing touched
    (98.5, 98.9, 98.1, 98.6),      # 8 opens below target 99.00 -> gap target at 98.50; signal long
    (98.6, 99.0, 98.2, 98.9),      # 9 long at 98.50, last bar -> closed at 99.00 (snapped close)
]
LEDGER_SIGNALS = [1, 0, -1, 1, 0, -1, -1, 0, 1, 0]

# direction, entry idx, exit idx, entry, exit, reason, ticks, gap
LEDGER_EXPECTED = [
    ("long", 1, 2, 100.0, 101.0, "target", 4, False),
    ("short", 3, 3, 101.0, 103.0, "stop", -8, False),
    ("long", 4, 5, 102.0, 99.0, "stop", -12, True),
    ("short", 6, 6, 99.0, 101.0, "stop", -8, False),
    ("short", 7, 8, 100.0, 98.5, "target", 6, True),
    ("long", 9, 9, 98.5, 99.0, "end_of_data", 2, False),
]


def ledger_bars() -> BarSeries:
    dates = business_days(dt.date(2017, 1, 2), len(_ROWS))
    cols = list(zip(*_ROWS))
    return BarSeries(dates=dates, open=cols[0], high=cols[1], low=cols[2], close=cols[3],
                     instrument="TEST", tick_size=0.25)


def expected_ledger_pnl():
    """Currency P&L per trade: signed ticks x 12.5 minus 3.0 round-trip commission."""
    return [ticks * 12.5 - 3.0 for *_, ticks, _gap in LEDGER_EXPECTED]


# 20-trade ledger for the report oracle: 60 business days from 2017-01-02
# (January to March), trades held 1 to 3 bars, commission 1.5 per side.
REPORT_SPEC = InstrumentSpec(tick_size=0.25, tick_value=12.5, commission=1.5)
REPORT_TICKS = [8, -4, 12, -6, -6, 20, 3, -10, 5, 5, 5, -2, -8, 16, 0, 7, -12, 9, 1, -3]
REPORT_HOLD = [1, 2, 3, 1, 1, 2, 3, 2, 1, 1, 2, 3, 1, 2, 1, 3, 2, 1, 1, 2]


def report_fixture():
    """(bars, trades) with trade k entering on bar 3k and holding REPORT_HOLD[k] bars."""
    from trendlab.strategy import Trade

    n = 60
    dates = business_days(dt.date(2017, 1, 2), n)
    # closes on the tick grid, gently oscillating
    closes = [2400.0 + 0.25 * ((7 * i) % 23 - 11) for i in range(n)]
    opens = [closes[0]] + closes[:-1]
    highs = [max(o, c) + 1.0 for o, c in zip(opens, closes)]
    lows = [min(o, c) - 1.0 for o, c in zip(opens, closes)]
    bars = BarSeries(dates, opens, highs, lows, closes, instrument="TEST", tick_size=0.25)
    trades = []
    for k, (ticks, hold) in enumerate(zip(REPORT_TICKS, REPORT_HOLD)):
        sign = 1 if k % 3 != 1 else -1
        i, j = 3 * k, 3 * k + hold - 1
        entry = opens[i]
        exit_ = entry + sign * ticks * 0.25
        trades.append(Trade(
            direction="long" if sign > 0 else "short",
            entry_date=dates[i], exit_date=dates[j],
            entry_price=entry, exit_price=exit_,
            exit_reason="target" if ticks > 0 else "stop",
            pnl_currency=ticks * 12.5 - 3.0,
            entry_index=i, exit_index=j,
        ))
    return bars, trades
