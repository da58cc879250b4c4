"""Daily bar series: CSV input/output, validation, synthetic generators and
chronological train/test splitting."""

from __future__ import annotations

import csv
import datetime as dt
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping, Optional, Sequence, Union

import numpy as np

from .errors import ConfigError, EmptySegment, ParseError, ValidationError
from .kalman import KalmanParams

PathLike = Union[str, Path]
REQUIRED_COLUMNS = ("date", "open", "high", "low", "close")


@dataclass(frozen=True)
class Bar:
    date: dt.date
    open: float
    high: float
    low: float
    close: float

    def __post_init__(self):
        msg = check_bar(self.open, self.high, self.low, self.close)
        if msg:
            raise ValidationError(f"{self.date}: {msg}")


def check_bar(o: float, h: float, l: float, c: float) -> Optional[str]:
    """Return a description of the first OHLC violation, or ``None``."""
    for name, v in (("open", o), ("high", h), ("low", l), ("close", c)):
        if not math.isfinite(v):
            return f"{name} is not finite"
    if l > min(o, c):
        return f"low {l!r} above min(open, close)"
    if h < max(o, c):
        return f"high {h!r} below max(open, close)"
    return None


def _readonly(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class BarSeries:
    dates: tuple
    open: np.ndarray
    high: np.ndarray
    low: np.ndarray
    close: np.ndarray
    instrument: str = ""
    tick_size: Optional[float] = None

    def __post_init__(self):
        n = len(self.dates)
        for name in ("open", "high", "low", "close"):
            arr = _readonly(getattr(self, name))
            if len(arr) != n:
                raise ValidationError(f"{name} has {len(arr)} values for {n} dates")
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "dates", tuple(self.dates))
        for i in range(1, n):
            if not self.dates[i] > self.dates[i - 1]:
                raise ValidationError(f"dates not strictly increasing at index {i}")
        for i in range(n):
            msg = check_bar(self.open[i], self.high[i], self.low[i], self.close[i])
            if msg:
                raise ValidationError(f"bar {i} ({self.dates[i]}): {msg}")

    def __len__(self) -> int:
        return len(self.dates)

    def __eq__(self, other) -> bool:
        if not isinstance(other, BarSeries):
            return NotImplemented
        return (
            self.dates == other.dates
            and self.instrument == other.instrument
            and self.tick_size == other.tick_size
            and all(np.array_equal(getattr(self, k), getattr(other, k))
                    for k in ("open", "high", "low", "close"))
        )

    def __getitem__(self, i: int) -> Bar:
        return Bar(self.dates[i], float(self.open[i]), float(self.high[i]),
                   float(self.low[i]), float(self.close[i]))

    def __iter__(self) -> Iterator[Bar]:
        return (self[i] for i in range(len(self)))

    def take(self, mask_or_slice) -> "BarSeries":
        idx = np.arange(len(self))[mask_or_slice]
        return BarSeries(
            dates=tuple(self.dates[i] for i in idx),
            open=self.open[idx],
            high=self.high[idx],
            low=self.low[idx],
            close=self.close[idx],
            instrument=self.instrument,
            tick_size=self.tick_size,
        )

    @classmethod
    def from_bars(cls, bars: Sequence[Bar], instrument: str = "", tick_size=None) -> "BarSeries":
        return cls(
            dates=tuple(b.date for b in bars),
            open=[b.open for b in bars],
            high=[b.high for b in bars],
            low=[b.low for b in bars],
            close=[b.close for b in bars],
            instrument=instrument,
            tick_size=tick_size,
        )


def concat(first: BarSeries, second: BarSeries) -> BarSeries:
    """Join two series; ``second`` must start after ``first`` ends."""
    return BarSeries(
        dates=first.dates + second.dates,
        open=np.concatenate([first.open, second.open]),
        high=np.concatenate([first.high, second.high]),
        low=np.concatenate([first.low, second.low]),
        close=np.concatenate([first.close, second.close]),
        instrument=first.instrument,
        tick_size=first.tick_size,
    )


def _parse_float(text: str, line: int, column: str) -> float:
    try:
        value = float(text)
    except (TypeError, ValueError):
        raise ParseError(f"line {line}, column {column!r}: cannot parse {text!r}") from None
    if not math.isfinite(value):
        raise ValidationError(f"line {line}, column {column!r}: non-finite price {text!r}")
    return value


def load_csv(path: PathLike, instrument: str = "", tick_size: Optional[float] = None) -> BarSeries:
    """Read ``date,open,high,low,close[,volume]`` rows.

    Column names are matched case-insensitively, extra columns are ignored
    and rows are sorted by date. Errors name the offending file line.
    """
    path = Path(path)
    rows = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        cols = {name.strip().lower(): i for i, name in enumerate(header)}
        missing = [c for c in REQUIRED_COLUMNS if c not in cols]
        if missing:
            raise ParseError(f"{path}: missing columns {missing}")
        for record in reader:
            line = reader.line_num
            if not record or all(not f.strip() for f in record):
                continue
            if len(record) < len(header):
                raise ParseError(f"line {line}: expected {len(header)} fields, got {len(record)}")
            raw_date = record[cols["date"]].strip()
            try:
                date = dt.date.fromisoformat(raw_date)
            except ValueError:
                raise ParseError(f"line {line}, column 'date': cannot parse {raw_date!r}") from None
            o, h, l, c = (
                _parse_float(record[cols[k]].strip(), line, k)
                for k in ("open", "high", "low", "close")
            )
            msg = check_bar(o, h, l, c)
            if msg:
                raise ValidationError(f"line {line}: {msg}")
            rows.append((date, o, h, l, c, line))

    rows.sort(key=lambda r: r[0])
    for prev, cur in zip(rows, rows[1:]):
        if cur[0] == prev[0]:
            raise ValidationError(f"line {cur[5]}: duplicate date {cur[0]}")
    return BarSeries(
        dates=tuple(r[0] for r in rows),
        open=[r[1] for r in rows],
        high=[r[2] for r in rows],
        low=[r[3] for r in rows],
        close=[r[4] for r in rows],
        instrument=instrument,
        tick_size=tick_size,
    )


def save_csv(series: BarSeries, path: PathLike) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REQUIRED_COLUMNS)
        for i in range(len(series)):
            w.writerow([
                series.dates[i].isoformat(),
                repr(float(series.open[i])),
                repr(float(series.high[i])),
                repr(float(series.low[i])),
                repr(float(series.close[i])),
            ])


@dataclass(frozen=True)
class SplitSpec:
    """``train = [train_start, train_end)``, ``test = [train_end, test_end)``."""

    train_start: dt.date
    train_end: dt.date
    test_end: dt.date

    def __post_init__(self):
        if not self.train_start < self.train_end < self.test_end:
            raise ConfigError(
                f"split dates must satisfy train_start < train_end < test_end, got "
                f"{self.train_start}, {self.train_end}, {self.test_end}"
            )


def split(series: BarSeries, spec: SplitSpec) -> tuple[BarSeries, BarSeries]:
    dates = np.array(series.dates, dtype="datetime64[D]")
    start, mid, end = (np.datetime64(d, "D") for d in (spec.train_start, spec.train_end, spec.test_end))
    train_mask = (dates >= start) & (dates < mid)
    test_mask = (dates >= mid) & (dates < end)
    if not train_mask.any():
        raise EmptySegment(f"no bars in train segment [{spec.train_start}, {spec.train_end})")
    if not test_mask.any():
        raise EmptySegment(f"no bars in test segment [{spec.train_end}, {spec.test_end})")
    return series.take(train_mask), series.take(test_mask)


# --- synthetic series ----------------------------------------------------

SYNTH_DEFAULTS: dict[str, dict] = {
    "gbm": dict(n=252, s0=2400.0, drift=0.0003, vol=0.008),
    "trend_plus_noise": dict(n=252, s0=2400.0, slope=1.0, noise=8.0),
    "sine_plus_drift": dict(
        n=252, s0=2400.0, amplitude=60.0, period=40.0, phase=0.0, drift=0.5, noise=0.0,
        regime_at=None, amplitude2=None, period2=None, drift2=None,
    ),
    # level random walk plus a transitory AR(1) component, observed with noise
    "state_space": dict(
        n=252, s0=2400.0, p1=1.0, p2=0.0, p3=0.9, p4=1.0, p5=1.0, p6=5.0, p7=0.0, p8=8.0,
        p9=16.0, p10=0.0, p11=0.0, p12=0.0, p13=0.0, p14=0.0, p15=0.0,
    ),
}
COMMON_DEFAULTS = dict(start="2017-01-02", wick=2.0, gap=1.0, instrument="SYNTH", tick_size=0.25)


@dataclass(frozen=True)
class SynthSpec:
    kind: str
    params: Mapping = field(default_factory=dict)

    @classmethod
    def parse(cls, text: str) -> "SynthSpec":
        """Parse ``kind[:key=value,key=value...]``."""
        kind, _, rest = text.partition(":")
        params = {}
        for item in filter(None, (s.strip() for s in rest.split(","))):
            key, sep, value = item.partition("=")
            if not sep:
                raise ConfigError(f"bad synth parameter {item!r}, expected key=value")
            params[key.strip()] = _coerce(value.strip())
        return cls(kind.strip(), params)


def _coerce(value: str):
    if value.lower() in ("none", "null", ""):
        return None
    for conv in (int, float):
        try:
            return conv(value)
        except ValueError:
            pass
    return value


def business_days(start: dt.date, n: int) -> tuple:
    first = np.busday_offset(np.datetime64(start, "D"), 0, roll="forward")
    days = np.busday_offset(first, np.arange(n), roll="forward")
    return tuple(d.astype(dt.date) for d in days)


def sine_plus_drift_closes(
    n: int, s0: float, amplitude: float, period: float, phase: float, drift: float,
    regime_at: Optional[int] = None, amplitude2: Optional[float] = None,
    period2: Optional[float] = None, drift2: Optional[float] = None,
) -> np.ndarray:
    """Noise-free closes. After ``regime_at`` the cycle restarts with the
    second-regime amplitude, period and drift, continuous at the switch."""
    t = np.arange(n, dtype=float)
    base = s0 + drift * t + amplitude * np.sin(2 * np.pi * t / period + phase)
    if regime_at is None or regime_at >= n:
        return base
    k = int(regime_at)
    a2 = amplitude if amplitude2 is None else amplitude2
    p2 = period if period2 is None else period2
    d2 = drift if drift2 is None else drift2
    u = t[k:] - k
    level = s0 + drift * k + amplitude * np.sin(2 * np.pi * k / period + phase)
    base[k:] = level + d2 * u + a2 * np.sin(2 * np.pi * u / p2)
    return base


def state_space_closes(params: KalmanParams, n: int, s0: float,
                       rng: np.random.Generator) -> np.ndarray:
    """Sample observations from the Kalman model itself, starting from
    state ``(s0, 0)``. The control term uses the latest sampled close."""
    p = params
    chol = np.array([[p.p6, 0.0], [p.p7, p.p8]])
    obs_sd = math.sqrt(max(p.p9, 0.0))
    x = np.array([float(s0), 0.0])
    out = np.empty(n)
    for t in range(n):
        out[t] = p.p4 * x[0] + p.p5 * x[1] + obs_sd * rng.standard_normal()
        c = (p.p12 * (p.p13 - out[t]), p.p14 * (p.p15 - out[t]))
        w = chol @ rng.standard_normal(2)
        x = np.array([
            p.p1 * x[0] + p.p2 * x[1] + c[0] + w[0],
            p.p3 * x[1] + c[1] + w[1],
        ])
    return out


def synth_series(kind: str, params: Optional[Mapping] = None, seed: int = 0) -> BarSeries:
    """Deterministic synthetic daily bars.

    kinds:
        ``gbm``: geometric Brownian motion, per-bar ``drift`` and ``vol``.
        ``trend_plus_noise``: ``s0 + slope t`` plus iid Gaussian ``noise``.
        ``sine_plus_drift``: ``s0 + drift t + amplitude sin(2 pi t / period + phase)``
        plus iid ``noise``, with an optional regime switch at bar ``regime_at``.
        ``state_space``: observations sampled from the Kalman model with
        coefficients ``p1..p15`` (see :func:`state_space_closes`).

    Opens sit ``gap``-scaled Gaussian noise away from the previous close;
    highs and lows extend ``wick``-scaled half-normal amounts beyond the
    open/close range.
    """
    if kind not in SYNTH_DEFAULTS:
        raise ConfigError(f"unknown synth kind {kind!r}; choose from {sorted(SYNTH_DEFAULTS)}")
    p = {**SYNTH_DEFAULTS[kind], **COMMON_DEFAULTS}
    unknown = set(params or {}) - set(p)
    if unknown:
        raise ConfigError(f"unknown {kind} parameters: {sorted(unknown)}")
    p.update(params or {})
    n = int(p["n"])
    if n < 2:
        raise ConfigError("synthetic series needs n >= 2")
    if not p["s0"] > 0:
        raise ConfigError("s0 must be positive")
    rng = np.random.default_rng(seed)

    if kind == "gbm":
        shocks = rng.standard_normal(n - 1)
        log_steps = (p["drift"] - 0.5 * p["vol"] ** 2) + p["vol"] * shocks
        closes = p["s0"] * np.exp(np.concatenate([[0.0], np.cumsum(log_steps)]))
    elif kind == "trend_plus_noise":
        t = np.arange(n, dtype=float)
        closes = p["s0"] + p["slope"] * t + p["noise"] * rng.standard_normal(n)
    elif kind == "state_space":
        coeffs = KalmanParams.from_vector([p[f"p{i}"] for i in range(1, 16)])
        closes = state_space_closes(coeffs, n, p["s0"], rng)
        if not np.all(closes > 0):
            raise ConfigError("state_space parameters produced non-positive prices")
    else:
        closes = sine_plus_drift_closes(
            n, p["s0"], p["amplitude"], p["period"], p["phase"], p["drift"],
            p["regime_at"], p["amplitude2"], p["period2"], p["drift2"],
        )
        if p["noise"]:
            closes = closes + p["noise"] * rng.standard_normal(n)

    opens = np.empty(n)
    opens[0] = closes[0]
    opens[1:] = closes[:-1] + p["gap"] * rng.standard_normal(n - 1)
    hi_wick = np.abs(p["wick"] * rng.standard_normal(n))
    lo_wick = np.abs(p["wick"] * rng.standard_normal(n))
    highs = np.maximum(opens, closes) + hi_wick
    lows = np.minimum(opens, closes) - lo_wick
    start = dt.date.fromisoformat(str(p["start"]))
    return BarSeries(
        dates=business_days(start, n),
        open=opens,
        high=highs,
        low=lows,
        close=closes,
        instrument=str(p["instrument"]),
        tick_size=p["tick_size"],
    )
