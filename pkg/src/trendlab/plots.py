"""Static figures written next to the CSV reports."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from .cmaes import History
from .data import BarSeries
from .metrics import SENTINEL, EquityCurve
from .strategy import Trade

# fixed metadata keeps the PNG bytes reproducible
_PNG_META = {"Software": None}


def _save(fig: Figure, path: Path) -> None:
    FigureCanvasAgg(fig)
    fig.savefig(path, dpi=100, metadata=_PNG_META)


def save_backtest_figure(
    bars: BarSeries,
    trades: Sequence[Trade],
    curve: EquityCurve,
    path: Path,
    title: str = "",
) -> None:
    """Closes with trade entries/exits on top, equity below."""
    x = np.arange(len(bars))
    fig = Figure(figsize=(10, 6))
    ax_p, ax_e = fig.subplots(2, 1, sharex=True, gridspec_kw={"height_ratios": [3, 2]})

    ax_p.plot(x, bars.close, color="0.3", lw=1.0, label="close")
    longs = [t for t in trades if t.direction == "long"]
    shorts = [t for t in trades if t.direction == "short"]
    if longs:
        ax_p.scatter([t.entry_index for t in longs], [t.entry_price for t in longs],
                     marker="^", color="tab:green", zorder=3, label="long entry")
    if shorts:
        ax_p.scatter([t.entry_index for t in shorts], [t.entry_price for t in shorts],
                     marker="v", color="tab:red", zorder=3, label="short entry")
    if trades:
        ax_p.scatter([t.exit_index for t in trades], [t.exit_price for t in trades],
                     marker="x", color="k", zorder=3, label="exit")
    ax_p.set_ylabel("price")
    ax_p.legend(loc="best", fontsize=8)
    if title:
        ax_p.set_title(title)

    ax_e.plot(x, curve.equity, color="tab:blue", lw=1.2)
    ax_e.axhline(curve.initial_capital, color="0.6", lw=0.8, ls="--")
    ax_e.set_ylabel("equity")
    ticks = np.linspace(0, len(bars) - 1, num=min(6, len(bars))).astype(int)
    ax_e.set_xticks(ticks)
    ax_e.set_xticklabels([bars.dates[i].isoformat() for i in ticks], fontsize=8)
    fig.tight_layout()
    _save(fig, path)


def save_history_figure(history: History, path: Path) -> None:
    gens = [r.generation for r in history.records]
    fig = Figure(figsize=(8, 4))
    ax_f, ax_s = fig.subplots(1, 2)
    # sentinel scores of unusable candidates would flatten the axis
    def shown(v):
        return v if v > SENTINEL / 2 else np.nan

    ax_f.plot(gens, [shown(r.best) for r in history.records], label="best so far")
    ax_f.plot(gens, [shown(r.median) for r in history.records], label="median", alpha=0.7)
    ax_f.set_xlabel("generation")
    ax_f.set_ylabel("fitness")
    ax_f.legend(fontsize=8)
    ax_s.semilogy(gens, [r.sigma for r in history.records])
    ax_s.set_xlabel("generation")
    ax_s.set_ylabel("step size")
    fig.tight_layout()
    _save(fig, path)
