"""Flat parameter vectors searched by the optimizer and their JSON form.

``kf``: ``p1..p15, offset, stop, target`` (18 values).
``ma``: ``short, long, offset, stop, target`` (5 values).

Tick counts and SMA periods are searched as reals and rounded here.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from .errors import InvalidPeriod, SchemaMismatch
from .kalman import KalmanParams
from .strategy import StrategyParams

KF_NAMES = KalmanParams.names() + ["offset", "stop", "target"]
MA_NAMES = ["short", "long", "offset", "stop", "target"]


@dataclass(frozen=True)
class SearchSpace:
    kind: str
    names: list
    lower: np.ndarray
    upper: np.ndarray
    mean0: np.ndarray
    scales: np.ndarray  # initial search std per coordinate (sigma0 = 1)
    l1_mask: tuple

    @property
    def n(self) -> int:
        return len(self.names)

    def clamp(self, x) -> np.ndarray:
        return np.minimum(np.maximum(np.asarray(x, dtype=float), self.lower), self.upper)


def kf_space() -> SearchSpace:
    # local-level start: Phi = I, H = [1, 0], unit noises, no control term
    mean0 = [1, 0, 1, 1, 0, 1, 0, 1, 1, 1, 1, 0, 0, 0, 0, 2, 40, 80]
    scales = [0.5] * 15 + [2.0, 20.0, 30.0]
    return SearchSpace(
        kind="kf",
        names=list(KF_NAMES),
        lower=np.array([-200.0] * 15 + [0.0, 1.0, 1.0]),
        upper=np.array([200.0] * 15 + [50.0, 500.0, 500.0]),
        mean0=np.array(mean0, dtype=float),
        scales=np.array(scales),
        l1_mask=tuple(range(15)),
    )


def ma_space() -> SearchSpace:
    return SearchSpace(
        kind="ma",
        names=list(MA_NAMES),
        lower=np.array([1.0, 2.0, 0.0, 1.0, 1.0]),
        upper=np.array([50.0, 200.0, 50.0, 500.0, 500.0]),
        mean0=np.array([10.0, 30.0, 2.0, 40.0, 80.0]),
        scales=np.array([4.0, 10.0, 2.0, 20.0, 30.0]),
        l1_mask=(),
    )


def space_for(kind: str) -> SearchSpace:
    if kind == "kf":
        return kf_space()
    if kind == "ma":
        return ma_space()
    raise SchemaMismatch(f"unknown strategy kind {kind!r}")


def _ticks(v: float) -> int:
    return max(1, int(round(v)))


def decode(kind: str, x, k_ref=None) -> StrategyParams:
    """Map a search vector to strategy parameters. Raises ``InvalidPeriod``
    for SMA periods that do not satisfy short < long."""
    x = [float(v) for v in x]
    if kind == "kf":
        if len(x) != 18:
            raise SchemaMismatch(f"kf vector needs 18 values, got {len(x)}")
        return StrategyParams(
            offset_mu=max(0.0, x[15]),
            stop_ticks=_ticks(x[16]),
            target_ticks=_ticks(x[17]),
            kalman=KalmanParams.from_vector(x[:15]),
            k_ref=k_ref,
        )
    if kind == "ma":
        if len(x) != 5:
            raise SchemaMismatch(f"ma vector needs 5 values, got {len(x)}")
        return StrategyParams(
            offset_mu=max(0.0, x[2]),
            stop_ticks=_ticks(x[3]),
            target_ticks=_ticks(x[4]),
            short_period=max(1, int(round(x[0]))),
            long_period=max(1, int(round(x[1]))),
        )
    raise SchemaMismatch(f"unknown strategy kind {kind!r}")


def encode(params: StrategyParams) -> dict:
    if params.kind == "kf":
        values = list(params.kalman.to_vector()) + [
            params.offset_mu, params.stop_ticks, params.target_ticks
        ]
        names = KF_NAMES
    else:
        values = [
            params.short_period, params.long_period, params.offset_mu,
            params.stop_ticks, params.target_ticks,
        ]
        names = MA_NAMES
    out = {}
    for name, v in zip(names, values):
        out[name] = int(v) if name in ("stop", "target", "short", "long") else float(v)
    return out


def write_params(params: StrategyParams, path: Union[str, Path], extra: dict = None) -> None:
    doc = {"strategy": params.kind, "params": encode(params)}
    if params.k_ref is not None:
        doc["k_ref"] = params.k_ref
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def read_params(path: Union[str, Path], expected_kind: str = None) -> StrategyParams:
    """Load a parameters file written by :func:`write_params`.

    Raises ``SchemaMismatch`` when the strategy kind differs from
    ``expected_kind`` or the parameter names are not exactly the expected set.
    """
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise SchemaMismatch(f"cannot read parameters file {path}: {exc}") from exc
    if not isinstance(doc, dict) or "strategy" not in doc or "params" not in doc:
        raise SchemaMismatch(f"{path}: expected an object with 'strategy' and 'params'")
    kind = doc["strategy"]
    if expected_kind is not None and kind != expected_kind:
        raise SchemaMismatch(f"{path}: holds {kind!r} parameters, expected {expected_kind!r}")
    names = space_for(kind).names
    values = doc["params"]
    if not isinstance(values, dict) or set(values) != set(names):
        raise SchemaMismatch(f"{path}: {kind} parameters must be exactly {names}")
    try:
        x = [float(values[k]) for k in names]
    except (TypeError, ValueError) as exc:
        raise SchemaMismatch(f"{path}: non-numeric parameter: {exc}") from exc
    if not all(math.isfinite(v) for v in x):
        raise SchemaMismatch(f"{path}: parameters must be finite")
    try:
        return decode(kind, x, k_ref=doc.get("k_ref"))
    except (ValueError, InvalidPeriod) as exc:
        raise SchemaMismatch(f"{path}: {exc}") from exc
