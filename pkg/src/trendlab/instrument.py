"""Contract specifications and the preset file format."""

from __future__ import annotations

import json
import math
import sys
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Union

from .errors import ConfigError, InvalidSpec

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


@dataclass(frozen=True)
class InstrumentSpec:
    tick_size: float = 0.25
    tick_value: float = 12.5
    commission: float = 0.0  # per side, per contract
    currency: str = "EUR"

    def __post_init__(self):
        if not (math.isfinite(self.tick_size) and self.tick_size > 0):
            raise InvalidSpec(f"tick_size must be > 0, got {self.tick_size}")
        if not (math.isfinite(self.tick_value) and self.tick_value > 0):
            raise InvalidSpec(f"tick_value must be > 0, got {self.tick_value}")
        if not (math.isfinite(self.commission) and self.commission >= 0):
            raise InvalidSpec(f"commission must be >= 0, got {self.commission}")

    def to_dict(self) -> dict:
        return asdict(self)


# E-mini S&P 500 (CQG code EP)
PRESETS: dict[str, InstrumentSpec] = {
    "EP": InstrumentSpec(tick_size=0.25, tick_value=12.5, commission=0.0, currency="EUR"),
}


def load_instruments(path: Union[str, Path]) -> dict[str, InstrumentSpec]:
    """Read presets from a JSON or TOML file.

    The file maps preset names to tables with ``tick_size``, ``tick_value``
    and optionally ``commission`` and ``currency``::

        [ES]
        tick_size = 0.25
        tick_value = 12.5
        commission = 2.0
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read instrument file {path}: {exc}") from exc
    try:
        if path.suffix.lower() == ".toml":
            raw = tomllib.loads(text)
        else:
            raw = json.loads(text)
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse instrument file {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("instrument file must hold a table of presets")
    out = {}
    for name, table in raw.items():
        if not isinstance(table, dict):
            raise ConfigError(f"preset {name!r} must be a table")
        try:
            out[name] = InstrumentSpec(**table)
        except TypeError as exc:
            raise ConfigError(f"preset {name!r}: {exc}") from exc
    return out


def resolve_instrument(name: str, path: Union[str, Path, None] = None) -> InstrumentSpec:
    presets = dict(PRESETS)
    if path is not None:
        presets.update(load_instruments(path))
    try:
        return presets[name]
    except KeyError:
        raise ConfigError(f"unknown instrument preset {name!r}") from None
