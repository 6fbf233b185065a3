# fedtoe/core/units.py
"""
Unit-suffixed config values ("50 ms", "20 MHz", "-174 dBm/Hz") parsed to SI.

The annotated types below are used directly as pydantic field types, so a
config file may carry either a bare SI number or a string with a unit.
"""

import math
import re
from typing import Annotated, Any, Callable

from pydantic import BeforeValidator

_QUANTITY = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*([A-Za-z/]*)\s*$")

_LINEAR_SCALES: dict[str, dict[str, float]] = {
    "time": {"": 1.0, "s": 1.0, "ms": 1e-3, "us": 1e-6},
    "frequency": {"": 1.0, "hz": 1.0, "khz": 1e3, "mhz": 1e6, "ghz": 1e9},
    "length": {"": 1.0, "m": 1.0, "km": 1e3},
    "power": {"": 1.0, "w": 1.0, "mw": 1e-3},
    "psd": {"": 1.0, "w/hz": 1.0, "mw/hz": 1e-3},
}

# logarithmic units: offset in dB relative to one watt
_LOG_OFFSETS: dict[str, dict[str, float]] = {
    "power": {"dbm": -30.0, "dbw": 0.0},
    "psd": {"dbm/hz": -30.0, "dbw/hz": 0.0},
}


def from_db(value_db: float) -> float:
    return 10.0 ** (value_db / 10.0)


def parse_quantity(value: Any, kind: str) -> float:
    """Convert ``value`` of the given physical ``kind`` to an SI float"""
    if isinstance(value, bool):
        raise ValueError(f"expected a {kind} quantity, got a boolean")
    if isinstance(value, (int, float)):
        number = float(value)
    else:
        match = _QUANTITY.match(str(value))
        if not match:
            raise ValueError(f"cannot parse {kind} quantity {value!r}")
        number, unit = float(match.group(1)), match.group(2).lower()
        if unit in _LOG_OFFSETS.get(kind, {}):
            number = from_db(number + _LOG_OFFSETS[kind][unit])
        elif unit in _LINEAR_SCALES[kind]:
            number *= _LINEAR_SCALES[kind][unit]
        else:
            known = sorted(set(_LINEAR_SCALES[kind]) | set(_LOG_OFFSETS.get(kind, {})) - {""})
            raise ValueError(f"unknown {kind} unit {match.group(2)!r}; expected one of {known}")
    if not math.isfinite(number):
        raise ValueError(f"{kind} quantity must be finite, got {value!r}")
    return number


def _parser(kind: str) -> Callable[[Any], float]:
    def parse(value: Any) -> Any:
        if value is None:
            return value
        return parse_quantity(value, kind)

    return parse


Seconds = Annotated[float, BeforeValidator(_parser("time"))]
Hertz = Annotated[float, BeforeValidator(_parser("frequency"))]
Meters = Annotated[float, BeforeValidator(_parser("length"))]
Watts = Annotated[float, BeforeValidator(_parser("power"))]
NoisePsd = Annotated[float, BeforeValidator(_parser("psd"))]
