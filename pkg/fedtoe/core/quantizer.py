# fedtoe/core/quantizer.py
"""
Stochastic uniform quantization of model updates.

Each parameter group shares a magnitude range [lower, upper] split into
2^B - 1 equal intervals. A magnitude between two knobs is rounded up with
probability proportional to its distance from the lower knob, which makes
the reconstruction unbiased. Signs travel as one extra bit per parameter.
"""

import logging
from typing import Sequence

import numpy as np

from fedtoe.core.errors import ParameterError, PartitionError, RangeViolationError
from fedtoe.schemas.quantization import GroupSpec, QeBound, QuantizedUpdate

logger = logging.getLogger(__name__)

# relative slack when checking that a magnitude lies inside its group range
_RANGE_SLACK = 1e-12
# positions this close to an integer knob are treated as exactly on it
_KNOB_SNAP = 1e-9
# knob positions stop being exact doubles beyond this many bits
MAX_QUANTIZER_BITS = 52


def _check_bits(B: int) -> int:
    if int(B) != B or B < 1:
        raise ParameterError(f"bits per parameter must be an integer >= 1, got {B}")
    return int(B)


def _check_quantizer_bits(B: int) -> int:
    B = _check_bits(B)
    if B > MAX_QUANTIZER_BITS:
        raise ParameterError(f"at most {MAX_QUANTIZER_BITS} bits per parameter can be quantized, got {B}")
    return B


def _knob_spacing(group: GroupSpec, B: int) -> float:
    return (group.upper - group.lower) / (2.0**B - 1.0)


def quantize_value(
    x: float, group: GroupSpec, B: int, rng: np.random.Generator
) -> tuple[int, int]:
    """Quantize a single scalar, returning ``(sign, level)``"""
    B = _check_quantizer_bits(B)
    magnitude = abs(float(x))
    slack = _RANGE_SLACK * max(group.upper, 1.0)
    if magnitude < group.lower - slack or magnitude > group.upper + slack:
        raise RangeViolationError(f"|x|={magnitude} outside [{group.lower}, {group.upper}]")

    sign = -1 if x < 0 else 1
    spacing = _knob_spacing(group, B)
    top = 2**B - 1
    if spacing == 0.0:
        return sign, 0

    position = min(max((magnitude - group.lower) / spacing, 0.0), float(top))
    nearest = round(position)
    if abs(position - nearest) < _KNOB_SNAP:
        return sign, int(nearest)

    below = int(np.floor(position))
    level = below + int(rng.random() < position - below)
    return sign, level


def dequantize(sign: int, level: int, group: GroupSpec, B: int) -> float:
    B = _check_bits(B)
    if not 0 <= level <= 2**B - 1:
        raise RangeViolationError(f"level {level} outside [0, {2**B - 1}]")
    if group.upper == group.lower:
        return sign * group.lower
    return sign * (group.lower + level * _knob_spacing(group, B))


def _expand(groups: Sequence[GroupSpec], m: int) -> tuple[np.ndarray, np.ndarray]:
    sizes = [group.size for group in groups]
    if sum(sizes) != m:
        raise PartitionError(f"group sizes sum to {sum(sizes)} but the update has {m} entries")
    lower = np.repeat([group.lower for group in groups], sizes).astype(float)
    upper = np.repeat([group.upper for group in groups], sizes).astype(float)
    return lower, upper


def quantize_update(
    v: np.ndarray,
    groups: Sequence[GroupSpec],
    B: int,
    rng: np.random.Generator,
    range_bits: int = 64,
) -> QuantizedUpdate:
    """
    Quantize every coordinate of ``v`` independently.

    One uniform draw is consumed per coordinate, degenerate groups included,
    so the stream position after the call depends only on ``len(v)``.
    """
    B = _check_quantizer_bits(B)
    v = np.asarray(v, dtype=float)
    m = v.shape[0]
    lower, upper = _expand(groups, m)
    magnitude = np.abs(v)

    slack = _RANGE_SLACK * np.maximum(upper, 1.0)
    outside = (magnitude < lower - slack) | (magnitude > upper + slack)
    if outside.any():
        j = int(np.argmax(outside))
        raise RangeViolationError(f"|v[{j}]|={magnitude[j]} outside [{lower[j]}, {upper[j]}]")

    draws = rng.random(m)
    top = 2**B - 1
    width = upper - lower
    with np.errstate(divide="ignore", invalid="ignore"):
        position = np.where(width > 0, (magnitude - lower) / width * top, 0.0)
    position = np.clip(position, 0.0, float(top))

    nearest = np.round(position)
    on_knob = np.abs(position - nearest) < _KNOB_SNAP
    below = np.floor(position)
    levels = np.where(on_knob, nearest, below + (draws < position - below)).astype(np.int64)

    n_groups = len(groups)
    return QuantizedUpdate(
        signs=v < 0,
        levels=levels,
        groups=list(groups),
        bits_per_param=B,
        range_bits=range_bits,
        total_bits=bit_cost_experiment(m, B, n_groups, n_groups, range_bits, range_bits),
    )


def dequantize_update(update: QuantizedUpdate) -> np.ndarray:
    lower, upper = _expand(update.groups, update.size)
    spacing = (upper - lower) / (2.0**update.bits_per_param - 1.0)
    magnitude = lower + update.levels * spacing
    return np.where(update.signs, -magnitude, magnitude)


def compute_ranges(v: np.ndarray, partition: Sequence[int]) -> list[GroupSpec]:
    """Per-group magnitude range of ``v`` split into consecutive blocks of the given sizes"""
    magnitude = np.abs(np.asarray(v, dtype=float))
    if any(size <= 0 for size in partition):
        raise PartitionError(f"empty group in partition {list(partition)}")
    if sum(partition) != magnitude.shape[0]:
        raise PartitionError(
            f"partition sizes sum to {sum(partition)} but the update has {magnitude.shape[0]} entries"
        )
    groups = []
    for block in np.split(magnitude, np.cumsum(partition)[:-1]):
        groups.append(GroupSpec(lower=float(block.min()), upper=float(block.max()), size=block.size))
    return groups


def partition_sizes(m: int, n_groups: int) -> list[int]:
    """Split ``m`` parameters into ``n_groups`` contiguous layer-like blocks"""
    if n_groups < 1 or n_groups > m:
        raise PartitionError(f"cannot split {m} parameters into {n_groups} groups")
    return [block.size for block in np.array_split(np.arange(m), n_groups)]


def quantize_vector(
    v: np.ndarray, n_groups: int, B: int, rng: np.random.Generator, range_bits: int = 64
) -> QuantizedUpdate:
    groups = compute_ranges(v, partition_sizes(len(v), n_groups))
    return quantize_update(v, groups, B, rng, range_bits)


def qe_bound(groups: Sequence[GroupSpec], B: int) -> QeBound:
    B = _check_bits(B)
    delta_sq = 0.25 * sum(group.size * (group.upper - group.lower) ** 2 for group in groups)
    return QeBound(
        delta=float(np.sqrt(delta_sq)),
        bound=delta_sq / (2.0**B - 1.0) ** 2,
        bits_per_param=B,
    )


def bit_cost(m: int, B: int, mu: int) -> int:
    """Payload of ``m`` parameters at ``B`` bits plus a flat overhead ``mu``"""
    if m < 1 or mu < 0:
        raise ParameterError(f"need m >= 1 and mu >= 0, got m={m}, mu={mu}")
    return int(m) * _check_bits(B) + int(mu)


def bit_cost_experiment(m: int, B: int, n_min: int, n_max: int, B_min: int, B_max: int) -> int:
    """Payload with one sign bit per parameter and a lower/upper limit per group"""
    if m < 1 or min(n_min, n_max, B_min, B_max) < 0:
        raise ParameterError("bit cost inputs must be positive")
    return int(m) * (1 + _check_bits(B)) + int(n_min) * int(B_min) + int(n_max) * int(B_max)
