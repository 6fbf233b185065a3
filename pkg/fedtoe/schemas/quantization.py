# fedtoe/schemas/quantization.py

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator


class GroupSpec(BaseModel):
    """Magnitude range shared by a contiguous block of parameters"""

    model_config = ConfigDict(frozen=True)

    lower: float = Field(ge=0)
    upper: float
    size: int = Field(gt=0)

    @model_validator(mode="after")
    def _ordered(self) -> "GroupSpec":
        if self.upper < self.lower:
            raise ValueError(f"upper {self.upper} below lower {self.lower}")
        return self


class QuantizedUpdate(BaseModel):
    """
    One quantized model update as it goes on air.

    signs holds True for negative coordinates; zero is sent as positive.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    signs: np.ndarray
    levels: np.ndarray
    groups: list[GroupSpec]
    bits_per_param: int = Field(ge=1)
    range_bits: int = Field(default=64, ge=1)
    total_bits: int = Field(gt=0)

    @model_validator(mode="after")
    def _consistent(self) -> "QuantizedUpdate":
        from fedtoe.core.quantizer import bit_cost_experiment

        m = sum(group.size for group in self.groups)
        if self.levels.shape != (m,) or self.signs.shape != (m,):
            raise ValueError(f"groups cover {m} parameters but payload holds {self.levels.shape}")
        if m and (self.levels.min() < 0 or self.levels.max() > 2**self.bits_per_param - 1):
            raise ValueError(f"level outside [0, {2**self.bits_per_param - 1}]")
        n_groups = len(self.groups)
        expected = bit_cost_experiment(
            m, self.bits_per_param, n_groups, n_groups, self.range_bits, self.range_bits
        )
        if self.total_bits != expected:
            raise ValueError(f"total_bits {self.total_bits} != {expected}")
        return self

    @property
    def size(self) -> int:
        return int(self.levels.shape[0])


class QeBound(BaseModel):
    model_config = ConfigDict(frozen=True)

    delta: float = Field(ge=0)
    bound: float = Field(ge=0)
    bits_per_param: int = Field(ge=1)

    @model_validator(mode="after")
    def _bound_matches_delta(self) -> "QeBound":
        expected = self.delta**2 / (2.0**self.bits_per_param - 1.0) ** 2
        if not np.isclose(self.bound, expected, rtol=1e-12, atol=0.0):
            raise ValueError(f"bound {self.bound} != delta^2/(2^B-1)^2 = {expected}")
        return self
