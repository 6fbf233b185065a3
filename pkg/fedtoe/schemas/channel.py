# fedtoe/schemas/channel.py

import math

from pydantic import BaseModel, ConfigDict, Field, model_validator

from fedtoe.core.units import Meters, NoisePsd, Hertz, Watts


class ChannelParams(BaseModel):
    """Path loss with log-normal shadowing, all gains in power dB"""

    model_config = ConfigDict(frozen=True)

    k_db: float = -31.54
    path_loss_exponent: float = Field(default=3.0, gt=0)
    sigma_db: float = Field(default=3.65, ge=0)
    n0: NoisePsd = Field(default="-174 dBm/Hz", gt=0, validate_default=True)


class LinkBudget(BaseModel):
    model_config = ConfigDict(frozen=True)

    d: Meters
    p: Watts
    w: Hertz
    r: float

    @model_validator(mode="after")
    def _outage_below_one(self) -> "LinkBudget":
        # outage stays below one only for a finite rate over positive distance, power and bandwidth
        for name in ("d", "p", "w", "r"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive and finite for outage < 1, got {value}")
        return self


class OutageResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    rho: float
    q: float = Field(ge=0, le=1)
