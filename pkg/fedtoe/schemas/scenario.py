# fedtoe/schemas/scenario.py

import numpy as np
from pydantic import BaseModel, ConfigDict, Field


class ClientProfile(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    id: int
    d: float = Field(gt=0)
    n: int = Field(gt=0)
    p: float = Field(gt=0, le=1)
    # sample indices of the client's data; None for tasks without samples
    shard: np.ndarray | None = None


class HeterogeneityReport(BaseModel):
    """Squared gradient dissimilarity D_i^2 per client"""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    pointwise: np.ndarray
    ball_max: np.ndarray
    radius: float = 0.0
