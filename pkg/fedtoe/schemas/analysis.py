# fedtoe/schemas/analysis.py

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class ParticipationStats(BaseModel):
    """Effective appearance weights of clients once sampling and outage are combined"""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    beta_bar: np.ndarray
    alpha_bar: np.ndarray
    k_bar: float = Field(gt=0)
    method: str = "enumeration"
    # standard errors, Monte Carlo estimates only
    beta_se: np.ndarray | None = None
    alpha_se: np.ndarray | None = None
    k_bar_se: float | None = None
    trials: int | None = None

    @field_validator("beta_bar", "alpha_bar", mode="before")
    @classmethod
    def _as_array(cls, value):
        return np.asarray(value, dtype=float)

    @model_validator(mode="after")
    def _sum_identities(self) -> "ParticipationStats":
        if np.any(self.beta_bar < 0) or np.any(self.alpha_bar < 0):
            raise ValueError("participation weights must be nonnegative")
        if abs(self.beta_bar.sum() - 1.0) > 1e-9:
            raise ValueError(f"beta_bar sums to {self.beta_bar.sum()}, not 1")
        if abs(self.alpha_bar.sum() * self.k_bar - 1.0) > 1e-9:
            raise ValueError(f"alpha_bar sums to {self.alpha_bar.sum()}, not 1/k_bar = {1 / self.k_bar}")
        return self


class BoundInputs(BaseModel):
    """Problem constants the convergence bound is evaluated on"""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    L: float = Field(gt=0)
    sigma_sq: float = Field(ge=0)
    b: int = Field(ge=1)
    D_sq: np.ndarray
    J_sq: np.ndarray
    p: np.ndarray
    q: np.ndarray
    K: int = Field(ge=1)
    E: int = Field(ge=1)
    M: int = Field(ge=1)
    F0_minus_Flow: float = Field(ge=0)
    # when given, must match the step size the bound prescribes
    gamma: float | None = None
    stats: ParticipationStats | None = None

    @field_validator("D_sq", "J_sq", "p", "q", mode="before")
    @classmethod
    def _as_array(cls, value):
        return np.asarray(value, dtype=float)

    @model_validator(mode="after")
    def _shapes(self) -> "BoundInputs":
        N = self.p.shape[0]
        if self.q.shape != (N,) or self.D_sq.shape != (N,):
            raise ValueError(f"p, q and D_sq must all have length {N}")
        if self.J_sq.shape != (self.M, N):
            raise ValueError(f"J_sq must have shape ({self.M}, {N}), got {self.J_sq.shape}")
        if abs(self.p.sum() - 1.0) > 1e-9 or np.any(self.p <= 0):
            raise ValueError("p must be a positive probability vector")
        if np.any(self.q < 0) or np.any(self.q >= 1):
            raise ValueError("outage probabilities must lie in [0, 1)")
        if np.any(self.D_sq < 0) or np.any(self.J_sq < 0):
            raise ValueError("D_sq and J_sq must be nonnegative")
        return self

    @property
    def T(self) -> int:
        return self.M * self.E


class BoundBreakdown(BaseModel):
    name: str
    total: float
    terms: dict[str, float]
    k_bar: float
    T: int
    notes: list[str] = Field(default_factory=list)
