# fedtoe/schemas/simulation.py

import numpy as np
from pydantic import BaseModel, ConfigDict, Field


class RoundRecord(BaseModel):
    """
    Observables of one communication round.

    grad_norm_sq is taken at the model the round starts from; loss and
    test_metric at the model it ends with. delay is the airtime of every
    attempt including retransmissions; bits sums the payloads put on air.
    """

    round: int = Field(ge=1)
    scheme: str
    loss: float
    grad_norm_sq: float = Field(ge=0)
    test_metric: float | None = None
    selected: list[int]
    active: int = Field(ge=0)
    attempts: int = Field(ge=1)
    retransmissions: int = Field(ge=0)
    delay: float = Field(ge=0)
    bits: int = Field(ge=0)
    qe_bound_mean: float | None = None


class SimulationResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    scheme: str
    records: list[RoundRecord]
    final_loss: float
    final_grad_norm_sq: float
    final_w: np.ndarray
    # global models w_0, ..., w_M when trajectory recording is on
    trajectory: list[np.ndarray] | None = None

    @property
    def total_delay(self) -> float:
        return float(sum(record.delay for record in self.records))

    @property
    def total_attempts(self) -> int:
        return sum(record.attempts for record in self.records)

    @property
    def total_bits(self) -> int:
        return sum(record.bits for record in self.records)

    @property
    def grad_norms(self) -> np.ndarray:
        return np.array([record.grad_norm_sq for record in self.records])

    @property
    def losses(self) -> np.ndarray:
        return np.array([record.loss for record in self.records])
