# fedtoe/schemas/allocation.py

from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from fedtoe.schemas.channel import ChannelParams


class AllocClient(BaseModel):
    model_config = ConfigDict(frozen=True)

    id: int
    d: float = Field(gt=0)
    # p_i * sum_r delta_ir^2 offline, delta_ir^2 / K online
    weight: float = Field(default=1.0, ge=0)


class AllocProblem(BaseModel):
    model_config = ConfigDict(frozen=True)

    clients: list[AllocClient] = Field(min_length=1)
    w_total: float = Field(gt=0)
    p_max: float = Field(gt=0)
    tau_max: float = Field(gt=0)
    q_max: float = Field(gt=0, le=0.5)
    m: int = Field(gt=0)
    mu: int = Field(ge=0)
    channel: ChannelParams
    mode: Literal["offline", "online"] = "offline"
    max_iters: int = Field(default=500, ge=1)
    tol: float = Field(default=1e-10, gt=0)
    ceiling_factor: float = Field(default=1e6, gt=1)

    @property
    def size(self) -> int:
        return len(self.clients)

    @property
    def distances(self) -> np.ndarray:
        return np.array([client.d for client in self.clients])

    @property
    def weights(self) -> np.ndarray:
        return np.array([client.weight for client in self.clients])


class ClientLink(BaseModel):
    """Uplink assignment of one transmitting slot"""

    model_config = ConfigDict(frozen=True)

    id: int
    d: float
    w: float
    p: float
    # None means the update is sent unquantized
    b: int | None = Field(default=None, ge=1)
    r: float
    q: float = Field(ge=0, lt=1)
    payload_bits: int = Field(ge=0)

    @property
    def airtime(self) -> float:
        return self.payload_bits / self.r if self.r > 0 else 0.0


class UplinkPlan(BaseModel):
    """Per-client links a scheme transmits with"""

    scheme: str
    links: list[ClientLink]
    objective: float | None = None

    def link_for(self, client_id: int) -> ClientLink:
        for link in self.links:
            if link.id == client_id:
                return link
        raise KeyError(f"client {client_id} has no link in plan {self.scheme}")

    @property
    def bandwidth_used(self) -> float:
        return float(sum(link.w for link in self.links))


class AllocationSolution(UplinkPlan):
    """Rounded allocation together with the relaxed optimum it came from"""

    scheme: str = "fedtoe"
    objective: float = Field(ge=0)
    iterations: int = Field(ge=0)
    w_total: float
    q_max: float
    tau_max: float
    relaxed_w: list[float]
    relaxed_b: list[float]
    relaxed_objective: float
    relaxed_residual: float
    converged: bool
    # best rounded objective after each solver iteration
    objective_history: list[float] = Field(default_factory=list)
    relaxed_history: list[float] = Field(default_factory=list)

    @model_validator(mode="after")
    def _link_invariants(self) -> "AllocationSolution":
        used = self.bandwidth_used
        if used > self.w_total * (1.0 + 1e-12):
            raise ValueError(f"bandwidth {used} exceeds budget {self.w_total}")
        powers = {link.p for link in self.links}
        if len(powers) > 1:
            raise ValueError("every client must transmit at full power")
        for link in self.links:
            if link.b is None:
                raise ValueError(f"client {link.id} has no quantization level")
            if abs(link.q - self.q_max) > 1e-8:
                raise ValueError(f"client {link.id} outage {link.q} != {self.q_max}")
            if link.airtime > self.tau_max * (1.0 + 1e-12):
                raise ValueError(f"client {link.id} needs {link.airtime} s > {self.tau_max} s")
        return self
