# fedtoe/engine/rounds.py
"""
Building blocks of one communication round: client sampling, local SGD,
uplink attempts with retransmission and the two aggregation rules.
"""

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from fedtoe.core import channel
from fedtoe.core.errors import AggregationError, ParameterError, RetransmissionCapError
from fedtoe.core.quantizer import compute_ranges, partition_sizes
from fedtoe.core.random_streams import substream
from fedtoe.core.scenario import LearningTask, local_stochastic_gradient
from fedtoe.schemas.allocation import ClientLink
from fedtoe.schemas.channel import ChannelParams
from fedtoe.schemas.quantization import GroupSpec

logger = logging.getLogger(__name__)


def sample_clients(p: Sequence[float], K: int, rng: np.random.Generator) -> np.ndarray:
    """K draws with replacement through the inverse CDF of ``p``; duplicates are kept"""
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size == 0 or np.any(p < 0) or not np.isclose(p.sum(), 1.0, atol=1e-9):
        raise ParameterError("client probabilities must be nonnegative and sum to 1")
    if K < 1:
        raise ParameterError(f"K must be >= 1, got {K}")
    cdf = np.cumsum(p)
    draws = np.searchsorted(cdf, rng.random(K), side="right")
    return np.minimum(draws, p.size - 1)


def local_train(
    task: LearningTask,
    client: int,
    w_global: np.ndarray,
    E: int,
    gamma: float,
    b: int,
    rng: np.random.Generator,
    range_groups: int = 1,
) -> tuple[np.ndarray, list[GroupSpec]]:
    """
    E local SGD steps from ``w_global``.

    Returns the accumulated gradient (w_global - w_E) / gamma together with
    the magnitude ranges of its ``range_groups`` contiguous blocks.
    """
    if E < 1:
        raise ParameterError(f"E must be >= 1, got {E}")
    w = np.array(w_global, dtype=float, copy=True)
    delta = np.zeros_like(w)
    for _ in range(E):
        grad = local_stochastic_gradient(task, client, w, b, rng)
        delta += grad
        w -= gamma * grad
    groups = compute_ranges(delta, partition_sizes(delta.size, min(range_groups, delta.size)))
    return delta, groups


def transmit_attempt(
    links: Sequence[ClientLink],
    params: ChannelParams,
    rng: np.random.Generator,
    mode: str = "bernoulli",
) -> np.ndarray:
    """Success indicators of one simultaneous upload by every slot"""
    if mode == "bernoulli":
        q = np.array([link.q for link in links])
        return rng.random(q.size) >= q
    if mode == "shadowing":
        d = np.array([link.d for link in links])
        psi = rng.normal(0.0, params.sigma_db, size=d.size)
        gain = 10.0 ** (channel.channel_gain_db(d, params, psi) / 10.0)
        rates = np.array([link.r for link in links])
        achievable = channel.capacity(
            np.array([link.w for link in links]), np.array([link.p for link in links]), gain, params.n0
        )
        return achievable > rates
    raise ParameterError(f"unknown channel mode {mode!r}")


def slot_airtime(links: Sequence[ClientLink]) -> float:
    """Duration of one attempt: every slot transmits in parallel"""
    return max((link.airtime for link in links), default=0.0)


@dataclass
class TransmitOutcome:
    indicators: np.ndarray
    history: list[np.ndarray] = field(default_factory=list)
    retransmissions: int = 0
    delay: float = 0.0

    @property
    def attempts(self) -> int:
        return len(self.history)


def transmit_step(
    links: Sequence[ClientLink],
    params: ChannelParams,
    seed: int,
    round_index: int,
    attempt: int,
    mode: str = "bernoulli",
    retransmit_cap: int = 10_000,
) -> np.ndarray:
    """
    Success indicators of attempt number ``attempt`` (counted from 1) in a round.

    The draws come from the channel substream keyed by (round, attempt), so
    an attempt's outcome does not depend on what ran before it. Raises once
    the cap is spent without a single upload getting through.
    """
    indicators = transmit_attempt(links, params, substream(seed, round_index, attempt - 1), mode)
    if not indicators.any() and attempt >= retransmit_cap:
        raise RetransmissionCapError(retransmit_cap, round_index)
    return indicators


def transmit_round(
    links: Sequence[ClientLink],
    params: ChannelParams,
    seed: int,
    round_index: int = 0,
    retransmit_cap: int = 10_000,
    mode: str = "bernoulli",
) -> TransmitOutcome:
    """
    Repeat the upload of the same payloads until at least one gets through.

    Every attempt costs the airtime of the slowest slot.
    """
    if not links:
        raise ParameterError("no selected client to transmit")
    airtime = slot_airtime(links)
    outcome = TransmitOutcome(indicators=np.zeros(len(links), dtype=bool))
    while True:
        attempt = outcome.attempts + 1
        indicators = transmit_step(links, params, seed, round_index, attempt, mode, retransmit_cap)
        outcome.history.append(indicators)
        outcome.delay += airtime
        if indicators.any():
            outcome.indicators = indicators
            outcome.retransmissions = outcome.attempts - 1
            return outcome


def aggregate_fedtoe(
    w_prev: np.ndarray, gamma: float, updates: np.ndarray, indicators: Sequence[bool]
) -> np.ndarray:
    """Step along the mean of the received updates; each draw counts once"""
    mask = np.asarray(indicators, dtype=bool)
    received = int(mask.sum())
    if received == 0:
        raise AggregationError("no update was received this round")
    return w_prev - gamma * (updates[mask].sum(axis=0) / received)


def aggregate_baseline2(
    w_prev: np.ndarray,
    gamma: float,
    K: int,
    updates: np.ndarray,
    indicators: Sequence[bool],
    p: Sequence[float],
    p_hat: Sequence[float],
    q: Sequence[float],
) -> np.ndarray:
    """Inverse-propensity step (gamma / K) sum_i p_i / (p_hat_i (1 - q_i)) 1_i update_i"""
    p, p_hat, q = (np.asarray(x, dtype=float) for x in (p, p_hat, q))
    if np.any(p_hat <= 0):
        raise AggregationError("selection probabilities must be positive")
    if np.any(q >= 1):
        raise AggregationError("outage probability 1 cannot be compensated")
    scale = p / (p_hat * (1.0 - q)) * np.asarray(indicators, dtype=float)
    return w_prev - gamma / K * (scale @ updates)
