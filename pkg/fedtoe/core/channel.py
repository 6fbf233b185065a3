# fedtoe/core/channel.py
"""
Uplink channel model: path loss with log-normal shadowing over FDMA slices.

Besides capacity and the closed-form outage probability this module holds
the family of functions the allocator works with. theta folds the outage
target, antenna constant and path loss into one effective gain, so that
rate_cap(W) is the largest rate meeting the outage target and
quant_level_for_bandwidth(W) the bits per parameter that fit in tau_max.
bandwidth_for_level inverts the latter.
"""

import logging
import math
from typing import Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.special import erfc, erfcinv

from fedtoe.core.errors import InfeasibleAllocationError, LinkPreconditionError, ParameterError
from fedtoe.schemas.channel import ChannelParams, LinkBudget, OutageResult

logger = logging.getLogger(__name__)

LN2 = math.log(2.0)


def db(x):
    return 10.0 * np.log10(x)


def q_function(x):
    """Gaussian tail probability Q(x)"""
    return 0.5 * erfc(np.asarray(x, dtype=float) / math.sqrt(2.0))


def q_inverse(p: float) -> float:
    """x with Q(x) = p, polished by Brent's method around the erfcinv estimate"""
    if not 0.0 < p < 1.0:
        raise ParameterError(f"Q inverse needs p in (0, 1), got {p}")
    guess = math.sqrt(2.0) * float(erfcinv(2.0 * p))
    lo, hi = guess - 1.0, guess + 1.0
    # Q is decreasing, so Q(lo) - p > 0 > Q(hi) - p brackets the root
    while q_function(lo) < p:
        lo -= 1.0
    while q_function(hi) > p:
        hi += 1.0
    return float(brentq(lambda x: float(q_function(x)) - p, lo, hi, xtol=1e-15, rtol=1e-15))


def capacity(w, p, gain, n0):
    w = np.asarray(w, dtype=float)
    if np.any(w <= 0):
        raise ParameterError("bandwidth must be positive")
    return w * np.log1p(np.asarray(p) * np.asarray(gain) / (w * n0)) / LN2


def required_margin_db(d, p, w, r, params: ChannelParams):
    """rho: how many dB the median received SNR falls short of supporting rate r"""
    d, p, w, r = (np.asarray(x, dtype=float) for x in (d, p, w, r))
    with np.errstate(over="ignore"):
        required_power = np.expm1(r / w * LN2) * w * params.n0
    return db(required_power) - db(p) - params.k_db + params.path_loss_exponent * db(d)


def outage_probability(d, p, w, r, params: ChannelParams):
    """Vectorized closed-form outage probability"""
    rho = required_margin_db(d, p, w, r, params)
    if params.sigma_db == 0.0:
        return np.where(rho > 0, 1.0, 0.0)
    # 1 - Q(x) = Q(-x) keeps precision for small outage
    return q_function(-rho / params.sigma_db)


def outage_prob(link: LinkBudget, params: ChannelParams) -> OutageResult:
    rho = float(required_margin_db(link.d, link.p, link.w, link.r, params))
    if not math.isfinite(rho):
        raise LinkPreconditionError(f"rate {link.r} over {link.w} Hz is not representable")
    q = float(outage_probability(link.d, link.p, link.w, link.r, params))
    return OutageResult(rho=rho, q=q)


def channel_gain_db(d, params: ChannelParams, shadowing_db=0.0):
    return params.k_db - params.path_loss_exponent * db(d) + shadowing_db


def sample_outages(
    link: LinkBudget, params: ChannelParams, rng: np.random.Generator, size: int | None = None
):
    """Direct simulation: draw shadowing, compare the capacity it yields with the rate"""
    psi = rng.normal(0.0, params.sigma_db, size=size)
    gain = 10.0 ** (channel_gain_db(link.d, params, psi) / 10.0)
    return capacity(link.w, link.p, gain, params.n0) <= link.r


def sample_outage(link: LinkBudget, params: ChannelParams, rng: np.random.Generator) -> bool:
    return bool(sample_outages(link, params, rng))


def theta(d, q_max: float, params: ChannelParams):
    if not 0.0 < q_max < 1.0:
        raise ParameterError(f"q_max must lie in (0, 1), got {q_max}")
    exponent = params.sigma_db * q_inverse(1.0 - q_max) + channel_gain_db(d, params)
    return 10.0 ** (exponent / 10.0)


def rate_cap(w, theta_i, p_max: float, n0: float):
    return capacity(w, p_max, theta_i, n0)


def quant_level_for_bandwidth(w, theta_i, p_max, n0, tau_max, m, mu):
    return (tau_max * rate_cap(w, theta_i, p_max, n0) - mu) / m


def quant_level_slope(w, theta_i, p_max, n0, tau_max, m):
    """d/dw of quant_level_for_bandwidth, positive for every w > 0"""
    w = np.asarray(w, dtype=float)
    snr = theta_i * p_max / (w * n0)
    return tau_max / m * (np.log1p(snr) - snr / (1.0 + snr)) / LN2


def max_quant_level(theta_i, p_max, n0, tau_max, m, mu) -> float:
    """Supremum of quant_level_for_bandwidth as bandwidth grows without bound"""
    return (tau_max * theta_i * p_max / (n0 * LN2) - mu) / m


def bandwidth_for_level(
    B: float,
    theta_i: float,
    p_max: float,
    n0: float,
    tau_max: float,
    m: int,
    mu: float,
    tol: float = 1e-10,
    w_ceiling: float = 2e13,
) -> float:
    """
    Smallest bandwidth whose quantization level reaches ``B``.

    The returned value never falls short of the level: after the bracketed
    root solve it is nudged upwards, by geometrically growing steps, until
    quant_level_for_bandwidth >= B and the payload fits in tau_max.
    """
    if B < 1:
        raise ParameterError(f"quantization level must be >= 1, got {B}")

    def shortfall(w: float) -> float:
        return float(quant_level_for_bandwidth(w, theta_i, p_max, n0, tau_max, m, mu)) - B

    def carries(w: float) -> bool:
        return shortfall(w) >= 0 and (m * B + mu) / float(rate_cap(w, theta_i, p_max, n0)) <= tau_max

    if B >= max_quant_level(theta_i, p_max, n0, tau_max, m, mu):
        raise InfeasibleAllocationError(
            f"level {B} unreachable at any bandwidth (supremum "
            f"{max_quant_level(theta_i, p_max, n0, tau_max, m, mu):.6g})"
        )

    hi = 1e3
    while shortfall(hi) < 0:
        hi *= 2.0
        if hi > w_ceiling:
            raise InfeasibleAllocationError(
                f"no bandwidth below the {w_ceiling:.3g} Hz ceiling reaches level {B}"
            )
    lo = hi / 2.0
    while lo > 1e-12 and shortfall(lo) >= 0:
        lo /= 2.0

    w = float(brentq(shortfall, lo, hi, xtol=1e-300, rtol=tol))
    eps = float(np.finfo(float).eps)
    for k in range(60):
        if carries(w):
            return w
        w *= 1.0 + 2.0**k * eps
    raise InfeasibleAllocationError(f"bandwidth for level {B} did not settle above {w:.12g} Hz")


def avg_uplink_delay(selected_links: Sequence[tuple[float, float, float]]) -> float:
    """Mean time until at least one of the links gets through, attempts being independent"""
    if not selected_links:
        raise ParameterError("no links selected")
    bits, rates, qs = (np.asarray(column, dtype=float) for column in zip(*selected_links))
    if np.any(qs >= 1.0) or np.any(qs < 0.0):
        raise LinkPreconditionError("every outage probability must lie in [0, 1)")
    return float(np.max(bits / rates) / (1.0 - np.prod(qs)))


def simulate_delay_episodes(
    selected_links: Sequence[tuple[float, float, float]],
    rng: np.random.Generator,
    episodes: int,
) -> np.ndarray:
    """Per-episode delays from attempt-by-attempt Bernoulli outage draws"""
    bits, rates, qs = (np.asarray(column, dtype=float) for column in zip(*selected_links))
    if np.any(qs >= 1.0):
        raise LinkPreconditionError("every outage probability must be below 1")
    slot = float(np.max(bits / rates))
    attempts = np.zeros(episodes, dtype=np.int64)
    pending = np.ones(episodes, dtype=bool)
    while pending.any():
        attempts[pending] += 1
        failed = rng.random((int(pending.sum()), qs.size)) < qs
        pending[pending] = failed.all(axis=1)
    return attempts * slot
