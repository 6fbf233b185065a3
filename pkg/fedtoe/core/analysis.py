# fedtoe/core/analysis.py
"""
Participation statistics and convergence-bound evaluation.

A round samples K clients with replacement from p and each upload
independently survives with probability 1 - q_i; rounds where nothing
survives are retransmitted, so statistics are conditioned on at least one
survivor. beta_bar is the expected share 1_i / sum(1) of a client in the
aggregate, alpha_bar the expected 1_i / sum(1)^2, and k_bar = 1/sum(alpha_bar)
the effective number of clients.
"""

import itertools
import logging

import numpy as np
from scipy.special import comb

from fedtoe.core.errors import BoundPreconditionError, EnumerationLimitError, ParameterError
from fedtoe.schemas.analysis import BoundBreakdown, BoundInputs, ParticipationStats

logger = logging.getLogger(__name__)

ENUMERATION_LIMIT = 10**7
# entries per Monte Carlo chunk, trials times clients
_MC_CHUNK_ENTRIES = 2_000_000


def _check_distribution(p: np.ndarray, q: np.ndarray) -> None:
    if p.ndim != 1 or q.shape != p.shape:
        raise ParameterError("p and q must be vectors of equal length")
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise ParameterError(f"p must be a probability vector, sums to {p.sum()}")
    if np.any(q < 0) or np.any(q >= 1):
        raise ParameterError("outage probabilities must lie in [0, 1)")


def is_uniform(q) -> bool:
    q = np.asarray(q, dtype=float)
    return bool(np.all(q == q[0]))


def enumerate_stats(p, q, K: int) -> ParticipationStats:
    """Exact statistics summed over every ordered selection and survivor pattern"""
    p, q = np.asarray(p, dtype=float), np.asarray(q, dtype=float)
    _check_distribution(p, q)
    N = p.size
    if N**K * 2**K > ENUMERATION_LIMIT:
        raise EnumerationLimitError(
            f"enumeration over N^K * 2^K = {N**K * 2**K} cases exceeds {ENUMERATION_LIMIT}"
        )

    selections = np.array(list(itertools.product(range(N), repeat=K)), dtype=np.int64)
    selection_prob = np.prod(p[selections], axis=1)
    q_selected = q[selections]
    survives_any = 1.0 - np.prod(q_selected, axis=1)

    beta, alpha = np.zeros(N), np.zeros(N)
    patterns = (np.arange(1, 2**K)[:, None] >> np.arange(K)) & 1
    for pattern in patterns.astype(bool):
        v = int(pattern.sum())
        weight = selection_prob * np.prod(np.where(pattern, 1.0 - q_selected, q_selected), axis=1)
        weight = weight / survives_any
        for slot in np.nonzero(pattern)[0]:
            share = np.bincount(selections[:, slot], weights=weight, minlength=N)
            beta += share / v
            alpha += share / v**2

    return ParticipationStats(beta_bar=beta, alpha_bar=alpha, k_bar=1.0 / alpha.sum(), method="enumeration")


def mc_stats(p, q, K: int, trials: int, rng: np.random.Generator) -> ParticipationStats:
    """Monte Carlo estimates of the participation statistics, with standard errors"""
    p, q = np.asarray(p, dtype=float), np.asarray(q, dtype=float)
    _check_distribution(p, q)
    if trials < 10**4:
        raise ParameterError(f"need at least 10^4 trials, got {trials}")
    N = p.size

    # running sums of per-trial contributions and their squares
    beta_sum, beta_sq = np.zeros(N), np.zeros(N)
    alpha_sum, alpha_sq = np.zeros(N), np.zeros(N)
    inv_sum, inv_sq = 0.0, 0.0
    kept = 0
    cumulative = np.cumsum(p)
    cumulative[-1] = 1.0

    remaining = trials
    while remaining > 0:
        n = min(max(_MC_CHUNK_ENTRIES // max(N, K), 1000), remaining)
        remaining -= n
        selected = np.searchsorted(cumulative, rng.random((n, K)), side="right")
        survived = rng.random((n, K)) >= q[selected]
        survivors = survived.sum(axis=1)
        keep = survivors > 0
        selected, survived, survivors = selected[keep], survived[keep], survivors[keep]
        kept += int(keep.sum())

        rows = np.repeat(np.arange(selected.shape[0]), K)
        counts = np.zeros((selected.shape[0], N))
        np.add.at(counts, (rows, selected.ravel()), survived.ravel().astype(float))
        beta_part = counts / survivors[:, None]
        alpha_part = counts / survivors[:, None] ** 2
        beta_sum += beta_part.sum(axis=0)
        beta_sq += (beta_part**2).sum(axis=0)
        alpha_sum += alpha_part.sum(axis=0)
        alpha_sq += (alpha_part**2).sum(axis=0)
        inverse = 1.0 / survivors
        inv_sum += inverse.sum()
        inv_sq += (inverse**2).sum()

    def _mean_se(total, squares):
        mean = total / kept
        variance = np.maximum(squares / kept - mean**2, 0.0)
        return mean, np.sqrt(variance / kept)

    beta, beta_se = _mean_se(beta_sum, beta_sq)
    alpha, alpha_se = _mean_se(alpha_sum, alpha_sq)
    inv_mean, inv_se = _mean_se(inv_sum, inv_sq)
    return ParticipationStats(
        beta_bar=beta,
        alpha_bar=alpha,
        k_bar=1.0 / inv_mean,
        method="monte-carlo",
        beta_se=beta_se,
        alpha_se=alpha_se,
        k_bar_se=float(inv_se / inv_mean**2),
        trials=kept,
    )


def kbar_uniform(q: float, K: int) -> float:
    """Effective number of clients when every client has outage probability q"""
    if not 0.0 <= q < 1.0:
        raise ParameterError(f"q must lie in [0, 1), got {q}")
    v = np.arange(1, K + 1)
    expected_inverse = np.sum(comb(K, v) * (1.0 - q) ** v * q ** (K - v) / v)
    return float((1.0 - q**K) / expected_inverse)


def uniform_stats(p, q: float, K: int) -> ParticipationStats:
    p = np.asarray(p, dtype=float)
    k_bar = kbar_uniform(q, K)
    return ParticipationStats(beta_bar=p.copy(), alpha_bar=p / k_bar, k_bar=k_bar, method="closed-form")


def participation_stats(p, q, K: int, rng: np.random.Generator | None = None, trials: int = 10**6) -> ParticipationStats:
    """Closed form under uniform outage, exact enumeration when small, Monte Carlo otherwise"""
    p, q = np.asarray(p, dtype=float), np.asarray(q, dtype=float)
    if is_uniform(q):
        return uniform_stats(p, float(q[0]), K)
    try:
        return enumerate_stats(p, q, K)
    except EnumerationLimitError:
        logger.info(f"Enumeration too large for N={p.size}, K={K}; estimating with {trials} Monte Carlo trials")
        return mc_stats(p, q, K, trials, rng or np.random.default_rng(0))


def chi_square_divergence(beta_bar, p) -> float:
    beta_bar, p = np.asarray(beta_bar, dtype=float), np.asarray(p, dtype=float)
    if np.any(p <= 0):
        raise ParameterError("chi-square divergence needs every p_i > 0")
    return float(np.sum((beta_bar - p) ** 2 / p))


def schedule_hyperparams(T: int, k_bar: float, L: float) -> tuple[float, int]:
    """Step size and largest local-step count under which the bound holds"""
    if T < max(k_bar**3, 1.0 / k_bar):
        raise BoundPreconditionError(
            f"T = {T} is below max(k_bar^3, 1/k_bar) = {max(k_bar**3, 1.0 / k_bar):.6g}"
        )
    gamma = np.sqrt(k_bar) / (8.0 * L * np.sqrt(T))
    E_max = int(np.floor(T**0.25 / k_bar**0.75 * (1.0 + 1e-12)))
    return float(gamma), max(E_max, 1)


def _check_schedule(inputs: BoundInputs, k_bar: float) -> None:
    T = inputs.T
    floor_T = max(k_bar**3, 1.0 / k_bar)
    if T < floor_T:
        raise BoundPreconditionError(f"T = M*E = {T} is below max(k_bar^3, 1/k_bar) = {floor_T:.6g}")
    cap = T**0.25 / k_bar**0.75
    if inputs.E > cap * (1.0 + 1e-12):
        raise BoundPreconditionError(f"E = {inputs.E} exceeds T^(1/4)/k_bar^(3/4) = {cap:.6g}")
    if inputs.gamma is not None:
        expected = np.sqrt(k_bar) / (8.0 * inputs.L * np.sqrt(T))
        if abs(inputs.gamma - expected) > 1e-9 * expected:
            raise BoundPreconditionError(f"gamma = {inputs.gamma} but the bound requires {expected:.6g}")


def _resolve_stats(inputs: BoundInputs) -> ParticipationStats:
    if inputs.stats is not None:
        return inputs.stats
    return participation_stats(inputs.p, inputs.q, inputs.K)


def _leading_terms(inputs: BoundInputs, k_bar: float) -> dict[str, float]:
    TK = inputs.T * k_bar
    return {
        "initial_gap": 496.0 * inputs.L * inputs.F0_minus_Flow / (11.0 * TK**0.5),
        "sgd_variance": (39.0 / (88.0 * TK**0.5) + 1.0 / (88.0 * TK**0.75)) * inputs.sigma_sq / inputs.b,
    }


def _outage_spread_factor(K: int, q_max: float) -> float:
    v = np.arange(2, K + 1)
    if v.size == 0:
        return 0.0
    return float(np.sum(q_max ** (K - v) * comb(K, v) / (1.0 - q_max**K)))


def theorem1_rhs(inputs: BoundInputs) -> BoundBreakdown:
    """
    Right-hand side of the fixed-outage convergence bound, term by term.

    Terms: initial_gap and sgd_variance, then (a) quantization error,
    (b) partial participation, (c) data variance, (d) outage-skewed
    participation and (e) outage spread, the last two vanishing under
    uniform outage.
    """
    stats = _resolve_stats(inputs)
    k_bar = stats.k_bar
    _check_schedule(inputs, k_bar)
    T, TK = inputs.T, inputs.T * k_bar
    p, q, D_sq = inputs.p, inputs.q, inputs.D_sq

    uniform = is_uniform(q)
    q_max = float(q.max())
    q_mean = float(q[0]) if uniform else float(p @ q)
    # uniform outage leaves participation proportional to p
    chi_sq = 0.0 if uniform else chi_square_divergence(stats.beta_bar, p)

    terms = _leading_terms(inputs, k_bar)
    terms["a"] = 31.0 * k_bar**0.5 / (88.0 * T**1.5) * float(np.sum(inputs.J_sq @ stats.alpha_bar))
    terms["b"] = 31.0 / (22.0 * TK**0.25) * float(stats.alpha_bar @ D_sq)
    terms["c"] = (4.0 / (11.0 * TK**0.5) + 1.0 / (22.0 * TK**0.75)) * float(stats.beta_bar @ D_sq)
    terms["d"] = 62.0 / 11.0 * chi_sq * float(p @ D_sq)
    terms["e"] = (
        31.0 / (22.0 * TK**0.25)
        * _outage_spread_factor(inputs.K, q_max)
        * float(np.sum(p * (q - q_mean) ** 2 * D_sq))
    )
    return BoundBreakdown(
        name="theorem1",
        total=float(sum(terms.values())),
        terms=terms,
        k_bar=k_bar,
        T=T,
        notes=["M counts committed rounds; retransmission attempts are not counted"],
    )


def corollary1_rhs(inputs: BoundInputs, selected_qe: np.ndarray | None = None) -> BoundBreakdown:
    """
    Uniform-outage bound.

    ``selected_qe`` optionally replaces sum_i p_i J_ir^2 in round r by the
    selected-set average E_S[(1/K) sum_{i in S} J_ir^2], for levels that
    change per round.
    """
    q = inputs.q
    if not is_uniform(q):
        raise BoundPreconditionError("the uniform-outage bound needs equal outage probabilities")
    k_bar = inputs.stats.k_bar if inputs.stats is not None else kbar_uniform(float(q[0]), inputs.K)
    _check_schedule(inputs, k_bar)
    T, TK = inputs.T, inputs.T * k_bar
    p = inputs.p

    if selected_qe is None:
        round_qe = inputs.J_sq @ p
    else:
        round_qe = np.asarray(selected_qe, dtype=float)
        if round_qe.shape != (inputs.M,):
            raise ParameterError(f"selected_qe must have length M = {inputs.M}")

    terms = _leading_terms(inputs, k_bar)
    terms["quantization"] = 31.0 / (88.0 * T**1.5 * k_bar**0.5) * float(round_qe.sum())
    terms["heterogeneity"] = (
        4.0 / (11.0 * TK**0.5) + 1.0 / (22.0 * TK**0.75) + 31.0 / (22.0 * T**0.25 * k_bar**1.25)
    ) * float(p @ inputs.D_sq)
    return BoundBreakdown(
        name="corollary2" if selected_qe is not None else "corollary1",
        total=float(sum(terms.values())),
        terms=terms,
        k_bar=k_bar,
        T=T,
    )


def theorem2_rhs(
    inputs: BoundInputs,
    round_alpha_qe: np.ndarray,
    round_outage_spread: np.ndarray,
    q_max: float,
) -> BoundBreakdown:
    """
    Bound for outage and levels that change every round.

    Args:
        round_alpha_qe: per round, E_S[sum_{i in S} alpha_i^r J_ir^2]
        round_outage_spread: per round, E_S[(1/K) sum_{i in S} (q_i^r - q_mean)^2 D_i^2]
        q_max: largest outage probability over all rounds and selections
    """
    stats = _resolve_stats(inputs)
    k_bar = stats.k_bar
    _check_schedule(inputs, k_bar)
    T, TK = inputs.T, inputs.T * k_bar
    p, D_sq = inputs.p, inputs.D_sq
    round_alpha_qe = np.asarray(round_alpha_qe, dtype=float)
    round_outage_spread = np.asarray(round_outage_spread, dtype=float)
    if round_alpha_qe.shape != (inputs.M,) or round_outage_spread.shape != (inputs.M,):
        raise ParameterError(f"per-round inputs must have length M = {inputs.M}")

    terms = _leading_terms(inputs, k_bar)
    terms["a"] = 31.0 * k_bar**0.5 / (88.0 * T**1.5) * float(round_alpha_qe.sum())
    terms["b"] = 31.0 / (22.0 * TK**0.25) * float(stats.alpha_bar @ D_sq)
    terms["c"] = (4.0 / (11.0 * TK**0.5) + 1.0 / (22.0 * TK**0.75)) * float(stats.beta_bar @ D_sq)
    terms["d"] = 62.0 / 11.0 * chi_square_divergence(stats.beta_bar, p) * float(p @ D_sq)
    terms["e"] = (
        31.0 / (22.0 * TK) * _outage_spread_factor(inputs.K, q_max) * float(round_outage_spread.sum())
    )
    return BoundBreakdown(name="theorem2", total=float(sum(terms.values())), terms=terms, k_bar=k_bar, T=T)
