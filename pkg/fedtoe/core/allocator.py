# fedtoe/core/allocator.py
"""
Joint bandwidth / quantization-level allocation.

Every client transmits at full power with the rate that meets the outage
target exactly, so its quantization level is a function of its bandwidth
alone, B_i(W_i). The allocator minimizes the weighted quantization error
sum_i weight_i / (2^{B_i(W_i)} - 1)^2 over {sum W_i <= W_total,
W_i >= W_i(B=1)}, which is convex, then floors the levels and shrinks each
bandwidth to the smallest slice that still carries the floored level.
"""

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from fedtoe.core import channel
from fedtoe.core.errors import (
    DelayConstraintError,
    InfeasibleAllocationError,
    LinkPreconditionError,
    ParameterError,
)
from fedtoe.core.quantizer import MAX_QUANTIZER_BITS, bit_cost
from fedtoe.schemas.allocation import (
    AllocationSolution,
    AllocClient,
    AllocProblem,
    ClientLink,
    UplinkPlan,
)
from fedtoe.schemas.reports import ConvexityReport, Report

logger = logging.getLogger(__name__)

ARMIJO = 1e-4
# levels within this distance below an integer still floor to it
_FLOOR_SLACK = 1e-9
_RELAXED_MAX_ITERS = 5000
_RELAXED_RESIDUAL = 1e-9
_MAX_HALVINGS = 80


@dataclass(frozen=True)
class LinkCurves:
    """B_i(W), its slope and its inverse for every client of a problem"""

    theta: np.ndarray
    p_max: float
    n0: float
    tau_max: float
    m: int
    mu: int
    w_ceiling: float

    @classmethod
    def for_problem(cls, problem: AllocProblem) -> "LinkCurves":
        return cls(
            theta=np.asarray(channel.theta(problem.distances, problem.q_max, problem.channel), dtype=float),
            p_max=problem.p_max,
            n0=problem.channel.n0,
            tau_max=problem.tau_max,
            m=problem.m,
            mu=problem.mu,
            w_ceiling=problem.ceiling_factor * problem.w_total,
        )

    def level(self, w: np.ndarray) -> np.ndarray:
        return channel.quant_level_for_bandwidth(w, self.theta, self.p_max, self.n0, self.tau_max, self.m, self.mu)

    def slope(self, w: np.ndarray) -> np.ndarray:
        return channel.quant_level_slope(w, self.theta, self.p_max, self.n0, self.tau_max, self.m)

    def rate(self, w: np.ndarray) -> np.ndarray:
        return channel.rate_cap(w, self.theta, self.p_max, self.n0)

    def bandwidth(self, levels: Sequence[float]) -> np.ndarray:
        return np.array(
            [
                channel.bandwidth_for_level(
                    float(b), float(t), self.p_max, self.n0, self.tau_max, self.m, self.mu,
                    w_ceiling=self.w_ceiling,
                )
                for b, t in zip(levels, self.theta)
            ]
        )


def _log_expm1(x: np.ndarray) -> np.ndarray:
    """log(e^x - 1) for x > 0 without overflow"""
    return x + np.log(-np.expm1(-x))


def _levels_checked(w: np.ndarray, curves: LinkCurves) -> np.ndarray:
    levels = curves.level(np.asarray(w, dtype=float))
    if np.any(levels < 1.0 - 1e-9):
        i = int(np.argmin(levels))
        raise ParameterError(f"client slot {i} bandwidth {w[i]:.6g} Hz gives level {levels[i]:.6g} < 1")
    return levels


def _objective(w: np.ndarray, weights: np.ndarray, curves: LinkCurves) -> float:
    levels = _levels_checked(w, curves)
    return float(np.sum(weights * np.exp(-2.0 * _log_expm1(levels * channel.LN2))))


def _gradient(w: np.ndarray, weights: np.ndarray, curves: LinkCurves) -> np.ndarray:
    levels = _levels_checked(w, curves)
    log_ratio = levels * channel.LN2 - 3.0 * _log_expm1(levels * channel.LN2)
    return -2.0 * weights * np.exp(log_ratio) * channel.LN2 * curves.slope(w)


def objective(w: np.ndarray, problem: AllocProblem) -> float:
    return _objective(np.asarray(w, dtype=float), problem.weights, LinkCurves.for_problem(problem))


def objective_gradient(w: np.ndarray, problem: AllocProblem) -> np.ndarray:
    return _gradient(np.asarray(w, dtype=float), problem.weights, LinkCurves.for_problem(problem))


def objective_on_grid(points: np.ndarray, problem: AllocProblem) -> np.ndarray:
    """Relaxed objective at each row of ``points``; inf where some client falls below one bit"""
    curves = LinkCurves.for_problem(problem)
    points = np.atleast_2d(np.asarray(points, dtype=float))
    levels = curves.level(points)
    terms = problem.weights * np.exp(-2.0 * _log_expm1(np.maximum(levels, 1.0) * channel.LN2))
    return np.where(np.all(levels >= 1.0 - 1e-9, axis=1), terms.sum(axis=1), np.inf)


def rounded_objective(levels: Sequence[int], weights: np.ndarray) -> float:
    levels = np.asarray(levels, dtype=float)
    return float(np.sum(weights / (2.0**levels - 1.0) ** 2))


def lower_bounds(problem: AllocProblem, curves: LinkCurves | None = None) -> np.ndarray:
    """Smallest bandwidth giving each client one bit per parameter"""
    curves = curves or LinkCurves.for_problem(problem)
    try:
        return curves.bandwidth(np.ones(problem.size))
    except InfeasibleAllocationError as e:
        raise DelayConstraintError(str(e)) from e


def _project(w: np.ndarray, lower: np.ndarray, w_total: float) -> np.ndarray:
    budget = w_total - lower.sum()
    if budget < 0:
        raise InfeasibleAllocationError(
            f"minimum bandwidths sum to {lower.sum():.6g} Hz, {-budget:.6g} Hz over the "
            f"{w_total:.6g} Hz budget",
            shortfall_hz=float(-budget),
        )
    if budget == 0:
        return lower.copy()
    shifted = np.maximum(np.asarray(w, dtype=float) - lower, 0.0)
    if shifted.sum() <= budget:
        return lower + shifted

    # sorting-based projection onto {y >= 0, sum y = budget}; stable sort breaks ties by index
    order = np.argsort(-(np.asarray(w, dtype=float) - lower), kind="stable")
    ranked = (np.asarray(w, dtype=float) - lower)[order]
    cumulative = np.cumsum(ranked) - budget
    support = np.nonzero(ranked - cumulative / np.arange(1, ranked.size + 1) > 0)[0][-1]
    threshold = cumulative[support] / (support + 1.0)
    projected = lower + np.maximum(np.asarray(w, dtype=float) - lower - threshold, 0.0)

    overshoot = projected.sum() - w_total
    if overshoot > 0:
        top = int(np.argmax(projected - lower))
        projected[top] = max(lower[top], projected[top] - overshoot)
    return projected


def project_feasible(w: np.ndarray, problem: AllocProblem, lower: np.ndarray | None = None) -> np.ndarray:
    """Euclidean projection onto {sum w <= W_total, w_i >= W_i(B=1)}"""
    if lower is None:
        lower = lower_bounds(problem)
    return _project(w, lower, problem.w_total)


def projected_residual(w: np.ndarray, gradient: np.ndarray, lower: np.ndarray, w_total: float) -> float:
    """Fixed-point residual of a full-budget projected step, relative to the budget"""
    scale = np.max(np.abs(gradient))
    if scale == 0:
        return 0.0
    stepped = _project(w - (w_total / scale) * gradient, lower, w_total)
    return float(np.max(np.abs(stepped - w)) / w_total)


class _Descent:
    """Projected gradient with halving backtracking on the relaxed objective"""

    def __init__(self, weights: np.ndarray, curves: LinkCurves, lower: np.ndarray, w_total: float):
        self.weights = weights
        self.curves = curves
        self.lower = lower
        self.w_total = w_total

    def value(self, w: np.ndarray) -> float:
        return _objective(w, self.weights, self.curves)

    def gradient(self, w: np.ndarray) -> np.ndarray:
        return _gradient(w, self.weights, self.curves)

    def step(self, w: np.ndarray, value: float, grad: np.ndarray, t: float) -> tuple[np.ndarray, float, float]:
        """One accepted projected step, or ``w`` itself when no step size decreases the objective"""
        for _ in range(_MAX_HALVINGS):
            candidate = _project(w - t * grad, self.lower, self.w_total)
            direction = candidate - w
            candidate_value = self.value(candidate)
            # the last term absorbs rounding once decreases reach machine precision
            if candidate_value <= value + ARMIJO * float(grad @ direction) + 4 * np.finfo(float).eps * value:
                return candidate, min(candidate_value, value), t
            t *= 0.5
        return w, value, t

    def initial_step(self, grad: np.ndarray) -> float:
        scale = np.max(np.abs(grad))
        return 0.1 * self.w_total / scale if scale > 0 else 1.0


def _starting_point(problem: AllocProblem, lower: np.ndarray) -> np.ndarray:
    return _project(np.maximum(lower, problem.w_total / problem.size), lower, problem.w_total)


def solve_relaxed(
    problem: AllocProblem,
    lower: np.ndarray | None = None,
    curves: LinkCurves | None = None,
    max_iters: int = _RELAXED_MAX_ITERS,
) -> tuple[np.ndarray, float, float, list[float]]:
    """
    Continuous optimum of the relaxed problem.

    Uses Barzilai-Borwein trial steps with halving backtracking and stops
    once the projected-gradient residual drops below 1e-9.

    Returns:
        (bandwidths, objective, residual, objective history)
    """
    curves = curves or LinkCurves.for_problem(problem)
    if lower is None:
        lower = lower_bounds(problem, curves)
    descent = _Descent(problem.weights, curves, lower, problem.w_total)

    w = _starting_point(problem, lower)
    value, grad = descent.value(w), descent.gradient(w)
    t = descent.initial_step(grad)
    history = [value]
    residual = projected_residual(w, grad, lower, problem.w_total)

    for iteration in range(max_iters):
        if residual <= _RELAXED_RESIDUAL:
            break
        w_next, value_next, t_used = descent.step(w, value, grad, t)
        if w_next is w:
            logger.debug(f"Relaxed descent stalled at iteration {iteration}, residual {residual:.3g}")
            break
        grad_next = descent.gradient(w_next)
        s, y = w_next - w, grad_next - grad
        curvature = float(s @ y)
        t = float(s @ s) / curvature if curvature > 0 else 2.0 * t_used
        w, value, grad = w_next, value_next, grad_next
        history.append(value)
        residual = projected_residual(w, grad, lower, problem.w_total)

    return w, value, residual, history


def _floor_levels(levels: np.ndarray) -> np.ndarray:
    """Integer levels, capped at what the quantizer can represent"""
    floored = np.floor(np.minimum(levels, MAX_QUANTIZER_BITS) + _FLOOR_SLACK).astype(np.int64)
    if np.any(floored < 1):
        raise DelayConstraintError(f"{int(np.sum(floored < 1))} client(s) cannot carry one bit per parameter")
    return np.minimum(floored, MAX_QUANTIZER_BITS)


def _links_for_levels(
    problem: AllocProblem, curves: LinkCurves, levels: np.ndarray
) -> list[ClientLink]:
    bandwidths = curves.bandwidth(levels)
    rates = curves.rate(bandwidths)
    outages = channel.outage_probability(problem.distances, problem.p_max, bandwidths, rates, problem.channel)
    return [
        ClientLink(
            id=client.id,
            d=client.d,
            w=float(w),
            p=problem.p_max,
            b=int(b),
            r=float(r),
            q=float(q),
            payload_bits=bit_cost(problem.m, int(b), problem.mu),
        )
        for client, w, b, r, q in zip(problem.clients, bandwidths, levels, rates, outages)
    ]


def solve_offline(
    problem: AllocProblem,
    step_rule: str = "armijo",
    max_iters: int | None = None,
    tol: float | None = None,
) -> AllocationSolution:
    """
    Bandwidth and level allocation with rounding interleaved in the descent.

    Each iteration takes one backtracking projected-gradient step, floors the
    resulting levels and restarts from the bandwidths W_i(floor B_i). The
    loop ends on two identical consecutive level vectors, a relative
    objective change below ``tol`` or ``max_iters``. The returned levels are
    the best rounded point seen, counting the starting point and the
    rounding of the converged relaxed optimum.
    """
    if step_rule != "armijo":
        raise ParameterError(f"unknown step rule {step_rule!r}")
    max_iters = max_iters or problem.max_iters
    tol = problem.tol if tol is None else tol

    curves = LinkCurves.for_problem(problem)
    lower = lower_bounds(problem, curves)
    try:
        start = _starting_point(problem, lower)
    except InfeasibleAllocationError as e:
        raise DelayConstraintError(
            f"sum of minimum bandwidths {lower.sum():.6g} Hz exceeds W_total {problem.w_total:.6g} Hz",
            shortfall_hz=e.shortfall_hz,
        ) from e

    weights = problem.weights
    descent = _Descent(weights, curves, lower, problem.w_total)

    # 1️⃣ the starting point itself is a candidate
    best_levels = _floor_levels(curves.level(start))
    best_value = rounded_objective(best_levels, weights)
    history = [best_value]

    # 2️⃣ rounding interleaved with one descent step per iteration
    previous_levels: np.ndarray | None = None
    previous_value = descent.value(start)
    t = descent.initial_step(descent.gradient(start))
    converged = False
    iterations = 0
    w = start
    for iterations in range(1, max_iters + 1):
        value, grad = descent.value(w), descent.gradient(w)
        stepped, stepped_value, t = descent.step(w, value, grad, max(t, descent.initial_step(grad)))
        levels = _floor_levels(curves.level(stepped))
        candidate = rounded_objective(levels, weights)
        if candidate < best_value:
            best_levels, best_value = levels, candidate
        history.append(best_value)

        if previous_levels is not None and np.array_equal(levels, previous_levels):
            converged = True
            break
        if abs(previous_value - stepped_value) <= tol * max(abs(previous_value), np.finfo(float).tiny):
            converged = True
            break
        previous_levels, previous_value = levels, stepped_value
        w = curves.bandwidth(levels)

    # 3️⃣ the rounding of the relaxed optimum
    relaxed_w, relaxed_value, residual, relaxed_history = solve_relaxed(problem, lower, curves)
    relaxed_levels = curves.level(relaxed_w)
    levels = _floor_levels(relaxed_levels)
    candidate = rounded_objective(levels, weights)
    if candidate < best_value:
        best_levels, best_value = levels, candidate
        history.append(best_value)

    links = _links_for_levels(problem, curves, best_levels)
    solution = AllocationSolution(
        scheme=f"fedtoe-{problem.mode}",
        links=links,
        objective=best_value,
        iterations=iterations,
        w_total=problem.w_total,
        q_max=problem.q_max,
        tau_max=problem.tau_max,
        relaxed_w=relaxed_w.tolist(),
        relaxed_b=relaxed_levels.tolist(),
        relaxed_objective=relaxed_value,
        relaxed_residual=residual,
        converged=converged,
        objective_history=history,
        relaxed_history=relaxed_history,
    )
    logger.debug(
        f"Allocation over {problem.size} slots: objective {best_value:.6g}, "
        f"{iterations} iterations, {solution.bandwidth_used / problem.w_total:.1%} of the band used"
    )
    return solution


def solve_online(problem: AllocProblem, selected_set: Sequence[int]) -> AllocationSolution:
    """
    Allocation over one round's selected clients.

    ``selected_set`` is the ordered multiset of client ids; a client drawn
    twice gets two slots since each draw transmits on its own.
    """
    by_id = {client.id: client for client in problem.clients}
    missing = [i for i in selected_set if i not in by_id]
    if missing:
        raise ParameterError(f"selected clients {missing} not in the problem")
    K = len(selected_set)
    slots = [AllocClient(id=i, d=by_id[i].d, weight=by_id[i].weight / K) for i in selected_set]
    return solve_offline(problem.model_copy(update={"clients": slots, "mode": "online"}))


def uniform_allocation(problem: AllocProblem, scheme: str = "baseline3") -> UplinkPlan:
    """
    Equal bandwidth slices, each carrying the largest level that meets delay and outage.

    A client whose slice would carry more than the quantizer's cap only
    occupies the bandwidth the capped level needs; the rest stays unused.
    """
    curves = LinkCurves.for_problem(problem)
    share = np.full(problem.size, problem.w_total / problem.size)
    levels = _floor_levels(curves.level(share))
    if np.any(levels >= MAX_QUANTIZER_BITS):
        share = np.minimum(share, np.where(levels >= MAX_QUANTIZER_BITS, curves.bandwidth(levels), np.inf))
    rates = curves.rate(share)
    outages = channel.outage_probability(problem.distances, problem.p_max, share, rates, problem.channel)
    links = [
        ClientLink(
            id=client.id, d=client.d, w=float(w), p=problem.p_max, b=int(b), r=float(r), q=float(q),
            payload_bits=bit_cost(problem.m, int(b), problem.mu),
        )
        for client, w, b, r, q in zip(problem.clients, share, levels, rates, outages)
    ]
    return UplinkPlan(scheme=scheme, links=links, objective=rounded_objective(levels, problem.weights))


def fixed_level_allocation(problem: AllocProblem, bits: int, scheme: str = "baseline1") -> UplinkPlan:
    """Equal bandwidth, fixed level, rate set by the delay budget; outage left to the channel"""
    share = problem.w_total / problem.size
    payload = bit_cost(problem.m, bits, problem.mu)
    rate = payload / problem.tau_max
    outages = channel.outage_probability(problem.distances, problem.p_max, share, rate, problem.channel)
    links = []
    for client, q in zip(problem.clients, np.atleast_1d(outages)):
        if q >= 1.0:
            raise LinkPreconditionError(
                f"client {client.id} at {client.d:.1f} m cannot send {payload} bits in "
                f"{problem.tau_max} s over {share:.6g} Hz: outage is 1"
            )
        links.append(
            ClientLink(id=client.id, d=client.d, w=share, p=problem.p_max, b=bits, r=rate, q=float(q),
                       payload_bits=payload)
        )
    objective_value = rounded_objective([bits] * problem.size, problem.weights)
    return UplinkPlan(scheme=scheme, links=links, objective=objective_value)


def _phi(w: np.ndarray, theta_i: float, curves: LinkCurves) -> np.ndarray:
    levels = channel.quant_level_for_bandwidth(
        w, theta_i, curves.p_max, curves.n0, curves.tau_max, curves.m, curves.mu
    )
    return np.exp(-2.0 * _log_expm1(levels * channel.LN2))


def _one_sided_second_difference(values: np.ndarray) -> float:
    """Relative second difference at values[0] from it and the next three grid points"""
    f0, f1, f2, f3 = values
    scale = 2.0 * abs(f0) + 5.0 * abs(f1) + 4.0 * abs(f2) + abs(f3)
    return float((2.0 * f0 - 5.0 * f1 + 4.0 * f2 - f3) / scale) if scale > 0 else 0.0


def _rate_at_outage(d: float, p: float, w: float, q: float, problem: AllocProblem) -> float:
    """Rate whose closed-form outage over bandwidth ``w`` equals ``q``, solved from the outage formula"""

    def excess(r: float) -> float:
        return float(channel.outage_probability(d, p, w, r, problem.channel)) - q

    hi = w
    while excess(hi) < 0:
        hi *= 2.0
    return float(brentq(excess, 1e-9 * w, hi, xtol=1e-12, rtol=1e-14))


def check_convexity(
    problem: AllocProblem,
    grid_size: int = 200,
    rng: np.random.Generator | None = None,
    max_level: int = 12,
    pairs: int = 100,
) -> ConvexityReport:
    """Second differences and midpoint convexity of every per-client term"""
    rng = rng or np.random.default_rng(0)
    curves = LinkCurves.for_problem(problem)
    lower = lower_bounds(problem, curves)
    report = ConvexityReport(title="convexity of the per-client objective terms")

    worst, violations, checked = np.inf, 0, 0
    for i, client in enumerate(problem.clients):
        single = LinkCurves(
            theta=curves.theta[i : i + 1], p_max=curves.p_max, n0=curves.n0, tau_max=curves.tau_max,
            m=curves.m, mu=curves.mu, w_ceiling=curves.w_ceiling,
        )
        try:
            upper = float(single.bandwidth([max_level])[0])
        except InfeasibleAllocationError:
            upper = 1e3 * lower[i]
        grid = np.linspace(lower[i], upper, grid_size)
        values = _phi(grid, curves.theta[i], curves)

        # interior points use centred differences, the two ends second-order one-sided ones
        second = values[:-2] - 2.0 * values[1:-1] + values[2:]
        scale = np.abs(values[:-2]) + 2.0 * np.abs(values[1:-1]) + np.abs(values[2:])
        relative = np.where(scale > 0, second / scale, 0.0)
        edge_step = (upper - lower[i]) / (10.0 * (grid_size - 1))
        forward = _one_sided_second_difference(_phi(lower[i] + edge_step * np.arange(4), curves.theta[i], curves))
        backward = _one_sided_second_difference(_phi(upper - edge_step * np.arange(4), curves.theta[i], curves))
        client_worst = float(min(relative.min(), forward, backward))
        worst = min(worst, client_worst)
        checked += grid_size

        a, b = rng.uniform(lower[i], upper, size=(2, pairs))
        middle = _phi((a + b) / 2.0, curves.theta[i], curves)
        average = (_phi(a, curves.theta[i], curves) + _phi(b, curves.theta[i], curves)) / 2.0
        client_violations = int(np.sum(middle > average * (1.0 + 1e-12)))
        violations += client_violations
        report.add(
            f"client {client.id} second differences", client_worst, -1e-8, client_worst >= -1e-8,
            f"grid [{lower[i]:.6g}, {upper:.6g}] Hz, midpoint violations {client_violations}/{pairs}",
        )

    report.min_relative_second_difference = float(worst)
    report.midpoint_violations = violations
    report.points_checked = checked
    report.add("midpoint convexity violations", violations, 0, violations == 0)
    return report


def verify_optimality(solution: AllocationSolution, problem: AllocProblem, residual_tol: float = 1e-6) -> Report:
    """Check a solution against the structure every optimum must have"""
    curves = LinkCurves.for_problem(problem)
    report = Report(title="allocation optimality")
    links = solution.links

    power_gap = max(abs(link.p - problem.p_max) for link in links) / problem.p_max
    report.add("(a) full transmit power", power_gap, 0.0, power_gap == 0.0)

    # the stored relaxed levels against rates solved from the outage formula itself
    relaxed_w = np.asarray(solution.relaxed_w)
    relaxed_rates = np.array(
        [
            _rate_at_outage(d, problem.p_max, w, problem.q_max, problem)
            for d, w in zip(problem.distances, relaxed_w)
        ]
    )
    relaxed_delay = (problem.m * np.asarray(solution.relaxed_b) + problem.mu) / relaxed_rates
    relaxed_gap = float(np.max(np.abs(relaxed_delay - problem.tau_max)) / problem.tau_max)
    report.add("(b) relaxed delay equals tau_max", relaxed_gap, 1e-9, relaxed_gap <= 1e-9)

    overrun = max(bit_cost(problem.m, link.b, problem.mu) / link.r for link in links) - problem.tau_max
    report.add("(b) rounded delay within tau_max", overrun, 1e-12, overrun <= 1e-12)

    outages = channel.outage_probability(
        np.array([link.d for link in links]), problem.p_max,
        np.array([link.w for link in links]), np.array([link.r for link in links]), problem.channel,
    )
    outage_gap = float(np.max(np.abs(np.atleast_1d(outages) - problem.q_max)))
    report.add("(c) outage equals q_max", outage_gap, 1e-8, outage_gap <= 1e-8)

    lower = lower_bounds(problem, curves)
    residual = projected_residual(
        relaxed_w, _gradient(relaxed_w, problem.weights, curves), lower, problem.w_total
    )
    report.add("(d) relaxed projected-gradient residual", residual, residual_tol, residual <= residual_tol)
    return report
