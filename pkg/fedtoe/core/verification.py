# fedtoe/core/verification.py
"""
Numerical self-checks.

Each check compares a closed form with an independent computation (Monte
Carlo, enumeration, finite differences or grid search) and records the
measured discrepancy next to its tolerance. Statistical tolerances are
expressed in standard errors; all draws come from the verify seed.
"""

import itertools
import logging
from typing import Callable

import numpy as np
from scipy.sparse.linalg import eigsh

from fedtoe.core import channel
from fedtoe.core.allocator import (
    check_convexity,
    objective,
    objective_gradient,
    objective_on_grid,
    lower_bounds,
    solve_offline,
    uniform_allocation,
    verify_optimality,
)
from fedtoe.core.analysis import enumerate_stats, kbar_uniform, mc_stats
from fedtoe.core.quantizer import compute_ranges, dequantize_update, partition_sizes, qe_bound, quantize_update
from fedtoe.core.random_streams import substream
from fedtoe.core.scenario import make_logistic_noniid, make_quadratic, place_clients
from fedtoe.core.settings import ExperimentConfig
from fedtoe.schemas.allocation import AllocClient, AllocProblem
from fedtoe.schemas.channel import LinkBudget
from fedtoe.schemas.reports import Report

logger = logging.getLogger(__name__)

ThetaFn = Callable[..., float]


def _z_scores(difference: np.ndarray, se: np.ndarray) -> np.ndarray:
    difference, se = np.abs(np.asarray(difference, dtype=float)), np.asarray(se, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, difference / se, np.where(difference > 1e-12, np.inf, 0.0))
    return z


def check_quantizer(report: Report, config: ExperimentConfig, rng: np.random.Generator) -> None:
    """Unbiasedness per coordinate and the mean squared error bound"""
    section = config.verify
    dim, n = section.quantizer_dim, section.quantizer_draws
    for j in range(section.quantizer_vectors):
        v = rng.normal(size=dim)
        groups = compute_ranges(v, partition_sizes(dim, min(2, dim)))
        for B in (1, 2, 4, 8):
            tiled = np.tile(v, n)
            payload = quantize_update(tiled, groups * n, B, rng)
            error = (dequantize_update(payload) - tiled).reshape(n, dim)

            z = _z_scores(error.mean(axis=0), error.std(axis=0, ddof=1) / np.sqrt(n))
            report.add(f"quantizer bias, vector {j}, B={B}", z.max(), 5.0, z.max() <= 5.0, "max |mean error| in SE")

            squared = np.sum(error**2, axis=1)
            bound = qe_bound(groups, B).bound
            ratio = squared.mean() / bound
            slack = 1.0 + 5.0 * squared.std(ddof=1) / np.sqrt(n) / bound
            report.add(f"quantizer error bound, vector {j}, B={B}", ratio, slack, ratio <= slack, "E|Q(v)-v|^2 / bound")


def check_outage(report: Report, config: ExperimentConfig, rng: np.random.Generator) -> None:
    """Closed-form outage against shadowing draws over a (d, W, B) grid"""
    params = config.channel
    section = config.allocator
    draws = config.verify.outage_draws
    worst, cells = 0.0, 0
    for d in (100.0, 350.0, 600.0):
        for w in (0.1e6, 0.2e6, 0.4e6):
            for B in (2, 6):
                rate = (section.m * B + section.effective_mu) / section.tau_max
                link = LinkBudget(d=d, p=section.p_max, w=w, r=rate)
                q = channel.outage_prob(link, params).q
                frequency = channel.sample_outages(link, params, rng, size=draws).mean()
                se = np.sqrt(max(q * (1.0 - q), 1.0 / draws) / draws)
                worst = max(worst, abs(frequency - q) / se)
                cells += 1
    report.add("outage closed form vs shadowing draws", worst, 3.0, worst <= 3.0, f"max z over {cells} cells")


def check_outage_target(
    report: Report, config: ExperimentConfig, rng: np.random.Generator, theta_fn: ThetaFn = channel.theta
) -> None:
    """Links at rate_cap(W, theta) must sit exactly at the outage target"""
    params, section = config.channel, config.allocator
    draws = config.verify.outage_draws
    gap, worst_z = 0.0, 0.0
    for d in (50.0, 300.0, 600.0):
        theta_i = float(theta_fn(d, section.q_max, params))
        for w in (0.1e6, 0.2e6, 1e6):
            rate = float(channel.rate_cap(w, theta_i, section.p_max, params.n0))
            link = LinkBudget(d=d, p=section.p_max, w=w, r=rate)
            q = channel.outage_prob(link, params).q
            gap = max(gap, abs(q - section.q_max))
            frequency = channel.sample_outages(link, params, rng, size=draws).mean()
            se = np.sqrt(section.q_max * (1.0 - section.q_max) / draws)
            worst_z = max(worst_z, abs(frequency - section.q_max) / se)
    report.add("outage at rate cap equals q_max", gap, 1e-8, gap <= 1e-8)
    report.add("outage at rate cap, shadowing draws", worst_z, 4.0, worst_z <= 4.0, "max z vs q_max")


def check_participation(report: Report, config: ExperimentConfig, rng: np.random.Generator) -> None:
    """Enumeration against Monte Carlo, and the uniform-outage identities"""
    trials = config.verify.stats_trials
    for N, K in itertools.product((2, 3, 4), (2, 3)):
        p = rng.dirichlet(np.ones(N))
        q = rng.uniform(0.0, 0.9, size=N)
        exact = enumerate_stats(p, q, K)
        sampled = mc_stats(p, q, K, trials, rng)
        k_z = float(
            _z_scores([1.0 / exact.k_bar - 1.0 / sampled.k_bar], [sampled.k_bar_se / sampled.k_bar**2])[0]
        )
        report.add(f"k_bar enumeration vs Monte Carlo, N={N} K={K}", k_z, 3.0, k_z <= 3.0, "z")
        # the per-client vectors are held to 3 SE jointly, as a root mean square z
        z = np.concatenate(
            [
                _z_scores(exact.beta_bar - sampled.beta_bar, sampled.beta_se),
                _z_scores(exact.alpha_bar - sampled.alpha_bar, sampled.alpha_se),
            ]
        )
        rms = float(np.sqrt(np.mean(z**2)))
        report.add(f"beta_bar, alpha_bar enumeration vs Monte Carlo, N={N} K={K}", rms, 3.0, rms <= 3.0, "rms z")

    p = rng.dirichlet(np.ones(4))
    uniform = enumerate_stats(p, np.full(4, 0.3), 3)
    beta_gap = float(np.max(np.abs(uniform.beta_bar - p)))
    report.add("uniform outage keeps beta_bar = p", beta_gap, 1e-12, beta_gap <= 1e-12)
    k_gap = abs(uniform.k_bar - kbar_uniform(0.3, 3)) / uniform.k_bar
    report.add("uniform outage k_bar closed form", k_gap, 1e-12, k_gap <= 1e-12)
    lossless = enumerate_stats(p, np.zeros(4), 3)
    report.add("no outage gives k_bar = K", abs(lossless.k_bar - 3.0), 1e-12, abs(lossless.k_bar - 3.0) <= 1e-12)


def check_delay(report: Report, config: ExperimentConfig, rng: np.random.Generator) -> None:
    episodes = config.verify.delay_episodes
    for K in (1, 2, 5):
        bits = rng.uniform(1e5, 2e5, size=K)
        rates = rng.uniform(1e6, 5e6, size=K)
        q = rng.uniform(0.0, 0.9, size=K)
        q[0] = 0.9
        links = list(zip(bits, rates, q))
        closed = channel.avg_uplink_delay(links)
        simulated = channel.simulate_delay_episodes(links, rng, episodes).mean()
        relative = abs(simulated - closed) / closed
        report.add(f"average delay, K={K}", relative, 0.01, relative <= 0.01, "relative error")


def _verify_problem(config: ExperimentConfig, N: int, rng: np.random.Generator) -> AllocProblem:
    section = config.allocator
    distances = place_clients(N, config.scenario.radius_m, rng, config.scenario.min_distance_m)
    return AllocProblem(
        clients=[AllocClient(id=i, d=float(d)) for i, d in enumerate(distances)],
        w_total=section.w_total,
        p_max=section.p_max,
        tau_max=section.tau_max,
        q_max=section.q_max,
        m=section.m,
        mu=section.effective_mu,
        channel=config.channel,
        max_iters=section.max_iters,
        tol=section.tol,
        ceiling_factor=section.ceiling_factor,
    )


def _grid_optimum(problem: AllocProblem, points_per_axis: int) -> np.ndarray:
    lower = lower_bounds(problem)
    free = problem.w_total - lower.sum()
    steps = np.linspace(0.0, free, points_per_axis)
    if problem.size == 2:
        first = lower[0] + steps
        grid = np.column_stack([first, problem.w_total - first])
    else:
        a, b = np.meshgrid(steps, steps, indexing="ij")
        keep = (a + b) <= free
        a, b = a[keep], b[keep]
        grid = np.column_stack([lower[0] + a, lower[1] + b, lower[2] + free - a - b])
    return grid[int(np.argmin(objective_on_grid(grid, problem)))]


def check_allocator(report: Report, config: ExperimentConfig, rng: np.random.Generator) -> None:
    """Grid search, optimality structure, gradient, convexity and the uniform baseline"""
    section = config.verify
    for N, points in ((2, section.grid_points), (3, max(int(np.sqrt(section.grid_points)) * 10, 50))):
        problem = _verify_problem(config, N, rng)
        solution = solve_offline(problem)
        grid_best = _grid_optimum(problem, points)
        free = problem.w_total - lower_bounds(problem).sum()
        tolerance = max(1e-3 * problem.w_total, 2.0 * free / (points - 1))
        gap = float(np.max(np.abs(np.asarray(solution.relaxed_w) - grid_best)))
        report.add(f"relaxed optimum vs grid search, N={N}", gap, tolerance, gap <= tolerance, "Hz")

        for check in verify_optimality(solution, problem).checks:
            report.checks.append(check.model_copy(update={"name": f"{check.name}, N={N}"}))

        baseline = uniform_allocation(problem)
        report.add(
            f"allocation objective vs uniform bandwidth, N={N}",
            solution.objective - baseline.objective,
            0.0,
            solution.objective <= baseline.objective,
        )

        order = np.argsort(problem.distances)
        relaxed = np.asarray(solution.relaxed_w)[order]
        drop = float(np.max(np.maximum(relaxed[:-1] - relaxed[1:], 0.0)) / problem.w_total)
        report.add(f"farther clients get no less bandwidth, N={N}", drop, 1e-9, drop <= 1e-9)

        worst = 0.0
        for _ in range(section.gradient_points):
            w = solution.relaxed_w * rng.uniform(0.9, 1.1, size=N)
            grad = objective_gradient(w, problem)
            h = 1e-4 * w
            fd = np.array(
                [
                    (objective(w + h[i] * np.eye(N)[i], problem) - objective(w - h[i] * np.eye(N)[i], problem))
                    / (2.0 * h[i])
                    for i in range(N)
                ]
            )
            worst = max(worst, float(np.max(np.abs(fd - grad)) / np.max(np.abs(grad))))
        report.add(f"allocation gradient vs finite differences, N={N}", worst, 1e-5, worst <= 1e-5)

    convexity = check_convexity(
        _verify_problem(config, 3, rng), grid_size=section.convexity_grid, rng=rng
    )
    report.checks.extend(convexity.checks)


def _fd_gradient(f: Callable[[np.ndarray], float], w: np.ndarray, h: float = 1e-5) -> np.ndarray:
    basis = np.eye(w.size)
    return np.array([(f(w + h * e) - f(w - h * e)) / (2.0 * h) for e in basis])


def check_tasks(report: Report, config: ExperimentConfig, rng: np.random.Generator) -> None:
    """Task gradients against finite differences, and the smoothness constant"""
    quadratic = make_quadratic(4, 6, 1.0, 0.0, rng, curvature_spread=0.3)
    logistic = make_logistic_noniid(4, 2, 20, rng, classes=4, feature_dim=3, test_samples=10)
    for name, task in (("quadratic", quadratic), ("logistic", logistic)):
        worst = 0.0
        for _ in range(config.verify.gradient_points):
            w = rng.normal(size=task.dim)
            grad = task.global_gradient(w)
            fd = _fd_gradient(task.loss, w)
            worst = max(worst, float(np.linalg.norm(fd - grad) / max(np.linalg.norm(grad), 1e-12)))
        tolerance = 1e-6
        report.add(f"{name} gradient vs finite differences", worst, tolerance, worst <= tolerance)

    iterated = max(float(eigsh(H, k=1, which="LA", tol=1e-14)[0][0]) for H in quadratic.H)
    gap = abs(iterated - quadratic.smoothness) / quadratic.smoothness
    report.add("quadratic smoothness vs iterative eigenvalue", gap, 1e-8, gap <= 1e-8)


def run_verification(config: ExperimentConfig, theta_fn: ThetaFn = channel.theta) -> Report:
    """Run every check; ``theta_fn`` replaces the effective-gain formula under test"""
    seed = config.verify.seed
    report = Report(title="fedtoe verification")

    steps = (
        ("quantizer", lambda rng: check_quantizer(report, config, rng)),
        ("outage", lambda rng: check_outage(report, config, rng)),
        ("outage target", lambda rng: check_outage_target(report, config, rng, theta_fn)),
        ("participation", lambda rng: check_participation(report, config, rng)),
        ("delay", lambda rng: check_delay(report, config, rng)),
        ("allocator", lambda rng: check_allocator(report, config, rng)),
        ("tasks", lambda rng: check_tasks(report, config, rng)),
    )
    for index, (name, step) in enumerate(steps):
        logger.info(f"🔍 Verifying {name}")
        step(substream(seed, index))

    failed = report.failures()
    if failed:
        logger.error(f"❌ {len(failed)} of {len(report.checks)} checks failed")
    else:
        logger.info(f"✅ All {len(report.checks)} checks passed")
    return report
