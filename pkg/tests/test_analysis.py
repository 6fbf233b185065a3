import numpy as np
import pytest

from fedtoe.core.analysis import (
    chi_square_divergence,
    corollary1_rhs,
    enumerate_stats,
    kbar_uniform,
    mc_stats,
    participation_stats,
    schedule_hyperparams,
    theorem1_rhs,
    theorem2_rhs,
)
from fedtoe.core.errors import BoundPreconditionError, EnumerationLimitError, ParameterError
from fedtoe.schemas.analysis import BoundInputs


def _inputs(N=3, K=2, M=64, E=1, q=0.0, J=0.0, D=1.0, sigma_sq=1.0, p=None, **extra) -> BoundInputs:
    p = np.full(N, 1.0 / N) if p is None else np.asarray(p)
    return BoundInputs(
        L=1.0,
        sigma_sq=sigma_sq,
        b=1,
        D_sq=np.broadcast_to(np.asarray(D, dtype=float), (N,)).copy(),
        J_sq=np.broadcast_to(np.asarray(J, dtype=float), (M, N)).copy(),
        p=p,
        q=np.broadcast_to(np.asarray(q, dtype=float), (N,)).copy(),
        K=K,
        E=E,
        M=M,
        F0_minus_Flow=1.0,
        **extra,
    )


class TestEnumerateStats:
    def test_no_outage(self):
        p = np.array([0.2, 0.3, 0.5])
        stats = enumerate_stats(p, np.zeros(3), 3)
        np.testing.assert_allclose(stats.beta_bar, p, atol=1e-12)
        np.testing.assert_allclose(stats.alpha_bar, p / 3, atol=1e-12)
        assert stats.k_bar == pytest.approx(3.0, rel=1e-12)

    def test_uniform_outage_keeps_p(self):
        p = np.array([0.1, 0.2, 0.3, 0.4])
        stats = enumerate_stats(p, np.full(4, 0.35), 3)
        np.testing.assert_allclose(stats.beta_bar, p, atol=1e-12)
        assert stats.k_bar == pytest.approx(kbar_uniform(0.35, 3), rel=1e-12)

    def test_reliable_client_over_represented(self):
        stats = enumerate_stats([0.5, 0.5], [0.1, 0.4], 2)
        np.testing.assert_allclose(stats.beta_bar, [0.578125, 0.421875], rtol=1e-12)
        alpha = [0.25 * 0.585 / 0.99 + 0.5 * 0.495 / 0.96, 0.25 * 0.66 / 0.84 + 0.5 * 0.195 / 0.96]
        np.testing.assert_allclose(stats.alpha_bar, alpha, rtol=1e-12)
        assert stats.k_bar == pytest.approx(1.0 / sum(alpha), rel=1e-12)

    def test_matches_monte_carlo(self):
        p, q = np.array([0.5, 0.5]), np.array([0.1, 0.4])
        exact = enumerate_stats(p, q, 2)
        sampled = mc_stats(p, q, 2, 200_000, np.random.default_rng(0))
        assert np.all(np.abs(exact.beta_bar - sampled.beta_bar) <= 4 * sampled.beta_se)
        assert np.all(np.abs(exact.alpha_bar - sampled.alpha_bar) <= 4 * sampled.alpha_se)
        assert sampled.method == "monte-carlo"
        assert sampled.trials <= 200_000

    def test_size_guard(self):
        with pytest.raises(EnumerationLimitError):
            enumerate_stats(np.full(20, 0.05), np.full(20, 0.1), 6)

    def test_rejects_malformed_distribution(self):
        with pytest.raises(ParameterError):
            enumerate_stats([0.5, 0.6], [0.1, 0.1], 2)
        with pytest.raises(ParameterError):
            enumerate_stats([0.5, 0.5], [0.1, 1.0], 2)


class TestMonteCarlo:
    def test_needs_enough_trials(self):
        with pytest.raises(ParameterError):
            mc_stats([0.5, 0.5], [0.1, 0.1], 2, 100, np.random.default_rng(0))


class TestParticipationStats:
    def test_picks_the_cheapest_exact_method(self):
        p = np.full(3, 1 / 3)
        assert participation_stats(p, np.full(3, 0.2), 2).method == "closed-form"
        assert participation_stats(p, np.array([0.1, 0.2, 0.3]), 2).method == "enumeration"

    def test_falls_back_to_monte_carlo(self):
        p = np.full(30, 1 / 30)
        q = np.linspace(0.0, 0.5, 30)
        stats = participation_stats(p, q, 5, rng=np.random.default_rng(1), trials=20_000)
        assert stats.method == "monte-carlo"


class TestKbarUniform:
    def test_no_outage(self):
        assert kbar_uniform(0.0, 5) == pytest.approx(5.0)

    def test_worked_value(self):
        assert kbar_uniform(0.5, 2) == pytest.approx(1.2)

    def test_strictly_decreasing(self):
        values = [kbar_uniform(q, 4) for q in np.linspace(0.0, 0.95, 20)]
        assert all(a > b for a, b in zip(values, values[1:]))

    def test_domain(self):
        with pytest.raises(ParameterError):
            kbar_uniform(1.0, 3)


class TestChiSquare:
    def test_worked_value(self):
        assert chi_square_divergence([0.6, 0.4], [0.5, 0.5]) == pytest.approx(0.04)

    def test_zero_at_p(self):
        assert chi_square_divergence([0.3, 0.7], [0.3, 0.7]) == 0.0

    def test_zero_probability(self):
        with pytest.raises(ParameterError):
            chi_square_divergence([0.5, 0.5], [1.0, 0.0])


class TestSchedule:
    def test_worked_value(self):
        gamma, E_max = schedule_hyperparams(64, 1.0, 1.0)
        assert gamma == pytest.approx(1 / 64)
        assert E_max == 2

    def test_too_few_updates(self):
        with pytest.raises(BoundPreconditionError):
            schedule_hyperparams(1, 2.0, 1.0)


class TestTheorem1:
    def test_uniform_outage_drops_participation_skew_terms(self):
        bound = theorem1_rhs(_inputs(q=0.2, J=1.0))
        assert bound.terms["d"] == 0.0
        assert bound.terms["e"] == 0.0
        assert bound.total == pytest.approx(sum(bound.terms.values()))

    def test_skewed_outage_adds_both_terms(self):
        bound = theorem1_rhs(_inputs(q=[0.1, 0.3, 0.5]))
        assert bound.terms["d"] > 0.0
        assert bound.terms["e"] > 0.0

    def test_no_quantization_error(self):
        assert theorem1_rhs(_inputs(J=0.0)).terms["a"] == 0.0

    def test_no_heterogeneity_or_outage_scales_as_inverse_root(self):
        short = theorem1_rhs(_inputs(M=64, D=0.0, K=2, N=2))
        long = theorem1_rhs(_inputs(M=256, D=0.0, K=2, N=2))
        assert short.total / long.total == pytest.approx(2.0, rel=0.05)

    def test_wrong_step_size(self):
        with pytest.raises(BoundPreconditionError):
            theorem1_rhs(_inputs(gamma=0.1))

    def test_too_many_local_steps(self):
        with pytest.raises(BoundPreconditionError):
            theorem1_rhs(_inputs(E=10, K=2, N=2, q=0.0))

    def test_too_few_rounds(self):
        with pytest.raises(BoundPreconditionError):
            theorem1_rhs(_inputs(M=2, K=2, N=2))

    def test_matching_step_size_accepted(self):
        gamma, _ = schedule_hyperparams(64, 2.0, 1.0)
        assert theorem1_rhs(_inputs(M=64, K=2, N=2, gamma=gamma)).total > 0


class TestCorollary:
    def test_equals_theorem1_under_uniform_outage(self):
        rng = np.random.default_rng(2)
        p = rng.dirichlet(np.ones(3))
        inputs = _inputs(K=3, q=0.2, p=p, J=rng.uniform(0, 1, size=(64, 3)), D=rng.uniform(0, 1, size=3))
        assert corollary1_rhs(inputs).total == pytest.approx(theorem1_rhs(inputs).total, rel=1e-12)

    def test_needs_uniform_outage(self):
        with pytest.raises(BoundPreconditionError):
            corollary1_rhs(_inputs(q=[0.1, 0.2, 0.3]))

    def test_more_effective_clients_shrink_every_term(self):
        few = corollary1_rhs(_inputs(N=4, K=2, M=256, J=1.0))
        many = corollary1_rhs(_inputs(N=4, K=4, M=256, J=1.0))
        for term in ("sgd_variance", "quantization", "heterogeneity"):
            assert many.terms[term] < few.terms[term]

    def test_only_initial_gap_left(self):
        bound = corollary1_rhs(_inputs(J=0.0, D=0.0, sigma_sq=0.0))
        assert bound.total == bound.terms["initial_gap"]

    def test_selected_set_average(self):
        inputs = _inputs(J=1.0)
        bound = corollary1_rhs(inputs, selected_qe=np.ones(64))
        assert bound.name == "corollary2"
        assert bound.total == pytest.approx(corollary1_rhs(inputs).total)

    def test_selected_set_average_length(self):
        with pytest.raises(ParameterError):
            corollary1_rhs(_inputs(), selected_qe=np.ones(3))


class TestTheorem2:
    def test_no_spread_and_uniform_outage(self):
        inputs = _inputs(q=0.1)
        bound = theorem2_rhs(inputs, np.zeros(64), np.zeros(64), 0.1)
        assert bound.terms["a"] == 0.0
        assert bound.terms["e"] == 0.0
        assert bound.terms["d"] == pytest.approx(0.0, abs=1e-15)

    def test_per_round_length(self):
        with pytest.raises(ParameterError):
            theorem2_rhs(_inputs(), np.zeros(3), np.zeros(64), 0.1)
