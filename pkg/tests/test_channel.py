import numpy as np
import pytest
from pydantic import ValidationError

from fedtoe.core import channel
from fedtoe.core.errors import InfeasibleAllocationError, LinkPreconditionError, ParameterError
from fedtoe.schemas.channel import ChannelParams, LinkBudget


@pytest.fixture
def params() -> ChannelParams:
    return ChannelParams()


class TestGaussianTail:
    def test_q_function(self):
        assert channel.q_function(0.0) == pytest.approx(0.5)
        assert channel.q_function(-1.0) + channel.q_function(1.0) == pytest.approx(1.0)

    def test_q_inverse(self):
        assert channel.q_inverse(0.9) == pytest.approx(-1.2815515655446004, abs=1e-12)
        for p in (1e-6, 0.1, 0.5, 0.75):
            assert channel.q_function(channel.q_inverse(p)) == pytest.approx(p, rel=1e-12)

    @pytest.mark.parametrize("p", [0.0, 1.0, -0.2])
    def test_q_inverse_domain(self, p):
        with pytest.raises(ParameterError):
            channel.q_inverse(p)


class TestCapacity:
    def test_shannon_rate(self):
        assert channel.capacity(1e6, 3.0, 1.0, 1e-6) == pytest.approx(2e6)

    def test_rejects_zero_bandwidth(self):
        with pytest.raises(ParameterError):
            channel.capacity(0.0, 1.0, 1.0, 1.0)


class TestOutage:
    def test_increases_with_rate_and_distance(self, params):
        rates = np.array([1e5, 1e6, 4e6])
        q = channel.outage_probability(300.0, 0.1, 2e5, rates, params)
        assert np.all(np.diff(q) > 0)
        near, far = channel.outage_probability(np.array([100.0, 500.0]), 0.1, 2e5, 1e6, params)
        assert near < far

    def test_no_shadowing_is_a_step(self, params):
        still = params.model_copy(update={"sigma_db": 0.0})
        cap = float(channel.capacity(2e5, 0.1, 10 ** (channel.channel_gain_db(300.0, still) / 10), still.n0))
        assert channel.outage_probability(300.0, 0.1, 2e5, 0.9 * cap, still) == 0.0
        assert channel.outage_probability(300.0, 0.1, 2e5, 1.1 * cap, still) == 1.0

    def test_outage_prob_matches_shadowing_draws(self, params):
        link = LinkBudget(d=350.0, p=0.1, w=2e5, r=2e6)
        q = channel.outage_prob(link, params).q
        draws = channel.sample_outages(link, params, np.random.default_rng(0), size=200_000)
        assert draws.mean() == pytest.approx(q, abs=4 * np.sqrt(q * (1 - q) / draws.size))

    def test_link_budget_needs_positive_rate(self):
        with pytest.raises(ValidationError):
            LinkBudget(d=100.0, p=0.1, w=1e5, r=0.0)

    def test_unrepresentable_rate(self, params):
        with pytest.raises(LinkPreconditionError):
            channel.outage_prob(LinkBudget(d=100.0, p=0.1, w=1.0, r=1e9), params)


class TestRateCap:
    @pytest.mark.parametrize("d", [20.0, 300.0, 600.0])
    @pytest.mark.parametrize("w", [5e4, 2e5, 1e6])
    def test_rate_cap_meets_outage_target(self, params, d, w):
        theta_i = channel.theta(d, 0.1, params)
        rate = channel.rate_cap(w, theta_i, 0.1, params.n0)
        assert channel.outage_probability(d, 0.1, w, rate, params) == pytest.approx(0.1, abs=1e-8)

    def test_theta_domain(self, params):
        with pytest.raises(ParameterError):
            channel.theta(100.0, 1.0, params)

    def test_level_slope_matches_finite_difference(self, params):
        theta_i = channel.theta(300.0, 0.1, params)
        w, h = 2e5, 1.0
        level = lambda x: channel.quant_level_for_bandwidth(x, theta_i, 0.1, params.n0, 0.05, 23860, 24372)
        fd = (level(w + h) - level(w - h)) / (2 * h)
        assert channel.quant_level_slope(w, theta_i, 0.1, params.n0, 0.05, 23860) == pytest.approx(fd, rel=1e-6)


class TestBandwidthForLevel:
    @pytest.mark.parametrize("B", [1, 3, 7.5])
    def test_inverts_the_level(self, params, B):
        theta_i = channel.theta(300.0, 0.1, params)
        w = channel.bandwidth_for_level(B, theta_i, 0.1, params.n0, 0.05, 23860, 24372)
        level = channel.quant_level_for_bandwidth(w, theta_i, 0.1, params.n0, 0.05, 23860, 24372)
        assert level >= B
        assert level == pytest.approx(B, rel=1e-8)

    @pytest.mark.parametrize("d", [5.0, 50.25, 150.0, 300.0, 582.6])
    def test_never_short_of_the_level_or_the_deadline(self, params, d):
        theta_i = channel.theta(d, 0.1, params)
        supremum = channel.max_quant_level(theta_i, 0.1, params.n0, 0.05, 23860, 24372)
        for B in range(1, 21):
            if B >= supremum:
                break
            w = channel.bandwidth_for_level(B, theta_i, 0.1, params.n0, 0.05, 23860, 24372)
            level = channel.quant_level_for_bandwidth(w, theta_i, 0.1, params.n0, 0.05, 23860, 24372)
            airtime = (23860 * B + 24372) / channel.rate_cap(w, theta_i, 0.1, params.n0)
            assert level >= B
            assert airtime <= 0.05
            assert level == pytest.approx(B, rel=1e-8)

    def test_level_below_one(self, params):
        with pytest.raises(ParameterError):
            channel.bandwidth_for_level(0.5, 1e-10, 0.1, params.n0, 0.05, 23860, 0)

    def test_unreachable_level(self, params):
        theta_i = channel.theta(300.0, 0.1, params)
        supremum = channel.max_quant_level(theta_i, 0.1, params.n0, 0.05, 23860, 24372)
        with pytest.raises(InfeasibleAllocationError):
            channel.bandwidth_for_level(supremum + 1, theta_i, 0.1, params.n0, 0.05, 23860, 24372)


class TestDelay:
    def test_single_link(self):
        assert channel.avg_uplink_delay([(1e6, 1e6, 0.5)]) == pytest.approx(2.0)

    def test_slowest_link_sets_the_slot(self):
        delay = channel.avg_uplink_delay([(1e5, 1e6, 0.5), (4e5, 1e6, 0.2)])
        assert delay == pytest.approx(0.4 / (1 - 0.1))

    def test_no_link(self):
        with pytest.raises(ParameterError):
            channel.avg_uplink_delay([])

    def test_certain_outage(self):
        with pytest.raises(LinkPreconditionError):
            channel.avg_uplink_delay([(1e5, 1e6, 1.0)])

    def test_simulated_episodes(self):
        links = [(1e5, 1e6, 0.6), (2e5, 2e6, 0.3)]
        delays = channel.simulate_delay_episodes(links, np.random.default_rng(1), 100_000)
        assert delays.mean() == pytest.approx(channel.avg_uplink_delay(links), rel=0.01)
        assert np.all(np.isclose(delays / 0.1, np.round(delays / 0.1)))
