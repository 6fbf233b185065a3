import numpy as np
import pytest

from fedtoe.core import channel
from fedtoe.core.verification import check_outage_target, check_participation, run_verification
from fedtoe.schemas.reports import Report


@pytest.fixture
def quick_config(small_config, configure):
    return configure(small_config, "verify", outage_draws=20_000)


class TestOutageTarget:
    def test_passes_with_the_effective_gain(self, quick_config):
        report = Report(title="outage")
        check_outage_target(report, quick_config, np.random.default_rng(0))
        assert report.passed
        assert len(report.checks) == 2

    def test_catches_a_wrong_effective_gain(self, quick_config):
        report = Report(title="outage")

        def flipped(d, q_max, params):
            return channel.theta(d, 1.0 - q_max, params)

        check_outage_target(report, quick_config, np.random.default_rng(0), theta_fn=flipped)
        assert not report.passed
        assert all(not check.passed for check in report.checks)

    def test_report_rendering(self):
        report = Report(title="demo")
        report.add("first", 0.1, 1.0, True)
        report.add("second", 2.0, 1.0, False, "detail")
        text = report.render()
        assert text.splitlines()[0] == "# demo: FAIL"
        assert "second | measured=2 | tolerance=1 | FAIL | detail" in text
        assert [check.name for check in report.failures()] == ["second"]


class TestParticipation:
    def test_every_size_on_the_grid_agrees(self, small_config, configure):
        config = configure(small_config, "verify", stats_trials=20_000)
        report = Report(title="participation")
        check_participation(report, config, np.random.default_rng(0))
        assert report.passed, report.render()
        k_checks = [check.name for check in report.checks if check.name.startswith("k_bar enumeration")]
        assert k_checks == [f"k_bar enumeration vs Monte Carlo, N={N} K={K}" for N in (2, 3, 4) for K in (2, 3)]


@pytest.mark.slow
class TestFullVerification:
    def test_every_check_passes(self, small_config):
        report = run_verification(small_config)
        assert report.passed, report.render()
        assert len(report.checks) > 10

    def test_wrong_effective_gain_fails_the_run(self, small_config):
        report = run_verification(small_config, theta_fn=lambda d, q, params: channel.theta(d, 1 - q, params))
        assert not report.passed
