import pytest
from pydantic import ValidationError

from fedtoe.core.errors import ParameterError
from fedtoe.core.settings import (
    AllocatorSection,
    ExperimentConfig,
    SchemeSpec,
    SeedConfig,
    dump_config,
    load_config,
    parse_config_text,
)
from fedtoe.core.units import parse_quantity


class TestUnits:
    @pytest.mark.parametrize(
        ("value", "kind", "expected"),
        [
            ("50 ms", "time", 0.05),
            ("20 MHz", "frequency", 20e6),
            ("0.6 km", "length", 600.0),
            ("20 dBm", "power", 0.1),
            ("100 mW", "power", 0.1),
            (0.25, "time", 0.25),
            ("1e-3", "time", 1e-3),
        ],
    )
    def test_parse(self, value, kind, expected):
        assert parse_quantity(value, kind) == pytest.approx(expected)

    def test_noise_density(self):
        assert parse_quantity("-174 dBm/Hz", "psd") == pytest.approx(10 ** (-20.4), rel=1e-12)

    @pytest.mark.parametrize("value", ["50 parsecs", "fast", True])
    def test_rejects(self, value):
        with pytest.raises(ValueError):
            parse_quantity(value, "time")


class TestSchemeSpec:
    def test_from_string(self):
        spec = SchemeSpec.model_validate("Baseline1:10")
        assert (spec.kind, spec.bits) == ("baseline1", 10)
        assert spec.name == "baseline1:10"

    def test_fixed_level_schemes_need_bits(self):
        with pytest.raises(ValidationError):
            SchemeSpec.model_validate("baseline2")

    def test_unknown_kind(self):
        with pytest.raises(ValidationError):
            SchemeSpec.model_validate("fedavg")


class TestSections:
    def test_layered_overhead(self):
        section = AllocatorSection(m=100, n_min=2, n_max=2, b_min=32, b_max=32)
        assert section.effective_mu == 100 + 128

    def test_compact_overhead(self):
        assert AllocatorSection(payload_model="compact", mu=17).effective_mu == 17

    def test_seeds_from_root(self):
        assert SeedConfig.from_root(10) == SeedConfig(sampling=10, sgd=11, quantizer=12, channel=13)

    def test_q_max_range(self):
        with pytest.raises(ValidationError):
            AllocatorSection(q_max=0.6)


class TestExperimentConfig:
    def test_units_in_file(self, small_config):
        assert small_config.allocator.tau_max == pytest.approx(0.05)
        assert small_config.allocator.w_total == pytest.approx(2e6)
        assert small_config.allocator.p_max == pytest.approx(0.1)
        assert small_config.channel.n0 == pytest.approx(10 ** (-20.4))
        assert [s.name for s in small_config.sim.schemes] == ["fedtoe-offline", "baseline1:3", "baseline3", "ideal"]

    def test_dump_and_parse_agree(self, small_config):
        assert parse_config_text(dump_config(small_config)) == small_config

    def test_unknown_key(self):
        with pytest.raises(ValidationError):
            parse_config_text("bogus = 1")

    def test_unknown_log_level(self):
        with pytest.raises(ValidationError):
            parse_config_text('log_level = "chatty"')

    def test_with_seed(self, small_config):
        seeded = small_config.with_seed(21)
        assert seeded.scenario.seed == 21
        assert seeded.sim.seeds == SeedConfig.from_root(21)
        assert seeded.sim.K == small_config.sim.K

    def test_defaults_without_file(self):
        config = load_config(None)
        assert config == ExperimentConfig()
        assert config.allocator.q_max == 0.1

    def test_load_file(self, config_file):
        config = load_config(config_file)
        assert config.scenario.num_clients == 5
        assert config.sweep.tau_total == pytest.approx(0.3)

    def test_environment_overrides_file(self, config_file, monkeypatch):
        monkeypatch.setenv("FEDTOE_SIM__GAMMA", "0.01")
        monkeypatch.setenv("FEDTOE_LOG_LEVEL", "debug")
        config = load_config(config_file)
        assert config.sim.gamma == pytest.approx(0.01)
        assert config.log_level == "DEBUG"
        assert config.scenario.num_clients == 5

    def test_missing_file(self, tmp_path):
        with pytest.raises(ParameterError):
            load_config(tmp_path / "absent.toml")

    def test_malformed_file(self, tmp_path):
        path = tmp_path / "broken.toml"
        path.write_text("[sim\nK = 3\n", encoding="utf-8")
        with pytest.raises(ParameterError):
            load_config(path)
