from pathlib import Path

import numpy as np
import pytest

from fedtoe.core.scenario import Scenario, build_scenario
from fedtoe.core.settings import ExperimentConfig, parse_config_text
from fedtoe.engine.planning import build_problem
from fedtoe.schemas.allocation import AllocClient, AllocProblem, ClientLink, UplinkPlan
from fedtoe.schemas.channel import ChannelParams

SMALL_CONFIG = """
log_level = "WARNING"

[scenario]
num_clients = 5
radius_m = "300 m"
min_distance_m = "10 m"
task = "quadratic"
dim = 8
heterogeneity = 0.5
noise_std = 0.1
seed = 3

[allocator]
q_max = 0.1
tau_max = "50 ms"
w_total = "2 MHz"
p_max = "20 dBm"
m = 23860

[sim]
K = 3
E = 2
M = 6
gamma = 0.05
b = 16
range_groups = 2
schemes = ["fedtoe-offline", "baseline1:3", "baseline3", "ideal"]

[sweep]
parameter = "tau_max"
values = ["50 ms", "100 ms"]
tau_total = "0.3 s"

[output]
svg = false
"""


@pytest.fixture
def small_config() -> ExperimentConfig:
    return parse_config_text(SMALL_CONFIG)


@pytest.fixture
def config_file(tmp_path: Path) -> Path:
    path = tmp_path / "small.toml"
    path.write_text(SMALL_CONFIG, encoding="utf-8")
    return path


@pytest.fixture
def scenario(small_config) -> Scenario:
    return build_scenario(small_config)


@pytest.fixture
def problem(small_config, scenario) -> AllocProblem:
    return build_problem(small_config, scenario)


@pytest.fixture
def spread_problem() -> AllocProblem:
    """Four clients from 50 m to 450 m sharing 2 MHz"""
    return AllocProblem(
        clients=[AllocClient(id=i, d=d) for i, d in enumerate((50.0, 150.0, 300.0, 450.0))],
        w_total=2e6,
        p_max=0.1,
        tau_max=0.05,
        q_max=0.1,
        m=23860,
        mu=23860 + 512,
        channel=ChannelParams(),
    )


@pytest.fixture
def configure():
    """Copy of a config with some fields of one section replaced"""

    def _configure(config: ExperimentConfig, section: str, **values) -> ExperimentConfig:
        part = getattr(config, section).model_copy(update=values)
        return config.model_copy(update={section: part})

    return _configure


@pytest.fixture
def make_plan():
    """Hand-built plan with one link per client of a scenario"""

    def _make_plan(
        scenario: Scenario,
        q=0.0,
        b: int | None = None,
        payload_bits: int = 0,
        r: float = 1e5,
        scheme: str = "lossless",
    ) -> UplinkPlan:
        outages = np.broadcast_to(np.asarray(q, dtype=float), (len(scenario.clients),))
        links = [
            ClientLink(
                id=client.id, d=client.d, w=1e5, p=0.1, b=b, r=r, q=float(q_i), payload_bits=payload_bits
            )
            for client, q_i in zip(scenario.clients, outages)
        ]
        return UplinkPlan(scheme=scheme, links=links)

    return _make_plan
