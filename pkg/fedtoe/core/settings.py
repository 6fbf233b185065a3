# fedtoe/core/settings.py

import logging
import sys
from functools import lru_cache
from pathlib import Path
from typing import Any, Literal

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

if sys.version_info >= (3, 11):
    _level_names = logging.getLevelNamesMapping
else:
    def _level_names() -> dict[str, int]:
        return dict(logging._nameToLevel)

import tomli_w
from pydantic import BaseModel, ConfigDict, Field, field_serializer, field_validator, model_validator
from pydantic_settings import BaseSettings, PydanticBaseSettingsSource, SettingsConfigDict, TomlConfigSettingsSource

from fedtoe.core.errors import ParameterError
from fedtoe.core.units import Hertz, Meters, Seconds, Watts
from fedtoe.schemas.channel import ChannelParams

logger = logging.getLogger(__name__)

SCHEME_KINDS = ("fedtoe-offline", "fedtoe-online", "baseline1", "baseline2", "baseline3", "ideal")


class SchemeSpec(BaseModel):
    """A transmission scheme, written ``kind`` or ``kind:bits`` in config files"""

    model_config = ConfigDict(frozen=True)

    kind: Literal["fedtoe-offline", "fedtoe-online", "baseline1", "baseline2", "baseline3", "ideal"]
    bits: int | None = Field(default=None, ge=1)

    @model_validator(mode="before")
    @classmethod
    def _from_string(cls, value: Any) -> Any:
        if isinstance(value, str):
            kind, _, bits = value.strip().lower().partition(":")
            return {"kind": kind, "bits": int(bits) if bits else None}
        return value

    @model_validator(mode="after")
    def _bits_for_fixed_levels(self) -> "SchemeSpec":
        if self.kind in ("baseline1", "baseline2") and self.bits is None:
            raise ValueError(f"{self.kind} needs a fixed level, e.g. '{self.kind}:10'")
        return self

    @property
    def name(self) -> str:
        return f"{self.kind}:{self.bits}" if self.bits is not None else self.kind


class SeedConfig(BaseModel):
    sampling: int = 1
    sgd: int = 2
    quantizer: int = 3
    channel: int = 4

    @classmethod
    def from_root(cls, seed: int) -> "SeedConfig":
        return cls(sampling=seed, sgd=seed + 1, quantizer=seed + 2, channel=seed + 3)


class ScenarioSection(BaseModel):
    num_clients: int = Field(default=100, ge=1)
    radius_m: Meters = Field(default=600.0, gt=0)
    min_distance_m: Meters = Field(default=1.0, gt=0)
    task: Literal["quadratic", "logistic"] = "quadratic"
    partition: Literal["iid", "noniid"] = "noniid"
    samples_per_client: int = Field(default=60, ge=1)
    seed: int = 0

    # quadratic task
    dim: int = Field(default=20, ge=1)
    heterogeneity: float = Field(default=1.0, ge=0)
    noise_std: float = Field(default=0.5, ge=0)
    curvature_spread: float = Field(default=0.0, ge=0, lt=1)

    # logistic task
    classes: int = Field(default=10, ge=2)
    classes_per_client: int = Field(default=2, ge=1)
    feature_dim: int = Field(default=20, ge=1)
    separation: float = Field(default=3.0, gt=0)
    test_samples: int = Field(default=1000, ge=1)


class AllocatorSection(BaseModel):
    q_max: float = Field(default=0.1, gt=0, le=0.5)
    tau_max: Seconds = Field(default=0.05, gt=0)
    w_total: Hertz = Field(default=20e6, gt=0)
    p_max: Watts = Field(default=0.1, gt=0)
    m: int = Field(default=23860, ge=1)
    mu: int = Field(default=0, ge=0)
    payload_model: Literal["layered", "compact"] = "layered"
    n_min: int = Field(default=4, ge=0)
    n_max: int = Field(default=4, ge=0)
    b_min: int = Field(default=64, ge=0)
    b_max: int = Field(default=64, ge=0)
    max_iters: int = Field(default=500, ge=1)
    tol: float = Field(default=1e-10, gt=0)
    ceiling_factor: float = Field(default=1e6, gt=1)
    # per-client objective weights; equal when omitted
    weights: list[float] | None = None

    @property
    def effective_mu(self) -> int:
        """Overhead on top of m*B bits: sign bits and range limits under the layered model"""
        if self.payload_model == "layered":
            return self.m + self.n_min * self.b_min + self.n_max * self.b_max
        return self.mu


class SimConfig(BaseModel):
    K: int = Field(default=10, ge=1)
    E: int = Field(default=5, ge=1)
    M: int = Field(default=500, ge=1)
    gamma: float = Field(default=0.05, gt=0)
    b: int = Field(default=128, ge=1)
    schemes: list[SchemeSpec] = Field(
        default_factory=lambda: [SchemeSpec(kind="fedtoe-offline"), SchemeSpec(kind="baseline1", bits=5),
                                 SchemeSpec(kind="baseline3"), SchemeSpec(kind="ideal")]
    )
    # Baseline 2 selection probabilities; p (partial) or 1 (full) when omitted
    p_hat: list[float] | None = None
    seeds: SeedConfig = Field(default_factory=SeedConfig)
    retransmit_cap: int = Field(default=10_000, ge=1)
    channel_mode: Literal["bernoulli", "shadowing"] = "bernoulli"
    retransmission: Literal["resend", "requantize"] = "resend"
    participation: Literal["partial", "full"] = "partial"
    scheduling: Literal["offline", "online"] = "offline"
    # layer-like range groups the update vector is split into
    range_groups: int = Field(default=4, ge=1)
    record_trajectory: bool = False

    @field_serializer("schemes")
    def _schemes_as_strings(self, schemes: list[SchemeSpec]) -> list[str]:
        return [scheme.name for scheme in schemes]


class SweepSection(BaseModel):
    parameter: Literal["tau_max", "sigma_db"] = "tau_max"
    values: list[float | str] = Field(default_factory=lambda: ["40 ms", "50 ms", "100 ms", "200 ms"])
    # fixed training time; rounds per point become floor(tau_total / tau_max)
    tau_total: Seconds | None = None
    workers: int = Field(default=1, ge=1)

    def numeric_values(self) -> list[float]:
        from fedtoe.core.units import parse_quantity

        if self.parameter == "tau_max":
            return [parse_quantity(value, "time") for value in self.values]
        return [float(value) for value in self.values]


class VerifySection(BaseModel):
    seed: int = 7
    quantizer_vectors: int = Field(default=4, ge=1)
    quantizer_dim: int = Field(default=50, ge=1)
    quantizer_draws: int = Field(default=20_000, ge=100)
    outage_draws: int = Field(default=200_000, ge=1000)
    stats_trials: int = Field(default=400_000, ge=10_000)
    delay_episodes: int = Field(default=100_000, ge=1000)
    grid_points: int = Field(default=2000, ge=10)
    convexity_grid: int = Field(default=200, ge=3)
    gradient_points: int = Field(default=50, ge=1)


class OutputSection(BaseModel):
    directory: Path = Path("results")
    svg: bool = True

    @field_serializer("directory")
    def _path_as_string(self, directory: Path) -> str:
        return str(directory)


class ExperimentConfig(BaseSettings):
    """Experiment configuration"""

    scenario: ScenarioSection = Field(default_factory=ScenarioSection)
    channel: ChannelParams = Field(default_factory=ChannelParams)
    allocator: AllocatorSection = Field(default_factory=AllocatorSection)
    sim: SimConfig = Field(default_factory=SimConfig)
    sweep: SweepSection = Field(default_factory=SweepSection)
    verify: VerifySection = Field(default_factory=VerifySection)
    output: OutputSection = Field(default_factory=OutputSection)
    log_level: str = "INFO"

    model_config = SettingsConfigDict(
        env_prefix="FEDTOE_",
        env_nested_delimiter="__",
        extra="forbid",
    )

    @field_validator("log_level")
    @classmethod
    def _known_level(cls, value: str) -> str:
        if value.upper() not in _level_names():
            raise ValueError(f"unknown log level {value!r}")
        return value.upper()

    @classmethod
    def settings_customise_sources(
        cls,
        settings_cls: type[BaseSettings],
        init_settings: PydanticBaseSettingsSource,
        env_settings: PydanticBaseSettingsSource,
        dotenv_settings: PydanticBaseSettingsSource,
        file_secret_settings: PydanticBaseSettingsSource,
    ) -> tuple[PydanticBaseSettingsSource, ...]:
        # environment overrides the file; explicit keyword arguments override both
        return init_settings, env_settings, TomlConfigSettingsSource(settings_cls)

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return self.model_copy(
            update={
                "scenario": self.scenario.model_copy(update={"seed": seed}),
                "sim": self.sim.model_copy(update={"seeds": SeedConfig.from_root(seed)}),
            }
        )


def load_config(path: str | Path | None = None) -> ExperimentConfig:
    """Read a TOML experiment file, falling back to built-in defaults when ``path`` is None"""
    if path is None:
        return ExperimentConfig()
    path = Path(path)
    if not path.is_file():
        raise ParameterError(f"config file {path} not found")

    class _FileConfig(ExperimentConfig):
        model_config = SettingsConfigDict(toml_file=path)

    try:
        loaded = _FileConfig()
    except tomllib.TOMLDecodeError as e:
        raise ParameterError(f"{path}: {e}") from e
    logger.debug(f"Loaded experiment config from {path}")
    return ExperimentConfig.model_validate(loaded.model_dump())


def dump_config(config: ExperimentConfig) -> str:
    return tomli_w.dumps(config.model_dump(mode="json", exclude_none=True))


def parse_config_text(text: str) -> ExperimentConfig:
    return ExperimentConfig.model_validate(tomllib.loads(text))


@lru_cache()
def get_settings() -> ExperimentConfig:
    """Get cached default configuration"""
    return ExperimentConfig()
