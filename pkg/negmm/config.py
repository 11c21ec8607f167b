"""
Configuration settings for negmm

Settings holds process-level knobs (log level, jobs, defaults for CLI
flags). ExperimentConfig is the declarative experiment file. Both read
NEGMM_* environment variables; for experiments the environment wins over
the file, which wins over the defaults below.
"""

import json

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple, Type, Union

from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings, PydanticBaseSettingsSource, SettingsConfigDict

from .errors import ConfigError
from .models import GridSpec, HeadBounds, NetworkSpec, TrainConfig

class Settings(BaseSettings):
    """Process settings with environment variable support"""

    model_config = SettingsConfigDict(
        env_prefix="NEGMM_",
        env_file=".env",
        case_sensitive=False,
        extra="ignore",
    )

    log_level: str = Field(default="INFO", description="Root log level for the negmm logger")
    debug: bool = Field(default=False, description="Show tracebacks on errors")
    jobs: int = Field(default=1, ge=1, description="Worker processes for grids and replicates")
    output_dir: str = Field(default="runs")
    level: float = Field(default=0.95, gt=0.0, lt=1.0, description="Prediction interval level")
    gradcheck_cases: int = Field(default=100, ge=1)
    seed: int = Field(default=0)


# ----------------------------------------------------------------------
# Experiment file sections
# ----------------------------------------------------------------------

class DataSection(BaseModel):
    """Where the data comes from"""

    source: Literal["ex1", "ex2", "csv", "files"] = Field(default="ex1")
    n: int = Field(default=600, ge=1, description="Training rows for the toy generators")
    n_test: int = Field(default=300, ge=1)
    path: Optional[str] = Field(default=None, description="Single CSV, split by ratios")
    train_path: Optional[str] = None
    val_path: Optional[str] = None
    test_path: Optional[str] = None
    target_column: str = Field(default="y")
    has_header: bool = Field(default=True)
    ratios: Tuple[float, float, float] = Field(default=(0.64, 0.16, 0.20))
    seed: int = Field(default=0)

    @model_validator(mode="after")
    def check_paths(self) -> "DataSection":
        if self.source == "csv" and not self.path:
            raise ValueError("data.path is required for source='csv'")
        if self.source == "files" and not (self.train_path and self.val_path and self.test_path):
            raise ValueError("data.train_path, val_path and test_path are required for source='files'")
        return self

    @field_validator("ratios")
    def validate_ratios(cls, v):
        if any(r <= 0 for r in v) or abs(sum(v) - 1.0) > 1e-9:
            raise ValueError("Split ratios must be positive and sum to 1")
        return v


class NetworkSection(BaseModel):
    """Architecture; input_dim is taken from the data"""

    hidden_layers: List[int] = Field(default=[50])
    activation: Literal["tanh", "relu"] = Field(default="tanh")
    k: int = Field(default=1, ge=1)
    bounds: HeadBounds = Field(default_factory=HeadBounds)
    seed: int = Field(default=0)

    @model_validator(mode="after")
    def check_weight_floor(self) -> "NetworkSection":
        self.bounds.check_k(self.k)
        return self

    def to_spec(self, input_dim: int) -> NetworkSpec:
        return NetworkSpec(
            input_dim=input_dim,
            hidden_layers=self.hidden_layers,
            activation=self.activation,
            k_components=self.k,
            bounds=self.bounds,
            seed=self.seed,
        )


class ReplicatesSection(BaseModel):
    count: int = Field(default=1, ge=1)
    base_seed: int = Field(default=0)


class EvaluationSection(BaseModel):
    level: float = Field(default=0.95, gt=0.0, lt=1.0)
    split: Literal["train", "val", "test"] = Field(default="test")


class OutputSection(BaseModel):
    dir: str = Field(default="runs/experiment")


class ExperimentConfig(BaseSettings):
    """A complete experiment: data, network, training, grid, replicates"""

    model_config = SettingsConfigDict(
        env_prefix="NEGMM_",
        env_nested_delimiter="__",
        case_sensitive=False,
        extra="ignore",
    )

    data: DataSection = Field(default_factory=DataSection)
    network: NetworkSection = Field(default_factory=NetworkSection)
    training: TrainConfig = Field(default_factory=TrainConfig)
    grid: GridSpec = Field(default_factory=GridSpec)
    replicates: ReplicatesSection = Field(default_factory=ReplicatesSection)
    evaluation: EvaluationSection = Field(default_factory=EvaluationSection)
    output: OutputSection = Field(default_factory=OutputSection)

    @classmethod
    def settings_customise_sources(
        cls,
        settings_cls: Type[BaseSettings],
        init_settings: PydanticBaseSettingsSource,
        env_settings: PydanticBaseSettingsSource,
        dotenv_settings: PydanticBaseSettingsSource,
        file_secret_settings: PydanticBaseSettingsSource,
    ) -> Tuple[PydanticBaseSettingsSource, ...]:
        # environment overrides values read from the experiment file
        return env_settings, init_settings

    def with_seed(self, seed: int) -> "ExperimentConfig":
        """Same experiment with every seed replaced"""
        return self.model_copy(
            update={
                "data": self.data.model_copy(update={"seed": seed}),
                "network": self.network.model_copy(update={"seed": seed}),
                "training": self.training.model_copy(update={"seed": seed}),
                "replicates": self.replicates.model_copy(update={"base_seed": seed}),
            }
        )

    def with_output(self, out: Union[str, Path]) -> "ExperimentConfig":
        return self.model_copy(update={"output": OutputSection(dir=str(out))})

    def resolved(self) -> Dict[str, Any]:
        return self.model_dump(mode="json")


def read_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    """Raw mapping from a .toml or .json experiment file"""
    path = Path(path)
    try:
        if path.suffix == ".toml":
            with path.open("rb") as f:
                return tomllib.load(f)
        if path.suffix == ".json":
            return json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"Config file not found: {path}")
    except (OSError, tomllib.TOMLDecodeError, json.JSONDecodeError) as e:
        raise ConfigError(f"Could not parse {path}: {e}")
    raise ConfigError(f"Unsupported config format {path.suffix!r} (use .toml or .json)")


def load_experiment(path: Optional[Union[str, Path]] = None) -> ExperimentConfig:
    """Resolve an experiment from a file (optional), environment and defaults"""
    values = read_config_file(path) if path is not None else {}
    try:
        return ExperimentConfig(**values)
    except ValidationError as e:
        raise ConfigError(f"Invalid experiment config: {e}")


def load_settings() -> Settings:
    try:
        return Settings()
    except ValidationError as e:
        raise ConfigError(f"Invalid NEGMM_* settings: {e}")
