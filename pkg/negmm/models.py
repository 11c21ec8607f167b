"""
Pydantic models for the configuration records shared across negmm
"""

from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

# eta=1 (the mixture density network baseline) is never part of a preset
GRID_PRESETS: Dict[str, Dict[str, list]] = {
    "toy": {"eta": [0.0, 0.2, 0.5, 0.8], "learning_rate": [0.001, 0.005, 0.01]},
    "tabular": {
        "eta": [0.0, 0.2, 0.5, 0.8],
        "learning_rate": [1e-4, 5e-4, 1e-3, 5e-3, 1e-2],
        "k": [5, 8, 10],
    },
}


class HeadBounds(BaseModel):
    """Truncation constants of the network output head"""

    model_config = ConfigDict(frozen=True)

    m_mu: float = Field(default=1e3, gt=0, description="Bound on |mean| of every component")
    sigma_min: float = Field(default=1e-3, gt=0, description="Lower bound on component std")
    sigma_max: float = Field(default=1e3, gt=0, description="Upper bound on component std")
    pi_min: float = Field(default=1e-6, gt=0, lt=1, description="Floor on every mixture weight")

    @model_validator(mode="after")
    def check_sigma_order(self) -> "HeadBounds":
        """sigma_max must not be below sigma_min"""
        if self.sigma_max < self.sigma_min:
            raise ValueError("sigma_max must be >= sigma_min")
        return self

    def check_k(self, k: int) -> None:
        """Raise if the weight floor cannot be met by k components"""
        if self.pi_min * k > 1.0:
            raise ValueError(f"pi_min={self.pi_min} is infeasible for K={k} (pi_min*K > 1)")

    def rescaled(self, scale: float, shift: float = 0.0) -> "HeadBounds":
        """Bounds after mapping targets through y -> scale*y + shift"""
        return HeadBounds(
            m_mu=self.m_mu * scale + abs(shift),
            sigma_min=self.sigma_min * scale,
            sigma_max=self.sigma_max * scale,
            pi_min=self.pi_min,
        )


class ScoreConfig(BaseModel):
    """Weighting of the hybrid score"""

    model_config = ConfigDict(frozen=True)

    eta: float = Field(default=0.5, ge=0.0, le=1.0, description="Weight on the log score")


class NetworkSpec(BaseModel):
    """Architecture of the mixture network"""

    model_config = ConfigDict(frozen=True)

    input_dim: int = Field(..., ge=1, description="Number of input features")
    hidden_layers: List[int] = Field(default=[50], description="Hidden layer widths")
    activation: Literal["tanh", "relu"] = Field(default="tanh")
    k_components: int = Field(default=1, ge=1, description="Number of mixture components")
    bounds: HeadBounds = Field(default_factory=HeadBounds)
    seed: int = Field(default=0)

    @field_validator("hidden_layers")
    def validate_widths(cls, v):
        """Every hidden layer needs at least one unit"""
        if any(w < 1 for w in v):
            raise ValueError("Hidden layer widths must be >= 1")
        return v

    @model_validator(mode="after")
    def check_weight_floor(self) -> "NetworkSpec":
        self.bounds.check_k(self.k_components)
        return self


class TrainConfig(BaseModel):
    """Mini-batch training settings"""

    model_config = ConfigDict(frozen=True)

    eta: float = Field(default=0.5, ge=0.0, le=1.0)
    epochs_max: int = Field(default=2000, ge=1)
    batch_size: int = Field(default=32, ge=1)
    learning_rate: float = Field(default=0.005, gt=0)
    patience: int = Field(default=50, ge=1, description="Epochs without validation improvement before stopping")
    seed: int = Field(default=0)
    shuffle: bool = Field(default=True)

    @model_validator(mode="after")
    def check_patience(self) -> "TrainConfig":
        if self.patience > self.epochs_max:
            raise ValueError("patience must be <= epochs_max")
        return self

    @property
    def score(self) -> ScoreConfig:
        return ScoreConfig(eta=self.eta)


class GridSpec(BaseModel):
    """
    Hyperparameter grid; an empty list keeps the base value.

    A preset fills the axes it covers unless they are given explicitly.
    """

    model_config = ConfigDict(frozen=True)

    preset: Optional[Literal["toy", "tabular"]] = Field(default=None)
    eta: List[float] = Field(default_factory=list)
    learning_rate: List[float] = Field(default_factory=list)
    k: List[int] = Field(default_factory=list)

    @model_validator(mode="before")
    @classmethod
    def apply_preset(cls, data: Any) -> Any:
        preset = data.get("preset") if isinstance(data, dict) else None
        if preset in GRID_PRESETS:
            data = {**GRID_PRESETS[preset], **{k: v for k, v in data.items() if v}}
        return data

    @field_validator("eta")
    def validate_eta(cls, v):
        if any(e < 0.0 or e > 1.0 for e in v):
            raise ValueError("Grid eta values must lie in [0, 1]")
        return v

    @field_validator("learning_rate")
    def validate_lr(cls, v):
        if any(lr <= 0 for lr in v):
            raise ValueError("Grid learning rates must be positive")
        return v

    @field_validator("k")
    def validate_k(cls, v):
        if any(k < 1 for k in v):
            raise ValueError("Grid K values must be >= 1")
        return v

    @property
    def is_trivial(self) -> bool:
        return len(self.eta) <= 1 and len(self.learning_rate) <= 1 and len(self.k) <= 1


class RunManifest(BaseModel):
    """Reproducibility record written into every output directory"""

    command: Literal["generate", "train", "predict", "evaluate", "gradcheck"]
    config_path: Optional[str] = None
    inputs: List[str] = Field(default_factory=list)
    output_dir: str
    seed: Optional[int] = None
    version: str
    config: Dict[str, Any] = Field(default_factory=dict)
