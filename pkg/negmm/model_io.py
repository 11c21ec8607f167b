"""
Trained model files: versioned JSON holding the network spec, weights and
the standardization needed to predict in original target units
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Union

import numpy as np
from pydantic import ValidationError

from .datasets import Standardization
from .errors import DataError, SchemaError
from .mixture import MixtureParams, rescale
from .models import NetworkSpec
from .network import NetworkWeights, forward

logger = logging.getLogger(__name__)

MODEL_FORMAT_VERSION = 1


def objective_tag(eta: float) -> str:
    if eta == 1.0:
        return "nll"
    if eta == 0.0:
        return "energy"
    return "hybrid"


@dataclass(frozen=True)
class TrainedModel:
    """Network weights plus everything needed to use them on raw inputs"""

    weights: NetworkWeights
    standardization: Standardization
    eta: float
    version: int = MODEL_FORMAT_VERSION

    @property
    def spec(self) -> NetworkSpec:
        return self.weights.spec

    @property
    def objective(self) -> str:
        return objective_tag(self.eta)

    def to_record(self) -> Dict[str, Any]:
        return {
            "version": self.version,
            "objective": self.objective,
            "eta": self.eta,
            "spec": self.spec.model_dump(),
            "standardization": self.standardization.to_record(),
            "layers": self.weights.to_record(),
        }

    @classmethod
    def from_record(cls, record: Dict[str, Any]) -> "TrainedModel":
        version = record.get("version")
        if version != MODEL_FORMAT_VERSION:
            raise SchemaError(f"Unsupported model format version {version!r}")
        try:
            spec = NetworkSpec.model_validate(record["spec"])
            weights = NetworkWeights.from_record(spec, record["layers"])
            stats = Standardization.from_record(record["standardization"])
            eta = float(record["eta"])
        except (KeyError, TypeError, ValueError, ValidationError) as e:
            raise SchemaError(f"Malformed model record: {e}")
        if stats.feature_mean.shape != (spec.input_dim,):
            raise SchemaError("Model standardization does not match its input dimension")
        return cls(weights=weights, standardization=stats, eta=eta, version=version)


def save_model(model: TrainedModel, path: Union[str, Path]) -> Path:
    """Write the model as JSON; floats keep their shortest exact repr"""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(model.to_record(), indent=2) + "\n", encoding="utf-8")
    except OSError as e:
        raise DataError(f"Could not write model file {path}: {e}")
    logger.info("Saved %s model (K=%d) to %s", model.objective, model.spec.k_components, path)
    return path


def load_model(path: Union[str, Path]) -> TrainedModel:
    path = Path(path)
    try:
        record = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise DataError(f"Model file not found: {path}")
    except (OSError, json.JSONDecodeError) as e:
        raise DataError(f"Could not read model file {path}: {e}")
    return TrainedModel.from_record(record)


def predict_params(model: TrainedModel, x_raw: np.ndarray) -> MixtureParams:
    """Batched mixture parameters for raw inputs, in original target units"""
    x_raw = np.atleast_2d(np.asarray(x_raw, dtype=float))
    if x_raw.shape[1] != model.spec.input_dim:
        raise SchemaError(
            f"Model expects {model.spec.input_dim} features, data has {x_raw.shape[1]}"
        )
    stats = model.standardization
    params, _ = forward(model.weights, stats.features(x_raw))
    return rescale(params, stats.target_std, stats.target_mean)
