"""
Tests for negmm.model_io
"""

import json

import numpy as np
import pytest

from negmm.errors import DataError, SchemaError
from negmm.mixture import predictive_moments
from negmm.model_io import (
    MODEL_FORMAT_VERSION,
    TrainedModel,
    load_model,
    objective_tag,
    predict_params,
    save_model,
)
from negmm.models import NetworkSpec
from negmm.network import init_weights


@pytest.fixture
def model(small_toy):
    spec = NetworkSpec(input_dim=1, hidden_layers=[5], k_components=2, seed=8)
    return TrainedModel(init_weights(spec), small_toy.standardization, eta=0.3)


@pytest.mark.parametrize("eta,tag", [(1.0, "nll"), (0.0, "energy"), (0.5, "hybrid")])
def test_objective_tag(eta, tag):
    assert objective_tag(eta) == tag


def test_round_trip_predicts_identically(model, small_toy, tmp_path):
    path = save_model(model, tmp_path / "m" / "model.json")
    back = load_model(path)
    x, _ = small_toy.raw("test")
    a, b = predict_params(model, x), predict_params(back, x)
    np.testing.assert_array_equal(a.means, b.means)
    np.testing.assert_array_equal(a.stds, b.stds)
    assert back.eta == 0.3 and back.objective == "hybrid"


def test_file_carries_version_and_objective(model, tmp_path):
    record = json.loads(save_model(model, tmp_path / "model.json").read_text())
    assert record["version"] == MODEL_FORMAT_VERSION
    assert record["objective"] == "hybrid"
    assert record["spec"]["k_components"] == 2


def test_version_mismatch(model, tmp_path):
    path = save_model(model, tmp_path / "model.json")
    record = json.loads(path.read_text())
    record["version"] = MODEL_FORMAT_VERSION + 1
    path.write_text(json.dumps(record))
    with pytest.raises(SchemaError):
        load_model(path)


def test_malformed_record(model, tmp_path):
    record = model.to_record()
    del record["layers"]
    with pytest.raises(SchemaError):
        TrainedModel.from_record(record)


def test_missing_and_corrupt_files(tmp_path):
    with pytest.raises(DataError):
        load_model(tmp_path / "absent.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(DataError):
        load_model(bad)


def test_predictions_are_in_original_units(model, small_toy):
    x, _ = small_toy.raw("test")
    stats = small_toy.standardization
    params = predict_params(model, x)
    assert np.all(params.stds >= model.spec.bounds.sigma_min * stats.target_std * (1 - 1e-12))
    summary = predictive_moments(params)
    assert np.all(np.isfinite(summary.mean))
    assert params.batch_shape == (20,)


def test_dimension_mismatch(model):
    with pytest.raises(SchemaError):
        predict_params(model, np.zeros((3, 2)))
