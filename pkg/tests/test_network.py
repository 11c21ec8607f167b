"""
Tests for negmm.network
"""

import numpy as np
import pytest

from negmm.errors import ContractError, DomainError
from negmm.models import HeadBounds, NetworkSpec, ScoreConfig
from negmm.network import (
    ADAM_EPS,
    NetworkWeights,
    OptimizerState,
    adam_step,
    backward,
    batch_loss_of,
    forward,
    init_weights,
    layer_shapes,
    loss_and_gradient,
)
from negmm.scoring import ScoreGradient, hybrid_score_grad
from negmm.verification import FD_REL_TOL, backprop_suite, central_difference, fd_error


def test_layer_shapes(tiny_spec):
    assert layer_shapes(tiny_spec) == [(2, 4), (4, 3), (3, 6)]


def test_init_is_seeded(tiny_spec):
    a, b = init_weights(tiny_spec), init_weights(tiny_spec)
    np.testing.assert_array_equal(a.flatten(), b.flatten())
    other = init_weights(tiny_spec.model_copy(update={"seed": 4}))
    assert not np.array_equal(a.flatten(), other.flatten())


def test_initial_stds_near_one(rng):
    spec = NetworkSpec(input_dim=1, hidden_layers=[50], k_components=3, seed=0)
    params, _ = forward(init_weights(spec), rng.uniform(-2, 2, size=(200, 1)))
    assert params.stds.min() >= 0.5
    assert params.stds.max() <= 2.0


def test_head_respects_bounds_for_extreme_weights(tiny_spec, rng):
    weights = init_weights(tiny_spec)
    wild = weights.with_flat(rng.normal(0.0, 1e3, size=weights.size))
    params, _ = forward(wild, rng.normal(0.0, 10.0, size=(50, 2)))
    b = tiny_spec.bounds
    assert np.all(params.weights >= b.pi_min * (1 - 1e-12))
    np.testing.assert_allclose(params.weights.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(np.abs(params.means) <= b.m_mu)
    assert np.all(params.stds >= b.sigma_min * (1 - 1e-12))
    assert np.all(params.stds <= b.sigma_max * (1 + 1e-12))


def test_single_point_matches_batch(tiny_spec, rng):
    weights = init_weights(tiny_spec)
    x = rng.normal(size=(5, 2))
    batch, _ = forward(weights, x)
    single, _ = forward(weights, x[2])
    assert not single.is_batch
    np.testing.assert_allclose(single.means, batch.means[2], rtol=1e-14)


def test_wrong_input_dim(tiny_spec):
    with pytest.raises(ContractError):
        forward(init_weights(tiny_spec), np.zeros((3, 5)))


def test_non_finite_input(tiny_spec):
    with pytest.raises(DomainError):
        forward(init_weights(tiny_spec), np.array([np.nan, 0.0]))


def test_flat_round_trip(tiny_spec):
    weights = init_weights(tiny_spec)
    again = weights.with_flat(weights.flatten())
    np.testing.assert_array_equal(again.flatten(), weights.flatten())
    with pytest.raises(ContractError):
        weights.with_flat(np.zeros(weights.size + 1))


def test_record_round_trip(tiny_spec):
    weights = init_weights(tiny_spec)
    back = NetworkWeights.from_record(tiny_spec, weights.to_record())
    np.testing.assert_array_equal(back.flatten(), weights.flatten())


def test_trace_cannot_be_reused(tiny_spec, rng):
    weights = init_weights(tiny_spec)
    x, y = rng.normal(size=(4, 2)), rng.normal(size=4)
    params, trace = forward(weights, x)
    upstream = hybrid_score_grad(params, y, ScoreConfig(eta=0.5))
    backward(weights, trace, upstream)
    with pytest.raises(ContractError):
        backward(weights, trace, upstream)


def test_upstream_shape_mismatch(tiny_spec, rng):
    weights = init_weights(tiny_spec)
    _, trace = forward(weights, rng.normal(size=(4, 2)))
    bad = ScoreGradient(np.zeros((3, 2)), np.zeros((3, 2)), np.zeros((3, 2)))
    with pytest.raises(ContractError):
        backward(weights, trace, bad)


@pytest.mark.parametrize("eta", [0.0, 0.5, 1.0])
def test_backprop_matches_finite_differences(tiny_spec, rng, eta):
    weights = init_weights(tiny_spec)
    weights = weights.with_flat(weights.flatten() + rng.normal(0.0, 0.2, size=weights.size))
    x, y = rng.normal(size=(6, 2)), rng.normal(size=6)
    cfg = ScoreConfig(eta=eta)
    _, grads = loss_and_gradient(weights, x, y, cfg)
    numeric = central_difference(
        lambda v: batch_loss_of(weights.with_flat(v), x, y, cfg), weights.flatten(), np.full(weights.size, 1e-5)
    )
    assert fd_error(grads.flatten(), numeric).max() < FD_REL_TOL


def test_relu_network_gradient(rng):
    spec = NetworkSpec(input_dim=3, hidden_layers=[5], activation="relu", k_components=2, seed=11)
    weights = init_weights(spec)
    x, y = rng.normal(size=(4, 3)), rng.normal(size=4)
    cfg = ScoreConfig(eta=0.3)
    _, grads = loss_and_gradient(weights, x, y, cfg)
    numeric = central_difference(
        lambda v: batch_loss_of(weights.with_flat(v), x, y, cfg), weights.flatten(), np.full(weights.size, 1e-6)
    )
    assert fd_error(grads.flatten(), numeric).max() < FD_REL_TOL


def test_backprop_suite_on_random_networks(rng):
    result = backprop_suite(5, rng)
    assert result.passed, result.worst


def test_first_adam_step_moves_by_learning_rate(tiny_spec, rng):
    weights = init_weights(tiny_spec)
    x, y = rng.normal(size=(4, 2)), rng.normal(size=4)
    _, grads = loss_and_gradient(weights, x, y, ScoreConfig(eta=0.5))
    updated, state = adam_step(weights, grads, OptimizerState.initial(weights), lr=0.01)
    g = grads.flatten()
    expected = weights.flatten() - 0.01 * g / (np.abs(g) + ADAM_EPS)
    np.testing.assert_allclose(updated.flatten(), expected, rtol=1e-12, atol=1e-15)
    assert state.step == 1


def test_adam_rejects_non_finite_gradient(tiny_spec, rng):
    weights = init_weights(tiny_spec)
    _, grads = loss_and_gradient(weights, rng.normal(size=(2, 2)), rng.normal(size=2), ScoreConfig())
    grads.layers[0].bias[0] = np.nan
    with pytest.raises(DomainError):
        adam_step(weights, grads, OptimizerState.initial(weights), lr=0.01)


def test_sigma_bias_with_degenerate_range():
    spec = NetworkSpec(input_dim=1, hidden_layers=[3], bounds=HeadBounds(sigma_min=0.5, sigma_max=0.5))
    params, _ = forward(init_weights(spec), np.zeros((2, 1)))
    np.testing.assert_allclose(params.stds, 0.5)
