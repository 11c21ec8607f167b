"""
Feed-forward mixture network with hand-written reverse mode

The final dense layer emits 3K raw outputs (logits, raw means, raw stds)
which the constrained head maps onto a MixtureParams that satisfies the
HeadBounds by construction.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Tuple

import numpy as np
from scipy.special import expit, logit, softmax

from .errors import ContractError, DomainError
from .mixture import MixtureParams
from .models import NetworkSpec, ScoreConfig
from .scoring import ScoreGradient, batch_loss, hybrid_score_grad

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

# Scale of the initial raw-std weights, keeps initial stds near 1.
HEAD_SIGMA_GAIN = 0.1


def _tanh_grad(pre: np.ndarray, act: np.ndarray) -> np.ndarray:
    return 1.0 - act * act


def _relu(pre: np.ndarray) -> np.ndarray:
    return np.maximum(pre, 0.0)


def _relu_grad(pre: np.ndarray, act: np.ndarray) -> np.ndarray:
    return (pre > 0.0).astype(float)


ACTIVATIONS = {
    "tanh": (np.tanh, _tanh_grad),
    "relu": (_relu, _relu_grad),
}


@dataclass(frozen=True)
class DenseLayer:
    """Weights of shape (fan_in, fan_out) and a bias of shape (fan_out,)"""

    weights: np.ndarray
    bias: np.ndarray


@dataclass(frozen=True)
class NetworkWeights:
    """Network parameters psi, layer by layer"""

    spec: NetworkSpec
    layers: Tuple[DenseLayer, ...]

    def __post_init__(self):
        expected = layer_shapes(self.spec)
        if len(expected) != len(self.layers):
            raise ContractError(f"Expected {len(expected)} layers, got {len(self.layers)}")
        for i, (layer, shape) in enumerate(zip(self.layers, expected)):
            if layer.weights.shape != shape or layer.bias.shape != (shape[1],):
                raise ContractError(f"Layer {i} has shape {layer.weights.shape}, expected {shape}")
            if not (np.all(np.isfinite(layer.weights)) and np.all(np.isfinite(layer.bias))):
                raise DomainError(f"Layer {i} holds non-finite entries")

    def flatten(self) -> np.ndarray:
        return np.concatenate([np.concatenate([l.weights.ravel(), l.bias]) for l in self.layers])

    def with_flat(self, vector: np.ndarray) -> "NetworkWeights":
        return NetworkWeights(self.spec, _unflatten(self.spec, vector))

    @property
    def size(self) -> int:
        return sum(l.weights.size + l.bias.size for l in self.layers)

    def to_record(self) -> List[Dict[str, Any]]:
        return [{"weights": l.weights.tolist(), "bias": l.bias.tolist()} for l in self.layers]

    @classmethod
    def from_record(cls, spec: NetworkSpec, record: List[Dict[str, Any]]) -> "NetworkWeights":
        layers = tuple(
            DenseLayer(np.array(r["weights"], dtype=float).reshape(shape), np.array(r["bias"], dtype=float))
            for r, shape in zip(record, layer_shapes(spec))
        )
        return cls(spec, layers)


@dataclass(frozen=True)
class WeightGradient:
    """dLoss/dpsi with the same layout as NetworkWeights"""

    layers: Tuple[DenseLayer, ...]

    def flatten(self) -> np.ndarray:
        return np.concatenate([np.concatenate([l.weights.ravel(), l.bias]) for l in self.layers])


@dataclass
class ForwardTrace:
    """Intermediate values kept by forward for a single backward pass"""

    inputs: List[np.ndarray]
    pre_activations: List[np.ndarray]
    logits: np.ndarray
    raw_means: np.ndarray
    raw_stds: np.ndarray
    softmax_weights: np.ndarray
    squashed_means: np.ndarray
    sigmoid_stds: np.ndarray
    consumed: bool = field(default=False)


@dataclass(frozen=True)
class OptimizerState:
    """Adam first/second moments over the flat parameter vector"""

    step: int
    first_moment: np.ndarray
    second_moment: np.ndarray

    @classmethod
    def initial(cls, weights: NetworkWeights) -> "OptimizerState":
        return cls(step=0, first_moment=np.zeros(weights.size), second_moment=np.zeros(weights.size))


def layer_shapes(spec: NetworkSpec) -> List[Tuple[int, int]]:
    widths = [spec.input_dim, *spec.hidden_layers, 3 * spec.k_components]
    return list(zip(widths[:-1], widths[1:]))


def _unflatten(spec: NetworkSpec, vector: np.ndarray) -> Tuple[DenseLayer, ...]:
    vector = np.asarray(vector, dtype=float)
    layers, offset = [], 0
    for fan_in, fan_out in layer_shapes(spec):
        w = vector[offset:offset + fan_in * fan_out].reshape(fan_in, fan_out)
        offset += fan_in * fan_out
        b = vector[offset:offset + fan_out]
        offset += fan_out
        layers.append(DenseLayer(w.copy(), b.copy()))
    if offset != vector.size:
        raise ContractError(f"Flat vector has {vector.size} entries, network needs {offset}")
    return tuple(layers)


def init_weights(spec: NetworkSpec) -> NetworkWeights:
    """
    Fan-in scaled uniform weights, zero biases.

    The raw-std biases are set so that every initial sigma is close to 1 in
    standardized target units.
    """
    rng = np.random.default_rng(spec.seed)
    shapes = layer_shapes(spec)
    layers = []
    for i, (fan_in, fan_out) in enumerate(shapes):
        limit = 1.0 / np.sqrt(fan_in)
        w = rng.uniform(-limit, limit, size=(fan_in, fan_out))
        b = np.zeros(fan_out)
        if i == len(shapes) - 1:
            k = spec.k_components
            w[:, 2 * k:] *= HEAD_SIGMA_GAIN
            b[2 * k:] = _unit_sigma_bias(spec)
        layers.append(DenseLayer(w, b))
    return NetworkWeights(spec, tuple(layers))


def _unit_sigma_bias(spec: NetworkSpec) -> float:
    lo, hi = spec.bounds.sigma_min, spec.bounds.sigma_max
    if hi == lo:
        return 0.0
    frac = np.clip((1.0 - lo) / (hi - lo), 1e-6, 1.0 - 1e-6)
    return float(logit(frac))


def forward(weights: NetworkWeights, x: np.ndarray) -> Tuple[MixtureParams, ForwardTrace]:
    """
    Map inputs to mixture parameters.

    x may be a single point (d,) or a batch (N, d); the returned params
    follow the same layout.
    """
    spec = weights.spec
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    h = np.atleast_2d(x)
    if h.ndim != 2 or h.shape[1] != spec.input_dim:
        raise ContractError(f"Expected inputs with {spec.input_dim} features, got shape {x.shape}")
    if not np.all(np.isfinite(h)):
        raise DomainError("Inputs must be finite")

    act_fn, _ = ACTIVATIONS[spec.activation]
    inputs, pres = [], []
    for layer in weights.layers[:-1]:
        inputs.append(h)
        pre = h @ layer.weights + layer.bias
        pres.append(pre)
        h = act_fn(pre)
    inputs.append(h)
    last = weights.layers[-1]
    raw = h @ last.weights + last.bias

    k, b = spec.k_components, spec.bounds
    logits, raw_means, raw_stds = raw[:, :k], raw[:, k:2 * k], raw[:, 2 * k:]
    soft = softmax(logits, axis=1)
    squashed = np.tanh(raw_means / b.m_mu)
    sig = expit(raw_stds)

    pis = (1.0 - k * b.pi_min) * soft + b.pi_min
    means = b.m_mu * squashed
    stds = b.sigma_min + (b.sigma_max - b.sigma_min) * sig

    trace = ForwardTrace(
        inputs=inputs,
        pre_activations=pres,
        logits=logits,
        raw_means=raw_means,
        raw_stds=raw_stds,
        softmax_weights=soft,
        squashed_means=squashed,
        sigmoid_stds=sig,
    )
    if single:
        return MixtureParams(pis[0], means[0], stds[0], b), trace
    return MixtureParams(pis, means, stds, b), trace


def head_backward(spec: NetworkSpec, trace: ForwardTrace, upstream: ScoreGradient) -> np.ndarray:
    """Chain a score gradient through the constrained head to the 3K raw outputs"""
    k, b = spec.k_components, spec.bounds
    g_w = np.atleast_2d(upstream.d_weights)
    g_m = np.atleast_2d(upstream.d_means)
    g_s = np.atleast_2d(upstream.d_stds)
    expected = trace.logits.shape
    if g_w.shape != expected or g_m.shape != expected or g_s.shape != expected:
        raise ContractError(f"Upstream gradient shape {g_w.shape} does not match trace {expected}")

    soft = trace.softmax_weights
    centred = g_w - np.sum(soft * g_w, axis=1, keepdims=True)
    g_logits = (1.0 - k * b.pi_min) * soft * centred
    g_raw_means = g_m * (1.0 - trace.squashed_means ** 2)
    sig = trace.sigmoid_stds
    g_raw_stds = g_s * (b.sigma_max - b.sigma_min) * sig * (1.0 - sig)
    return np.concatenate([g_logits, g_raw_means, g_raw_stds], axis=1)


def backward(weights: NetworkWeights, trace: ForwardTrace, upstream: ScoreGradient) -> WeightGradient:
    """Reverse-mode pass: dLoss/dpsi for every weight and bias"""
    if trace.consumed:
        raise ContractError("ForwardTrace was already consumed by a backward pass")
    if len(trace.inputs) != len(weights.layers):
        raise ContractError("ForwardTrace does not belong to these weights")
    spec = weights.spec
    _, act_grad = ACTIVATIONS[spec.activation]

    g = head_backward(spec, trace, upstream)
    grads: List[DenseLayer] = []
    for i in range(len(weights.layers) - 1, -1, -1):
        layer = weights.layers[i]
        h_in = trace.inputs[i]
        grads.append(DenseLayer(h_in.T @ g, g.sum(axis=0)))
        if i > 0:
            g_h = g @ layer.weights.T
            g = g_h * act_grad(trace.pre_activations[i - 1], trace.inputs[i])
    trace.consumed = True
    return WeightGradient(tuple(reversed(grads)))


def adam_step(
    weights: NetworkWeights,
    grads: WeightGradient,
    state: OptimizerState,
    lr: float,
) -> Tuple[NetworkWeights, OptimizerState]:
    """One bias-corrected Adam update"""
    g = grads.flatten()
    if g.shape != state.first_moment.shape:
        raise ContractError("Gradient and optimizer state sizes differ")
    if not np.all(np.isfinite(g)):
        raise DomainError("Non-finite gradient passed to the optimizer")

    step = state.step + 1
    m = ADAM_BETA1 * state.first_moment + (1.0 - ADAM_BETA1) * g
    v = ADAM_BETA2 * state.second_moment + (1.0 - ADAM_BETA2) * (g * g)
    m_hat = m / (1.0 - ADAM_BETA1 ** step)
    v_hat = v / (1.0 - ADAM_BETA2 ** step)
    theta = weights.flatten() - lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
    return weights.with_flat(theta), OptimizerState(step=step, first_moment=m, second_moment=v)


def loss_and_gradient(
    weights: NetworkWeights,
    x: np.ndarray,
    y: np.ndarray,
    cfg: ScoreConfig,
) -> Tuple[float, WeightGradient]:
    """Mean hybrid loss over a batch and its gradient with respect to psi"""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    params, trace = forward(weights, np.atleast_2d(x))
    loss = batch_loss(params, y, cfg)
    upstream = hybrid_score_grad(params, y, cfg).scaled(1.0 / y.shape[0])
    return loss, backward(weights, trace, upstream)


def batch_loss_of(weights: NetworkWeights, x: np.ndarray, y: np.ndarray, cfg: ScoreConfig) -> float:
    """Loss only, for validation curves and finite differences"""
    params, _ = forward(weights, np.atleast_2d(x))
    return batch_loss(params, np.atleast_1d(y), cfg)
