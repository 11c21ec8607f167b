"""
Input-dependent Gaussian mixtures

A MixtureParams holds one conditional predictive distribution (arrays of
shape (K,)) or a batch of them (shape (N, K)). Every operation here accepts
either form; y must broadcast against the batch shape.
"""

from dataclasses import dataclass
from typing import Any, Dict, Optional, Sequence, Union

import numpy as np
from scipy.special import logsumexp, ndtr

from .errors import DomainError
from .models import HeadBounds

ArrayLike = Union[float, np.ndarray]

LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)
WEIGHT_SUM_TOL = 1e-9
BOUND_RTOL = 1e-12
QUANTILE_MAX_ITER = 200
QUANTILE_CDF_TOL = 1e-12
QUANTILE_MAX_EXPANSIONS = 10


def _frozen(a: Any) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class MixtureParams:
    """Weights, means and stds of a Gaussian mixture (last axis = components)"""

    weights: np.ndarray
    means: np.ndarray
    stds: np.ndarray
    bounds: Optional[HeadBounds] = None

    def __post_init__(self):
        w, m, s = _frozen(self.weights), _frozen(self.means), _frozen(self.stds)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "stds", s)

        if w.ndim == 0 or w.shape != m.shape or w.shape != s.shape:
            raise DomainError(
                f"weights/means/stds must share a shape with a component axis, "
                f"got {w.shape}, {m.shape}, {s.shape}"
            )
        if w.shape[-1] < 1:
            raise DomainError("A mixture needs at least one component")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(m)) and np.all(np.isfinite(s))):
            raise DomainError("Mixture parameters must be finite")
        if np.any(w <= 0.0) or np.any(w > 1.0 + WEIGHT_SUM_TOL):
            raise DomainError("Mixture weights must lie in (0, 1]")
        if np.any(np.abs(w.sum(axis=-1) - 1.0) > WEIGHT_SUM_TOL):
            raise DomainError("Mixture weights must sum to 1")
        if np.any(s <= 0.0):
            raise DomainError("Component stds must be positive")

        b = self.bounds
        if b is not None:
            b.check_k(self.k)
            if np.any(w < b.pi_min * (1.0 - BOUND_RTOL)):
                raise DomainError(f"Mixture weight below pi_min={b.pi_min}")
            if np.any(s < b.sigma_min * (1.0 - BOUND_RTOL)) or np.any(s > b.sigma_max * (1.0 + BOUND_RTOL)):
                raise DomainError(f"Component std outside [{b.sigma_min}, {b.sigma_max}]")
            if np.any(np.abs(m) > b.m_mu * (1.0 + BOUND_RTOL)):
                raise DomainError(f"Component mean exceeds m_mu={b.m_mu}")

    @property
    def k(self) -> int:
        return int(self.weights.shape[-1])

    @property
    def batch_shape(self) -> tuple:
        return self.weights.shape[:-1]

    @property
    def is_batch(self) -> bool:
        return self.weights.ndim > 1

    def __len__(self) -> int:
        if not self.is_batch:
            raise TypeError("A single mixture has no length")
        return int(self.weights.shape[0])

    def point(self, i: int) -> "MixtureParams":
        """Single mixture at batch index i"""
        return MixtureParams(self.weights[i], self.means[i], self.stds[i], self.bounds)

    def permuted(self, order: Sequence[int]) -> "MixtureParams":
        """Same distribution with components relabelled"""
        idx = list(order)
        return MixtureParams(
            self.weights[..., idx], self.means[..., idx], self.stds[..., idx], self.bounds
        )

    @classmethod
    def stack(cls, items: Sequence["MixtureParams"]) -> "MixtureParams":
        """Batch a sequence of single mixtures with equal K"""
        if not items:
            raise DomainError("Cannot stack an empty sequence of mixtures")
        return cls(
            np.stack([p.weights for p in items]),
            np.stack([p.means for p in items]),
            np.stack([p.stds for p in items]),
            items[0].bounds,
        )

    @classmethod
    def unchecked(cls, weights: Any, means: Any, stds: Any) -> "MixtureParams":
        """
        Skip validation. Finite differences perturb single weights off the
        simplex; the score formulas stay well defined there.
        """
        obj = object.__new__(cls)
        object.__setattr__(obj, "weights", _frozen(weights))
        object.__setattr__(obj, "means", _frozen(means))
        object.__setattr__(obj, "stds", _frozen(stds))
        object.__setattr__(obj, "bounds", None)
        return obj

    def to_record(self) -> Dict[str, Any]:
        if self.is_batch:
            raise DomainError("to_record serializes a single mixture; use point(i)")
        return {
            "k": self.k,
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "stds": self.stds.tolist(),
        }

    @classmethod
    def from_record(cls, record: Dict[str, Any], bounds: Optional[HeadBounds] = None) -> "MixtureParams":
        params = cls(record["weights"], record["means"], record["stds"], bounds)
        if params.k != int(record["k"]):
            raise DomainError(f"Record declares k={record['k']} but holds {params.k} components")
        return params


@dataclass(frozen=True)
class PredictiveSummary:
    """Predictive mean, variance and std of a mixture"""

    mean: ArrayLike
    variance: ArrayLike
    std: ArrayLike


def _check_y(y: ArrayLike) -> np.ndarray:
    arr = np.asarray(y, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError("y must be finite")
    return arr


def _out(value: np.ndarray) -> ArrayLike:
    return float(value) if np.ndim(value) == 0 else value


def component_log_pdf(params: MixtureParams, y: ArrayLike) -> np.ndarray:
    """log phi(y; mu_k, sigma_k^2) for every component, shape (..., K)"""
    y = _check_y(y)
    z = (y[..., None] - params.means) / params.stds
    return -0.5 * z * z - np.log(params.stds) - LOG_SQRT_2PI


def mixture_log_pdf(params: MixtureParams, y: ArrayLike) -> ArrayLike:
    """Log predictive density, evaluated with log-sum-exp"""
    return _out(logsumexp(np.log(params.weights) + component_log_pdf(params, y), axis=-1))


def mixture_pdf(params: MixtureParams, y: ArrayLike) -> ArrayLike:
    """Predictive density sum_k pi_k phi(y; mu_k, sigma_k^2)"""
    return _out(np.exp(mixture_log_pdf(params, y)))


def predictive_moments(params: MixtureParams) -> PredictiveSummary:
    """Closed-form predictive mean and variance (within + between components)"""
    mean = np.sum(params.weights * params.means, axis=-1)
    spread = params.means - mean[..., None]
    variance = np.sum(params.weights * (params.stds ** 2 + spread ** 2), axis=-1)
    return PredictiveSummary(mean=_out(mean), variance=_out(variance), std=_out(np.sqrt(variance)))


def mixture_sample(params: MixtureParams, rng: np.random.Generator, n: int) -> np.ndarray:
    """
    Draw n i.i.d. values from each mixture.

    Returns shape (n,) for a single mixture and (n, N) for a batch.
    """
    if n < 0:
        raise DomainError("Sample count must be non-negative")
    shape = (n,) + params.batch_shape
    if n == 0:
        return np.empty(shape)

    cum = np.cumsum(params.weights, axis=-1)
    u = rng.random(shape)
    comp = np.minimum((u[..., None] > cum).sum(axis=-1), params.k - 1)
    z = rng.standard_normal(shape)

    mu = np.broadcast_to(params.means, shape + (params.k,))
    sd = np.broadcast_to(params.stds, shape + (params.k,))
    mu_k = np.take_along_axis(mu, comp[..., None], axis=-1)[..., 0]
    sd_k = np.take_along_axis(sd, comp[..., None], axis=-1)[..., 0]
    return mu_k + sd_k * z


def mixture_cdf(params: MixtureParams, y: ArrayLike) -> ArrayLike:
    """Predictive CDF sum_k pi_k Phi((y - mu_k) / sigma_k)"""
    y = np.asarray(y, dtype=float)
    return _out(np.sum(params.weights * ndtr((y[..., None] - params.means) / params.stds), axis=-1))


def mixture_quantile(params: MixtureParams, p: ArrayLike) -> ArrayLike:
    """
    Inverse CDF by bisection on the analytic mixture CDF.

    The bracket starts at [min mu - 10 max sigma, max mu + 10 max sigma] and is
    doubled around its centre up to 10 times for extreme p. Bisection stops
    once the CDF matches p within QUANTILE_CDF_TOL or the bracket reaches
    float resolution.
    """
    p = np.asarray(p, dtype=float)
    if np.any(~np.isfinite(p)) or np.any(p <= 0.0) or np.any(p >= 1.0):
        raise DomainError("Quantile level must lie in (0, 1)")
    p = np.broadcast_to(p, np.broadcast_shapes(p.shape, params.batch_shape))

    spread = 10.0 * params.stds.max(axis=-1)
    lo = np.broadcast_to(params.means.min(axis=-1) - spread, p.shape).copy()
    hi = np.broadcast_to(params.means.max(axis=-1) + spread, p.shape).copy()

    for _ in range(QUANTILE_MAX_EXPANSIONS + 1):
        bad = (mixture_cdf(params, lo) > p) | (mixture_cdf(params, hi) < p)
        if not np.any(bad):
            break
        centre, half = 0.5 * (lo + hi), hi - lo
        lo = np.where(bad, centre - half, lo)
        hi = np.where(bad, centre + half, hi)
    else:
        raise DomainError("Could not bracket the requested quantile")

    for _ in range(QUANTILE_MAX_ITER):
        mid = 0.5 * (lo + hi)
        cdf = np.asarray(mixture_cdf(params, mid))
        below = cdf < p
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        done = (np.abs(cdf - p) <= QUANTILE_CDF_TOL) | (hi - lo <= 2.0 * np.spacing(np.abs(mid)))
        if np.all(done):
            return _out(mid)
    return _out(0.5 * (lo + hi))


def rescale(params: MixtureParams, scale: float, shift: float = 0.0) -> MixtureParams:
    """Distribution of scale*y + shift for y ~ params (scale > 0)"""
    if scale <= 0:
        raise DomainError("Scale must be positive")
    bounds = params.bounds.rescaled(scale, shift) if params.bounds is not None else None
    return MixtureParams(params.weights, params.means * scale + shift, params.stds * scale, bounds)
