"""
Scoring rules for Gaussian mixture forecasts

Log score, closed-form energy score, their hybrid, and the analytic partial
derivatives of each with respect to (weights, means, stds). The Monte Carlo
energy score is kept here as a verification oracle only.
"""

from collections import Counter
from dataclasses import dataclass
from typing import Literal, Tuple

import numpy as np
from scipy.special import erf, logsumexp

from .errors import DomainError
from .mixture import ArrayLike, MixtureParams, _check_y, _out, component_log_pdf, mixture_log_pdf, mixture_sample
from .models import ScoreConfig

SQRT_2 = np.sqrt(2.0)
SQRT_2_OVER_PI = np.sqrt(2.0 / np.pi)
INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)

PAIRWISE_MAX_M = 4096
PAIRWISE_CHUNK = 512
JACKKNIFE_GROUPS = 20

# Counts energy-score evaluations; eta == 1 code paths must leave it untouched.
call_counts: Counter = Counter()


@dataclass(frozen=True)
class ScoreGradient:
    """Partial derivatives of a score with respect to mixture parameters"""

    d_weights: np.ndarray
    d_means: np.ndarray
    d_stds: np.ndarray

    def __add__(self, other: "ScoreGradient") -> "ScoreGradient":
        return ScoreGradient(
            self.d_weights + other.d_weights,
            self.d_means + other.d_means,
            self.d_stds + other.d_stds,
        )

    def scaled(self, factor: float) -> "ScoreGradient":
        return ScoreGradient(self.d_weights * factor, self.d_means * factor, self.d_stds * factor)

    def as_array(self) -> np.ndarray:
        """Stacked (..., 3, K) view: weights, means, stds"""
        return np.stack([self.d_weights, self.d_means, self.d_stds], axis=-2)

    @classmethod
    def zeros_like(cls, params: MixtureParams) -> "ScoreGradient":
        z = np.zeros(params.weights.shape)
        return cls(z, z.copy(), z.copy())


def _std_pdf(t: np.ndarray) -> np.ndarray:
    return INV_SQRT_2PI * np.exp(-0.5 * t * t)


def _two_cdf_minus_one(t: np.ndarray) -> np.ndarray:
    # 2*Phi(t) - 1 == erf(t / sqrt(2)), exact near t = 0
    return erf(t / SQRT_2)


def folded_gaussian_mean(a: ArrayLike, b: ArrayLike) -> ArrayLike:
    """E|Z| for Z ~ N(a, b^2)"""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.any(~(b > 0)):
        raise DomainError("Folded Gaussian scale must be positive")
    t = a / b
    return _out(b * SQRT_2_OVER_PI * np.exp(-0.5 * t * t) + a * _two_cdf_minus_one(t))


def _pair_terms(params: MixtureParams) -> Tuple[np.ndarray, np.ndarray]:
    """Pairwise mean differences and combined scales, shape (..., K, K)"""
    diff = params.means[..., :, None] - params.means[..., None, :]
    scale = np.sqrt(params.stds[..., :, None] ** 2 + params.stds[..., None, :] ** 2)
    return diff, scale


def _energy_parts(params: MixtureParams, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    a = np.asarray(folded_gaussian_mean(params.means - y[..., None], params.stds))
    diff, scale = _pair_terms(params)
    b = np.asarray(folded_gaussian_mean(diff, scale))
    return a, b


def energy_score_analytic(params: MixtureParams, y: ArrayLike) -> ArrayLike:
    """Closed-form energy score of a Gaussian mixture, O(K^2) per point"""
    call_counts["energy_score"] += 1
    y = _check_y(y)
    a, b = _energy_parts(params, y)
    w = params.weights
    spread = np.einsum("...m,...l,...ml->...", w, w, b)
    return _out(np.sum(w * a, axis=-1) - 0.5 * spread)


def _abs_pair_sum(z: np.ndarray, method: str) -> float:
    """sum_{i,j} |z_i - z_j| over all ordered pairs"""
    m = z.shape[0]
    if method == "pairwise":
        total = 0.0
        for start in range(0, m, PAIRWISE_CHUNK):
            block = z[start:start + PAIRWISE_CHUNK]
            total += np.abs(block[:, None] - z[None, :]).sum()
        return float(total)
    zs = np.sort(z)
    rank = np.arange(1, m + 1)
    return float(2.0 * np.sum((2 * rank - m - 1) * zs))


def _energy_v_statistic(z: np.ndarray, y: float, method: str) -> float:
    m = z.shape[0]
    return float(np.mean(np.abs(z - y)) - _abs_pair_sum(z, method) / (2.0 * m * m))


def energy_score_monte_carlo(
    params: MixtureParams,
    y: float,
    m: int,
    rng: np.random.Generator,
    method: Literal["auto", "pairwise", "sorted"] = "auto",
) -> Tuple[float, float]:
    """
    Sample-based energy score with a delete-a-group jackknife standard error.

    "pairwise" evaluates the O(M^2) double sum literally; "sorted" uses the
    equivalent order-statistic identity. "auto" picks pairwise for small M.
    """
    if m < 2:
        raise DomainError("Monte Carlo energy score needs m >= 2 draws")
    if params.is_batch:
        raise DomainError("Monte Carlo energy score takes a single mixture")
    y = float(_check_y(y))
    if method == "auto":
        method = "pairwise" if m <= PAIRWISE_MAX_M else "sorted"

    z = mixture_sample(params, rng, m)
    estimate = _energy_v_statistic(z, y, method)

    groups = np.array_split(np.arange(m), min(JACKKNIFE_GROUPS, m))
    keep = np.ones(m, dtype=bool)
    leave_out = np.empty(len(groups))
    for g, idx in enumerate(groups):
        keep[idx] = False
        leave_out[g] = _energy_v_statistic(z[keep], y, method)
        keep[idx] = True
    n_groups = len(groups)
    std_error = np.sqrt((n_groups - 1) / n_groups * np.sum((leave_out - leave_out.mean()) ** 2))
    return estimate, float(std_error)


def log_score(params: MixtureParams, y: ArrayLike) -> ArrayLike:
    """Negative log predictive density"""
    return _out(-np.asarray(mixture_log_pdf(params, y)))


def hybrid_score(params: MixtureParams, y: ArrayLike, cfg: ScoreConfig) -> ArrayLike:
    """eta * log score + (1 - eta) * energy score"""
    if cfg.eta == 1.0:
        return log_score(params, y)
    if cfg.eta == 0.0:
        return energy_score_analytic(params, y)
    return _out(
        cfg.eta * np.asarray(log_score(params, y))
        + (1.0 - cfg.eta) * np.asarray(energy_score_analytic(params, y))
    )


def log_score_grad(params: MixtureParams, y: ArrayLike) -> ScoreGradient:
    """
    Gradient of the log score.

    r_k = phi_k / sum_l pi_l phi_l (no pi_k in the numerator), evaluated in
    log space so that tiny stds cannot overflow the ratio.
    """
    y = _check_y(y)
    log_phi = component_log_pdf(params, y)
    log_p = logsumexp(np.log(params.weights) + log_phi, axis=-1, keepdims=True)
    r = np.exp(log_phi - log_p)
    gamma = params.weights * r
    delta = params.means - y[..., None]
    var = params.stds ** 2
    return ScoreGradient(
        d_weights=-r,
        d_means=delta / var * gamma,
        d_stds=(1.0 / params.stds - delta ** 2 / (var * params.stds)) * gamma,
    )


def energy_score_grad(params: MixtureParams, y: ArrayLike) -> ScoreGradient:
    """Gradient of the closed-form energy score"""
    call_counts["energy_score_grad"] += 1
    y = _check_y(y)
    a, b = _energy_parts(params, y)
    w = params.weights
    diff, scale = _pair_terms(params)
    t = (params.means - y[..., None]) / params.stds
    t_pair = diff / scale

    d_weights = a - np.einsum("...kl,...l->...k", b, w)
    d_means = w * (_two_cdf_minus_one(t) - np.einsum("...kl,...l->...k", _two_cdf_minus_one(t_pair), w))
    ratio = params.stds[..., :, None] / scale
    d_stds = 2.0 * w * (_std_pdf(t) - np.einsum("...kl,...l->...k", ratio * _std_pdf(t_pair), w))
    return ScoreGradient(d_weights=d_weights, d_means=d_means, d_stds=d_stds)


def hybrid_score_grad(params: MixtureParams, y: ArrayLike, cfg: ScoreConfig) -> ScoreGradient:
    """Elementwise eta-weighted combination of the two score gradients"""
    if cfg.eta == 1.0:
        return log_score_grad(params, y)
    if cfg.eta == 0.0:
        return energy_score_grad(params, y)
    return log_score_grad(params, y).scaled(cfg.eta) + energy_score_grad(params, y).scaled(1.0 - cfg.eta)


def batch_loss(params_batch: MixtureParams, y_batch: ArrayLike, cfg: ScoreConfig) -> float:
    """Mean hybrid score over a batch (pairwise summation)"""
    y_batch = np.atleast_1d(np.asarray(y_batch, dtype=float))
    if y_batch.size == 0:
        raise DomainError("Batch loss of an empty batch")
    if not params_batch.is_batch:
        params_batch = MixtureParams.stack([params_batch])
    if len(params_batch) != y_batch.shape[0]:
        raise DomainError("params_batch and y_batch lengths differ")
    return float(np.mean(hybrid_score(params_batch, y_batch, cfg)))


def gaussian_log_score(mean: ArrayLike, std: ArrayLike, y: ArrayLike) -> ArrayLike:
    """Log score of a single Gaussian: log sigma + (y - mu)^2 / (2 sigma^2) + log sqrt(2 pi)"""
    mean, std, y = (np.asarray(v, dtype=float) for v in (mean, std, y))
    return _out(np.log(std) + (y - mean) ** 2 / (2.0 * std ** 2) + 0.5 * np.log(2.0 * np.pi))


def gaussian_log_score_grad(mean: ArrayLike, std: ArrayLike, y: ArrayLike) -> Tuple[ArrayLike, ArrayLike]:
    """(d/d mu, d/d sigma) of the single-Gaussian log score"""
    mean, std, y = (np.asarray(v, dtype=float) for v in (mean, std, y))
    return _out((mean - y) / std ** 2), _out(1.0 / std - (mean - y) ** 2 / std ** 3)


# ----------------------------------------------------------------------
# Large-variance asymptotics
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class TaylorTerms:
    """Two-term expansions of every partial derivative as stds[k] -> inf"""

    t1: float
    t2: float
    t3: float
    log_d_weight: float
    log_d_mean: float
    log_d_std: float
    energy_d_weight: float
    energy_d_mean: float
    energy_d_std: float


def taylor_expansions(params: MixtureParams, y: float, k: int) -> TaylorTerms:
    """
    Asymptotic gradients of component k for a single mixture.

    T1 is the weighted density of the other components at y; the log-score
    expansions need T1 != 0 (K >= 2).
    """
    if params.is_batch:
        raise DomainError("taylor_expansions takes a single mixture")
    y = float(_check_y(y))
    w, mu, sd = params.weights, params.means, params.stds
    others = np.arange(params.k) != k
    sigma = sd[k]

    phi_others = np.exp(component_log_pdf(params, y))[others]
    t1 = float(np.sum(w[others] * phi_others))
    gap = mu[k] - mu[others]
    t2 = float((mu[k] - y) ** 2 - np.sum(w[others] * (sd[others] ** 2 + gap ** 2)))
    t3 = float(mu[k] - y - np.sum(w[others] * gap))

    if t1 > 0:
        log_d_weight = -1.0 / (np.sqrt(2 * np.pi) * t1 * sigma) + w[k] / (2 * np.pi * t1 ** 2 * sigma ** 2)
        log_d_mean = w[k] * (mu[k] - y) / (np.sqrt(2 * np.pi) * t1 * sigma ** 3)
        log_d_std = w[k] / (np.sqrt(2 * np.pi) * t1 * sigma ** 2)
    else:
        log_d_weight = log_d_mean = log_d_std = float("nan")

    return TaylorTerms(
        t1=t1,
        t2=t2,
        t3=t3,
        log_d_weight=float(log_d_weight),
        log_d_mean=float(log_d_mean),
        log_d_std=float(log_d_std),
        energy_d_weight=float((SQRT_2 - 2) * w[k] / np.sqrt(np.pi) * sigma + t2 / (np.sqrt(2 * np.pi) * sigma)),
        energy_d_mean=float(SQRT_2_OVER_PI * t3 * w[k] / sigma),
        energy_d_std=float((SQRT_2 - 1) / np.sqrt(np.pi) * w[k] ** 2 - t2 * w[k] / (np.sqrt(2 * np.pi) * sigma ** 2)),
    )


# ----------------------------------------------------------------------
# Properness helpers
# ----------------------------------------------------------------------

def _cross_expected_abs(f: MixtureParams, q: MixtureParams) -> float:
    """E|X - Y| for independent X ~ f, Y ~ q"""
    diff = f.means[:, None] - q.means[None, :]
    scale = np.sqrt(f.stds[:, None] ** 2 + q.stds[None, :] ** 2)
    return float(np.einsum("m,l,ml->", f.weights, q.weights, np.asarray(folded_gaussian_mean(diff, scale))))


def energy_distance(f: MixtureParams, q: MixtureParams) -> float:
    """2E|X-Y| - E|X-X'| - E|Y-Y'| between two single mixtures"""
    return 2.0 * _cross_expected_abs(f, q) - _cross_expected_abs(f, f) - _cross_expected_abs(q, q)


def expected_score_gap(
    forecast: MixtureParams,
    truth: MixtureParams,
    cfg: ScoreConfig,
    n: int,
    rng: np.random.Generator,
) -> Tuple[float, float]:
    """Monte Carlo estimate and SE of E_{y~truth}[S_h(forecast, y) - S_h(truth, y)]"""
    if n < 2:
        raise DomainError("Score gap estimate needs n >= 2 draws")
    y = mixture_sample(truth, rng, n)
    gap = np.asarray(hybrid_score(forecast, y, cfg)) - np.asarray(hybrid_score(truth, y, cfg))
    return float(gap.mean()), float(gap.std(ddof=1) / np.sqrt(n))
