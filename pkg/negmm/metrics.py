"""
Evaluation metrics for mixture forecasts: RMSE against ground truth,
predictive NLL, interval coverage/width and component recovery
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.optimize import linear_sum_assignment

from .datasets import LabeledDataset
from .errors import DomainError
from .mixture import ArrayLike, MixtureParams, PredictiveSummary, mixture_quantile, predictive_moments
from .model_io import TrainedModel, predict_params
from .scoring import log_score

logger = logging.getLogger(__name__)


def rmse(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.sqrt(np.mean((np.asarray(a, dtype=float) - np.asarray(b, dtype=float)) ** 2)))


def _check_lengths(*arrays: np.ndarray) -> int:
    sizes = {np.shape(a)[0] if np.ndim(a) else 1 for a in arrays}
    if len(sizes) != 1:
        raise DomainError(f"Input lengths differ: {sorted(sizes)}")
    n = sizes.pop()
    if n == 0:
        raise DomainError("Metrics need at least one point")
    return n


def rmse_against_truth(
    summary: PredictiveSummary,
    true_mean: ArrayLike,
    true_std: ArrayLike,
) -> Tuple[float, float]:
    """RMSE of the predicted mean and std functions against their true values"""
    m_hat = np.atleast_1d(summary.mean)
    s_hat = np.atleast_1d(summary.std)
    m, s = np.atleast_1d(true_mean), np.atleast_1d(true_std)
    _check_lengths(m_hat, s_hat, m, s)
    return rmse(m_hat, m), rmse(s_hat, s)


def predictive_nll(params_batch: MixtureParams, y: ArrayLike, target_scale: float = 1.0) -> float:
    """
    Mean negative log predictive density.

    When params and y are in standardized units, target_scale is the target
    std used for standardizing; adding log(target_scale) reports the NLL in
    original units.
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if not params_batch.is_batch:
        raise DomainError("predictive_nll takes a batch of mixtures")
    _check_lengths(params_batch.weights, y)
    if target_scale <= 0:
        raise DomainError("target_scale must be positive")
    return float(np.mean(log_score(params_batch, y)) + np.log(target_scale))


def prediction_intervals(params_batch: MixtureParams, level: float) -> Tuple[np.ndarray, np.ndarray]:
    """Central (equal-tailed) intervals from the analytic mixture quantiles"""
    if not 0.0 < level < 1.0:
        raise DomainError(f"Interval level must lie in (0, 1), got {level}")
    lo = np.atleast_1d(mixture_quantile(params_batch, (1.0 - level) / 2.0))
    hi = np.atleast_1d(mixture_quantile(params_batch, (1.0 + level) / 2.0))
    return lo, hi


def interval_metrics(params_batch: MixtureParams, y: ArrayLike, level: float) -> Tuple[float, float]:
    """PICP (closed intervals) and MPIW"""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    _check_lengths(np.atleast_2d(params_batch.weights), y)
    lo, hi = prediction_intervals(params_batch, level)
    covered = (y >= lo) & (y <= hi)
    return float(covered.mean()), float(np.mean(hi - lo))


def component_recovery_error(fitted: MixtureParams, truth: MixtureParams) -> Tuple[float, float, float]:
    """
    RMSE of weights, means and stds after aligning fitted components to the
    true ones with a single permutation for the whole dataset.

    The permutation minimizes the mean squared distance between fitted and
    true component means.
    """
    if fitted.k != truth.k:
        raise DomainError(f"Component counts differ: fitted K={fitted.k}, truth K={truth.k}")
    fw, fm, fs = (np.atleast_2d(a) for a in (fitted.weights, fitted.means, fitted.stds))
    tw, tm, ts = (np.atleast_2d(a) for a in (truth.weights, truth.means, truth.stds))
    _check_lengths(fw, tw)

    cost = np.mean((fm[:, :, None] - tm[:, None, :]) ** 2, axis=0)
    rows, cols = linear_sum_assignment(cost)
    order = rows[np.argsort(cols)]
    return rmse(fw[:, order], tw), rmse(fm[:, order], tm), rmse(fs[:, order], ts)


def prediction_frame(
    params_batch: MixtureParams,
    level: float,
    features: Optional[np.ndarray] = None,
    feature_names: Sequence[str] = (),
) -> pd.DataFrame:
    """Per-point table of all mixture parameters, m_hat, s_hat and the interval"""
    summary = predictive_moments(params_batch)
    lo, hi = prediction_intervals(params_batch, level)
    frame = pd.DataFrame()
    if features is not None:
        for j, name in enumerate(feature_names):
            frame[name] = features[:, j]
    w, m, s = (np.atleast_2d(a) for a in (params_batch.weights, params_batch.means, params_batch.stds))
    for k in range(params_batch.k):
        frame[f"pi_{k}"] = w[:, k]
        frame[f"mu_{k}"] = m[:, k]
        frame[f"sigma_{k}"] = s[:, k]
    frame["m_hat"] = np.atleast_1d(summary.mean)
    frame["s_hat"] = np.atleast_1d(summary.std)
    frame["lo"] = lo
    frame["hi"] = hi
    return frame


@dataclass
class EvalReport:
    """Metrics of one model on one split, in original target units"""

    n: int
    level: float
    rmse_obs: float
    nll: float
    picp: float
    mpiw: float
    rmse_mean: Optional[float] = None
    rmse_std: Optional[float] = None
    pi_rmse: Optional[float] = None
    mu_rmse: Optional[float] = None
    sigma_rmse: Optional[float] = None
    per_point: pd.DataFrame = field(default_factory=pd.DataFrame, repr=False)

    def __post_init__(self):
        if not 0.0 <= self.picp <= 1.0:
            raise DomainError(f"PICP out of range: {self.picp}")
        if self.mpiw < 0:
            raise DomainError(f"MPIW must be non-negative: {self.mpiw}")

    def summary_row(self) -> Dict[str, Any]:
        """Flat record; ground-truth metrics appear only when computed"""
        row: Dict[str, Any] = {
            "n": self.n,
            "level": self.level,
            "rmse_obs": self.rmse_obs,
            "nll": self.nll,
            "picp": self.picp,
            "mpiw": self.mpiw,
        }
        for key in ("rmse_mean", "rmse_std", "pi_rmse", "mu_rmse", "sigma_rmse"):
            value = getattr(self, key)
            if value is not None:
                row[key] = value
        return row

    def per_point_frame(self) -> pd.DataFrame:
        return self.per_point


def evaluate(model: TrainedModel, data: LabeledDataset, part: str = "test", level: float = 0.95) -> EvalReport:
    """Run every applicable metric for one split"""
    x, y = data.raw(part)
    params = predict_params(model, x)
    summary = predictive_moments(params)
    picp, mpiw = interval_metrics(params, y, level)

    frame = prediction_frame(params, level, x, data.feature_names)
    frame.insert(len(data.feature_names), data.target_name, y)

    report = EvalReport(
        n=int(y.shape[0]),
        level=level,
        rmse_obs=rmse(np.atleast_1d(summary.mean), y),
        nll=predictive_nll(params, y),
        picp=picp,
        mpiw=mpiw,
        per_point=frame,
    )

    truth = data.truth(part)
    if truth is not None:
        report.rmse_mean, report.rmse_std = rmse_against_truth(summary, truth.mean, truth.std)
        if truth.components is not None:
            if truth.components.k == params.k:
                report.pi_rmse, report.mu_rmse, report.sigma_rmse = component_recovery_error(
                    params, truth.components
                )
            else:
                logger.info("Skipping component recovery: model K=%d, truth K=%d", params.k, truth.components.k)
    return report
