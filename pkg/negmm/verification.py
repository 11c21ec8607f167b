"""
Numerical verification suites

Each suite draws random cases, compares an analytic quantity with an
independent oracle (central finite differences, Monte Carlo, asymptotic
expansions) and reports the worst error against its tolerance.
"""

import logging
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional

import numpy as np
import pandas as pd

from .mixture import MixtureParams
from .models import HeadBounds, NetworkSpec, ScoreConfig
from .network import batch_loss_of, init_weights, loss_and_gradient
from .scoring import (
    ScoreGradient,
    energy_distance,
    energy_score_analytic,
    energy_score_grad,
    energy_score_monte_carlo,
    expected_score_gap,
    log_score,
    log_score_grad,
    taylor_expansions,
)

logger = logging.getLogger(__name__)

FD_REL_TOL = 1e-4
FD_ABS_FLOOR = 1e-7
FD_STEP = 1e-5
ORACLE_DRAWS = 200_000
ORACLE_Z = 4.0
ORACLE_MIN_PASS = 0.99
TAYLOR_SIGMA = 1e4
TAYLOR_REL_TOL = 0.01
PROPERNESS_DRAWS = 100_000
PROPERNESS_Z = 4.0
ETA_CHOICES = (0.0, 0.2, 0.5, 0.8, 1.0)

ScoreFn = Callable[[MixtureParams, float], float]
GradFn = Callable[[MixtureParams, float], ScoreGradient]


@dataclass
class SuiteResult:
    """Worst error of one suite and whether it stayed within tolerance"""

    name: str
    cases: int
    max_error: float
    tolerance: float
    passed: bool
    failures: int = 0
    worst: Dict[str, Any] = field(default_factory=dict)

    def row(self) -> Dict[str, Any]:
        return {
            "suite": self.name,
            "cases": self.cases,
            "max_error": self.max_error,
            "tolerance": self.tolerance,
            "failures": self.failures,
            "passed": self.passed,
        }


@dataclass
class GradcheckReport:
    seed: int
    results: List[SuiteResult]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame([r.row() for r in self.results])

    def failing(self) -> List[SuiteResult]:
        return [r for r in self.results if not r.passed]


# ----------------------------------------------------------------------
# Case generation
# ----------------------------------------------------------------------

def random_mixture(
    rng: np.random.Generator,
    k: Optional[int] = None,
    sigma_range: tuple = (0.1, 10.0),
    concentration: float = 2.0,
) -> MixtureParams:
    """K in 1..5, symmetric Dirichlet weights, N(0, 9) means, log-uniform stds"""
    k = int(rng.integers(1, 6)) if k is None else k
    weights = rng.dirichlet(np.full(k, concentration))
    means = rng.normal(0.0, 3.0, size=k)
    stds = np.exp(rng.uniform(np.log(sigma_range[0]), np.log(sigma_range[1]), size=k))
    return MixtureParams(weights, means, stds)


def random_target(rng: np.random.Generator, params: MixtureParams, spread: float = 5.0) -> float:
    """A point within +-spread stds of a randomly chosen component mean"""
    j = int(rng.integers(params.k))
    return float(params.means[j] + rng.uniform(-spread, spread) * params.stds[j])


def _describe(params: MixtureParams, y: float, **extra: Any) -> Dict[str, Any]:
    return {
        "weights": params.weights.tolist(),
        "means": params.means.tolist(),
        "stds": params.stds.tolist(),
        "y": y,
        **extra,
    }


def central_difference(fn: Callable[[np.ndarray], float], theta: np.ndarray, steps: np.ndarray) -> np.ndarray:
    """Centered-difference gradient of fn at theta, one coordinate at a time"""
    flat = np.asarray(theta, dtype=float).ravel()
    h = np.broadcast_to(steps, theta.shape).ravel()
    grad = np.zeros_like(flat)
    for j in range(flat.size):
        x = flat.copy()
        x[j] = flat[j] + h[j]
        f_plus = fn(x.reshape(theta.shape))
        x[j] = flat[j] - h[j]
        f_minus = fn(x.reshape(theta.shape))
        grad[j] = (f_plus - f_minus) / (2.0 * h[j])
    return grad.reshape(theta.shape)


def fd_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    """Relative error with an absolute floor: <= FD_REL_TOL means within tolerance"""
    return np.abs(analytic - numeric) / np.maximum(np.abs(numeric), FD_ABS_FLOOR / FD_REL_TOL)


# ----------------------------------------------------------------------
# Suites
# ----------------------------------------------------------------------

def finite_difference_suite(
    score_fn: ScoreFn,
    score_grad: GradFn,
    cases: int,
    rng: np.random.Generator,
    name: str = "finite_difference",
) -> SuiteResult:
    """Partial derivatives w.r.t. (weights, means, stds) against central differences"""
    worst_err, worst, failures = 0.0, {}, 0
    for case in range(cases):
        params = random_mixture(rng)
        y = random_target(rng, params)
        theta = np.stack([params.weights, params.means, params.stds])
        steps = FD_STEP * np.stack([params.weights, params.stds, params.stds])

        def fn(t: np.ndarray) -> float:
            return float(score_fn(MixtureParams.unchecked(t[0], t[1], t[2]), y))

        numeric = central_difference(fn, theta, steps)
        analytic = score_grad(params, y).as_array()
        err = fd_error(analytic, numeric)
        case_err = float(err.max())
        if case_err > FD_REL_TOL:
            failures += 1
        if case_err >= worst_err:
            row, col = np.unravel_index(int(err.argmax()), err.shape)
            worst_err = case_err
            worst = _describe(params, y, case=case, parameter=("weight", "mean", "std")[row], component=int(col),
                              analytic=float(analytic[row, col]), numeric=float(numeric[row, col]))
    return SuiteResult(name, cases, worst_err, FD_REL_TOL, failures == 0, failures, worst)


def oracle_suite(cases: int, m: int, rng: np.random.Generator) -> SuiteResult:
    """Closed-form energy score against the Monte Carlo estimate, in standard errors"""
    worst_z, worst, failures = 0.0, {}, 0
    for case in range(cases):
        params = random_mixture(rng)
        y = random_target(rng, params)
        analytic = float(energy_score_analytic(params, y))
        estimate, se = energy_score_monte_carlo(params, y, m, rng)
        z = abs(analytic - estimate) / se if se > 0 else np.inf
        if z > ORACLE_Z:
            failures += 1
        if z >= worst_z:
            worst_z = z
            worst = _describe(params, y, case=case, analytic=analytic, estimate=estimate, se=se)
    allowed = int(np.floor((1.0 - ORACLE_MIN_PASS) * cases))
    return SuiteResult("mc_oracle", cases, float(worst_z), ORACLE_Z, failures <= allowed, failures, worst)


def taylor_suite(rng: np.random.Generator, cases: int = 20) -> SuiteResult:
    """
    Gradients at stds[k] = 1e4 against their large-variance expansions:
    d energy / d weight_k, d energy / d std_k and d log / d mean_k.
    """
    worst_err, worst, failures = 0.0, {}, 0
    for case in range(cases):
        base = random_mixture(rng, k=int(rng.integers(2, 6)), sigma_range=(0.5, 1.0), concentration=4.0)
        k = int(rng.integers(base.k))
        others = [j for j in range(base.k) if j != k]
        j = max(others, key=lambda i: base.weights[i])
        y = float(base.means[j] + rng.uniform(-0.5, 0.5) * base.stds[j])
        means = base.means.copy()
        means[k] = y + rng.choice([-1.0, 1.0]) * rng.uniform(1.0, 5.0)
        stds = base.stds.copy()
        stds[k] = TAYLOR_SIGMA
        params = MixtureParams(base.weights, means, stds)

        terms = taylor_expansions(params, y, k)
        e_grad = energy_score_grad(params, y)
        l_grad = log_score_grad(params, y)
        checks = {
            "energy_d_weight": (float(e_grad.d_weights[k]), terms.energy_d_weight),
            "energy_d_std": (float(e_grad.d_stds[k]), terms.energy_d_std),
            "log_d_mean": (float(l_grad.d_means[k]), terms.log_d_mean),
        }
        for label, (exact, approx) in checks.items():
            err = abs(exact - approx) / abs(approx)
            if err > TAYLOR_REL_TOL:
                failures += 1
            if err >= worst_err:
                worst_err = err
                worst = _describe(params, y, case=case, component=k, term=label, exact=exact, expansion=approx)
    return SuiteResult("taylor", cases, float(worst_err), TAYLOR_REL_TOL, failures == 0, failures, worst)


def perturb(params: MixtureParams, rng: np.random.Generator, kind: str) -> MixtureParams:
    """Shift every mean by >= 0.5 or scale every std by 1.5 or 0.5"""
    if kind == "mean":
        shift = rng.choice([-1.0, 1.0]) * rng.uniform(0.5, 1.0)
        return MixtureParams(params.weights, params.means + shift, params.stds)
    if kind == "std":
        return MixtureParams(params.weights, params.means, params.stds * rng.choice([0.5, 1.5]))
    return params


def properness_suite(pairs: int, n: int, rng: np.random.Generator) -> SuiteResult:
    """
    Expected hybrid score gap E_Q[S(F, y) - S(Q, y)] over (Q, F) pairs.

    The gap may never be significantly negative, and must be significantly
    positive whenever F is a perturbed copy of Q.
    """
    worst_margin, worst, failures = -np.inf, {}, 0
    kinds = ("none", "mean", "std", "mean", "std")
    for case in range(pairs):
        truth = random_mixture(rng, k=int(rng.integers(1, 4)), sigma_range=(0.5, 1.5))
        kind = kinds[case % len(kinds)]
        forecast = perturb(truth, rng, kind)
        eta = ETA_CHOICES[(case // len(kinds)) % len(ETA_CHOICES)]
        gap, se = expected_score_gap(forecast, truth, ScoreConfig(eta=eta), n, rng)

        # margin > 0 marks a violation
        if kind == "none":
            margin = -(gap + PROPERNESS_Z * se)
        else:
            margin = PROPERNESS_Z * se - gap if se > 0 else -gap
        if margin > 0:
            failures += 1
        if margin >= worst_margin:
            worst_margin = margin
            worst = _describe(truth, float("nan"), case=case, kind=kind, eta=eta, gap=gap, se=se,
                              forecast_means=forecast.means.tolist(), forecast_stds=forecast.stds.tolist(),
                              energy_distance=energy_distance(forecast, truth))
    return SuiteResult("properness", pairs, float(worst_margin), 0.0, failures == 0, failures, worst)


def random_network(rng: np.random.Generator) -> NetworkSpec:
    return NetworkSpec(
        input_dim=int(rng.integers(1, 4)),
        hidden_layers=[int(w) for w in rng.integers(2, 5, size=int(rng.integers(1, 3)))],
        activation="tanh",
        k_components=int(rng.integers(1, 4)),
        bounds=HeadBounds(),
        seed=int(rng.integers(2 ** 31)),
    )


def backprop_suite(cases: int, rng: np.random.Generator, batch: int = 5) -> SuiteResult:
    """Every weight gradient of the hybrid batch loss against central differences"""
    worst_err, worst, failures = 0.0, {}, 0
    for case in range(cases):
        spec = random_network(rng)
        weights = init_weights(spec)
        weights = weights.with_flat(weights.flatten() + rng.normal(0.0, 0.1, size=weights.size))
        x = rng.normal(size=(batch, spec.input_dim))
        y = rng.normal(size=batch)
        cfg = ScoreConfig(eta=float(rng.choice(ETA_CHOICES)))

        _, grads = loss_and_gradient(weights, x, y, cfg)
        analytic = grads.flatten()
        numeric = central_difference(
            lambda v: batch_loss_of(weights.with_flat(v), x, y, cfg),
            weights.flatten(),
            np.full(weights.size, FD_STEP),
        )
        err = fd_error(analytic, numeric)
        case_err = float(err.max())
        if case_err > FD_REL_TOL:
            failures += 1
        if case_err >= worst_err:
            worst_err = case_err
            worst = {"case": case, "spec": spec.model_dump(), "eta": cfg.eta, "index": int(err.argmax())}
    return SuiteResult("backprop", cases, worst_err, FD_REL_TOL, failures == 0, failures, worst)


def timing_comparison(
    rng: np.random.Generator,
    k: int = 10,
    m: int = 1000,
    repeats: int = 25,
) -> Dict[str, float]:
    """Median wall time of the closed-form vs pairwise Monte Carlo energy score"""
    params = random_mixture(rng, k=k)
    y = random_target(rng, params)
    analytic, sampled = [], []
    for _ in range(repeats):
        start = time.perf_counter()
        energy_score_analytic(params, y)
        analytic.append(time.perf_counter() - start)
        start = time.perf_counter()
        energy_score_monte_carlo(params, y, m, rng, method="pairwise")
        sampled.append(time.perf_counter() - start)
    a, s = float(np.median(analytic)), float(np.median(sampled))
    return {"analytic": a, "monte_carlo": s, "ratio": s / a}


def run_gradcheck(
    seed: int,
    cases: int,
    energy_grad: GradFn = energy_score_grad,
    oracle_draws: int = ORACLE_DRAWS,
    properness_draws: int = PROPERNESS_DRAWS,
) -> GradcheckReport:
    """
    Run every suite with independent child seeds.

    `energy_grad` replaces the energy-score gradient in the finite-difference
    suites.
    """
    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(7)]
    hybrid = ScoreConfig(eta=0.5)

    def hybrid_fn(p: MixtureParams, y: float) -> float:
        return hybrid.eta * float(log_score(p, y)) + (1.0 - hybrid.eta) * float(energy_score_analytic(p, y))

    def hybrid_grad(p: MixtureParams, y: float) -> ScoreGradient:
        return log_score_grad(p, y).scaled(hybrid.eta) + energy_grad(p, y).scaled(1.0 - hybrid.eta)

    suites = [
        ("fd_log", lambda: finite_difference_suite(log_score, log_score_grad, cases, rngs[0], "fd_log")),
        ("fd_energy", lambda: finite_difference_suite(energy_score_analytic, energy_grad, cases, rngs[1], "fd_energy")),
        ("fd_hybrid", lambda: finite_difference_suite(hybrid_fn, hybrid_grad, cases, rngs[2], "fd_hybrid")),
        ("mc_oracle", lambda: oracle_suite(cases, oracle_draws, rngs[3])),
        ("taylor", lambda: taylor_suite(rngs[4], min(cases, 20))),
        ("properness", lambda: properness_suite(cases, properness_draws, rngs[5])),
        ("backprop", lambda: backprop_suite(cases, rngs[6])),
    ]
    results = []
    for name, run in suites:
        result = run()
        level = logging.INFO if result.passed else logging.WARNING
        logger.log(level, "%s: max error %.3g (tolerance %.3g) over %d cases",
                   name, result.max_error, result.tolerance, result.cases)
        results.append(result)
    return GradcheckReport(seed, results)
