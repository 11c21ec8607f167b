"""
Training loop, hyperparameter grids and replicate experiments
"""

import itertools
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .config import ExperimentConfig
from .datasets import GENERATORS, LabeledDataset, combine_splits, load_csv, split_and_standardize
from .errors import DivergenceError, DomainError, NegmmError, SchemaError
from .metrics import evaluate, rmse, rmse_against_truth
from .mixture import predictive_moments
from .model_io import TrainedModel, predict_params
from .models import GridSpec, NetworkSpec, TrainConfig
from .network import NetworkWeights, OptimizerState, adam_step, batch_loss_of, init_weights, loss_and_gradient

logger = logging.getLogger(__name__)


@dataclass
class TrainReport:
    """Outcome of one training run"""

    final_weights: NetworkWeights
    train_loss_curve: List[float]
    val_loss_curve: List[float]
    best_epoch: int
    stopped_early: bool
    wall_time: float = 0.0

    def __post_init__(self):
        if len(self.train_loss_curve) != len(self.val_loss_curve):
            raise DomainError("Loss curves must have equal length")

    @property
    def epochs_run(self) -> int:
        return len(self.val_loss_curve)

    @property
    def best_val_loss(self) -> float:
        return self.val_loss_curve[self.best_epoch]

    def curve_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "epoch": np.arange(self.epochs_run),
            "train_loss": self.train_loss_curve,
            "val_loss": self.val_loss_curve,
        })

    def summary(self) -> Dict[str, Any]:
        return {
            "epochs_run": self.epochs_run,
            "best_epoch": self.best_epoch,
            "best_val_loss": self.best_val_loss,
            "final_train_loss": self.train_loss_curve[self.best_epoch],
            "stopped_early": self.stopped_early,
            "wall_time": self.wall_time,
        }


def _epoch_order(n: int, cfg: TrainConfig, epoch: int) -> np.ndarray:
    if not cfg.shuffle:
        return np.arange(n)
    return np.random.default_rng([cfg.seed, epoch]).permutation(n)


def _divergence(epoch: int, batch: int, weights: NetworkWeights, loss: float, grad: np.ndarray) -> DivergenceError:
    details = {
        "loss": loss,
        "max_abs_weight": float(np.max(np.abs(weights.flatten()))),
        "max_abs_grad": float(np.nanmax(np.abs(grad))) if np.any(np.isfinite(grad)) else float("nan"),
        "non_finite_grads": int(np.sum(~np.isfinite(grad))),
    }
    err = DivergenceError(epoch, batch, details)
    logger.error("%s %s", err.message, details)
    return err


def train(spec: NetworkSpec, data: LabeledDataset, cfg: TrainConfig) -> TrainReport:
    """
    Adam on shuffled mini-batches of the standardized train split.

    The validation hybrid loss is tracked per epoch; training stops after
    `patience` epochs without improvement and the best weights are returned.
    """
    x_tr, y_tr = data.standardized("train")
    x_val, y_val = data.standardized("val")
    if x_tr.shape[0] == 0 or x_val.shape[0] == 0:
        raise DomainError("Training needs non-empty train and validation splits")
    if x_tr.shape[1] != spec.input_dim:
        raise SchemaError(f"Network expects {spec.input_dim} features, data has {x_tr.shape[1]}")

    score = cfg.score
    weights = init_weights(spec)
    state = OptimizerState.initial(weights)
    best_weights, best_val, best_epoch = weights, np.inf, 0
    since_best = 0
    train_curve: List[float] = []
    val_curve: List[float] = []
    stopped_early = False
    n = x_tr.shape[0]
    start = time.perf_counter()

    for epoch in range(cfg.epochs_max):
        order = _epoch_order(n, cfg, epoch)
        total = 0.0
        for b, lo in enumerate(range(0, n, cfg.batch_size)):
            idx = order[lo:lo + cfg.batch_size]
            loss, grads = loss_and_gradient(weights, x_tr[idx], y_tr[idx], score)
            flat = grads.flatten()
            if not np.isfinite(loss) or not np.all(np.isfinite(flat)):
                raise _divergence(epoch, b, weights, loss, flat)
            weights, state = adam_step(weights, grads, state, cfg.learning_rate)
            total += loss * idx.size

        val_loss = batch_loss_of(weights, x_val, y_val, score)
        if not np.isfinite(val_loss):
            raise _divergence(epoch, -1, weights, val_loss, weights.flatten())
        train_curve.append(total / n)
        val_curve.append(val_loss)
        logger.debug("epoch %d train %.6f val %.6f", epoch, total / n, val_loss)

        if val_loss < best_val:
            best_weights, best_val, best_epoch = weights, val_loss, epoch
            since_best = 0
        else:
            since_best += 1
            if since_best >= cfg.patience:
                stopped_early = True
                break

    wall = time.perf_counter() - start
    logger.info(
        "Trained K=%d eta=%g lr=%g: %d epochs, best epoch %d (val %.5f)%s",
        spec.k_components, cfg.eta, cfg.learning_rate, len(val_curve), best_epoch, best_val,
        ", stopped early" if stopped_early else "",
    )
    return TrainReport(
        final_weights=best_weights,
        train_loss_curve=train_curve,
        val_loss_curve=val_curve,
        best_epoch=best_epoch,
        stopped_early=stopped_early,
        wall_time=wall,
    )


def to_model(report: TrainReport, data: LabeledDataset, cfg: TrainConfig) -> TrainedModel:
    return TrainedModel(weights=report.final_weights, standardization=data.standardization, eta=cfg.eta)


def selection_criterion(model: TrainedModel, data: LabeledDataset) -> float:
    """
    Validation criterion for grid cells, in original target units:
    RMSE(m) + RMSE(s) when ground truth is known, else RMSE of the point
    prediction against observed targets.
    """
    x, y = data.raw("val")
    summary = predictive_moments(predict_params(model, x))
    truth = data.truth("val")
    if truth is not None:
        rmse_m, rmse_s = rmse_against_truth(summary, truth.mean, truth.std)
        return rmse_m + rmse_s
    return rmse(np.atleast_1d(summary.mean), y)


# ----------------------------------------------------------------------
# Grid search
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class GridCell:
    index: int
    spec: NetworkSpec
    cfg: TrainConfig


@dataclass
class GridResult:
    """Selected configuration plus the full table of cells"""

    best_spec: NetworkSpec
    best_cfg: TrainConfig
    best_report: TrainReport
    best_model: TrainedModel
    table: pd.DataFrame


def grid_cells(spec_base: NetworkSpec, cfg_base: TrainConfig, grid: GridSpec) -> List[GridCell]:
    """Cartesian product of the grid; empty axes keep the base value"""
    etas = grid.eta or [cfg_base.eta]
    lrs = grid.learning_rate or [cfg_base.learning_rate]
    ks = grid.k or [spec_base.k_components]
    cells = []
    for i, (eta, lr, k) in enumerate(itertools.product(etas, lrs, ks)):
        spec = NetworkSpec(**{**spec_base.model_dump(), "k_components": k})
        cfg = TrainConfig(**{**cfg_base.model_dump(), "eta": eta, "learning_rate": lr})
        cells.append(GridCell(i, spec, cfg))
    if not cells:
        raise DomainError("Grid is empty")
    return cells


def _run_cell(cell: GridCell, data: LabeledDataset) -> Tuple[int, TrainReport, float]:
    report = train(cell.spec, data, cell.cfg)
    criterion = selection_criterion(to_model(report, data, cell.cfg), data)
    return cell.index, report, criterion


def _map(fn: Callable, items: Sequence[Any], jobs: int, *args: Any) -> List[Any]:
    if jobs <= 1 or len(items) <= 1:
        return [fn(item, *args) for item in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items, *(itertools.repeat(a) for a in args)))


def grid_search(
    spec_base: NetworkSpec,
    data: LabeledDataset,
    grid: GridSpec,
    cfg_base: Optional[TrainConfig] = None,
    jobs: int = 1,
) -> GridResult:
    """Train every cell and keep the one with the lowest validation criterion"""
    cfg_base = cfg_base or TrainConfig()
    cells = grid_cells(spec_base, cfg_base, grid)
    results = sorted(_map(_run_cell, cells, jobs, data), key=lambda r: r[0])

    rows = []
    best = None
    for (index, report, criterion), cell in zip(results, cells):
        rows.append({
            "cell": index,
            "eta": cell.cfg.eta,
            "learning_rate": cell.cfg.learning_rate,
            "k": cell.spec.k_components,
            "criterion": criterion,
            **report.summary(),
        })
        logger.info("Grid cell %d eta=%g lr=%g K=%d: criterion %.5f",
                    index, cell.cfg.eta, cell.cfg.learning_rate, cell.spec.k_components, criterion)
        if best is None or criterion < best[2]:
            best = (cell, report, criterion)

    cell, report, _ = best
    table = pd.DataFrame(rows)
    table["selected"] = table["cell"] == cell.index
    return GridResult(cell.spec, cell.cfg, report, to_model(report, data, cell.cfg), table)


# ----------------------------------------------------------------------
# Experiments
# ----------------------------------------------------------------------

def prepare_data(experiment: ExperimentConfig, seed: Optional[int] = None) -> LabeledDataset:
    """Build the standardized, split dataset an experiment describes"""
    d = experiment.data
    seed = d.seed if seed is None else seed
    if d.source in GENERATORS:
        return GENERATORS[d.source](d.n, seed, n_test=d.n_test)
    if d.source == "csv":
        data = load_csv(d.path, d.target_column, d.has_header)
        return split_and_standardize(data, d.ratios, seed)
    parts = [load_csv(p, d.target_column, d.has_header) for p in (d.train_path, d.val_path, d.test_path)]
    return combine_splits(*parts)


@dataclass
class RunResult:
    """A trained model, its training report and the grid table (if any)"""

    model: TrainedModel
    report: TrainReport
    spec: NetworkSpec
    cfg: TrainConfig
    grid_table: Optional[pd.DataFrame] = None


def fit_experiment(experiment: ExperimentConfig, data: LabeledDataset, jobs: int = 1) -> RunResult:
    """Single train, or a grid search when the grid has more than one cell"""
    spec = experiment.network.to_spec(data.dim)
    cfg = experiment.training
    if experiment.grid.is_trivial:
        cell = grid_cells(spec, cfg, experiment.grid)[0]
        report = train(cell.spec, data, cell.cfg)
        return RunResult(to_model(report, data, cell.cfg), report, cell.spec, cell.cfg)
    result = grid_search(spec, data, experiment.grid, cfg, jobs=jobs)
    return RunResult(result.best_model, result.best_report, result.best_spec, result.best_cfg, result.table)


def replicate_seeds(base_seed: int, r: int) -> Tuple[int, int, int]:
    """(data, init, shuffle) seeds that depend only on (base_seed, r)"""
    data_seed, init_seed, train_seed = np.random.SeedSequence([base_seed, r]).generate_state(3)
    return int(data_seed), int(init_seed), int(train_seed)


def _run_replicate(r: int, experiment: ExperimentConfig) -> Tuple[Dict[str, Any], Optional[pd.DataFrame]]:
    data_seed, init_seed, train_seed = replicate_seeds(experiment.replicates.base_seed, r)
    exp = experiment.model_copy(update={
        "network": experiment.network.model_copy(update={"seed": init_seed}),
        "training": TrainConfig(**{**experiment.training.model_dump(), "seed": train_seed}),
    })
    row: Dict[str, Any] = {"replicate": r}
    try:
        data = prepare_data(exp, data_seed)
        run = fit_experiment(exp, data)
        report = evaluate(run.model, data, exp.evaluation.split, exp.evaluation.level)
    except NegmmError as e:
        logger.warning("Replicate %d failed: %s", r, e.message)
        return {**row, "status": "failed", "error": e.message}, None

    row.update({
        "status": "ok",
        "eta": run.cfg.eta,
        "learning_rate": run.cfg.learning_rate,
        "k": run.spec.k_components,
        "epochs_run": run.report.epochs_run,
        "wall_time": run.report.wall_time,
        **report.summary_row(),
    })
    if run.spec.k_components > 1:
        comp_std = report.per_point[[f"sigma_{k}" for k in range(run.spec.k_components)]].to_numpy()
        row["sigma_min_fit"] = float(comp_std.mean(axis=0).min())
        row["sigma_max_fit"] = float(comp_std.mean(axis=0).max())
    logger.info("Replicate %d done: %s", r, {k: row[k] for k in ("rmse_obs", "nll", "picp") if k in row})
    curve = run.report.curve_frame()
    curve.insert(0, "replicate", r)
    return row, curve


SUMMARY_EXCLUDE = {"replicate", "status", "error", "n", "level"}
CURVE_COLUMNS = ["replicate", "epoch", "train_loss", "val_loss"]


@dataclass
class ReplicateSummary:
    """Per-replicate records, their mean/std summary and the loss curves of successful replicates"""

    records: pd.DataFrame
    summary: pd.DataFrame
    n_failed: int = field(default=0)
    curves: pd.DataFrame = field(default_factory=lambda: pd.DataFrame(columns=CURVE_COLUMNS))

    def summary_records(self) -> List[Dict[str, Any]]:
        return self.summary.to_dict(orient="records")


def summarize_replicates(records: pd.DataFrame) -> pd.DataFrame:
    """Mean and population std (ddof=0) of every numeric metric over successful replicates"""
    ok = records[records["status"] == "ok"] if "status" in records else records
    rows = []
    for col in ok.columns:
        if col in SUMMARY_EXCLUDE or not pd.api.types.is_numeric_dtype(ok[col]):
            continue
        values = ok[col].dropna().to_numpy(dtype=float)
        if values.size == 0:
            continue
        rows.append({"metric": col, "mean": float(values.mean()), "std": float(values.std(ddof=0)), "n": int(values.size)})
    return pd.DataFrame(rows, columns=["metric", "mean", "std", "n"])


def run_replicates(experiment: ExperimentConfig, n_reps: Optional[int] = None, jobs: int = 1) -> ReplicateSummary:
    """Repeat an experiment with independent seeds and summarize mean ± std"""
    n_reps = experiment.replicates.count if n_reps is None else n_reps
    if n_reps < 1:
        raise DomainError("n_reps must be >= 1")
    results = _map(_run_replicate, list(range(n_reps)), jobs, experiment)
    records = pd.DataFrame(sorted((row for row, _ in results), key=lambda row: row["replicate"]))
    frames = [curve for _, curve in results if curve is not None]
    curves = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=CURVE_COLUMNS)
    n_failed = int((records["status"] != "ok").sum())
    if n_failed:
        logger.warning("%d of %d replicates failed", n_failed, n_reps)
    return ReplicateSummary(records, summarize_replicates(records), n_failed, curves)
