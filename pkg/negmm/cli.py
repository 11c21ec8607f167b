"""
Command-line interface for negmm

    python -m negmm generate  --example ex1 --n 600 --seed 0 --out data/ex1
    python -m negmm train     --config configs/example1.toml
    python -m negmm predict   --model runs/ex1/model.json --data data/ex1/test.csv --out pred.csv
    python -m negmm evaluate  --model runs/ex1/model.json --data data/ex1/test.csv --out runs/ex1/eval
    python -m negmm gradcheck --seed 0 --cases 100 --out runs/gradcheck

Exit codes: 0 ok, 2 config, 3 data/IO, 4 divergence, 5 verification.
"""

import argparse
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import pandas as pd
from dotenv import load_dotenv
from pydantic import ValidationError

from . import __version__
from .config import ExperimentConfig, Settings, load_experiment, load_settings
from .console import console, err_console, failure, print_table, setup_logging, success
from .datasets import GENERATORS, as_single_split, load_csv, load_features, save_csv
from .errors import ConfigError, DataError, DivergenceError, NegmmError, VerificationError
from .metrics import evaluate, prediction_frame
from .model_io import load_model, predict_params, save_model
from .models import RunManifest
from .training import fit_experiment, prepare_data, run_replicates
from .verification import ORACLE_DRAWS, PROPERNESS_DRAWS, run_gradcheck

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3

TIMING_COLUMNS = ["wall_time"]
CSV_FLOAT_FORMAT = "%.17g"


# ----------------------------------------------------------------------
# Output helpers
# ----------------------------------------------------------------------

def _out_dir(path: str) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise DataError(f"Cannot create output directory {out}: {e}")
    return out


def _write_json(path: Path, payload: Any) -> None:
    try:
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as e:
        raise DataError(f"Could not write {path}: {e}")


def _write_csv(path: Path, frame: pd.DataFrame) -> None:
    try:
        frame.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")
    except OSError as e:
        raise DataError(f"Could not write {path}: {e}")


def _write_manifest(
    out: Path,
    command: str,
    config: Dict[str, Any],
    config_path: Optional[str] = None,
    inputs: Sequence[str] = (),
    seed: Optional[int] = None,
) -> None:
    manifest = RunManifest(
        command=command,
        config_path=config_path,
        inputs=list(inputs),
        output_dir=str(out),
        seed=seed,
        version=__version__,
        config=config,
    )
    _write_json(out / "config.resolved.json", config)
    _write_json(out / "manifest.json", manifest.model_dump(mode="json"))


def _without_timing(frame: pd.DataFrame) -> pd.DataFrame:
    return frame.drop(columns=TIMING_COLUMNS, errors="ignore")


# ----------------------------------------------------------------------
# Commands
# ----------------------------------------------------------------------

def cmd_generate(args: argparse.Namespace, settings: Settings) -> int:
    """Write train/val/test CSVs of a toy example with ground-truth columns"""
    seed = settings.seed if args.seed is None else args.seed
    data = GENERATORS[args.example](args.n, seed, n_test=args.n_test)
    out = _out_dir(args.out)
    counts = {part: save_csv(data, out / f"{part}.csv", part) for part in ("train", "val", "test")}
    _write_manifest(
        out, "generate",
        {"example": args.example, "n": args.n, "n_test": args.n_test, "seed": seed},
        seed=seed,
    )
    print_table(f"{args.example} (seed {seed})", [{"split": k, "rows": v} for k, v in counts.items()])
    success(f"Wrote {sum(counts.values())} rows to {out}")
    return EXIT_OK


def _resolve_experiment(args: argparse.Namespace) -> ExperimentConfig:
    experiment = load_experiment(args.config)
    if args.seed is not None:
        experiment = experiment.with_seed(args.seed)
    if args.out is not None:
        experiment = experiment.with_output(args.out)
    return experiment


def cmd_train(args: argparse.Namespace, settings: Settings) -> int:
    """Train once, over a grid, or over replicates as the experiment file says"""
    experiment = _resolve_experiment(args)
    if args.print_config:
        console.print_json(json.dumps(experiment.resolved()))
        return EXIT_OK

    jobs = args.jobs or settings.jobs
    out = _out_dir(experiment.output.dir)
    _write_manifest(
        out, "train", experiment.resolved(), config_path=args.config,
        inputs=[p for p in (experiment.data.path, experiment.data.train_path,
                            experiment.data.val_path, experiment.data.test_path) if p],
        seed=experiment.replicates.base_seed if experiment.replicates.count > 1 else experiment.training.seed,
    )

    if experiment.replicates.count > 1:
        result = run_replicates(experiment, jobs=jobs)
        _write_csv(out / "replicates.csv", _without_timing(result.records))
        _write_csv(out / "summary.csv", result.summary)
        _write_csv(out / "loss_curves.csv", result.curves)
        if "wall_time" in result.records:
            _write_csv(out / "timing.csv", result.records[["replicate", "wall_time"]])
        print_table("Replicate summary (mean ± std)", result.summary_records())
        if result.n_failed:
            failure(f"{result.n_failed} of {experiment.replicates.count} replicates failed")
        success(f"Wrote replicate results to {out}")
        return EXIT_OK

    data = prepare_data(experiment)
    try:
        run = fit_experiment(experiment, data, jobs=jobs)
    except DivergenceError as e:
        _write_json(out / "divergence.json", {"message": e.message, **e.details})
        raise

    save_model(run.model, out / "model.json")
    _write_csv(out / "loss_curve.csv", run.report.curve_frame())
    summary = {k: v for k, v in run.report.summary().items() if k not in TIMING_COLUMNS}
    summary.update({"objective": run.model.objective, "eta": run.cfg.eta,
                    "learning_rate": run.cfg.learning_rate, "k": run.spec.k_components})
    _write_json(out / "train_report.json", summary)
    _write_json(out / "timing.json", {"wall_time": run.report.wall_time})
    if run.grid_table is not None:
        _write_csv(out / "grid.csv", _without_timing(run.grid_table))
        print_table("Grid", run.grid_table.to_dict(orient="records"),
                    columns=["cell", "eta", "learning_rate", "k", "criterion", "epochs_run", "selected"],
                    highlight="selected")

    report = evaluate(run.model, data, experiment.evaluation.split, experiment.evaluation.level)
    _write_csv(out / "eval_summary.csv", pd.DataFrame([report.summary_row()]))
    _write_csv(out / "predictions.csv", report.per_point_frame())
    print_table(f"Evaluation ({experiment.evaluation.split})", [report.summary_row()])
    success(f"Trained {run.model.objective} model in {run.report.wall_time:.1f}s, wrote {out}")
    return EXIT_OK


def cmd_predict(args: argparse.Namespace, settings: Settings) -> int:
    """Per-point mixture parameters, m_hat, s_hat and interval bounds"""
    level = settings.level if args.level is None else args.level
    model = load_model(args.model)
    x, names = load_features(args.data, drop=[args.target], has_header=not args.no_header)
    params = predict_params(model, x)
    frame = prediction_frame(params, level, x, names)
    out = Path(args.out)
    _out_dir(str(out.parent))
    _write_csv(out, frame)
    success(f"Wrote {len(frame)} predictions (K={params.k}, level={level}) to {out}")
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace, settings: Settings) -> int:
    """EvalReport of a saved model on one CSV"""
    level = settings.level if args.level is None else args.level
    model = load_model(args.model)
    data = as_single_split(load_csv(args.data, args.target, has_header=not args.no_header))
    report = evaluate(model, data, "test", level)
    out = _out_dir(args.out)
    _write_manifest(out, "evaluate", {"level": level, "target": args.target},
                    inputs=[args.model, args.data])
    _write_csv(out / "eval_summary.csv", pd.DataFrame([report.summary_row()]))
    _write_csv(out / "per_point.csv", report.per_point_frame())
    print_table("Evaluation", [report.summary_row()])
    success(f"Wrote evaluation of {report.n} points to {out}")
    return EXIT_OK


def cmd_gradcheck(args: argparse.Namespace, settings: Settings) -> int:
    """Run the verification suites; nonzero exit when any tolerance is exceeded"""
    seed = settings.seed if args.seed is None else args.seed
    cases = settings.gradcheck_cases if args.cases is None else args.cases
    if cases < 1:
        raise ConfigError("cases must be >= 1")
    report = run_gradcheck(seed, cases, oracle_draws=args.oracle_draws, properness_draws=args.properness_draws)
    out = _out_dir(args.out or str(Path(settings.output_dir) / "gradcheck"))
    _write_manifest(out, "gradcheck", {"seed": seed, "cases": cases, "oracle_draws": args.oracle_draws,
                                       "properness_draws": args.properness_draws}, seed=seed)
    _write_csv(out / "gradcheck.csv", report.frame())
    print_table(f"Verification (seed {seed})", [r.row() for r in report.results])

    failing = report.failing()
    if failing:
        _write_json(out / "failures.json", {r.name: r.worst for r in failing})
        for r in failing:
            console.print(f"[red]{r.name}[/red] worst case: {json.dumps(r.worst)}")
        raise VerificationError(
            f"{len(failing)} suite(s) exceeded tolerance: {', '.join(r.name for r in failing)}",
            {r.name: r.worst for r in failing},
        )
    success("All verification suites within tolerance")
    return EXIT_OK


# ----------------------------------------------------------------------
# Parser
# ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="negmm", description="Energy-score trained Gaussian mixture regression")
    parser.add_argument("--log-level", default=None, help="Override NEGMM_LOG_LEVEL")
    parser.add_argument("--version", action="version", version=f"negmm {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="Write a toy dataset as train/val/test CSVs")
    p.add_argument("--example", choices=sorted(GENERATORS), required=True)
    p.add_argument("--n", type=int, required=True, help="Training rows; validation gets 0.2n")
    p.add_argument("--n-test", type=int, default=300)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True, help="Output directory")
    p.set_defaults(handler=cmd_generate)

    p = sub.add_parser("train", help="Train from an experiment config")
    p.add_argument("--config", default=None, help=".toml or .json experiment file")
    p.add_argument("--seed", type=int, default=None, help="Replace every seed in the config")
    p.add_argument("--out", default=None, help="Override [output] dir")
    p.add_argument("--jobs", type=int, default=None, help="Worker processes for grid cells / replicates")
    p.add_argument("--print-config", action="store_true", help="Print the resolved config and exit")
    p.set_defaults(handler=cmd_train)

    for name, handler, help_text in (
        ("predict", cmd_predict, "Predict mixture parameters for a CSV"),
        ("evaluate", cmd_evaluate, "Evaluate a model on a CSV"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--model", required=True)
        p.add_argument("--data", required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--level", type=float, default=None, help="Interval level (default NEGMM_LEVEL)")
        p.add_argument("--target", default="y", help="Target column name")
        p.add_argument("--no-header", action="store_true")
        p.set_defaults(handler=handler)

    p = sub.add_parser("gradcheck", help="Run the numerical verification suites")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--cases", type=int, default=None)
    p.add_argument("--oracle-draws", type=int, default=ORACLE_DRAWS)
    p.add_argument("--properness-draws", type=int, default=PROPERNESS_DRAWS)
    p.add_argument("--out", default=None, help="Output directory (default <NEGMM_OUTPUT_DIR>/gradcheck)")
    p.set_defaults(handler=cmd_gradcheck)
    return parser


def _traceback(settings: Optional[Settings]) -> None:
    if settings is not None and settings.debug:
        err_console.print_exception()


def main(argv: Optional[List[str]] = None) -> int:
    """Entry point; returns the process exit code"""
    load_dotenv()
    args = build_parser().parse_args(argv)
    settings: Optional[Settings] = None
    try:
        settings = load_settings()
        setup_logging(args.log_level or ("DEBUG" if settings.debug else settings.log_level))
        return args.handler(args, settings)
    except NegmmError as e:
        failure(e.message)
        if e.details:
            logger.debug("details: %s", e.details)
        _traceback(settings)
        return e.exit_code
    except ValidationError as e:
        failure(f"Invalid configuration: {e}")
        _traceback(settings)
        return EXIT_CONFIG
    except OSError as e:
        failure(f"I/O error: {e}")
        _traceback(settings)
        return EXIT_IO
