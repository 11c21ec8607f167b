"""
Datasets: toy generators with ground truth, CSV ingestion, splitting and
train-only standardization
"""

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .errors import DataError, DomainError, ParseError, SchemaError
from .mixture import MixtureParams, predictive_moments

logger = logging.getLogger(__name__)

EXAMPLE1_RANGE = (-1.0, 11.0)
EXAMPLE1_NOISE_VAR = 0.09
EXAMPLE2_RANGE = (-4.0, 4.0)
EXAMPLE2_P_NEGATIVE = 0.3
EXAMPLE2_NOISE_VAR = 9.0
TOY_VAL_FRACTION = 0.2
TOY_TEST_SIZE = 300

TRUTH_MEAN_COLUMN = "m_true"
TRUTH_STD_COLUMN = "s_true"
TRUTH_COMPONENT_PREFIXES = ("pi_true_", "mu_true_", "sigma_true_")
CSV_FLOAT_FORMAT = "%.17g"


@dataclass(frozen=True)
class Split:
    """Disjoint row indices of the train, validation and test parts"""

    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def __getitem__(self, name: str) -> np.ndarray:
        if name not in ("train", "val", "test"):
            raise KeyError(name)
        return getattr(self, name)

    def sizes(self) -> Tuple[int, int, int]:
        return len(self.train), len(self.val), len(self.test)


@dataclass(frozen=True)
class Standardization:
    """Per-feature and target location/scale computed on the train split"""

    feature_mean: np.ndarray
    feature_std: np.ndarray
    target_mean: float
    target_std: float
    constant_features: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))
    constant_target: bool = False

    def features(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.feature_mean) / self.feature_std

    def targets(self, y: np.ndarray) -> np.ndarray:
        return (np.asarray(y, dtype=float) - self.target_mean) / self.target_std

    def to_record(self) -> Dict[str, Any]:
        return {
            "feature_mean": self.feature_mean.tolist(),
            "feature_std": self.feature_std.tolist(),
            "target_mean": self.target_mean,
            "target_std": self.target_std,
            "constant_features": self.constant_features.tolist(),
            "constant_target": self.constant_target,
        }

    @classmethod
    def from_record(cls, record: Dict[str, Any]) -> "Standardization":
        return cls(
            feature_mean=np.array(record["feature_mean"], dtype=float),
            feature_std=np.array(record["feature_std"], dtype=float),
            target_mean=float(record["target_mean"]),
            target_std=float(record["target_std"]),
            constant_features=np.array(record.get("constant_features", []), dtype=bool),
            constant_target=bool(record.get("constant_target", False)),
        )


@dataclass(frozen=True)
class GroundTruth:
    """Known conditional mean/std (and component parameters) per row"""

    mean: np.ndarray
    std: np.ndarray
    components: Optional[MixtureParams] = None

    def take(self, idx: np.ndarray) -> "GroundTruth":
        comps = None
        if self.components is not None:
            c = self.components
            comps = MixtureParams(c.weights[idx], c.means[idx], c.stds[idx])
        return GroundTruth(self.mean[idx], self.std[idx], comps)


@dataclass(frozen=True)
class LabeledDataset:
    """Features, targets, split indices, standardization and optional truth"""

    features: np.ndarray
    targets: np.ndarray
    feature_names: Tuple[str, ...]
    target_name: str = "y"
    split: Optional[Split] = None
    standardization: Optional[Standardization] = None
    ground_truth: Optional[GroundTruth] = None

    def __post_init__(self):
        if self.features.ndim != 2 or self.targets.ndim != 1 or self.features.shape[0] != self.targets.shape[0]:
            raise SchemaError(
                f"features {self.features.shape} and targets {self.targets.shape} do not line up"
            )
        if self.split is not None:
            n = self.n
            parts = [self.split.train, self.split.val, self.split.test]
            joined = np.concatenate(parts)
            if joined.size and (joined.min() < 0 or joined.max() >= n):
                raise DomainError("Split indices out of range")
            if np.unique(joined).size != joined.size:
                raise DomainError("Split indices overlap")

    @property
    def n(self) -> int:
        return int(self.features.shape[0])

    @property
    def dim(self) -> int:
        return int(self.features.shape[1])

    def indices(self, part: str) -> np.ndarray:
        if self.split is None:
            raise DomainError("Dataset has not been split")
        return self.split[part]

    def raw(self, part: str) -> Tuple[np.ndarray, np.ndarray]:
        idx = self.indices(part)
        return self.features[idx], self.targets[idx]

    def standardized(self, part: str) -> Tuple[np.ndarray, np.ndarray]:
        """Features and targets of one split in train-standardized units"""
        if self.standardization is None:
            raise DomainError("Dataset has not been standardized")
        x, y = self.raw(part)
        return self.standardization.features(x), self.standardization.targets(y)

    def truth(self, part: str) -> Optional[GroundTruth]:
        if self.ground_truth is None:
            return None
        return self.ground_truth.take(self.indices(part))


# ----------------------------------------------------------------------
# Toy generators
# ----------------------------------------------------------------------

def example1_truth(x: np.ndarray) -> GroundTruth:
    """m(x) = x sin x, s^2(x) = 0.09 (x^2 + 1)"""
    x = np.asarray(x, dtype=float)
    mean = x * np.sin(x)
    std = np.sqrt(EXAMPLE1_NOISE_VAR * (x ** 2 + 1.0))
    ones = np.ones(x.shape + (1,))
    return GroundTruth(mean, std, MixtureParams(ones, mean[..., None], std[..., None]))


def example2_truth(x: np.ndarray) -> GroundTruth:
    """Two components at -x^3 and x^3 with weights (0.3, 0.7) and std 3"""
    x = np.asarray(x, dtype=float)
    cube = x ** 3
    weights = np.broadcast_to([EXAMPLE2_P_NEGATIVE, 1.0 - EXAMPLE2_P_NEGATIVE], x.shape + (2,))
    means = np.stack([-cube, cube], axis=-1)
    stds = np.full(x.shape + (2,), np.sqrt(EXAMPLE2_NOISE_VAR))
    comps = MixtureParams(weights, means, stds)
    summary = predictive_moments(comps)
    return GroundTruth(np.asarray(summary.mean), np.asarray(summary.std), comps)


def _toy_split(n: int, n_val: Optional[int], n_test: int) -> Tuple[int, Split]:
    if n < 1:
        raise DomainError("Toy generators need n >= 1")
    n_val = int(round(TOY_VAL_FRACTION * n)) if n_val is None else n_val
    total = n + n_val + n_test
    idx = np.arange(total)
    return total, Split(idx[:n], idx[n:n + n_val], idx[n + n_val:])


def gen_example1(n: int, seed: int, n_val: Optional[int] = None, n_test: int = TOY_TEST_SIZE) -> LabeledDataset:
    """Heteroscedastic toy: y = x sin x + x eps1 + eps2 on x in [-1, 11]"""
    total, split = _toy_split(n, n_val, n_test)
    rng = np.random.default_rng(seed)
    x = rng.uniform(*EXAMPLE1_RANGE, size=total)
    noise_sd = np.sqrt(EXAMPLE1_NOISE_VAR)
    eps1 = rng.normal(0.0, noise_sd, size=total)
    eps2 = rng.normal(0.0, noise_sd, size=total)
    y = x * np.sin(x) + x * eps1 + eps2
    data = LabeledDataset(x[:, None], y, ("x",), "y", split, None, example1_truth(x))
    return standardize(data)


def gen_example2(n: int, seed: int, n_val: Optional[int] = None, n_test: int = TOY_TEST_SIZE) -> LabeledDataset:
    """Bimodal toy: y = U x^3 + eps, P(U = -1) = 0.3, on x in [-4, 4]"""
    total, split = _toy_split(n, n_val, n_test)
    rng = np.random.default_rng(seed)
    x = rng.uniform(*EXAMPLE2_RANGE, size=total)
    u = np.where(rng.random(total) < EXAMPLE2_P_NEGATIVE, -1.0, 1.0)
    eps = rng.normal(0.0, np.sqrt(EXAMPLE2_NOISE_VAR), size=total)
    y = u * x ** 3 + eps
    data = LabeledDataset(x[:, None], y, ("x",), "y", split, None, example2_truth(x))
    return standardize(data)


GENERATORS = {"ex1": gen_example1, "ex2": gen_example2}


# ----------------------------------------------------------------------
# Standardization and splitting
# ----------------------------------------------------------------------

def standardize(data: LabeledDataset) -> LabeledDataset:
    """Attach location/scale statistics computed on the train split only"""
    x, y = data.raw("train")
    if x.shape[0] == 0:
        raise DomainError("Cannot standardize on an empty train split")
    f_mean = x.mean(axis=0)
    f_std = x.std(axis=0)
    constant = f_std == 0.0
    f_std = np.where(constant, 1.0, f_std)
    if constant.any():
        logger.warning("Constant feature columns left unscaled: %s",
                       [data.feature_names[i] for i in np.flatnonzero(constant)])
    t_std = float(y.std())
    constant_target = t_std == 0.0
    stats = Standardization(f_mean, f_std, float(y.mean()), 1.0 if constant_target else t_std,
                            constant, constant_target)
    return replace(data, standardization=stats)


def split_and_standardize(
    data: LabeledDataset,
    ratios: Sequence[float],
    seed: int,
) -> LabeledDataset:
    """Random train/val/test permutation split, then train-only standardization"""
    if len(ratios) != 3 or any(r <= 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise DomainError(f"Split ratios must be three positive numbers summing to 1, got {ratios}")
    perm = np.random.default_rng(seed).permutation(data.n)
    n_train = int(round(ratios[0] * data.n))
    n_val = int(round(ratios[1] * data.n))
    n_test = data.n - n_train - n_val
    if min(n_train, n_val, n_test) <= 0:
        raise DomainError(f"Split of {data.n} rows by {tuple(ratios)} leaves an empty part")
    split = Split(
        np.sort(perm[:n_train]),
        np.sort(perm[n_train:n_train + n_val]),
        np.sort(perm[n_train + n_val:]),
    )
    return standardize(replace(data, split=split, standardization=None))


def combine_splits(train: LabeledDataset, val: LabeledDataset, test: LabeledDataset) -> LabeledDataset:
    """Stack three pre-split datasets into one with split indices"""
    parts = [train, val, test]
    if len({p.feature_names for p in parts}) != 1:
        raise SchemaError("Train/val/test files have different feature columns")
    sizes = [p.n for p in parts]
    bounds = np.cumsum([0] + sizes)
    split = Split(*(np.arange(bounds[i], bounds[i + 1]) for i in range(3)))

    truth = None
    if all(p.ground_truth is not None for p in parts):
        truths = [p.ground_truth for p in parts]
        comps = None
        if all(t.components is not None for t in truths):
            comps = MixtureParams(
                np.concatenate([t.components.weights for t in truths]),
                np.concatenate([t.components.means for t in truths]),
                np.concatenate([t.components.stds for t in truths]),
            )
        truth = GroundTruth(
            np.concatenate([t.mean for t in truths]),
            np.concatenate([t.std for t in truths]),
            comps,
        )
    data = LabeledDataset(
        np.concatenate([p.features for p in parts]),
        np.concatenate([p.targets for p in parts]),
        train.feature_names,
        train.target_name,
        split,
        None,
        truth,
    )
    return standardize(data)


# ----------------------------------------------------------------------
# CSV
# ----------------------------------------------------------------------

def _truth_columns(columns: List[str]) -> List[str]:
    return [
        c for c in columns
        if c in (TRUTH_MEAN_COLUMN, TRUTH_STD_COLUMN) or c.startswith(TRUTH_COMPONENT_PREFIXES)
    ]


def _numeric_frame(df: pd.DataFrame, header_rows: int) -> pd.DataFrame:
    out = {}
    for col in df.columns:
        values = pd.to_numeric(df[col], errors="coerce")
        bad = values.isna() | ~np.isfinite(values.to_numpy(dtype=float, na_value=np.nan))
        if bad.any():
            row = int(np.flatnonzero(bad.to_numpy())[0])
            raise ParseError(
                f"Non-numeric value {df[col].iloc[row]!r} at row {row + 1 + header_rows}, column {col!r}",
                row=row + 1 + header_rows,
                column=str(col),
            )
        out[col] = values.astype(float)
    return pd.DataFrame(out)


def _component_truth(frame: pd.DataFrame) -> Optional[MixtureParams]:
    k = sum(1 for c in frame.columns if c.startswith("pi_true_"))
    if k == 0:
        return None
    try:
        cols = {p: [f"{p}{i}" for i in range(k)] for p in TRUTH_COMPONENT_PREFIXES}
        return MixtureParams(
            frame[cols["pi_true_"]].to_numpy(),
            frame[cols["mu_true_"]].to_numpy(),
            frame[cols["sigma_true_"]].to_numpy(),
        )
    except KeyError as e:
        raise SchemaError(f"Incomplete component truth columns: {e}")


def _read_strings(path: Path, has_header: bool) -> pd.DataFrame:
    try:
        df = pd.read_csv(path, header=0 if has_header else None, dtype=str, encoding="utf-8",
                         keep_default_na=False)
    except FileNotFoundError:
        raise DataError(f"Data file not found: {path}")
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise DataError(f"Could not read {path}: {e}")
    if not has_header:
        df.columns = [f"x{i}" for i in range(df.shape[1])]
    df.columns = [str(c).strip() for c in df.columns]
    return df


def load_csv(path: Union[str, Path], target_column: Union[str, int], has_header: bool = True) -> LabeledDataset:
    """
    Read a numeric CSV. The target column is split off; ground-truth columns
    (m_true, s_true, pi_true_k, mu_true_k, sigma_true_k) become GroundTruth;
    everything else is a feature. No standardization is applied.
    """
    path = Path(path)
    df = _read_strings(path, has_header)

    if isinstance(target_column, int) or (not has_header and str(target_column).lstrip("-").isdigit()):
        pos = int(target_column)
        if not -df.shape[1] <= pos < df.shape[1]:
            raise SchemaError(f"Target column index {pos} out of range for {df.shape[1]} columns")
        target_name = df.columns[pos]
    else:
        target_name = str(target_column)
        if target_name not in df.columns:
            raise SchemaError(f"Target column {target_name!r} not found in {path}")

    frame = _numeric_frame(df, 1 if has_header else 0)
    truth_cols = _truth_columns(list(frame.columns)) if has_header else []
    feature_cols = [c for c in frame.columns if c != target_name and c not in truth_cols]
    if not feature_cols:
        raise SchemaError(f"{path} has no feature columns")

    truth = None
    if TRUTH_MEAN_COLUMN in truth_cols and TRUTH_STD_COLUMN in truth_cols:
        truth = GroundTruth(
            frame[TRUTH_MEAN_COLUMN].to_numpy(),
            frame[TRUTH_STD_COLUMN].to_numpy(),
            _component_truth(frame),
        )

    logger.debug("Loaded %s: %d rows, %d features", path, len(frame), len(feature_cols))
    return LabeledDataset(
        frame[feature_cols].to_numpy(dtype=float),
        frame[target_name].to_numpy(dtype=float),
        tuple(feature_cols),
        target_name,
        None,
        None,
        truth,
    )


def to_frame(data: LabeledDataset, part: Optional[str] = None) -> pd.DataFrame:
    """Raw features, target and any truth columns as a DataFrame"""
    idx = data.indices(part) if part is not None else np.arange(data.n)
    frame = pd.DataFrame(data.features[idx], columns=list(data.feature_names))
    frame[data.target_name] = data.targets[idx]
    truth = data.ground_truth.take(idx) if data.ground_truth is not None else None
    if truth is not None:
        frame[TRUTH_MEAN_COLUMN] = truth.mean
        frame[TRUTH_STD_COLUMN] = truth.std
        if truth.components is not None:
            for prefix, values in zip(TRUTH_COMPONENT_PREFIXES,
                                      (truth.components.weights, truth.components.means, truth.components.stds)):
                for k in range(values.shape[1]):
                    frame[f"{prefix}{k}"] = values[:, k]
    return frame


def save_csv(data: LabeledDataset, path: Union[str, Path], part: Optional[str] = None) -> int:
    """Write a split (or everything) as CSV; returns the number of rows"""
    frame = to_frame(data, part)
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")
    except OSError as e:
        raise DataError(f"Could not write {path}: {e}")
    return len(frame)


def as_single_split(data: LabeledDataset, part: str = "test") -> LabeledDataset:
    """Treat every row as one split, keeping any existing standardization"""
    empty = np.arange(0)
    everything = np.arange(data.n)
    split = Split(*(everything if name == part else empty for name in ("train", "val", "test")))
    return replace(data, split=split)


def load_features(
    path: Union[str, Path],
    drop: Sequence[str] = (),
    has_header: bool = True,
) -> Tuple[np.ndarray, Tuple[str, ...]]:
    """Feature matrix of a CSV that may or may not carry a target column"""
    path = Path(path)
    frame = _numeric_frame(_read_strings(path, has_header), 1 if has_header else 0)
    skip = set(drop) | set(_truth_columns(list(frame.columns)))
    names = tuple(c for c in frame.columns if c not in skip)
    if not names:
        raise SchemaError(f"{path} has no feature columns")
    return frame[list(names)].to_numpy(dtype=float), names
