"""Datasets, splits, cross-validation, grid search and error metrics."""

from __future__ import annotations

import csv
import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import IO, Callable

import numpy as np

from ..doe import FEATURE_NAMES
from ..errors import InvalidArgument, UndefinedMetric

TARGETS = ("cle", "ea", "intrusion", "decel")
MAPE_EPS = 1e-12

DEFAULT_GRIDS = {
    "gbt": {"max_depth": [2, 3, 4], "learning_rate": [0.05, 0.1, 0.3], "n_rounds": [100, 300]},
    "gbt_regularized": {"max_depth": [2, 3, 4], "learning_rate": [0.05, 0.1, 0.3],
                        "n_rounds": [100, 300], "reg_lambda": [0.0, 1.0]},
    "random_forest": {"max_depth": [2, 3, 4], "n_trees": [100, 300]},
}


@dataclass
class Dataset:
    X: np.ndarray
    y: dict[str, np.ndarray]
    feature_names: tuple[str, ...] = FEATURE_NAMES
    sample_ids: np.ndarray | None = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        if self.X.ndim != 2 or self.X.shape[1] != len(self.feature_names):
            raise InvalidArgument(f"X must be (n, {len(self.feature_names)}), got {self.X.shape}")
        n = self.X.shape[0]
        self.y = {k: np.asarray(v, dtype=float) for k, v in self.y.items()}
        for name, v in self.y.items():
            if v.shape != (n,):
                raise InvalidArgument(f"target {name!r} has shape {v.shape}, expected ({n},)")
        if self.sample_ids is None:
            self.sample_ids = np.arange(n)
        self.sample_ids = np.asarray(self.sample_ids)

    def __len__(self):
        return self.X.shape[0]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.X[idx], {k: v[idx] for k, v in self.y.items()},
                       self.feature_names, self.sample_ids[idx])


@dataclass(frozen=True)
class EvalReport:
    mae: float
    mape: float
    r2: float
    n_excluded: int = 0

    def as_dict(self):
        return {"mae": self.mae, "mape": self.mape, "r2": self.r2, "n_excluded": self.n_excluded}


@dataclass
class CvReport:
    folds: list[EvalReport]
    params: dict = field(default_factory=dict)

    @property
    def mae(self) -> float:
        return float(np.mean([f.mae for f in self.folds]))

    @property
    def mape(self) -> float:
        return float(np.mean([f.mape for f in self.folds]))

    @property
    def r2(self) -> float:
        return float(np.mean([f.r2 for f in self.folds]))

    def as_dict(self):
        return {"params": self.params, "mae": self.mae, "mape": self.mape, "r2": self.r2,
                "folds": [f.as_dict() for f in self.folds]}


def eval_metrics(y_true, y_pred) -> EvalReport:
    y_true = np.asarray(y_true, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    if y_true.ndim != 1 or y_true.shape != y_pred.shape or len(y_true) == 0:
        raise InvalidArgument("y_true and y_pred must be equal-length nonempty vectors")
    err = y_pred - y_true
    mae = float(np.mean(np.abs(err)))
    keep = np.abs(y_true) > MAPE_EPS
    if not keep.any():
        raise UndefinedMetric("MAPE is undefined when every true value is zero")
    mape = float(100.0 * np.mean(np.abs(err[keep]) / np.abs(y_true[keep])))
    ss_tot = float(np.sum((y_true - y_true.mean()) ** 2))
    if ss_tot == 0.0:
        raise UndefinedMetric("R^2 is undefined for a constant target")
    r2 = 1.0 - float(np.sum(err * err)) / ss_tot
    return EvalReport(mae, mape, r2, int((~keep).sum()))


def split_sizes(n: int, test_fraction: float) -> tuple[int, int]:
    # Smallest test set holding at least the requested fraction; 0.2 of 266 -> 54.
    n_test = math.ceil(n * test_fraction - 1e-9)
    n_test = min(max(n_test, 1), n - 1)
    return n - n_test, n_test


def split_indices(n: int, test_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    if n < 2:
        raise InvalidArgument(f"need at least 2 samples to split, got {n}")
    if not 0.0 < test_fraction < 1.0:
        raise InvalidArgument(f"test_fraction must lie in (0, 1), got {test_fraction}")
    n_train, _ = split_sizes(n, test_fraction)
    perm = np.random.default_rng(seed).permutation(n)
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def train_test_split(ds: Dataset, test_fraction: float = 0.2, seed: int = 0):
    train, test = split_indices(len(ds), test_fraction, seed)
    return ds.subset(train), ds.subset(test)


def kfold_indices(n: int, k: int, seed: int = 0) -> list[np.ndarray]:
    if int(k) != k or k < 2:
        raise InvalidArgument(f"k must be an integer >= 2, got {k}")
    if k > n:
        raise InvalidArgument(f"cannot make {k} folds from {n} samples")
    perm = np.random.default_rng(seed).permutation(n)
    return np.array_split(perm, int(k))


def kfold_cv(X, y, k: int, params: dict, learner: Callable, seed: int = 0) -> CvReport:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    folds = kfold_indices(len(y), k, seed)
    reports = []
    for i, test in enumerate(folds):
        train = np.concatenate([f for j, f in enumerate(folds) if j != i])
        model = learner(X[train], y[train], **params)
        reports.append(eval_metrics(y[test], model.predict(X[test])))
    return CvReport(reports, dict(params))


def expand_grid(grid: dict) -> list[dict]:
    """Cartesian product over keys in sorted order, values in listed order."""
    if not grid:
        raise InvalidArgument("grid must name at least one parameter")
    keys = sorted(grid)
    for key in keys:
        if len(grid[key]) == 0:
            raise InvalidArgument(f"grid entry {key!r} has no values")
    return [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]


def _cv_task(args):
    X, y, k, params, learner, seed = args
    return kfold_cv(X, y, k, params, learner, seed)


def grid_search(X, y, grid: dict, k: int, learner: Callable, seed: int = 0, workers: int = 1):
    """Exhaustive CV over ``grid``; returns (best params, best report, all reports).

    The lowest mean MAE wins and the earliest combination wins ties, so the
    result does not depend on ``workers``.
    """
    combos = expand_grid(grid)
    tasks = [(X, y, k, params, learner, seed) for params in combos]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(_cv_task, tasks))
    else:
        reports = [_cv_task(t) for t in tasks]
    best = min(range(len(reports)), key=lambda i: (reports[i].mae, i))
    return combos[best], reports[best], reports


# -- prediction files ----------------------------------------------------------------

PREDICTION_COLUMNS = ("sample_id", "target", "y_true", "y_pred")


def write_predictions(rows, sink: IO[str]) -> None:
    """``rows`` yields (sample_id, target, y_true, y_pred)."""
    w = csv.writer(sink, lineterminator="\n")
    w.writerow(PREDICTION_COLUMNS)
    for sid, target, yt, yp in rows:
        w.writerow([int(sid), target, repr(float(yt)), repr(float(yp))])


def read_predictions(source: IO[str]) -> list[tuple[int, str, float, float]]:
    reader = csv.reader(source)
    header = next(reader, None)
    if tuple(header or ()) != PREDICTION_COLUMNS:
        raise InvalidArgument(f"unexpected predictions header {header}")
    return [(int(r[0]), r[1], float(r[2]), float(r[3])) for r in reader if r]
