"""Tabular datasets: CSV ingestion, min-max scaling, splits and the toy simulator."""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, DataError


def _frozen(a, ndim: int) -> np.ndarray:
    arr = np.array(a, dtype=np.float64, copy=True)
    if arr.ndim != ndim:
        raise DataError(f"expected a {ndim}-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ScalerParams:
    """Per-column minima and maxima; the last entry belongs to the target."""

    mins: np.ndarray
    maxs: np.ndarray

    def __post_init__(self):
        mins = _frozen(self.mins, 1)
        maxs = _frozen(self.maxs, 1)
        if mins.shape != maxs.shape:
            raise DataError("scaler mins/maxs length mismatch")
        if np.any(maxs <= mins):
            bad = int(np.flatnonzero(maxs <= mins)[0])
            raise DataError(f"scaler column {bad} has max <= min")
        object.__setattr__(self, "mins", mins)
        object.__setattr__(self, "maxs", maxs)

    @property
    def n_columns(self) -> int:
        return self.mins.shape[0]

    @classmethod
    def identity(cls, n_columns: int) -> "ScalerParams":
        return cls(np.zeros(n_columns), np.ones(n_columns))


@dataclass(frozen=True)
class TabularDataset:
    """An n x p feature matrix with a continuous target.

    ``origin`` is an optional boolean mask marking synthetic rows; it is only
    set on augmented sets and is exported as the ``origin`` CSV column.
    """

    features: np.ndarray
    target: np.ndarray
    feature_names: tuple = ()
    target_name: str = "y"
    scaler: Optional[ScalerParams] = None
    origin: Optional[np.ndarray] = field(default=None, compare=False)

    def __post_init__(self):
        features = _frozen(self.features, 2)
        target = _frozen(self.target, 1)
        n, p = features.shape
        if target.shape[0] != n:
            raise DataError(f"{n} feature rows but {target.shape[0]} targets")
        if p < 1:
            raise DataError("dataset needs at least one feature column")
        names = tuple(self.feature_names) or tuple(f"x{j + 1}" for j in range(p))
        if len(names) != p:
            raise DataError(f"{len(names)} feature names for {p} columns")
        if not (np.all(np.isfinite(features)) and np.all(np.isfinite(target))):
            raise DataError("dataset contains missing or non-finite values")
        if self.scaler is not None and self.scaler.n_columns != p + 1:
            raise DataError("scaler column count does not match dataset")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "target", target)
        object.__setattr__(self, "feature_names", names)
        if self.origin is not None:
            origin = np.array(self.origin, dtype=bool)
            if origin.shape != (n,):
                raise DataError("origin mask must have one entry per row")
            origin.setflags(write=False)
            object.__setattr__(self, "origin", origin)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]

    def joint(self) -> np.ndarray:
        """Features and target stacked as an n x (p+1) matrix."""
        return np.column_stack([self.features, self.target])

    def subset(self, indices) -> "TabularDataset":
        idx = np.asarray(indices, dtype=np.intp)
        origin = None if self.origin is None else self.origin[idx]
        return replace(self, features=self.features[idx], target=self.target[idx], origin=origin)

    def with_joint(self, joint: np.ndarray, **changes) -> "TabularDataset":
        """Same schema, new rows given as an m x (p+1) matrix."""
        joint = np.asarray(joint, dtype=np.float64).reshape(-1, self.p + 1)
        changes.setdefault("origin", None)
        return replace(self, features=joint[:, :-1], target=joint[:, -1], **changes)


def load_csv(path, target_column: str) -> TabularDataset:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if target_column not in header:
            raise DataError(f"{path}: target column {target_column!r} not among {header}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}: row {lineno} has {len(row)} cells, expected {len(header)}")
            values = []
            for col, cell in zip(header, row):
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(f"{path}: row {lineno}, column {col!r}: cannot parse {cell!r}") from None
                if not math.isfinite(v):
                    raise DataError(f"{path}: row {lineno}, column {col!r}: missing or non-finite value")
                values.append(v)
            rows.append(values)
    if len(rows) < 2:
        raise DataError(f"{path}: need at least 2 data rows")
    table = np.array(rows)
    t = header.index(target_column)
    keep = [j for j in range(len(header)) if j != t]
    for j, name in enumerate(header):
        if np.ptp(table[:, j]) == 0:
            warnings.warn(f"{path}: column {name!r} is constant", stacklevel=2)
    return TabularDataset(
        features=table[:, keep],
        target=table[:, t],
        feature_names=tuple(header[j] for j in keep),
        target_name=target_column,
    )


def write_csv(ds: TabularDataset, path, with_origin: Optional[bool] = None) -> None:
    """Write ``ds`` with a header row; floats use repr so they re-read exactly."""
    if with_origin is None:
        with_origin = ds.origin is not None
    header = list(ds.feature_names) + [ds.target_name]
    if with_origin:
        header.append("origin")
    origin = ds.origin if ds.origin is not None else np.zeros(ds.n, dtype=bool)
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(ds.n):
            row = [repr(float(v)) for v in ds.features[i]] + [repr(float(ds.target[i]))]
            if with_origin:
                row.append("synthetic" if origin[i] else "real")
            w.writerow(row)


def minmax_fit(ds: TabularDataset) -> ScalerParams:
    joint = ds.joint()
    mins, maxs = joint.min(axis=0), joint.max(axis=0)
    const = np.flatnonzero(maxs <= mins)
    if const.size:
        names = list(ds.feature_names) + [ds.target_name]
        raise DataError(f"cannot min-max scale constant column {names[const[0]]!r}")
    return ScalerParams(mins, maxs)


def minmax_transform(ds: TabularDataset, scaler: ScalerParams) -> TabularDataset:
    if scaler.n_columns != ds.p + 1:
        raise DataError(f"scaler has {scaler.n_columns} columns, dataset has {ds.p + 1}")
    scaled = (ds.joint() - scaler.mins) / (scaler.maxs - scaler.mins)
    return ds.with_joint(scaled, scaler=scaler, origin=ds.origin)


def minmax_fit_transform(ds: TabularDataset) -> tuple[TabularDataset, ScalerParams]:
    """Scale every column (target included) to [0, 1]."""
    scaler = minmax_fit(ds)
    return minmax_transform(ds, scaler), scaler


def minmax_inverse(ds_scaled: TabularDataset, scaler: Optional[ScalerParams] = None) -> TabularDataset:
    scaler = scaler if scaler is not None else ds_scaled.scaler
    if scaler is None:
        raise DataError("no scaler supplied and dataset carries none")
    if scaler.n_columns != ds_scaled.p + 1:
        raise DataError(f"scaler has {scaler.n_columns} columns, dataset has {ds_scaled.p + 1}")
    raw = ds_scaled.joint() * (scaler.maxs - scaler.mins) + scaler.mins
    return ds_scaled.with_joint(raw, scaler=None, origin=ds_scaled.origin)


def _mm(v: np.ndarray) -> np.ndarray:
    lo, hi = v.min(), v.max()
    if hi <= lo:
        raise DataError("degenerate sample: min equals max")
    return (v - lo) / (hi - lo)


def simulate_illustration(n: int = 3000, rng_seed: int = 0) -> TabularDataset:
    """Six nonlinear Gaussian features and a skewed target.

    Gaussian second parameters are standard deviations. The min-max terms
    inside ``U`` are computed over the simulated sample, so U lies in [10, 44].
    """
    if n < 10:
        raise ConfigError("simulate_illustration needs n >= 10")
    rng = np.random.default_rng(rng_seed)
    x1 = rng.normal(0.0, 2.0, n)
    x2 = rng.normal(10.0, 2.0, n)
    x3 = rng.normal(0.0, 5.0, n)
    x4 = rng.normal(x1**3, 1.0)
    x5 = rng.normal((x2 - 10.0) ** 2, 1.0)
    x6 = rng.normal(x3**2, 2.0)
    u = 11.0 * _mm(x4) + 9.0 * _mm(x5) + 14.0 * _mm(x6) + 10.0
    y = rng.normal(u**2, 10.0)
    return TabularDataset(
        features=np.column_stack([x1, x2, x3, x4, x5, x6]),
        target=y,
        feature_names=("X1", "X2", "X3", "X4", "X5", "X6"),
        target_name="Y",
    )


def _train_size(n: int, train_fraction: float) -> int:
    if not 0.0 < train_fraction < 1.0:
        raise ConfigError(f"train fraction must lie in (0, 1), got {train_fraction}")
    n_train = int(math.floor(train_fraction * n + 0.5))
    if n_train < 2 or n - n_train < 2:
        raise ConfigError(f"split of {n} rows at {train_fraction} leaves fewer than 2 rows on a side")
    return n_train


def split_indices(n: int, train_fraction: float, rng_seed) -> tuple[np.ndarray, np.ndarray]:
    n_train = _train_size(n, train_fraction)
    perm = np.random.default_rng(rng_seed).permutation(n)
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def split_train_test(
    ds: TabularDataset, train_fraction: float = 0.6, rng_seed: int = 0
) -> tuple[TabularDataset, TabularDataset]:
    train_idx, test_idx = split_indices(ds.n, train_fraction, rng_seed)
    return ds.subset(train_idx), ds.subset(test_idx)


@dataclass(frozen=True)
class FoldPlan:
    folds: tuple
    fold_count: int
    rng_seed: int

    def __iter__(self):
        return iter(self.folds)

    def __len__(self):
        return self.fold_count


def fold_seed(rng_seed: int, fold: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(rng_seed), int(fold)])


def kfold(
    ds_or_n,
    k: int = 10,
    rng_seed: int = 0,
    train_fraction: float = 0.6,
    mode: str = "holdout",
) -> FoldPlan:
    """Build ``k`` train/test index pairs.

    ``mode="holdout"`` draws k independent random splits at ``train_fraction``,
    fold i seeded from ``(rng_seed, i)`` only. ``mode="partition"`` is classic
    K-fold: one permutation cut into k disjoint test blocks.
    """
    n = ds_or_n if isinstance(ds_or_n, (int, np.integer)) else ds_or_n.n
    if k < 2:
        raise ConfigError("need k >= 2 folds")
    if n < 2 * k:
        raise ConfigError(f"{n} rows is too few for {k} folds")
    folds = []
    if mode == "holdout":
        for i in range(k):
            folds.append(split_indices(n, train_fraction, fold_seed(rng_seed, i)))
    elif mode == "partition":
        perm = np.random.default_rng(rng_seed).permutation(n)
        for block in np.array_split(perm, k):
            mask = np.zeros(n, dtype=bool)
            mask[block] = True
            folds.append((np.flatnonzero(~mask), np.flatnonzero(mask)))
    else:
        raise ConfigError(f"unknown fold mode {mode!r}")
    return FoldPlan(folds=tuple(folds), fold_count=k, rng_seed=int(rng_seed))


def concat(datasets: Sequence[TabularDataset]) -> TabularDataset:
    first = datasets[0]
    for other in datasets[1:]:
        if other.feature_names != first.feature_names or other.target_name != first.target_name:
            raise DataError("cannot concatenate datasets with different schemas")
    origins = [d.origin if d.origin is not None else np.zeros(d.n, dtype=bool) for d in datasets]
    return replace(
        first,
        features=np.vstack([d.features for d in datasets]),
        target=np.concatenate([d.target for d in datasets]),
        origin=np.concatenate(origins),
    )
