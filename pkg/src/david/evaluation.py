"""Downstream regressors, error metrics and the repeated train/test benchmark."""

from __future__ import annotations

import csv
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
from scipy.linalg import solve_triangular

from . import vae as vae_mod
from .data import TabularDataset, kfold, minmax_fit_transform, minmax_inverse
from .errors import ConfigError, DataError, DavidError, NotPositiveDefiniteError, NumericError
from .generators import AugmentationPlan, GeneratorKind, augment, generate
from .kde import cholesky
from .seeding import derive_seed
from .weights import relevance_weights

log = logging.getLogger(__name__)

METRICS = ("mse", "wmse", "mae", "mape")


# ---------------------------------------------------------------- regressors


@dataclass(frozen=True)
class Knn:
    k: int = 5

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError("kNN needs k >= 1")

    @property
    def label(self) -> str:
        return f"knn{self.k}"


@dataclass(frozen=True)
class Ridge:
    lam: float = 1e-3

    def __post_init__(self):
        if self.lam < 0:
            raise ConfigError("ridge penalty must be nonnegative")

    @property
    def label(self) -> str:
        return f"ridge{self.lam:g}"


RegressorKind = Union[Knn, Ridge]


def parse_regressor(text: str) -> RegressorKind:
    """``knn``, ``knn:7``, ``ridge`` or ``ridge:0.1``."""
    name, _, arg = text.strip().lower().partition(":")
    try:
        if name == "knn":
            return Knn(int(arg)) if arg else Knn()
        if name == "ridge":
            return Ridge(float(arg)) if arg else Ridge()
    except ValueError:
        pass
    raise ConfigError(f"bad regressor spec {text!r}")


def regressor_spec(reg: RegressorKind) -> str:
    return f"knn:{reg.k}" if isinstance(reg, Knn) else f"ridge:{reg.lam!r}"


def knn_fit_predict(train_x, train_y, test_x, k: int = 5, chunk: int = 256) -> np.ndarray:
    """Mean target of the k nearest rows (Euclidean); ties go to the lower row index."""
    X = np.asarray(train_x, dtype=np.float64)
    y = np.asarray(train_y, dtype=np.float64)
    Q = np.asarray(test_x, dtype=np.float64)
    if X.shape[0] == 0:
        raise DataError("kNN needs a non-empty training set")
    if not 1 <= k <= X.shape[0]:
        raise ConfigError(f"k={k} must lie in [1, {X.shape[0]}]")
    out = np.empty(Q.shape[0])
    for s in range(0, Q.shape[0], chunk):
        d2 = ((Q[s : s + chunk, None, :] - X[None, :, :]) ** 2).sum(axis=-1)
        nearest = np.argsort(d2, axis=1, kind="stable")[:, :k]
        out[s : s + chunk] = y[nearest].mean(axis=1)
    return out


def ridge_fit(train_x, train_y, lam: float = 1e-3) -> np.ndarray:
    """Coefficients ``[intercept, slopes...]``; the intercept is not penalised."""
    X = np.asarray(train_x, dtype=np.float64)
    y = np.asarray(train_y, dtype=np.float64)
    n, p = X.shape
    if n <= p:
        raise DataError(f"ridge needs more rows ({n}) than features ({p})")
    A = np.column_stack([np.ones(n), X])
    gram = A.T @ A
    gram[np.arange(1, p + 1), np.arange(1, p + 1)] += lam
    try:
        L = cholesky(gram)
    except NotPositiveDefiniteError as exc:
        raise NumericError(f"singular ridge system ({exc}); use a penalty lambda > 0") from exc
    u = solve_triangular(L, A.T @ y, lower=True)
    return solve_triangular(L.T, u, lower=False)


def ridge_fit_predict(train_x, train_y, test_x, lam: float = 1e-3) -> np.ndarray:
    beta = ridge_fit(train_x, train_y, lam)
    return beta[0] + np.asarray(test_x, dtype=np.float64) @ beta[1:]


def fit_predict(reg: RegressorKind, train: TabularDataset, test_x) -> np.ndarray:
    """Fit on ``train`` (original units) and predict ``test_x``.

    Features are min-max scaled with the training set's ranges; the target
    stays in original units.
    """
    lo = train.features.min(axis=0)
    span = train.features.max(axis=0) - lo
    span[span == 0] = 1.0
    xs = (train.features - lo) / span
    qs = (np.asarray(test_x, dtype=np.float64) - lo) / span
    if isinstance(reg, Knn):
        return knn_fit_predict(xs, train.target, qs, reg.k)
    return ridge_fit_predict(xs, train.target, qs, reg.lam)


# ------------------------------------------------------------------- metrics


def _pair(y, y_hat):
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    y_hat = np.asarray(y_hat, dtype=np.float64).reshape(-1)
    if y.shape != y_hat.shape:
        raise DataError(f"length mismatch: {y.shape[0]} targets, {y_hat.shape[0]} predictions")
    return y, y_hat


def mse(y, y_hat) -> float:
    y, y_hat = _pair(y, y_hat)
    return float(np.mean((y - y_hat) ** 2))


def mae(y, y_hat) -> float:
    y, y_hat = _pair(y, y_hat)
    return float(np.mean(np.abs(y - y_hat)))


def mape(y, y_hat, epsilon: float = 1e-8) -> float:
    y, y_hat = _pair(y, y_hat)
    return float(np.mean(np.abs(y - y_hat) / np.maximum(epsilon, np.abs(y))))


def wmse(y, y_hat, weights) -> float:
    y, y_hat = _pair(y, y_hat)
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    if w.shape != y.shape:
        raise DataError("wMSE weights must align with targets")
    return float(np.mean(w * (y - y_hat) ** 2))


def wmse_weights(y, alpha: float = 1.0, normalization: str = "mean") -> np.ndarray:
    """Inverse-density weights of ``y`` scaled to mean one (or to sum one)."""
    rw = relevance_weights(y, alpha)
    if normalization == "mean":
        return rw.raw / rw.raw.mean()
    if normalization == "sum":
        return rw.normalized
    raise ConfigError(f"unknown wMSE normalization {normalization!r}")


@dataclass(frozen=True)
class Metrics:
    mse: float
    wmse: float
    mae: float
    mape: float

    def as_tuple(self) -> tuple:
        return (self.mse, self.wmse, self.mae, self.mape)


def compute_metrics(y, y_hat, weights, mape_epsilon: float = 1e-8) -> Metrics:
    return Metrics(mse(y, y_hat), wmse(y, y_hat, weights), mae(y, y_hat), mape(y, y_hat, mape_epsilon))


# ----------------------------------------------------------------- benchmark


@dataclass(frozen=True)
class BenchmarkConfig:
    vae: vae_mod.VaeConfig = vae_mod.VaeConfig()
    plan: AugmentationPlan = AugmentationPlan()
    train_fraction: float = 0.6
    fold_mode: str = "holdout"
    master_seed: int = 0
    metric_alpha: float = 1.0
    wmse_normalization: str = "mean"
    mape_epsilon: float = 1e-8
    jobs: int = 1


@dataclass(frozen=True)
class BenchmarkRow:
    generator: str
    regressor: str
    fold: int
    metrics: Metrics


@dataclass
class BenchmarkReport:
    rows: list = field(default_factory=list)
    provenance: dict = field(default_factory=dict)

    def keys(self) -> list:
        """(generator, regressor) pairs in first-appearance order."""
        seen = {}
        for r in self.rows:
            seen.setdefault((r.generator, r.regressor), None)
        return list(seen)

    def values(self, generator: str, regressor: str, metric: str) -> np.ndarray:
        return np.array(
            [getattr(r.metrics, metric) for r in self.rows if r.generator == generator and r.regressor == regressor]
        )

    @property
    def aggregates(self) -> dict:
        """``{(generator, regressor): {metric: (mean, std)}}``; std uses ddof=1."""
        out = {}
        for g, r in self.keys():
            stats = {}
            for m in METRICS:
                v = self.values(g, r, m)
                std = float(np.std(v, ddof=1)) if v.size > 1 else 0.0
                stats[m] = (float(np.mean(v)), std)
            out[(g, r)] = stats
        return out

    def write_rows_csv(self, path) -> None:
        with Path(path).open("w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["generator", "regressor", "fold", *METRICS])
            for r in self.rows:
                w.writerow([r.generator, r.regressor, r.fold, *(repr(v) for v in r.metrics.as_tuple())])

    def write_aggregates_csv(self, path) -> None:
        with Path(path).open("w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["generator", "regressor", "n_folds"] + [f"{m}_{s}" for m in METRICS for s in ("mean", "std")])
            for (g, r), stats in self.aggregates.items():
                cells = [repr(x) for m in METRICS for x in stats[m]]
                w.writerow([g, r, len(self.values(g, r, "mse"))] + cells)

    def format_table(self) -> str:
        """Aligned text table, one block per regressor, cells as ``mean (std)``."""
        agg = self.aggregates
        blocks = []
        for reg in dict.fromkeys(r for _, r in agg):
            header = ["Train"] + [m.upper() if m != "wmse" else "wMSE" for m in METRICS]
            lines = [header]
            for (g, r), stats in agg.items():
                if r == reg:
                    lines.append([g] + [f"{stats[m][0]:.4g} ({stats[m][1]:.2g})" for m in METRICS])
            widths = [max(len(row[j]) for row in lines) for j in range(len(header))]
            fmt = lambda row: "  ".join(c.ljust(widths[j]) if j == 0 else c.rjust(widths[j]) for j, c in enumerate(row))
            rule = "-" * len(fmt(header))
            blocks.append("\n".join([f"regressor: {reg}", rule, fmt(header), rule] + [fmt(x) for x in lines[1:]] + [rule]))
        return "\n\n".join(blocks) + "\n"


class BenchmarkError(DavidError):
    """A fold failed; ``partial`` holds every row finished before the failure."""

    def __init__(self, message: str, partial: BenchmarkReport, cause: Optional[Exception] = None):
        super().__init__(message)
        self.partial = partial
        self.cause = cause


def _variant_config(cfg: BenchmarkConfig, variant: str, fold: int) -> vae_mod.VaeConfig:
    seed = derive_seed(cfg.master_seed, "fold", fold, "vae", variant)
    if variant == "zero":
        return replace(cfg.vae, alpha=0.0, beta_kl=0.0, rng_seed=seed)
    if variant == "plain":
        return replace(cfg.vae, alpha=0.0, rng_seed=seed)
    if not cfg.vae.alpha > 0:
        raise ConfigError("weighted generators need vae alpha > 0")
    return replace(cfg.vae, rng_seed=seed)


def _annotate(exc: DavidError, where: str) -> DavidError:
    # rebuild as the nearest simple class so the error pickles across processes
    for cls in (NumericError, DataError, ConfigError):
        if isinstance(exc, cls):
            return cls(f"{where}: {exc}")
    return DavidError(f"{where}: {exc}")


def _run_fold(args) -> list:
    ds, fold, train_idx, test_idx, generators, regressors, cfg = args
    try:
        return _fold_rows(ds, fold, train_idx, test_idx, generators, regressors, cfg)
    except DavidError as exc:
        raise _annotate(exc, f"fold {fold}") from exc


def _fold_rows(ds, fold, train_idx, test_idx, generators, regressors, cfg) -> list:
    train_raw, test_raw = ds.subset(train_idx), ds.subset(test_idx)
    train_s, scaler = minmax_fit_transform(train_raw)
    metric_w = wmse_weights(test_raw.target, cfg.metric_alpha, cfg.wmse_normalization)

    models = {}
    for variant in dict.fromkeys(g.model_variant for g in generators if g.model_variant):
        models[variant], _ = vae_mod.train(train_s, _variant_config(cfg, variant, fold))

    rows = []
    for g in generators:
        try:
            plan = replace(cfg.plan, rng_seed=derive_seed(cfg.master_seed, "fold", fold, "generate", g.value))
            synthetic = generate(g, train_s, models.get(g.model_variant), plan)
            augmented = minmax_inverse(augment(train_s, synthetic, plan), scaler)
            for reg in regressors:
                pred = fit_predict(reg, augmented, test_raw.features)
                if not np.all(np.isfinite(pred)):
                    raise NumericError("non-finite predictions")
                m = compute_metrics(test_raw.target, pred, metric_w, cfg.mape_epsilon)
                rows.append(BenchmarkRow(g.label, reg.label, fold, m))
        except DavidError as exc:
            raise _annotate(exc, f"generator {g.label}") from exc
    return rows


def run_benchmark(
    ds: TabularDataset,
    generators: Sequence = ("baseline", "kbvaew"),
    regressors: Sequence = (Knn(5),),
    folds: int = 10,
    cfg: Optional[BenchmarkConfig] = None,
) -> BenchmarkReport:
    cfg = cfg or BenchmarkConfig()
    cfg.vae.validate()
    cfg.plan.validate()
    gens = [GeneratorKind.parse(g) for g in generators]
    regs = [parse_regressor(r) if isinstance(r, str) else r for r in regressors]
    if not gens or not regs:
        raise ConfigError("need at least one generator and one regressor")
    if cfg.wmse_normalization not in ("mean", "sum"):
        raise ConfigError(f"unknown wMSE normalization {cfg.wmse_normalization!r}")
    plan = kfold(ds, folds, derive_seed(cfg.master_seed, "split"), cfg.train_fraction, cfg.fold_mode)
    tasks = [(ds, i, tr, te, gens, regs, cfg) for i, (tr, te) in enumerate(plan)]

    report = BenchmarkReport(
        provenance={
            "master_seed": cfg.master_seed,
            "folds": folds,
            "generators": ",".join(g.value for g in gens),
            "regressors": ",".join(regressor_spec(r) for r in regs),
            "started": time.strftime("%Y-%m-%dT%H:%M:%S"),
        }
    )
    t0 = time.perf_counter()
    done = []
    try:
        if cfg.jobs > 1:
            with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
                futures = [pool.submit(_run_fold, t) for t in tasks]
                for fut in futures:
                    done.append(fut.result())
        else:
            for t in tasks:
                done.append(_run_fold(t))
                log.info("fold %d/%d done", len(done), folds)
    except DavidError as exc:
        report.rows = [row for rows in done for row in rows]
        raise BenchmarkError(str(exc), report, exc) from exc
    report.rows = [row for rows in done for row in rows]
    report.provenance["elapsed_seconds"] = round(time.perf_counter() - t0, 3)
    return report
