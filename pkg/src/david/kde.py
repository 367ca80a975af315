"""Weighted Gaussian kernel density estimation and smoothed-bootstrap sampling.

The bandwidth matrix follows the usual rule-of-thumb construction::

    H = rho * eta**2 * Cov_w(points)        (squared convention, default)
    H = rho * eta    * Cov_w(points)        (linear convention)

where ``eta`` comes from Silverman's or Scott's rule and ``Cov_w`` is the
weighted population covariance of the support points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import solve_triangular

from .errors import ConfigError, DataError, NotPositiveDefiniteError, NumericError

PIVOT_TOL = 1e-12


@dataclass(frozen=True)
class BandwidthRule:
    kind: str = "silverman"
    factor: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("silverman", "scott", "fixed"):
            raise ConfigError(f"unknown bandwidth rule {self.kind!r}")
        if self.kind == "fixed":
            # factor 0 is the explicit zero-noise path (H = 0, samples are seeds)
            if self.factor is None or not self.factor >= 0:
                raise ConfigError("fixed bandwidth needs a factor >= 0")

    @property
    def for_density(self) -> "BandwidthRule":
        """Rule to use when a density must be evaluated: a zero bandwidth has
        no density, so the zero-noise path falls back to Silverman."""
        if self.kind == "fixed" and self.factor == 0:
            return BandwidthRule.silverman()
        return self

    @classmethod
    def silverman(cls) -> "BandwidthRule":
        return cls("silverman")

    @classmethod
    def scott(cls) -> "BandwidthRule":
        return cls("scott")

    @classmethod
    def fixed(cls, factor: float) -> "BandwidthRule":
        return cls("fixed", float(factor))

    @classmethod
    def parse(cls, text: str) -> "BandwidthRule":
        """Parse ``silverman``, ``scott`` or ``fixed:<factor>``."""
        text = text.strip().lower()
        if text.startswith("fixed"):
            _, _, value = text.partition(":")
            try:
                return cls.fixed(float(value))
            except ValueError:
                raise ConfigError(f"bad fixed bandwidth {text!r}") from None
        return cls(text)

    def __str__(self) -> str:
        return f"fixed:{self.factor!r}" if self.kind == "fixed" else self.kind


def bandwidth_factor(rule: BandwidthRule, m: int, d: int) -> float:
    if rule.kind == "fixed":
        return float(rule.factor)
    if m < 2:
        raise DataError("bandwidth rules need at least 2 points")
    if d < 1:
        raise DataError("dimension must be >= 1")
    scott = m ** (-1.0 / (d + 4))
    if rule.kind == "scott":
        return scott
    return (4.0 / (d + 2)) ** (1.0 / (d + 4)) * scott


def weighted_covariance(points, weights=None) -> np.ndarray:
    """Population covariance ``sum_i w_i (p_i - mean)(p_i - mean)^T``."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    m = pts.shape[0]
    if m < 2:
        raise DataError("covariance needs at least 2 points")
    w = np.full(m, 1.0 / m) if weights is None else _check_weights(weights, m)
    centered = pts - w @ pts
    cov = (centered * w[:, None]).T @ centered
    return 0.5 * (cov + cov.T)


def cholesky(a) -> np.ndarray:
    """Lower Cholesky factor ``L`` with ``L @ L.T == a``.

    Raises :class:`NotPositiveDefiniteError` naming the first pivot that is not
    above ``PIVOT_TOL``.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DataError(f"cholesky needs a square matrix, got shape {a.shape}")
    d = a.shape[0]
    L = np.zeros_like(a)
    for j in range(d):
        pivot = a[j, j] - L[j, :j] @ L[j, :j]
        if not pivot > PIVOT_TOL:
            raise NotPositiveDefiniteError(j, float(pivot))
        L[j, j] = math.sqrt(pivot)
        if j + 1 < d:
            L[j + 1 :, j] = (a[j + 1 :, j] - L[j + 1 :, :j] @ L[j, :j]) / L[j, j]
    return L


def _check_weights(weights, m: int) -> np.ndarray:
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (m,):
        raise DataError(f"expected {m} weights, got shape {w.shape}")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise DataError("weights must be finite and nonnegative")
    total = w.sum()
    if total <= 0:
        raise DataError("weights sum to zero")
    return w / total


@dataclass(frozen=True)
class KdeModel:
    """Weighted Gaussian mixture ``sum_i w_i N(points_i, H)``."""

    points: np.ndarray
    weights: np.ndarray
    bandwidth_cov: np.ndarray
    chol_lower: np.ndarray

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def degenerate(self) -> bool:
        return not np.any(self.chol_lower)

    def density(self, x) -> np.ndarray:
        """Evaluate the mixture density at each row of ``x``."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            x = x[:, None] if self.dim == 1 else x[None, :]
        if x.shape[1] != self.dim:
            raise DataError(f"point dimension {x.shape[1]} != model dimension {self.dim}")
        if self.degenerate:
            raise NumericError("density undefined for a zero bandwidth matrix")
        L = self.chol_lower
        log_norm = -0.5 * self.dim * math.log(2 * math.pi) - np.sum(np.log(np.diag(L)))
        # whitened support points: L^{-1} p_i
        wp = solve_triangular(L, self.points.T, lower=True).T
        out = np.empty(x.shape[0])
        chunk = max(1, 4_000_000 // (self.size * self.dim))
        for s in range(0, x.shape[0], chunk):
            wx = solve_triangular(L, x[s : s + chunk].T, lower=True).T
            sq = ((wx[:, None, :] - wp[None, :, :]) ** 2).sum(axis=-1)
            out[s : s + chunk] = np.exp(log_norm - 0.5 * sq) @ self.weights
        return out

    def sample_at(self, seed_indices, rng: np.random.Generator) -> np.ndarray:
        """One kernel draw around each listed support point."""
        idx = np.asarray(seed_indices, dtype=np.intp)
        if idx.size and (idx.min() < 0 or idx.max() >= self.size):
            raise DataError("seed index out of range")
        eps = rng.standard_normal((idx.size, self.dim))
        return self.points[idx] + eps @ self.chol_lower.T

    def sample(self, count: int, rng: np.random.Generator) -> np.ndarray:
        if count == 0:
            return np.empty((0, self.dim))
        seeds = rng.choice(self.size, size=count, p=self.weights)
        return self.sample_at(seeds, rng)


def _jittered_cholesky(h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Factor ``h``; on failure retry once with ``1e-9 * trace(h)/d`` on the diagonal."""
    try:
        return cholesky(h), h
    except NotPositiveDefiniteError:
        d = h.shape[0]
        jitter = 1e-9 * np.trace(h) / d
        if not jitter > 0:
            raise
        h = h + jitter * np.eye(d)
        return cholesky(h), h


def fit_kde(
    points,
    weights=None,
    rule: BandwidthRule = BandwidthRule.silverman(),
    noise_scale: float = 1.0,
    squared: bool = True,
) -> KdeModel:
    """Fit a weighted Gaussian KDE.

    ``noise_scale`` multiplies the bandwidth matrix itself. With
    ``squared=False`` the rule factor enters linearly instead of squared.
    """
    pts = np.array(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    m, d = pts.shape
    w = np.full(m, 1.0 / m) if weights is None else _check_weights(weights, m)
    if not 0.0 < noise_scale <= 1.0:
        raise ConfigError(f"noise scale must lie in (0, 1], got {noise_scale}")
    eta = bandwidth_factor(rule, m, d)
    cov = weighted_covariance(pts, w)
    h = noise_scale * (eta**2 if squared else eta) * cov
    h = 0.5 * (h + h.T)
    if eta == 0.0:
        L = np.zeros((d, d))
    else:
        try:
            L, h = _jittered_cholesky(h)
        except NotPositiveDefiniteError as exc:
            raise NumericError(f"degenerate KDE support: {exc}") from exc
    for arr in (pts, w, h, L):
        arr.setflags(write=False)
    return KdeModel(points=pts, weights=w, bandwidth_cov=h, chol_lower=L)


def density_at(model: KdeModel, point) -> float:
    point = np.asarray(point, dtype=np.float64).reshape(-1)
    if point.shape[0] != model.dim:
        raise DataError(f"point dimension {point.shape[0]} != model dimension {model.dim}")
    return float(model.density(point[None, :])[0])


def sample_from_seed(model: KdeModel, seed_index: int, rng: np.random.Generator) -> np.ndarray:
    if not 0 <= seed_index < model.size:
        raise DataError(f"seed index {seed_index} out of range [0, {model.size})")
    return model.sample_at([seed_index], rng)[0]


def sample(model: KdeModel, count: int, rng: np.random.Generator) -> np.ndarray:
    return model.sample(count, rng)
