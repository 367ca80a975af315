"""Inverse-density relevance weights over a continuous target."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, NumericError
from .kde import BandwidthRule, fit_kde


@dataclass(frozen=True)
class RelevanceWeights:
    """``raw[i] = density(y_i) ** -alpha`` and its sum-to-one normalisation."""

    raw: np.ndarray
    normalized: np.ndarray
    alpha: float
    bandwidth_rule: BandwidthRule
    density: np.ndarray

    def __len__(self):
        return self.raw.shape[0]


def weights_from_density(density, alpha: float) -> tuple[np.ndarray, np.ndarray]:
    f = np.asarray(density, dtype=np.float64)
    if alpha < 0:
        raise DataError(f"alpha must be nonnegative, got {alpha}")
    if not np.all(f > 0):
        raise NumericError("target density evaluated to zero")
    raw = np.ones_like(f) if alpha == 0 else f ** (-float(alpha))
    if not np.all(np.isfinite(raw)):
        raise NumericError("relevance weights overflowed")
    return raw, raw / raw.sum()


def relevance_weights(
    y, alpha: float = 1.0, rule: BandwidthRule = BandwidthRule.silverman()
) -> RelevanceWeights:
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if y.shape[0] < 2:
        raise DataError("relevance weights need at least 2 targets")
    if np.ptp(y) == 0:
        raise DataError("target is constant; its density cannot be estimated")
    kde = fit_kde(y, rule=rule, noise_scale=1.0, squared=True)
    f = kde.density(y)
    raw, normalized = weights_from_density(f, alpha)
    for arr in (raw, normalized, f):
        arr.setflags(write=False)
    return RelevanceWeights(raw=raw, normalized=normalized, alpha=float(alpha), bandwidth_rule=rule, density=f)


def loss_weights(rw: RelevanceWeights) -> np.ndarray:
    """Raw weights rescaled to mean one."""
    return rw.raw / rw.raw.mean()
