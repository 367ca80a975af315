"""Synthetic-row generators and the augmentation assembler.

Every generator works in min-max scaled space, shares one weighted seed draw
policy (inverse target density) and differs only in where the new row is
produced: copied (OS), perturbed in data space (CSB), in PCA score space
(KPCA), through the VAE's own posterior (0VAE/BVAE/BVAEw) or by a smoothed
bootstrap on the VAE latent means (KBVAE/KBVAEw, the latter being DAVID).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from . import vae as vae_mod
from .data import TabularDataset, concat
from .errors import ConfigError, DataError, NumericError
from .kde import BandwidthRule, fit_kde
from .weights import RelevanceWeights, relevance_weights


class GeneratorKind(enum.Enum):
    BASELINE = "baseline"
    OS = "os"
    CSB = "csb"
    ZERO_VAE = "0vae"
    BVAE = "bvae"
    KBVAE = "kbvae"
    BVAEW = "bvaew"
    KBVAEW = "kbvaew"
    KPCA = "kpca"

    @classmethod
    def parse(cls, text: Union[str, "GeneratorKind"]) -> "GeneratorKind":
        if isinstance(text, cls):
            return text
        key = text.strip().lower()
        key = {"david": "kbvaew", "zerovae": "0vae", "ovae": "0vae", "ktrain": "csb"}.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise ConfigError(f"unknown generator {text!r}; choose from {[k.value for k in cls]}") from None

    @property
    def label(self) -> str:
        return _LABELS[self]

    @property
    def needs_model(self) -> bool:
        return self in _VAE_KINDS

    @property
    def model_variant(self) -> Optional[str]:
        """Which trained VAE this kind draws on: 'zero', 'plain' or 'balanced'."""
        if self is GeneratorKind.ZERO_VAE:
            return "zero"
        if self in (GeneratorKind.BVAE, GeneratorKind.KBVAE):
            return "plain"
        if self in (GeneratorKind.BVAEW, GeneratorKind.KBVAEW):
            return "balanced"
        return None


_LABELS = {
    GeneratorKind.BASELINE: "Baseline",
    GeneratorKind.OS: "OS",
    GeneratorKind.CSB: "CSB",
    GeneratorKind.ZERO_VAE: "0VAE",
    GeneratorKind.BVAE: "BVAE",
    GeneratorKind.KBVAE: "kBVAE",
    GeneratorKind.BVAEW: "BVAEw",
    GeneratorKind.KBVAEW: "kBVAEw",
    GeneratorKind.KPCA: "kPCA",
}
_VAE_KINDS = frozenset(
    {GeneratorKind.ZERO_VAE, GeneratorKind.BVAE, GeneratorKind.KBVAE, GeneratorKind.BVAEW, GeneratorKind.KBVAEW}
)


@dataclass(frozen=True)
class AugmentationPlan:
    n_synthetic: Optional[int] = None  # None: as many rows as the training set
    alpha: float = 1.0
    rho: float = 0.1
    bandwidth_rule: BandwidthRule = BandwidthRule.silverman()
    squared_bandwidth: bool = True
    mix: str = "append"
    rng_seed: int = 0

    def validate(self) -> "AugmentationPlan":
        if self.n_synthetic is not None and self.n_synthetic < 0:
            raise ConfigError("n_synthetic must be >= 0")
        if self.alpha < 0:
            raise ConfigError("alpha must be nonnegative")
        if not 0.0 < self.rho <= 1.0:
            raise ConfigError(f"rho must lie in (0, 1], got {self.rho}")
        if self.mix not in ("append", "replace-duplicates"):
            raise ConfigError(f"unknown mix rule {self.mix!r}")
        return self

    def count_for(self, train: TabularDataset) -> int:
        return train.n if self.n_synthetic is None else int(self.n_synthetic)


def draw_seeds(weights, m: int, rng: np.random.Generator) -> np.ndarray:
    """``m`` categorical draws with replacement from the normalised weights."""
    w = weights.normalized if isinstance(weights, RelevanceWeights) else np.asarray(weights, dtype=np.float64)
    if m == 0:
        return np.empty(0, dtype=np.intp)
    if np.any(w < 0) or not abs(w.sum() - 1.0) < 1e-9:
        raise DataError("seed weights must be nonnegative and sum to 1")
    return rng.choice(w.shape[0], size=m, p=w)


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # columns are eigenvectors, descending eigenvalue
    eigenvalues: np.ndarray
    retained: int


def pca_fit(points, retained: Optional[int] = None) -> PcaModel:
    pts = np.asarray(points, dtype=np.float64)
    n, d = pts.shape
    if n < d or d < 1:
        raise DataError(f"PCA needs n >= d >= 1, got n={n}, d={d}")
    mean = pts.mean(axis=0)
    centered = pts - mean
    cov = centered.T @ centered / n
    try:
        evals, evecs = np.linalg.eigh(0.5 * (cov + cov.T))
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"covariance eigen-solve failed: {exc}") from exc
    order = np.argsort(evals)[::-1]
    evals, evecs = evals[order], evecs[:, order]
    # sign convention: largest-magnitude loading of each component is positive
    flip = np.sign(evecs[np.abs(evecs).argmax(axis=0), np.arange(d)])
    evecs = evecs * np.where(flip == 0, 1.0, flip)
    r = d if retained is None else int(retained)
    return PcaModel(mean=mean, components=evecs, eigenvalues=evals, retained=r)


def pca_project(model: PcaModel, points) -> np.ndarray:
    return (np.asarray(points, dtype=np.float64) - model.mean) @ model.components[:, : model.retained]


def pca_inverse(model: PcaModel, scores) -> np.ndarray:
    return np.asarray(scores, dtype=np.float64) @ model.components[:, : model.retained].T + model.mean


def _check_model(kind: GeneratorKind, model) -> None:
    if model is None:
        raise ConfigError(f"generator {kind.label} needs a trained VAE")
    if not model.trained:
        raise ConfigError(f"generator {kind.label} needs a trained VAE; got an untrained one")
    cfg = model.config
    variant = kind.model_variant
    if variant == "balanced" and not cfg.alpha > 0:
        raise ConfigError(f"{kind.label} needs a VAE trained with the balanced loss (alpha > 0), got alpha={cfg.alpha}")
    if variant in ("plain", "zero") and cfg.alpha != 0:
        raise ConfigError(f"{kind.label} needs a VAE trained with alpha = 0, got alpha={cfg.alpha}")
    if variant == "zero" and cfg.beta_kl != 0:
        raise ConfigError(f"{kind.label} needs a VAE trained with beta_kl = 0, got {cfg.beta_kl}")
    if variant == "plain" and cfg.beta_kl == 0:
        raise ConfigError(f"{kind.label} needs a VAE trained with beta_kl > 0")


def _smoothed_bootstrap(points, rw: RelevanceWeights, seeds, plan: AugmentationPlan, rng) -> np.ndarray:
    kde = fit_kde(points, rw.normalized, plan.bandwidth_rule, plan.rho, squared=plan.squared_bandwidth)
    return kde.sample_at(seeds, rng)


def _prepare(train: TabularDataset, plan: AugmentationPlan):
    plan.validate()
    rng = np.random.default_rng(plan.rng_seed)
    rw = relevance_weights(train.target, plan.alpha, plan.bandwidth_rule.for_density)
    seeds = draw_seeds(rw, plan.count_for(train), rng)
    return rng, rw, seeds


def _david(model, train: TabularDataset, plan: AugmentationPlan):
    rng, rw, seeds = _prepare(train, plan)
    if seeds.size == 0:
        return train.with_joint(np.empty((0, train.p + 1))), seeds
    mu, _ = vae_mod.encode(model, train.features, train.target)
    z = _smoothed_bootstrap(mu, rw, seeds, plan, rng)
    xs, ys = vae_mod.decode(model, z)
    return train.with_joint(np.column_stack([xs, ys])), seeds


def david_generate(model, train: TabularDataset, plan: AugmentationPlan = AugmentationPlan(), return_seeds: bool = False):
    """Draw seeds by inverse target density, smooth-bootstrap their latent
    means, decode the perturbed latents into new (x, y) rows."""
    if model is None:
        raise ConfigError("DAVID generation needs a trained VAE")
    _check_model(GeneratorKind.KBVAEW if model.config.alpha > 0 else GeneratorKind.KBVAE, model)
    out, seeds = _david(model, train, plan)
    return (out, seeds) if return_seeds else out


def generate(
    kind,
    train: TabularDataset,
    model=None,
    plan: AugmentationPlan = AugmentationPlan(),
    return_seeds: bool = False,
):
    """Synthetic rows (scaled space, same schema as ``train``) for one generator."""
    kind = GeneratorKind.parse(kind)
    empty = train.with_joint(np.empty((0, train.p + 1)))
    if kind is GeneratorKind.BASELINE:
        plan.validate()
        return (empty, np.empty(0, dtype=np.intp)) if return_seeds else empty
    if kind.needs_model:
        _check_model(kind, model)
        if model.p != train.p:
            raise DataError(f"model expects {model.p} features, data has {train.p}")
    if kind in (GeneratorKind.KBVAE, GeneratorKind.KBVAEW):
        out, seeds = _david(model, train, plan)
        return (out, seeds) if return_seeds else out

    rng, rw, seeds = _prepare(train, plan)
    joint = train.joint()
    if seeds.size == 0:
        rows = np.empty((0, train.p + 1))
    elif kind is GeneratorKind.OS:
        rows = joint[seeds]
    elif kind is GeneratorKind.CSB:
        rows = _smoothed_bootstrap(joint, rw, seeds, plan, rng)
    elif kind is GeneratorKind.KPCA:
        pca = pca_fit(joint)
        scores = _smoothed_bootstrap(pca_project(pca, joint), rw, seeds, plan, rng)
        rows = pca_inverse(pca, scores)
    else:
        xs, ys = vae_mod.natural_generate(model, seeds, train.features, train.target, rng)
        rows = np.column_stack([xs, ys])
    out = train.with_joint(rows)
    return (out, seeds) if return_seeds else out


def augment(train: TabularDataset, synthetic: TabularDataset, plan: AugmentationPlan = AugmentationPlan()) -> TabularDataset:
    """Original rows followed by synthetic rows; ``origin`` flags the synthetic ones.

    With ``mix="replace-duplicates"`` synthetic rows that exactly repeat an
    earlier row are dropped.
    """
    if synthetic.feature_names != train.feature_names or synthetic.target_name != train.target_name:
        raise DataError("synthetic and training schemas differ")
    real = train.with_joint(train.joint(), origin=np.zeros(train.n, dtype=bool))
    syn = synthetic.with_joint(synthetic.joint(), origin=np.ones(synthetic.n, dtype=bool))
    if plan.mix == "replace-duplicates" and syn.n:
        seen = {row.tobytes() for row in real.joint()}
        keep = []
        for i, row in enumerate(syn.joint()):
            key = row.tobytes()
            if key not in seen:
                seen.add(key)
                keep.append(i)
        syn = syn.subset(keep)
    return concat([real, syn])
