"""Run configuration shared by every CLI command.

Stored as a flat ``key = value`` file; every key is also a CLI flag
(``--beta-kl 0`` overrides ``beta_kl = 1e-06`` from the file).
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from typing import Optional

from .errors import ConfigError
from .evaluation import BenchmarkConfig, parse_regressor
from .generators import AugmentationPlan, GeneratorKind
from .kde import BandwidthRule
from .kvfile import parse_bool, parse_optional, read_kv, write_kv
from .seeding import derive_seed
from .vae import VaeConfig

ALL_GENERATORS = "baseline,os,csb,0vae,bvae,kbvae,bvaew,kbvaew,kpca"


@dataclass(frozen=True)
class RunConfig:
    # VAE training
    beta_x: float = 1.0
    beta_y: float = 10.0
    beta_kl: float = 1e-6
    alpha: float = 1.0
    epochs: int = 2000
    batch_size: int = 128
    lr: float = 1e-3
    q: Optional[int] = None
    deterministic_latent: bool = False
    clip_norm: Optional[float] = None
    # density estimation and generation
    bandwidth: str = "silverman"
    bandwidth_convention: str = "squared"
    rho: float = 0.1
    n_synthetic: Optional[int] = None
    mix: str = "append"
    # benchmark protocol
    folds: int = 10
    fold_mode: str = "holdout"
    train_fraction: float = 0.6
    generators: str = ALL_GENERATORS
    regressors: str = "knn:5,ridge:0.001"
    metric_alpha: float = 1.0
    wmse_normalization: str = "mean"
    mape_epsilon: float = 1e-8
    simulate_n: int = 3000
    # run
    seed: int = 0
    jobs: int = 1
    data: str = ""
    target: str = ""
    out_dir: str = ""

    def validate(self) -> "RunConfig":
        self.vae_config().validate()
        self.plan().validate()
        if self.bandwidth_convention not in ("squared", "linear"):
            raise ConfigError("bandwidth_convention must be 'squared' or 'linear'")
        if self.folds < 2:
            raise ConfigError("folds must be >= 2")
        if self.fold_mode not in ("holdout", "partition"):
            raise ConfigError("fold_mode must be 'holdout' or 'partition'")
        if not 0 < self.train_fraction < 1:
            raise ConfigError("train_fraction must lie in (0, 1)")
        if self.wmse_normalization not in ("mean", "sum"):
            raise ConfigError("wmse_normalization must be 'mean' or 'sum'")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        self.generator_kinds()
        self.regressor_kinds()
        return self

    def vae_config(self, purpose: str = "train") -> VaeConfig:
        return VaeConfig(
            beta_x=self.beta_x,
            beta_y=self.beta_y,
            beta_kl=self.beta_kl,
            alpha=self.alpha,
            epochs=self.epochs,
            batch_size=self.batch_size,
            lr=self.lr,
            q=self.q,
            deterministic_latent=self.deterministic_latent,
            rng_seed=derive_seed(self.seed, purpose),
            bandwidth_rule=BandwidthRule.parse(self.bandwidth),
            clip_norm=self.clip_norm,
        )

    def plan(self, purpose: str = "generate") -> AugmentationPlan:
        return AugmentationPlan(
            n_synthetic=self.n_synthetic,
            alpha=self.alpha,
            rho=self.rho,
            bandwidth_rule=BandwidthRule.parse(self.bandwidth),
            squared_bandwidth=self.bandwidth_convention == "squared",
            mix=self.mix,
            rng_seed=derive_seed(self.seed, purpose),
        )

    def generator_kinds(self) -> list:
        return [GeneratorKind.parse(g) for g in self.generators.split(",") if g.strip()]

    def regressor_kinds(self) -> list:
        return [parse_regressor(r) for r in self.regressors.split(",") if r.strip()]

    def benchmark_config(self) -> BenchmarkConfig:
        return BenchmarkConfig(
            vae=self.vae_config(),
            plan=self.plan(),
            train_fraction=self.train_fraction,
            fold_mode=self.fold_mode,
            master_seed=self.seed,
            metric_alpha=self.metric_alpha,
            wmse_normalization=self.wmse_normalization,
            mape_epsilon=self.mape_epsilon,
            jobs=self.jobs,
        )

    # ------------------------------------------------------------ text form

    def to_items(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                out[f.name] = "none"
            elif isinstance(v, float):
                out[f.name] = repr(v)
            else:
                out[f.name] = str(v)
        return out

    def with_items(self, items: dict) -> "RunConfig":
        known = {f.name: f for f in fields(self)}
        changes = {}
        for key, text in items.items():
            key = key.replace("-", "_")
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            try:
                changes[key] = _CONVERTERS[key](text)
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {text!r}") from exc
        return replace(self, **changes)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        return cls().with_items(read_kv(path))

    def write(self, path) -> None:
        write_kv(path, self.to_items(), header="effective run configuration")


def _str(text: str) -> str:
    return str(text).strip()


_CONVERTERS = {}
for _f in fields(RunConfig):
    _t = _f.type
    if _t == "float":
        _CONVERTERS[_f.name] = float
    elif _t == "int":
        _CONVERTERS[_f.name] = int
    elif _t == "bool":
        _CONVERTERS[_f.name] = parse_bool
    elif _t == "Optional[int]":
        _CONVERTERS[_f.name] = lambda t: parse_optional(t, int)
    elif _t == "Optional[float]":
        _CONVERTERS[_f.name] = lambda t: parse_optional(t, float)
    else:
        _CONVERTERS[_f.name] = _str
