"""A beta-VAE over (x, y) rows with a density-balanced target loss.

Encoder: (p+1) -> (2p+1) -> (p-q) -> (p-2q), then linear heads for the latent
mean and log-variance, each of dim p-3q. Decoder mirrors it back to (2p+1)
with linear heads for x (dim p) and y (dim 1). Tanh everywhere else.

The minimised batch objective is::

    beta_x  * mean_i ||x_i - xhat_i||^2
  + beta_y  * mean_i w_i (y_i - yhat_i)^2
  + beta_kl * mean_i KL(N(mu_i, sigma_i^2) || N(0, I))

with ``w`` the mean-one inverse-density weights of the training targets.
"""

from __future__ import annotations

import logging
import time
import warnings
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import nn
from .data import ScalerParams, TabularDataset
from .errors import ConfigError, DataError, NumericError
from .kde import BandwidthRule
from .kvfile import parse_bool, parse_optional, read_kv, write_kv
from .weights import loss_weights, relevance_weights

log = logging.getLogger(__name__)

SIDECAR_VERSION = 1


def default_q(p: int) -> int:
    return p // 10 + 1


@dataclass(frozen=True)
class VaeConfig:
    beta_x: float = 1.0
    beta_y: float = 10.0
    beta_kl: float = 1e-6
    alpha: float = 1.0
    epochs: int = 2000
    batch_size: int = 128
    lr: float = 1e-3
    q: Optional[int] = None
    deterministic_latent: bool = False
    rng_seed: int = 0
    bandwidth_rule: BandwidthRule = BandwidthRule.silverman()
    clip_norm: Optional[float] = None

    def validate(self) -> "VaeConfig":
        for name in ("beta_x", "beta_y", "beta_kl", "alpha"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1: an untrained model cannot be used")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not self.lr > 0:
            raise ConfigError("lr must be positive")
        if self.q is not None and self.q < 1:
            raise ConfigError("q must be >= 1")
        if self.clip_norm is not None and not self.clip_norm > 0:
            raise ConfigError("clip_norm must be positive")
        return self

    def to_strings(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = "none" if v is None else (repr(v) if isinstance(v, float) else str(v))
        return out

    @classmethod
    def from_strings(cls, items: dict) -> "VaeConfig":
        conv = {
            "beta_x": float,
            "beta_y": float,
            "beta_kl": float,
            "alpha": float,
            "epochs": int,
            "batch_size": int,
            "lr": float,
            "q": lambda t: parse_optional(t, int),
            "deterministic_latent": parse_bool,
            "rng_seed": int,
            "bandwidth_rule": BandwidthRule.parse,
            "clip_norm": lambda t: parse_optional(t, float),
        }
        kwargs = {}
        for key, value in items.items():
            if key in conv:
                try:
                    kwargs[key] = conv[key](value)
                except ValueError as exc:
                    raise ConfigError(f"bad value for {key}: {value!r}") from exc
        return cls(**kwargs)


@dataclass
class VaeModel:
    p: int
    q: int
    encoder: nn.Mlp
    mu_head: nn.Mlp
    logvar_head: nn.Mlp
    decoder: nn.Mlp
    x_head: nn.Mlp
    y_head: nn.Mlp
    config: VaeConfig = field(default_factory=VaeConfig)
    scaler: Optional[ScalerParams] = None
    trained: bool = False

    NETS = ("encoder", "mu_head", "logvar_head", "decoder", "x_head", "y_head")

    @property
    def latent_dim(self) -> int:
        return self.p - 3 * self.q

    def nets(self) -> list:
        return [getattr(self, name) for name in self.NETS]

    def parameters(self) -> list:
        out = []
        for net in self.nets():
            out.extend(net.parameters())
        return out

    def named_tensors(self) -> dict:
        out = {}
        for name in self.NETS:
            for k, layer in enumerate(getattr(self, name).layers):
                out[f"{name}.{k}.weight"] = layer.weight
                out[f"{name}.{k}.bias"] = layer.bias
        return out


def build_architecture(
    p: int,
    q: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
    config: Optional[VaeConfig] = None,
    zero: bool = False,
) -> VaeModel:
    """Untrained model with the layer sizes derived from ``p`` and ``q``."""
    config = config or VaeConfig()
    q = q if q is not None else (config.q if config.q is not None else default_q(p))
    d_z = p - 3 * q
    if d_z < 1:
        raise ConfigError(f"latent dim p - 3q = {d_z} < 1 for p={p}, q={q}; lower q")
    rng = rng if rng is not None else np.random.default_rng(config.rng_seed)
    trunk_enc = [p + 1, 2 * p + 1, p - q, p - 2 * q]
    trunk_dec = [d_z, p - 2 * q, p - q, 2 * p + 1]
    return VaeModel(
        p=p,
        q=q,
        encoder=nn.init_mlp(trunk_enc, rng, activate_last=True, zero=zero),
        mu_head=nn.init_mlp([p - 2 * q, d_z], rng, activate_last=False, zero=zero),
        logvar_head=nn.init_mlp([p - 2 * q, d_z], rng, activate_last=False, zero=zero),
        decoder=nn.init_mlp(trunk_dec, rng, activate_last=True, zero=zero),
        x_head=nn.init_mlp([2 * p + 1, p], rng, activate_last=False, zero=zero),
        y_head=nn.init_mlp([2 * p + 1, 1], rng, activate_last=False, zero=zero),
        config=replace(config, q=q),
    )


def _joint_input(model: VaeModel, x, y) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if x.ndim != 2 or x.shape[1] != model.p:
        raise DataError(f"expected x of shape (b, {model.p}), got {x.shape}")
    if y.shape[0] != x.shape[0]:
        raise DataError("x and y row counts differ")
    return np.column_stack([x, y])


def encode(model: VaeModel, x, y) -> tuple[np.ndarray, np.ndarray]:
    xin = _joint_input(model, x, y)
    if xin.size and (xin.min() < -0.5 or xin.max() > 1.5):
        warnings.warn("encoder inputs fall far outside [0, 1]; were they scaled?", stacklevel=2)
    h = model.encoder(xin)
    return model.mu_head(h), model.logvar_head(h)


def reparameterize(mu, log_var, rng: Optional[np.random.Generator], deterministic: bool = False) -> np.ndarray:
    mu = np.asarray(mu, dtype=np.float64)
    log_var = np.asarray(log_var, dtype=np.float64)
    if mu.shape != log_var.shape:
        raise DataError("mu and log_var shapes differ")
    if deterministic:
        return mu.copy()
    return mu + np.exp(0.5 * log_var) * rng.standard_normal(mu.shape)


def decode(model: VaeModel, z) -> tuple[np.ndarray, np.ndarray]:
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2 or z.shape[1] != model.latent_dim:
        raise DataError(f"expected z of shape (b, {model.latent_dim}), got {z.shape}")
    h = model.decoder(z)
    return model.x_head(h), model.y_head(h)[:, 0]


@dataclass
class LossTerms:
    total: float
    rec_x: float
    rec_y: float
    kl: float
    kl_per_example: np.ndarray


def balanced_loss(
    model: VaeModel,
    x,
    y,
    weights=None,
    rng: Optional[np.random.Generator] = None,
    noise=None,
) -> tuple[float, nn.GradientBundle, LossTerms]:
    """Loss, gradients (ordered as ``model.parameters()``) and the term split.

    ``noise`` fixes the reparameterisation draw; otherwise it comes from ``rng``.
    """
    cfg = model.config
    xin = _joint_input(model, x, y)
    x, y = xin[:, :-1], xin[:, -1]
    b = xin.shape[0]
    w = np.ones(b) if weights is None else np.asarray(weights, dtype=np.float64)
    if w.shape != (b,):
        raise DataError("loss weights must align with batch rows")

    h, c_enc = nn.forward(model.encoder, xin)
    mu, c_mu = nn.forward(model.mu_head, h)
    lv, c_lv = nn.forward(model.logvar_head, h)
    if cfg.deterministic_latent:
        eps = np.zeros_like(mu)
        z = mu
    else:
        eps = rng.standard_normal(mu.shape) if noise is None else np.asarray(noise, dtype=np.float64)
        std = np.exp(0.5 * lv)
        z = mu + std * eps
    hd, c_dec = nn.forward(model.decoder, z)
    xh, c_x = nn.forward(model.x_head, hd)
    yh, c_y = nn.forward(model.y_head, hd)

    rx = xh - x
    ry = yh[:, 0] - y
    var = np.exp(lv)
    kl_i = -0.5 * np.sum(1.0 + lv - mu**2 - var, axis=1)
    rec_x = cfg.beta_x * np.sum(rx**2) / b
    rec_y = cfg.beta_y * np.sum(w * ry**2) / b
    kl = cfg.beta_kl * np.sum(kl_i) / b
    total = rec_x + rec_y + kl

    g_x, gh_x = nn.backward(model.x_head, c_x, (2.0 * cfg.beta_x / b) * rx)
    g_y, gh_y = nn.backward(model.y_head, c_y, ((2.0 * cfg.beta_y / b) * w * ry)[:, None])
    g_dec, g_z = nn.backward(model.decoder, c_dec, gh_x + gh_y)
    k = cfg.beta_kl / b
    g_mu = g_z + k * mu
    g_lv = k * 0.5 * (var - 1.0)
    if not cfg.deterministic_latent:
        g_lv = g_lv + g_z * 0.5 * std * eps
    g_muh, gh_mu = nn.backward(model.mu_head, c_mu, g_mu)
    g_lvh, gh_lv = nn.backward(model.logvar_head, c_lv, g_lv)
    g_enc, _ = nn.backward(model.encoder, c_enc, gh_mu + gh_lv)

    grads = g_enc + g_muh + g_lvh + g_dec + g_x + g_y
    terms = LossTerms(float(total), float(rec_x), float(rec_y), float(kl), kl_i)
    return float(total), grads, terms


@dataclass
class TrainReport:
    """Per-epoch means over examples of each loss term."""

    rec_x: list = field(default_factory=list)
    rec_y: list = field(default_factory=list)
    kl: list = field(default_factory=list)
    total: list = field(default_factory=list)
    wall_clock: float = 0.0
    epochs: int = 0

    def write_csv(self, path) -> None:
        with Path(path).open("w", encoding="utf-8") as fh:
            fh.write("epoch,rec_x,rec_y,kl,total\n")
            for e, row in enumerate(zip(self.rec_x, self.rec_y, self.kl, self.total), start=1):
                fh.write(",".join([str(e)] + [repr(v) for v in row]) + "\n")


def _check_scaled(ds: TabularDataset) -> None:
    joint = ds.joint()
    if joint.min() < -1e-9 or joint.max() > 1 + 1e-9:
        raise DataError("training data must be min-max scaled to [0, 1]")


def train(ds: TabularDataset, cfg: Optional[VaeConfig] = None) -> tuple[VaeModel, TrainReport]:
    cfg = (cfg or VaeConfig()).validate()
    _check_scaled(ds)
    n = ds.n
    if cfg.batch_size > n:
        raise ConfigError(f"batch_size {cfg.batch_size} exceeds {n} training rows")
    rng = np.random.default_rng(cfg.rng_seed)
    model = build_architecture(ds.p, cfg.q, rng=rng, config=cfg)
    model.scaler = ds.scaler
    w = loss_weights(relevance_weights(ds.target, cfg.alpha, cfg.bandwidth_rule.for_density))
    x, y = ds.features, ds.target
    params = model.parameters()
    state = nn.AdamState.for_params(params, lr=cfg.lr)
    report = TrainReport()
    t0 = time.perf_counter()
    for epoch in range(1, cfg.epochs + 1):
        perm = rng.permutation(n)
        sums = np.zeros(4)
        for batch_no, start in enumerate(range(0, n, cfg.batch_size)):
            idx = perm[start : start + cfg.batch_size]
            loss, grads, terms = balanced_loss(model, x[idx], y[idx], w[idx], rng)
            if not np.isfinite(loss):
                raise NumericError(f"non-finite loss at epoch {epoch}, batch {batch_no}")
            try:
                nn.adam_step(params, grads, state, clip_norm=cfg.clip_norm)
            except NumericError as exc:
                raise NumericError(f"epoch {epoch}, batch {batch_no}: {exc}") from exc
            sums += len(idx) * np.array([terms.rec_x, terms.rec_y, terms.kl, loss])
        sums /= n
        report.rec_x.append(float(sums[0]))
        report.rec_y.append(float(sums[1]))
        report.kl.append(float(sums[2]))
        report.total.append(float(sums[3]))
        if epoch % 100 == 0:
            log.debug("epoch %d loss %.6g", epoch, sums[3])
    report.wall_clock = time.perf_counter() - t0
    report.epochs = cfg.epochs
    model.trained = True
    return model, report


def natural_generate(model: VaeModel, seed_indices, x, y, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Classical VAE sampling: z ~ N(mu_i, sigma_i^2) around each seed, then decode."""
    if not model.trained:
        raise ConfigError("model is untrained")
    idx = np.asarray(seed_indices, dtype=np.intp)
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if idx.size == 0:
        return np.empty((0, model.p)), np.empty(0)
    mu, lv = encode(model, x[idx], y[idx])
    z = reparameterize(mu, lv, rng, deterministic=model.config.deterministic_latent)
    return decode(model, z)


def save_model(model: VaeModel, path) -> Path:
    """Write tensors to ``path`` and config/scaler to ``path.meta``."""
    path = Path(path)
    nn.save_tensors(path, model.named_tensors())
    meta = {"format_version": SIDECAR_VERSION, "p": model.p, "q": model.q, "trained": model.trained}
    meta.update(model.config.to_strings())
    if model.scaler is not None:
        meta["scaler_min"] = " ".join(repr(float(v)) for v in model.scaler.mins)
        meta["scaler_max"] = " ".join(repr(float(v)) for v in model.scaler.maxs)
    sidecar = path.with_name(path.name + ".meta")
    write_kv(sidecar, meta, header="VAE checkpoint sidecar")
    return sidecar


def load_model(path) -> VaeModel:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such model file: {path}")
    meta = read_kv(path.with_name(path.name + ".meta"))
    if int(meta.get("format_version", -1)) != SIDECAR_VERSION:
        raise DataError(f"{path}: unsupported sidecar version")
    cfg = VaeConfig.from_strings(meta)
    model = build_architecture(int(meta["p"]), int(meta["q"]), config=cfg, zero=True)
    tensors = nn.load_tensors(path)
    for name, arr in model.named_tensors().items():
        if name not in tensors or tensors[name].shape != arr.shape:
            raise DataError(f"{path}: tensor {name} missing or mis-shaped")
        arr[...] = tensors[name]
    if "scaler_min" in meta:
        model.scaler = ScalerParams(
            [float(v) for v in meta["scaler_min"].split()],
            [float(v) for v in meta["scaler_max"].split()],
        )
    model.trained = parse_bool(meta.get("trained", "false"))
    return model
