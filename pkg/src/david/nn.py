"""Small fixed-architecture MLPs in numpy: forward, backward, Adam and a
finite-difference gradient checker.

Gradients are summed over the batch; losses own any 1/b normalisation.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DataError, NumericError


@dataclass
class DenseLayer:
    weight: np.ndarray  # out x in
    bias: np.ndarray

    @property
    def n_in(self) -> int:
        return self.weight.shape[1]

    @property
    def n_out(self) -> int:
        return self.weight.shape[0]


@dataclass
class Mlp:
    """Affine layers with Tanh between them; ``activate_last`` toggles Tanh on the output."""

    layers: list
    activate_last: bool = True

    def __post_init__(self):
        for a, b in zip(self.layers, self.layers[1:]):
            if a.n_out != b.n_in:
                raise DataError(f"layer dims do not chain: {a.n_out} -> {b.n_in}")

    @property
    def dims(self) -> list:
        return [self.layers[0].n_in] + [layer.n_out for layer in self.layers]

    def parameters(self) -> list:
        out = []
        for layer in self.layers:
            out.extend((layer.weight, layer.bias))
        return out

    def __call__(self, x):
        return forward(self, x)[0]


@dataclass
class GradientBundle:
    """Gradient tensors in the same order as ``Mlp.parameters()``."""

    tensors: list

    def __iter__(self):
        return iter(self.tensors)

    def __len__(self):
        return len(self.tensors)

    def __add__(self, other: "GradientBundle") -> "GradientBundle":
        return GradientBundle(self.tensors + other.tensors)


@dataclass
class ForwardCache:
    inputs: list  # input to each layer
    outputs: list  # post-activation output of each layer
    shapes: tuple


def init_mlp(
    dims: Sequence[int],
    rng: np.random.Generator,
    activate_last: bool = True,
    zero: bool = False,
) -> Mlp:
    """Xavier-uniform weights, zero biases (or all zeros with ``zero=True``)."""
    dims = [int(d) for d in dims]
    if len(dims) < 2:
        raise DataError("an MLP needs at least input and output dims")
    if min(dims) < 1:
        raise DataError(f"all layer dims must be >= 1, got {dims}")
    layers = []
    for n_in, n_out in zip(dims, dims[1:]):
        if zero:
            w = np.zeros((n_out, n_in))
        else:
            bound = np.sqrt(6.0 / (n_in + n_out))
            w = rng.uniform(-bound, bound, size=(n_out, n_in))
        layers.append(DenseLayer(w, np.zeros(n_out)))
    return Mlp(layers, activate_last=activate_last)


def forward(mlp: Mlp, x) -> tuple[np.ndarray, ForwardCache]:
    h = np.asarray(x, dtype=np.float64)
    if h.ndim != 2 or h.shape[1] != mlp.layers[0].n_in:
        raise DataError(f"input shape {h.shape} does not match MLP input dim {mlp.layers[0].n_in}")
    inputs, outputs = [], []
    last = len(mlp.layers) - 1
    for k, layer in enumerate(mlp.layers):
        inputs.append(h)
        h = h @ layer.weight.T + layer.bias
        if k < last or mlp.activate_last:
            h = np.tanh(h)
        outputs.append(h)
    shapes = tuple(layer.weight.shape for layer in mlp.layers)
    return h, ForwardCache(inputs, outputs, shapes)


def backward(mlp: Mlp, cache: ForwardCache, output_grad) -> tuple[GradientBundle, np.ndarray]:
    """Reverse-mode gradients; returns (parameter gradients, input gradient)."""
    if cache.shapes != tuple(layer.weight.shape for layer in mlp.layers):
        raise DataError("forward cache does not belong to this MLP")
    g = np.asarray(output_grad, dtype=np.float64)
    if g.shape != cache.outputs[-1].shape:
        raise DataError(f"output gradient shape {g.shape} != output shape {cache.outputs[-1].shape}")
    last = len(mlp.layers) - 1
    grads = [None] * (2 * len(mlp.layers))
    for k in range(last, -1, -1):
        if k < last or mlp.activate_last:
            g = g * (1.0 - cache.outputs[k] ** 2)
        grads[2 * k] = g.T @ cache.inputs[k]
        grads[2 * k + 1] = g.sum(axis=0)
        g = g @ mlp.layers[k].weight
    return GradientBundle(grads), g


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params: Sequence[np.ndarray], lr: float = 1e-3, **kw) -> "AdamState":
        return cls(lr=lr, m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params], **kw)


def adam_step(
    params,
    grads,
    state: AdamState,
    clip_norm: Optional[float] = None,
) -> None:
    """One in-place Adam update with bias correction.

    ``params`` may be an :class:`Mlp` or a flat list of arrays.
    """
    params = params.parameters() if isinstance(params, Mlp) else list(params)
    grads = list(grads)
    if len(params) != len(grads) or len(params) != len(state.m):
        raise DataError("parameter, gradient and optimizer state counts differ")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise DataError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        if not np.all(np.isfinite(g)):
            raise NumericError("non-finite gradient entries")
    if clip_norm is not None:
        total = np.sqrt(sum(float(np.sum(g * g)) for g in grads))
        if total > clip_norm:
            grads = [g * (clip_norm / total) for g in grads]
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


def finite_difference_check(
    loss_fn: Callable[[], float],
    params: Sequence[np.ndarray],
    grads: Sequence[np.ndarray],
    probe_count: int = 50,
    epsilon: float = 1e-5,
    rng: Optional[np.random.Generator] = None,
) -> float:
    """Max relative error between analytic ``grads`` and central differences.

    ``loss_fn`` is re-evaluated after perturbing entries of ``params`` in place,
    so it must read the live parameter arrays and be deterministic.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    params = list(params)
    grads = list(grads)
    sizes = np.array([p.size for p in params])
    flat = rng.choice(int(sizes.sum()), size=min(probe_count, int(sizes.sum())), replace=False)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    worst = 0.0
    for f in flat:
        t = int(np.searchsorted(offsets, f, side="right") - 1)
        idx = np.unravel_index(int(f - offsets[t]), params[t].shape)
        p = params[t]
        orig = p[idx]
        p[idx] = orig + epsilon
        up = loss_fn()
        p[idx] = orig - epsilon
        down = loss_fn()
        p[idx] = orig
        g_fd = (up - down) / (2 * epsilon)
        g_an = float(grads[t][idx])
        err = abs(g_an - g_fd) / max(1e-8, abs(g_an) + abs(g_fd))
        worst = max(worst, err)
    return worst


# Tensor file layout (little endian):
#   b"DAVIDTNS" | u32 version | u32 count
#   per tensor: u16 name_len | name utf-8 | u8 ndim | ndim * u32 dims | float64 data (C order)
TENSOR_MAGIC = b"DAVIDTNS"
TENSOR_VERSION = 1


def save_tensors(path, tensors: dict) -> None:
    with Path(path).open("wb") as fh:
        fh.write(TENSOR_MAGIC)
        fh.write(struct.pack("<II", TENSOR_VERSION, len(tensors)))
        for name, arr in tensors.items():
            arr = np.ascontiguousarray(arr, dtype="<f8")
            raw = name.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def load_tensors(path) -> dict:
    data = Path(path).read_bytes()
    if not data.startswith(TENSOR_MAGIC):
        raise DataError(f"{path}: not a tensor file (bad magic)")
    pos = len(TENSOR_MAGIC)
    version, count = struct.unpack_from("<II", data, pos)
    pos += 8
    if version != TENSOR_VERSION:
        raise DataError(f"{path}: unsupported tensor file version {version}")
    out = {}
    for _ in range(count):
        (n,) = struct.unpack_from("<H", data, pos)
        pos += 2
        name = data[pos : pos + n].decode("utf-8")
        pos += n
        (ndim,) = struct.unpack_from("<B", data, pos)
        pos += 1
        shape = struct.unpack_from(f"<{ndim}I", data, pos)
        pos += 4 * ndim
        size = int(np.prod(shape, dtype=np.int64))
        out[name] = np.frombuffer(data, dtype="<f8", count=size, offset=pos).reshape(shape).copy()
        pos += 8 * size
    return out
