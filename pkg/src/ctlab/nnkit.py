"""Minimal differentiable MLP with time conditioning and seeded dropout.

Parameters live in a single flat float64 vector (`ParamVector`) so the
optimizer, EMA tracking, and checkpointing all operate on one array.
The forward pass is built on the autodiff tape; `forward` returns plain
values, `forward_tensor` returns the differentiable node.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .autodiff import Tensor, concat
from .errors import ConfigError, NumericError, ShapeError

_ACTIVATIONS = ("silu", "relu", "tanh")
_T_FLOOR = 1e-8  # additive floor inside log-time features


@dataclass(frozen=True)
class NetSpec:
    """Architecture of the raw network (before any output parameterization).

    Time enters as sinusoidal features of log(t + 1e-8) concatenated to
    the input, so the first linear layer sees input_dim + time_embed_dim
    columns.  Dropout is applied after every hidden activation.
    """

    input_dim: int
    hidden_dims: tuple = (64, 64)
    output_dim: int = 1
    activation: str = "silu"
    time_embed_dim: int = 16
    dropout_rate: float = 0.0
    zero_init: bool = False

    def __post_init__(self):
        dims = (self.input_dim, self.output_dim, *self.hidden_dims)
        if any(int(d) < 1 for d in dims):
            raise ConfigError(f"all dims must be >= 1, got {dims}")
        if self.time_embed_dim < 0:
            raise ConfigError("time_embed_dim must be >= 0")
        if not (0.0 <= self.dropout_rate < 1.0):
            raise ConfigError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.activation not in _ACTIVATIONS:
            raise ConfigError(f"activation must be one of {_ACTIVATIONS}")
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))


@dataclass(frozen=True)
class ForwardCtx:
    """Per-call context: dropout seed and train/eval switch.

    In eval mode the dropout mask is the identity regardless of seed.
    Two train-mode calls with equal seed and batch shape use bitwise
    identical masks, which is what keeps the noise level the only
    varying factor between paired forward passes.
    """

    dropout_seed: int = 0
    train_mode: bool = False


EVAL_CTX = ForwardCtx(dropout_seed=0, train_mode=False)


@dataclass(frozen=True, eq=False)
class ParamVector:
    """Flat parameter vector plus a name -> (offset, shape) layout."""

    values: np.ndarray
    layout: dict = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))
        if self.values.ndim != 1:
            raise ShapeError("ParamVector values must be 1-D")
        total = sum(int(np.prod(shape)) for _, shape in self.layout.values())
        if total != self.values.size:
            raise ShapeError(f"layout covers {total} values, vector has {self.values.size}")
        if not np.all(np.isfinite(self.values)):
            raise NumericError("ParamVector contains non-finite values")

    @property
    def size(self) -> int:
        return self.values.size

    def view(self, name: str) -> np.ndarray:
        off, shape = self.layout[name]
        return self.values[off:off + int(np.prod(shape))].reshape(shape)

    def with_values(self, values: np.ndarray) -> "ParamVector":
        return ParamVector(values, self.layout)

    def zeros_like(self) -> "ParamVector":
        return ParamVector(np.zeros_like(self.values), self.layout)

    def copy(self) -> "ParamVector":
        return ParamVector(self.values.copy(), self.layout)


def layer_widths(spec: NetSpec) -> list:
    """Column widths of every linear layer, first one includes time features."""
    return [spec.input_dim + spec.time_embed_dim, *spec.hidden_dims, spec.output_dim]


def build_layout(spec: NetSpec) -> dict:
    """Deterministic layout: w0, b0, w1, b1, ... in declaration order."""
    widths = layer_widths(spec)
    layout, off = {}, 0
    for i, (n_in, n_out) in enumerate(zip(widths[:-1], widths[1:])):
        layout[f"w{i}"] = (off, (n_in, n_out))
        off += n_in * n_out
        layout[f"b{i}"] = (off, (n_out,))
        off += n_out
    return layout


def init_net(spec: NetSpec, seed: int) -> ParamVector:
    """Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weights, zero biases."""
    layout = build_layout(spec)
    total = sum(int(np.prod(shape)) for _, shape in layout.values())
    values = np.zeros(total)
    if not spec.zero_init:
        rng = np.random.default_rng(np.random.SeedSequence([int(seed) & (2**63 - 1), 0x6e6e]))
        for name, (off, shape) in layout.items():
            if name.startswith("w"):
                bound = 1.0 / np.sqrt(shape[0])
                values[off:off + int(np.prod(shape))] = rng.uniform(-bound, bound, int(np.prod(shape)))
    return ParamVector(values, layout)


def time_features(t, dim: int) -> np.ndarray:
    """Sinusoidal features of log(t + 1e-8): half sines, half cosines."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    if dim == 0:
        return np.zeros((t.size, 0))
    u = np.log(t + _T_FLOOR)[:, None]
    half = (dim + 1) // 2
    freqs = 10000.0 ** (-np.arange(half) / max(half, 1))
    feats = np.concatenate([np.sin(u * freqs), np.cos(u * freqs)], axis=1)
    return feats[:, :dim]


def dropout_mask(seed: int, layer_index: int, shape: tuple, rate: float) -> np.ndarray:
    """Inverted-dropout mask, deterministic in (seed, layer_index, shape)."""
    if rate <= 0.0:
        return np.ones(shape)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed) & (2**63 - 1), layer_index]))
    keep = rng.random(shape) >= rate
    return keep / (1.0 - rate)


def _check_inputs(spec: NetSpec, x: np.ndarray, t) -> tuple:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != spec.input_dim:
        raise ShapeError(f"expected x of shape (B, {spec.input_dim}), got {x.shape}")
    t = np.broadcast_to(np.asarray(t, dtype=np.float64), (x.shape[0],)).copy()
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(t))):
        raise NumericError("non-finite network input")
    return x, t


def forward_tensor(params_t: Tensor, spec: NetSpec, x: np.ndarray, t, ctx: ForwardCtx) -> Tensor:
    """Differentiable forward pass; `x` and `t` are treated as constants."""
    x, t = _check_inputs(spec, x, t)
    layout = build_layout(spec)
    h = concat([Tensor(x), Tensor(time_features(t, spec.time_embed_dim))], axis=1)
    n_layers = len(spec.hidden_dims) + 1
    for i in range(n_layers):
        off_w, shape_w = layout[f"w{i}"]
        off_b, shape_b = layout[f"b{i}"]
        w = params_t[off_w:off_w + shape_w[0] * shape_w[1]].reshape(shape_w)
        b = params_t[off_b:off_b + shape_b[0]]
        h = h @ w + b
        if i < n_layers - 1:
            h = getattr(h, spec.activation)()
            if ctx.train_mode and spec.dropout_rate > 0.0:
                h = h * dropout_mask(ctx.dropout_seed, i, h.shape, spec.dropout_rate)
    return h


def forward(params: ParamVector, x: np.ndarray, t, ctx: ForwardCtx, spec: NetSpec) -> np.ndarray:
    """Value-only forward pass."""
    return forward_tensor(Tensor(params.values), spec, x, t, ctx).value


def value_and_grad(params: ParamVector, objective: Callable[[Tensor], Tensor]):
    """Evaluate `objective` on the flat parameter leaf and backprop.

    The objective receives one Tensor holding the parameter values and
    must return a scalar Tensor.  Returns (loss, gradient) where the
    gradient shares the layout of `params`.
    """
    leaf = Tensor(params.values)
    out = objective(leaf)
    if not isinstance(out, Tensor):
        raise TypeError("objective must return a Tensor")
    loss = float(out.value)
    if not np.isfinite(loss):
        raise NumericError(f"objective produced non-finite loss {loss}")
    out.backward()
    grad = leaf.grad if leaf.grad is not None else np.zeros_like(params.values)
    return loss, params.with_values(grad)


def finite_diff_grad(params: ParamVector, objective: Callable[[Tensor], Tensor],
                     eps: float) -> ParamVector:
    """Central-difference gradient oracle, one coordinate at a time."""
    if eps <= 0:
        raise ConfigError(f"eps must be > 0, got {eps}")
    base = params.values
    grad = np.zeros_like(base)
    for i in range(base.size):
        hi, lo = base.copy(), base.copy()
        hi[i] += eps
        lo[i] -= eps
        grad[i] = (float(objective(Tensor(hi)).value) - float(objective(Tensor(lo)).value)) / (2 * eps)
    return params.with_values(grad)
