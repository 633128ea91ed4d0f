"""EDM-style output parameterization enforcing the t=0 boundary by
construction: f(x, t) = c_skip(t) x + c_out(t) F(c_in(t) x, t).

c_out(0) = 0 and c_skip(0) = 1 make f(x, 0) = x exactly for any
parameters.  The input scaling c_in = 1/sqrt(t^2 + sigma_data^2) is the
usual conditioning-stability companion of this parameterization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor
from .errors import ConfigError
from .nnkit import ForwardCtx, NetSpec, ParamVector, forward_tensor


@dataclass(frozen=True)
class CmConfig:
    sigma_data: float
    net_spec: NetSpec

    def __post_init__(self):
        if self.sigma_data <= 0:
            raise ConfigError(f"sigma_data must be > 0, got {self.sigma_data}")


def skip_out_scales(t, sigma_data: float):
    """(c_skip, c_out) = (sd^2/(t^2+sd^2), t*sd/sqrt(t^2+sd^2))."""
    t = np.asarray(t, dtype=np.float64)
    var = t * t + sigma_data * sigma_data
    return sigma_data * sigma_data / var, t * sigma_data / np.sqrt(var)


def input_scale(t, sigma_data: float):
    t = np.asarray(t, dtype=np.float64)
    return 1.0 / np.sqrt(t * t + sigma_data * sigma_data)


def consistency_tensor(params_t: Tensor, x: np.ndarray, t, ctx: ForwardCtx,
                       cfg: CmConfig) -> Tensor:
    """Differentiable f(x, t); x and t are constants on the tape."""
    x = np.asarray(x, dtype=np.float64)
    t = np.broadcast_to(np.asarray(t, dtype=np.float64), (x.shape[0],))
    c_skip, c_out = skip_out_scales(t, cfg.sigma_data)
    c_in = input_scale(t, cfg.sigma_data)
    raw = forward_tensor(params_t, cfg.net_spec, c_in[:, None] * x, t, ctx)
    return Tensor(c_skip[:, None] * x) + raw * c_out[:, None]


def consistency_fn(params: ParamVector, x: np.ndarray, t, ctx: ForwardCtx,
                   cfg: CmConfig) -> np.ndarray:
    """Value-only f(x, t); f(x, 0) = x exactly for every params."""
    return consistency_tensor(Tensor(params.values), x, t, ctx, cfg).value
