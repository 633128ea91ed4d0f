"""Timestep weightings, adaptive per-sample weighting, and the
pseudo-Huber metric whose differential the adaptive weighting mirrors.

Adaptive weights are always treated as constants: no gradient flows
through them, they only rescale the squared-error gradient per sample.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericError

TIMESTEP_KINDS = ("uniform", "inv_t", "inv_dt", "inv_t_plus_inv_sigma",
                  "snr", "snr_plus_1", "snr_plus_inv_var", "soft_min_snr")
ADAPTIVE_KINDS = ("none", "inv_l2", "inv_l1")


@dataclass(frozen=True)
class WeightingConfig:
    timestep_kind: str = "inv_dt"
    adaptive_kind: str = "inv_l2"
    c: float = 0.0
    p: float = 0.5
    sigma_data: float = 0.5

    def __post_init__(self):
        if self.timestep_kind not in TIMESTEP_KINDS:
            raise ConfigError(f"unknown timestep_kind {self.timestep_kind!r}")
        if self.adaptive_kind not in ADAPTIVE_KINDS:
            raise ConfigError(f"unknown adaptive_kind {self.adaptive_kind!r}")
        if self.c < 0:
            raise ConfigError(f"c must be >= 0, got {self.c}")
        if not (0.0 <= self.p <= 1.0):
            raise ConfigError(f"p must be in [0, 1], got {self.p}")
        if self.sigma_data <= 0:
            raise ConfigError(f"sigma_data must be > 0, got {self.sigma_data}")


@dataclass(frozen=True)
class LossBreakdown:
    """Per-sample diagnostic: weighted_loss = timestep_weight *
    adaptive_weight * raw_sq_l2 / 2."""

    raw_sq_l2: float
    timestep_weight: float
    adaptive_weight: float
    weighted_loss: float


def timestep_weight(kind: str, t, r, sigma_data: float):
    """Noise-level weighting w(t); SNR(t) is 1/t^2 in this forward process."""
    t = np.asarray(t, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    if kind == "uniform":
        return np.ones_like(t)
    if kind == "inv_dt":
        if np.any(t <= r):
            raise NumericError("inv_dt weighting requires t > r")
        return 1.0 / (t - r)
    if np.any(t <= 0) and kind != "soft_min_snr":
        raise NumericError(f"{kind} weighting requires t > 0")
    if kind == "inv_t":
        return 1.0 / t
    if kind == "inv_t_plus_inv_sigma":
        return 1.0 / t + 1.0 / sigma_data
    if kind == "snr":
        return 1.0 / t**2
    if kind == "snr_plus_1":
        return 1.0 / t**2 + 1.0
    if kind == "snr_plus_inv_var":
        return 1.0 / t**2 + 1.0 / sigma_data**2
    if kind == "soft_min_snr":
        return 1.0 / (t**2 + sigma_data**2)
    raise ConfigError(f"unknown timestep_kind {kind!r}")


def adaptive_weight(delta, c: float, p: float, adaptive_kind: str = "inv_l2"):
    """Per-sample weight from the residual; rows of a 2-D delta are samples."""
    delta = np.asarray(delta, dtype=np.float64)
    axis = -1
    if adaptive_kind == "none":
        return np.ones(delta.shape[:-1]) if delta.ndim > 1 else 1.0
    if adaptive_kind == "inv_l2":
        if p == 0.0:
            sq = np.sum(delta * delta, axis=axis)
            return np.ones_like(sq)
        base = np.sum(delta * delta, axis=axis) + c * c
        if np.any(base == 0.0):
            raise NumericError("adaptive inv_l2 weight undefined: c = 0 and delta = 0")
        return base ** (-p)
    if adaptive_kind == "inv_l1":
        base = np.sum(np.abs(delta), axis=axis) + c
        if np.any(base == 0.0):
            raise NumericError("adaptive inv_l1 weight undefined: c = 0 and delta = 0")
        return 1.0 / base
    raise ConfigError(f"unknown adaptive_kind {adaptive_kind!r}")


def pseudo_huber(delta, c: float):
    """sqrt(||delta||^2 + c^2) - c^2, rows of a 2-D delta are samples.

    The constant offset only matters for value reporting; the gradient
    is adaptive_weight(delta, c, 1/2) * delta, i.e. the inverse-L2
    weighting applied to the squared-L2 gradient.
    """
    delta = np.asarray(delta, dtype=np.float64)
    return np.sqrt(np.sum(delta * delta, axis=-1) + c * c) - c * c


def pseudo_huber_grad(delta, c: float):
    """Closed-form gradient of `pseudo_huber` w.r.t. delta."""
    delta = np.asarray(delta, dtype=np.float64)
    w = adaptive_weight(delta, c, 0.5, "inv_l2")
    return np.expand_dims(w, -1) * delta if delta.ndim > 1 else w * delta
