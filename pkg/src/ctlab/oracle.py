"""Analytic Gaussian world: closed-form score, posterior-mean denoiser,
exact flow-ODE trajectory and its t=0 endpoint map, plus the
self-normalized Monte-Carlo score estimator.

With data ~ N(mu, s^2 I) and perturbation x_t = x_0 + t * eps every
quantity the trainer estimates has a closed form, which is what makes
this module the ground-truth engine for the equivalence tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericError


@dataclass(frozen=True, eq=False)
class GaussianWorld:
    mu: np.ndarray = field(default_factory=lambda: np.zeros(1))
    s: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "mu", np.atleast_1d(np.asarray(self.mu, dtype=np.float64)))
        if self.s <= 0:
            raise ConfigError(f"data scale s must be > 0, got {self.s}")

    @property
    def dim(self) -> int:
        return self.mu.size


def gaussian_score(x, t, world: GaussianWorld):
    """grad_x log p_t(x) = -(x - mu) / (s^2 + t^2)."""
    x = np.asarray(x, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    var = world.s**2 + t**2
    return -(x - world.mu) / _col(var, x)


def gaussian_denoiser(x, t, world: GaussianWorld):
    """Posterior mean E[x_0 | x_t] = mu + s^2 (x - mu) / (s^2 + t^2)."""
    x = np.asarray(x, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    var = world.s**2 + t**2
    return world.mu + world.s**2 * (x - world.mu) / _col(var, x)


def gaussian_consistency(x, t, world: GaussianWorld):
    """Exact flow-ODE endpoint map: mu + (x - mu) s / sqrt(s^2 + t^2)."""
    x = np.asarray(x, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    scale = world.s / np.sqrt(world.s**2 + t**2)
    return world.mu + (x - world.mu) * _col(scale, x)


def gaussian_trajectory(x, t, r, world: GaussianWorld):
    """Exact flow-ODE solution from level t to level r through x."""
    x = np.asarray(x, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    scale = np.sqrt((world.s**2 + r**2) / (world.s**2 + t**2))
    return world.mu + (x - world.mu) * _col(scale, x)


def mc_score(x_t, t: float, source, n_samples: int, rng: np.random.Generator):
    """Self-normalized posterior average of -(x_t - x_0)/t^2.

    `source` is a GaussianWorld or any object with sample(n) -> (n, d).
    Draws x_0 from the data law and weights each by the perturbation
    kernel exp(-||x_t - x_0||^2 / (2 t^2)), normalized via the max log
    weight so the ratio stays finite.
    """
    if n_samples < 1:
        raise ConfigError("n_samples must be >= 1")
    if t <= 0:
        raise ConfigError("mc_score requires t > 0")
    x_t = np.atleast_1d(np.asarray(x_t, dtype=np.float64))
    if isinstance(source, GaussianWorld):
        x0 = source.mu + source.s * rng.standard_normal((n_samples, source.dim))
    else:
        x0 = np.asarray(source.sample(n_samples), dtype=np.float64)
    diff = x_t - x0
    logw = -np.sum(diff * diff, axis=1) / (2.0 * t * t)
    logw -= logw.max()
    w = np.exp(logw)
    total = w.sum()
    if not np.isfinite(total) or total <= 0:
        raise NumericError(
            f"mc_score weights degenerate: sum={total}, max log-weight spread="
            f"{logw.min():.3g}")
    return (w[:, None] * (-diff / (t * t))).sum(axis=0) / total


def _col(a: np.ndarray, like: np.ndarray):
    """Broadcast a per-sample scalar against (B, d) or plain vectors."""
    a = np.asarray(a)
    if like.ndim == 2 and a.ndim == 1:
        return a[:, None]
    return a
