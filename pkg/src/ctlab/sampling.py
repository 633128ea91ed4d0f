"""Few-step model sampling plus a multi-step flow-ODE baseline.

Renoise randomness is derived per (plan seed, stage) with a
counter-based bit generator and inverse-CDF normals, so every sample
position maps to the same draw regardless of batch partitioning, and
each renoise stage is independent of the initial draw.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.special import ndtri

from .cmodel import CmConfig, consistency_fn
from .errors import ConfigError
from .nnkit import EVAL_CTX, ParamVector
from .schedule import DEFAULT_T_MAX, DEFAULT_T_MIN


@dataclass(frozen=True)
class SamplePlan:
    """steps model evaluations: one from t_start, then one per
    intermediate level after a stochastic renoise."""

    steps: int = 1
    t_start: float = DEFAULT_T_MAX
    intermediates: tuple = ()
    stochastic: bool = True
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "intermediates", tuple(float(v) for v in self.intermediates))
        if self.steps < 1:
            raise ConfigError("plan needs steps >= 1")
        if len(self.intermediates) != self.steps - 1:
            raise ConfigError(f"{self.steps}-step plan needs {self.steps - 1} intermediates")
        levels = (self.t_start, *self.intermediates)
        if any(b >= a for a, b in zip(levels[:-1], levels[1:])) or any(
                v <= 0 for v in self.intermediates):
            raise ConfigError("intermediates must be strictly decreasing, positive, "
                              "and below t_start")


def default_plan(steps: int, t_start: float = DEFAULT_T_MAX,
                 t_min: float = DEFAULT_T_MIN, seed: int = 0) -> SamplePlan:
    """Geometric-mix intermediates t_start^(1-u) * t_min^u, u up to 0.7."""
    if steps < 1:
        raise ConfigError("plan needs steps >= 1")
    us = [0.7 * j / (steps - 1) for j in range(1, steps)] if steps > 1 else []
    inter = tuple(t_start ** (1 - u) * t_min ** u for u in us)
    return SamplePlan(steps=steps, t_start=t_start, intermediates=inter, seed=seed)


def position_normals(key_parts, n: int, dim: int) -> np.ndarray:
    """Standard normals where draw (i, j) depends only on key and position."""
    bitgen = np.random.Philox(seed=np.random.SeedSequence([int(k) & (2**63 - 1)
                                                           for k in key_parts]))
    u = np.random.Generator(bitgen).random((n, dim))
    return ndtri(np.clip(u, 1e-300, 1.0 - 1e-16))


def cm_sample(params: Optional[ParamVector], plan: SamplePlan, n: int, cfg: CmConfig,
              fn_override: Optional[Callable] = None) -> np.ndarray:
    """Few-step sampling: denoise from t_start, then renoise/denoise per
    intermediate.  fn_override substitutes the model (e.g. an analytic
    map); deterministic in plan.seed either way."""
    if n < 1:
        raise ConfigError("n must be >= 1")
    if params is None and fn_override is None:
        raise ConfigError("need params or fn_override")

    def f(x, t_arr):
        if fn_override is not None:
            return np.asarray(fn_override(x, t_arr), dtype=np.float64)
        return consistency_fn(params, x, t_arr, EVAL_CTX, cfg)

    dim = cfg.net_spec.input_dim
    eps0 = position_normals([plan.seed, 0], n, dim)
    x = plan.t_start * eps0
    x0_hat = f(x, np.full(n, plan.t_start))
    for stage, tau in enumerate(plan.intermediates, start=1):
        eps = position_normals([plan.seed, stage], n, dim) if plan.stochastic else eps0
        x = x0_hat + tau * eps
        x0_hat = f(x, np.full(n, tau))
    return x0_hat


def diffusion_sample(denoiser: Callable, grid, n: int, dim: int,
                     rng: np.random.Generator, solver: str = "heun",
                     final_denoise: bool = False) -> np.ndarray:
    """Integrate the flow ODE along a decreasing noise grid.

    Starts from N(0, grid[0]^2 I); heun falls back to euler into a zero
    endpoint.  final_denoise applies D once more at the last level.
    """
    grid = np.asarray(grid, dtype=np.float64)
    if grid.size < 2 or np.any(np.diff(grid) >= 0):
        raise ConfigError("grid must be strictly decreasing with >= 2 points")
    if solver not in ("euler", "heun"):
        raise ConfigError(f"unknown solver {solver!r}")
    x = grid[0] * rng.standard_normal((n, dim))
    for t_cur, t_nxt in zip(grid[:-1], grid[1:]):
        v = (x - denoiser(x, np.full(n, t_cur))) / t_cur
        x_e = x + (t_nxt - t_cur) * v
        if solver == "heun" and t_nxt > 0:
            v2 = (x_e - denoiser(x_e, np.full(n, t_nxt))) / t_nxt
            x = x + (t_nxt - t_cur) * 0.5 * (v + v2)
        else:
            x = x_e
    if final_denoise:
        x = denoiser(x, np.full(n, grid[-1]))
    return x
