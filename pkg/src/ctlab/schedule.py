"""Noise-level sampling and the iteration-indexed mapping r = m(t, iters).

The continuous schedule draws t from a clamped lognormal and pairs it
with a lower level r whose ratio r/t tightens toward 1 as training
proceeds.  The discrete-curriculum interval count and the power-law
noise grid are provided as comparison baselines.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erf, expit

from .errors import ConfigError

DEFAULT_T_MIN = 0.002
DEFAULT_T_MAX = 80.0


@dataclass(frozen=True)
class ScheduleConfig:
    """Constants of the mapping function and the noise distribution.

    ceil_mode picks ceil(iters/d) for the shrink exponent, which skips
    the r=0 stage; floor keeps it, which is the from-scratch setting.
    """

    q: float = 2.0
    d: int = 1000
    k: float = 8.0
    b: float = 1.0
    P_mean: float = -1.1
    P_std: float = 2.0
    t_min: float = DEFAULT_T_MIN
    t_max: float = DEFAULT_T_MAX
    total_iters: int = 8000
    ceil_mode: bool = True

    def __post_init__(self):
        if self.q <= 1.0:
            raise ConfigError(f"q must be > 1, got {self.q}")
        if self.P_std <= 0.0:
            raise ConfigError(f"P_std must be > 0, got {self.P_std}")
        if not (0.0 <= self.t_min < self.t_max):
            raise ConfigError(f"need 0 <= t_min < t_max, got [{self.t_min}, {self.t_max}]")
        if self.d < 1:
            raise ConfigError(f"d must be >= 1, got {self.d}")


@dataclass(frozen=True)
class NoisePair:
    """One batched training draw: levels t > r, shared noise direction,
    and the dropout seed both forward passes must reuse."""

    t: np.ndarray
    r: np.ndarray
    epsilon: np.ndarray
    dropout_seed: int

    def __post_init__(self):
        t, r, eps = (np.asarray(a, dtype=np.float64) for a in (self.t, self.r, self.epsilon))
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "epsilon", eps)
        if not (np.all(r >= 0) and np.all(r < t)):
            raise ConfigError("NoisePair requires 0 <= r < t elementwise")
        if eps.shape[0] != t.shape[0]:
            raise ConfigError("epsilon batch size disagrees with t")


def sample_t(cfg: ScheduleConfig, rng: np.random.Generator, size=None):
    """t = exp(P_mean + P_std * z), clamped into [t_min, t_max]."""
    z = rng.standard_normal(size)
    return np.clip(np.exp(cfg.P_mean + cfg.P_std * z), cfg.t_min, cfg.t_max)


def n_of_t(t, k: float, b: float):
    """Difficulty adjustment 1 + k * sigmoid(-b t); decreasing, range (1, 1 + k/2]."""
    return 1.0 + k * expit(-b * np.asarray(t, dtype=np.float64))


def shrink_exponent(iters: int, cfg: ScheduleConfig) -> int:
    if iters < 0:
        raise ConfigError(f"iters must be >= 0, got {iters}")
    a, rem = divmod(int(iters), cfg.d)
    return a + 1 if (cfg.ceil_mode and rem > 0) else a


def map_r(t, iters: int, cfg: ScheduleConfig):
    """r = max(0, t * (1 - n(t) / q^a)) with a = floor or ceil of iters/d."""
    t = np.asarray(t, dtype=np.float64)
    a = shrink_exponent(iters, cfg)
    ratio = 1.0 - n_of_t(t, cfg.k, cfg.b) / cfg.q**a
    return np.maximum(0.0, t * ratio)


def ict_num_intervals(m: int, M: int, s0: int, s1: int) -> int:
    """Doubling interval curriculum N(m), capped at s1, plus one."""
    if s0 > s1:
        raise ConfigError(f"need s0 <= s1, got s0={s0}, s1={s1}")
    if M <= 0 or s0 < 1:
        raise ConfigError("need M > 0 and s0 >= 1")
    m_prime = M // (int(np.log2(s1 // s0)) + 1)
    return int(min(s0 * 2 ** (m // m_prime), s1)) + 1


def karras_grid(N: int, t_min: float, t_max: float, rho: float = 7.0) -> np.ndarray:
    """Decreasing power-law grid from t_max to t_min with exact endpoints."""
    if N < 2:
        raise ConfigError(f"grid needs N >= 2, got {N}")
    if not (0.0 < t_min < t_max) or rho <= 0:
        raise ConfigError("need 0 < t_min < t_max and rho > 0")
    i = np.arange(N, dtype=np.float64)
    grid = (t_max ** (1 / rho) + i / (N - 1) * (t_min ** (1 / rho) - t_max ** (1 / rho))) ** rho
    grid[0], grid[-1] = t_max, t_min
    return grid


def ict_interval_pmf(grid, P_mean: float, P_std: float) -> np.ndarray:
    """Probability of each grid interval under the lognormal level law.

    p(i) is proportional to the difference of erf((log t - P_mean) /
    (sqrt(2) P_std)) across the interval ends.  Accepts an increasing or
    decreasing grid; a zero lower endpoint is fine (erf(-inf) = -1).
    """
    grid = np.asarray(grid, dtype=np.float64)
    if grid.size < 2:
        raise ConfigError("grid needs at least 2 points")
    diffs = np.diff(grid)
    if np.all(diffs > 0):
        sign = 1.0
    elif np.all(diffs < 0):
        sign = -1.0
    else:
        raise ConfigError("grid must be strictly monotone")
    with np.errstate(divide="ignore"):
        z = erf((np.log(grid) - P_mean) / (np.sqrt(2.0) * P_std))
    pmf = sign * np.diff(z)
    total = pmf.sum()
    if total <= 0:
        raise ConfigError("grid carries no probability mass")
    return pmf / total


def draw_pair(cfg: ScheduleConfig, iters: int, dim: int, batch: int,
              rng: np.random.Generator, force_r_zero: bool = False) -> NoisePair:
    """One training draw: per-sample (t, r, epsilon) plus a shared dropout seed."""
    t = sample_t(cfg, rng, size=batch)
    r = np.zeros_like(t) if force_r_zero else map_r(t, iters, cfg)
    eps = rng.standard_normal((batch, dim))
    seed = int(rng.integers(0, 2**63))
    return NoisePair(t=t, r=r, epsilon=eps, dropout_seed=seed)
