"""Distribution distances and the log-log power-law fitter."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import wasserstein_distance

from .errors import ConfigError


@dataclass(frozen=True)
class PowerLawFit:
    """y = K * C^alpha fitted by least squares in log-log space."""

    K: float
    alpha: float
    pearson_loglog: float
    degenerate: bool = False


def sliced_wasserstein(a: np.ndarray, b: np.ndarray, n_proj: int = 64,
                       seed: int = 0) -> float:
    """Mean 1-D Wasserstein-1 over random unit projections."""
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    if a.size == 0 or b.size == 0:
        raise ConfigError("empty sample batch")
    if a.shape[1] != b.shape[1]:
        raise ConfigError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    if n_proj < 1:
        raise ConfigError("n_proj must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed) & (2**63 - 1), 0x5ed]))
    dirs = rng.standard_normal((a.shape[1], n_proj))
    dirs /= np.linalg.norm(dirs, axis=0, keepdims=True)
    pa, pb = a @ dirs, b @ dirs
    return float(np.mean([wasserstein_distance(pa[:, j], pb[:, j])
                          for j in range(n_proj)]))


def mmd_rbf(a: np.ndarray, b: np.ndarray, bandwidth: float,
            block: int = 2048) -> float:
    """Unbiased MMD^2 with a Gaussian kernel, accumulated in blocks."""
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    if bandwidth <= 0:
        raise ConfigError("bandwidth must be > 0")
    m, n = len(a), len(b)
    if m < 2 or n < 2:
        raise ConfigError("unbiased MMD^2 needs at least 2 samples per side")
    gamma = 1.0 / (2.0 * bandwidth * bandwidth)

    def ksum(x, y):
        total = 0.0
        for i in range(0, len(x), block):
            xi = x[i:i + block]
            d2 = (np.sum(xi * xi, axis=1)[:, None] + np.sum(y * y, axis=1)[None, :]
                  - 2.0 * xi @ y.T)
            total += float(np.exp(-gamma * np.maximum(d2, 0.0)).sum())
        return total

    kxx = ksum(a, a) - m            # drop the diagonal of ones
    kyy = ksum(b, b) - n
    kxy = ksum(a, b)
    return kxx / (m * (m - 1)) + kyy / (n * (n - 1)) - 2.0 * kxy / (m * n)


def fit_power_law(points) -> PowerLawFit:
    """Fit (compute, metric) pairs; both coordinates must be positive.

    A constant metric has no defined correlation: alpha is reported as 0
    with the degenerate flag set.
    """
    pts = np.asarray(list(points), dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 3:
        raise ConfigError("need >= 3 (compute, metric) pairs")
    if np.any(pts <= 0):
        raise ConfigError("power-law fit requires strictly positive values")
    log_c, log_y = np.log(pts[:, 0]), np.log(pts[:, 1])
    if np.ptp(log_y) == 0.0:
        return PowerLawFit(K=float(np.exp(log_y[0])), alpha=0.0,
                           pearson_loglog=0.0, degenerate=True)
    alpha, intercept = np.polyfit(log_c, log_y, 1)
    pearson = float(np.corrcoef(log_c, log_y)[0, 1])
    return PowerLawFit(K=float(np.exp(intercept)), alpha=float(alpha),
                       pearson_loglog=pearson)
