"""Experiment harnesses: the fixed-interval-count accumulation study and
the flow-matching adaptive-weighting toy.

Both are config-driven training runs that report records rather than
asserting curve shapes; the acceptance suite layers its soft trend
checks on top.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .autodiff import Tensor
from .cmodel import CmConfig, consistency_fn
from .errors import ConfigError, NumericError
from .nnkit import EVAL_CTX, ForwardCtx, NetSpec, ParamVector, forward, forward_tensor, init_net
from .schedule import ScheduleConfig, ict_interval_pmf, karras_grid
from .trainer import (TrainConfig, adam_step, ema_update, fresh_state,
                      pair_loss_tensor, step_rng)
from .weighting import WeightingConfig


# ----------------------------------------------------------------------
# fixed-N interval study
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class CurseRow:
    """One held-out chain: its 1-step endpoint error and the summed
    per-interval errors that bound it from above."""

    N: int
    endpoint_error: float
    bound_rhs: float


def interval_boundaries(N: int, t_min: float, t_max: float, rho: float = 7.0) -> np.ndarray:
    """N non-overlapping intervals over [0, t_max]: 0, t_min, ..., t_max."""
    if N < 1:
        raise ConfigError("need N >= 1 intervals")
    if N == 1:
        return np.array([0.0, t_max])
    return np.concatenate([[0.0], karras_grid(N, t_min, t_max, rho)[::-1]])


def fixed_grid_train(cfg: TrainConfig, dataset, boundaries: np.ndarray,
                     init_params: Optional[ParamVector] = None):
    """Train with pairs drawn from a fixed interval grid instead of the
    iteration-indexed mapping; interval choice follows the lognormal
    interval probabilities."""
    pmf = ict_interval_pmf(boundaries, cfg.schedule.P_mean, cfg.schedule.P_std)
    params = init_params if init_params is not None else init_net(cfg.cm.net_spec, cfg.seed)
    state = fresh_state(params)
    for it in range(cfg.total_iters):
        rng = step_rng(cfg.seed, it)
        x0 = dataset.sample(cfg.batch_size)
        idx = rng.choice(len(pmf), size=cfg.batch_size, p=pmf)
        t, r = boundaries[idx + 1], boundaries[idx]
        eps = rng.standard_normal(x0.shape)
        x_t = x0 + t[:, None] * eps
        x_r = x0 + r[:, None] * eps
        leaf = Tensor(state.params.values)
        loss_t, _ = pair_loss_tensor(leaf, x_t, t, x_r, r,
                                     int(rng.integers(0, 2**63)), cfg.weighting, cfg.cm)
        if not np.isfinite(float(loss_t.value)):
            raise NumericError(f"fixed-grid training diverged at iteration {it}")
        loss_t.backward()
        state = adam_step(state, state.params.with_values(leaf.grad), cfg)
        state = replace(state, ema_params=ema_update(state.ema_params, state.params,
                                                     cfg.ema_beta))
    return state


def curse_experiment(base_cfg: TrainConfig, dataset, N_values,
                     n_chains: int = 64, rho: float = 7.0,
                     eval_seed: int = 9999,
                     init_params: Optional[ParamVector] = None):
    """Train one model per fixed N and measure, on shared-noise chains,
    the endpoint error against the summed interval errors."""
    rows = []
    for N in N_values:
        boundaries = interval_boundaries(int(N), base_cfg.schedule.t_min,
                                         base_cfg.schedule.t_max, rho)
        state = fixed_grid_train(base_cfg, dataset, boundaries, init_params=init_params)
        x0 = dataset.sample(n_chains)
        eps = np.random.default_rng(eval_seed).standard_normal(x0.shape)
        # chain values f(x0 + b_j eps, b_j) at every boundary, eval mode
        f_vals = [consistency_fn(state.ema_params, x0 + b * eps,
                                 np.full(n_chains, b), EVAL_CTX, base_cfg.cm)
                  for b in boundaries]
        interval_err = sum(np.linalg.norm(f_vals[j + 1] - f_vals[j], axis=1)
                           for j in range(len(boundaries) - 1))
        endpoint_err = np.linalg.norm(f_vals[-1] - x0, axis=1)
        rows.extend(CurseRow(N=int(N), endpoint_error=float(e), bound_rhs=float(b))
                    for e, b in zip(endpoint_err, interval_err))
    return rows


# ----------------------------------------------------------------------
# flow-matching adaptive-weighting toy
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class FlowToyResult:
    p: float
    epsilon: float
    seed: int
    steps_budget: int
    final_loss: float
    sw: dict  # sampling steps -> sliced-Wasserstein to the data


def flow_euler_sample(params: ParamVector, spec: NetSpec, n: int, steps: int,
                      seed: int) -> np.ndarray:
    """Integrate dx/dtau = v(x, tau) from tau=1 (noise) to 0 with euler."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed) & (2**63 - 1), 0xf10e]))
    x = rng.standard_normal((n, spec.input_dim))
    taus = 1.0 - np.arange(steps + 1) / steps
    for tau_cur, tau_nxt in zip(taus[:-1], taus[1:]):
        v = forward(params, x, np.full(n, tau_cur), EVAL_CTX, spec)
        x = x + (tau_nxt - tau_cur) * v
    return x


def flow_toy_experiment(p: float, epsilon: float, steps_budget: int, seed: int,
                        dataset=None, adaptive: bool = True,
                        hidden=(64, 64), batch_size: int = 128, lr: float = 2e-3,
                        eval_n: int = 4096, eval_steps=(1, 2, 4, 8)) -> FlowToyResult:
    """Velocity regression x_t = (1-t) x0 + t x1 with per-sample weight
    1/(||residual||^2 + epsilon)^p; adaptive=False skips the weighting
    entirely (the plain objective).  Few-step euler sampling quality is
    scored by sliced Wasserstein against held-out data."""
    from .metrics import sliced_wasserstein
    from .store import DatasetSpec, make_dataset

    if not (0.0 <= p <= 1.0):
        raise ConfigError(f"p must be in [0, 1], got {p}")
    if dataset is None:
        dataset = make_dataset(DatasetSpec(kind="swiss_roll"), seed=seed)
    spec = NetSpec(input_dim=dataset.dim, hidden_dims=tuple(hidden),
                   output_dim=dataset.dim, activation="silu", time_embed_dim=16)
    cfg = TrainConfig(schedule=ScheduleConfig(), weighting=WeightingConfig(),
                      cm=CmConfig(sigma_data=0.5, net_spec=spec),
                      batch_size=batch_size, total_iters=steps_budget, lr=lr, seed=seed)
    state = fresh_state(init_net(spec, seed))
    ctx = ForwardCtx(dropout_seed=0, train_mode=True)
    loss = float("nan")
    for it in range(steps_budget):
        rng = step_rng(seed, it)
        x0 = dataset.sample(batch_size)
        x1 = rng.standard_normal(x0.shape)
        t = rng.random(batch_size)
        x_t = (1.0 - t)[:, None] * x0 + t[:, None] * x1
        leaf = Tensor(state.params.values)
        v = forward_tensor(leaf, spec, x_t, t, ctx)
        delta = v - Tensor(x1 - x0)
        raw = (delta * delta).sum(axis=1)
        if adaptive:
            w = (np.sum(delta.value**2, axis=1) + epsilon) ** (-p)
            loss_t = (raw * w).mean()
        else:
            loss_t = raw.mean()
        loss = float(loss_t.value)
        if not np.isfinite(loss):
            raise NumericError(f"flow toy diverged at iteration {it}")
        loss_t.backward()
        state = adam_step(state, state.params.with_values(leaf.grad), cfg)
        state = replace(state, ema_params=ema_update(state.ema_params, state.params, 0.999))

    ref = dataset.sample(eval_n)
    sw = {int(s): sliced_wasserstein(
            flow_euler_sample(state.ema_params, spec, eval_n, int(s), seed),
            ref, n_proj=64, seed=7) for s in eval_steps}
    return FlowToyResult(p=float(p), epsilon=float(epsilon), seed=int(seed),
                         steps_budget=int(steps_budget), final_loss=loss, sw=sw)
