"""Consistency distillation with a continuous schedule: the lower point
of each training pair comes from a frozen teacher integrating the flow
ODE from t down to r, instead of re-noising with the shared direction.

The data-free variant feeds the loop with x0 synthesized by the student
itself at the top noise level.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .autodiff import Tensor
from .cmodel import CmConfig, consistency_fn
from .errors import ConfigError, DivergenceError, NumericError
from .nnkit import EVAL_CTX, ParamVector, init_net
from .oracle import GaussianWorld, gaussian_denoiser
from .schedule import draw_pair
from .store import load_checkpoint
from .trainer import (RunRecord, TrainConfig, TrainState, adam_step, ema_update,
                      fresh_state, pair_loss_tensor, step_rng)

SOLVERS = ("euler", "heun")
DISTILL_MODES = ("ecd", "ecd-datafree")


@dataclass(frozen=True)
class Teacher:
    """Frozen x0-predictor driving the ODE step; never receives gradients."""

    denoiser: Callable
    solver: str = "heun"

    def __post_init__(self):
        if self.solver not in SOLVERS:
            raise ConfigError(f"solver must be one of {SOLVERS}")


def gaussian_teacher(world: GaussianWorld, solver: str = "heun") -> Teacher:
    return Teacher(denoiser=lambda x, t: gaussian_denoiser(x, t, world), solver=solver)


def teacher_from_checkpoint(path, solver: str = "heun") -> Teacher:
    """Wrap a saved model as a deterministic denoiser (eval mode)."""
    ckpt = load_checkpoint(path)
    cfg = CmConfig(sigma_data=ckpt.sigma_data, net_spec=ckpt.net_spec)
    params = ckpt.params

    def denoiser(x, t):
        return consistency_fn(params, x, t, EVAL_CTX, cfg)

    return Teacher(denoiser=denoiser, solver=solver)


def ode_step(x: np.ndarray, t, r, teacher: Teacher) -> np.ndarray:
    """Integrate dx/dt = (x - D(x, t))/t from t down to r in one step.

    t and r may be scalars or per-sample arrays.  Heun applies the
    trapezoidal corrector except into r = 0, where the vector field has
    a 1/t singularity and the step falls back to euler.
    """
    x = np.asarray(x, dtype=np.float64)
    t = np.broadcast_to(np.asarray(t, dtype=np.float64), (x.shape[0],))
    r = np.broadcast_to(np.asarray(r, dtype=np.float64), (x.shape[0],))
    if np.any(t <= 0):
        raise ConfigError("ode_step requires t > 0")
    if np.any(r >= t) or np.any(r < 0):
        raise ConfigError("ode_step requires 0 <= r < t")
    dt = (r - t)[:, None]
    v_t = (x - teacher.denoiser(x, t)) / t[:, None]
    x_euler = x + dt * v_t
    if teacher.solver == "euler":
        return x_euler
    out = x_euler.copy()
    interior = r > 0
    if np.any(interior):
        xe, ti, ri = x_euler[interior], t[interior], r[interior]
        v_r = (xe - teacher.denoiser(xe, ri)) / ri[:, None]
        out[interior] = x[interior] + dt[interior] * 0.5 * (v_t[interior] + v_r)
    return out


def datafree_x0(params: ParamVector, T: float, batch_size: int,
                rng: np.random.Generator, cfg: CmConfig) -> np.ndarray:
    """One-step student samples f(eps', T), eps' ~ N(0, T^2 I), as constants."""
    eps = T * rng.standard_normal((batch_size, cfg.net_spec.input_dim))
    return consistency_fn(params, eps, np.full(batch_size, float(T)), EVAL_CTX, cfg)


def ecd_step(state: TrainState, x0: np.ndarray, teacher: Teacher,
             cfg: TrainConfig, it: int):
    """One distillation step: teacher solves t -> r, student matches itself."""
    rng = step_rng(cfg.seed, it)
    pair = draw_pair(cfg.schedule, it, x0.shape[1], x0.shape[0], rng)
    x_t = x0 + pair.t[:, None] * pair.epsilon
    x_r = ode_step(x_t, pair.t, pair.r, teacher)
    leaf = Tensor(state.params.values)
    loss_t, _ = pair_loss_tensor(leaf, x_t, pair.t, x_r, pair.r, pair.dropout_seed,
                                 cfg.weighting, cfg.cm)
    loss = float(loss_t.value)
    if not np.isfinite(loss):
        raise NumericError(f"non-finite loss {loss}")
    loss_t.backward()
    grad = state.params.with_values(leaf.grad)
    state = adam_step(state, grad, cfg)
    state = replace(state, ema_params=ema_update(state.ema_params, state.params,
                                                 cfg.ema_beta))
    rec = RunRecord(iter=it, t_mean=float(pair.t.mean()), r_mean=float(pair.r.mean()),
                    loss=loss, grad_norm=float(np.linalg.norm(grad.values)))
    return state, rec


def distill(cfg: TrainConfig, dataset, teacher: Teacher, mode: str = "ecd",
            init_params: Optional[ParamVector] = None,
            on_step: Optional[Callable] = None):
    """Full distillation loop; "ecd-datafree" synthesizes x0 fresh per step."""
    if mode not in DISTILL_MODES:
        raise ConfigError(f"mode must be one of {DISTILL_MODES}, got {mode!r}")
    if mode == "ecd" and dataset is None:
        raise ConfigError("ecd mode needs a dataset; use ecd-datafree to run without one")
    params = init_params if init_params is not None else init_net(cfg.cm.net_spec, cfg.seed)
    state = fresh_state(params)
    records = []
    for it in range(cfg.total_iters):
        if mode == "ecd-datafree":
            gen_rng = np.random.default_rng(
                np.random.SeedSequence([cfg.seed & (2**63 - 1), 2, it]))
            x0 = datafree_x0(state.params, cfg.schedule.t_max, cfg.batch_size,
                             gen_rng, cfg.cm)
        else:
            x0 = dataset.sample(cfg.batch_size)
        try:
            state, rec = ecd_step(state, x0, teacher, cfg, it)
        except NumericError as exc:
            raise DivergenceError(f"diverged at iteration {it}: {exc}",
                                  state=state, records=records, iteration=it) from exc
        records.append(rec)
        if on_step is not None:
            on_step(state, rec)
    return state, records
