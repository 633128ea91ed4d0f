"""Consistency tuning loop: draw (x0, eps, t, r), build the shared-noise
pair, take one step on the weighted stop-gradient consistency loss.

The teacher branch f(x_r) is evaluated value-only (outside the tape), so
its parameter gradient is exactly zero by construction.  With r = 0 the
teacher output is x_0 itself via the boundary, and the loss reduces to
plain weighted denoising regression -- that special case is the
pretraining mode.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .autodiff import Tensor
from .cmodel import CmConfig, consistency_fn, consistency_tensor
from .errors import ConfigError, DivergenceError, NumericError
from .nnkit import ForwardCtx, ParamVector, init_net
from .schedule import NoisePair, ScheduleConfig, draw_pair
from .weighting import LossBreakdown, WeightingConfig, adaptive_weight, timestep_weight

TRAIN_MODES = ("pretrain", "ect")


@dataclass(frozen=True)
class TrainConfig:
    schedule: ScheduleConfig
    weighting: WeightingConfig
    cm: CmConfig
    batch_size: int = 128
    total_iters: int = 8000
    lr: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    ema_beta: float = 0.9999
    seed: int = 0
    init_checkpoint: Optional[str] = None
    lr_decay_tref: Optional[int] = None  # inverse-sqrt decay reference; None = constant lr

    def __post_init__(self):
        if self.batch_size < 1 or self.total_iters < 1:
            raise ConfigError("batch_size and total_iters must be >= 1")
        if self.lr <= 0:
            raise ConfigError(f"lr must be > 0, got {self.lr}")
        if not (0.0 <= self.ema_beta < 1.0):
            raise ConfigError(f"ema_beta must be in [0, 1), got {self.ema_beta}")


@dataclass(frozen=True)
class TrainState:
    params: ParamVector
    ema_params: ParamVector
    adam_m: ParamVector
    adam_v: ParamVector
    iters: int = 0


@dataclass(frozen=True)
class RunRecord:
    iter: int
    t_mean: float
    r_mean: float
    loss: float
    grad_norm: float


def fresh_state(params: ParamVector) -> TrainState:
    return TrainState(params=params, ema_params=params.copy(),
                      adam_m=params.zeros_like(), adam_v=params.zeros_like(), iters=0)


def step_rng(seed: int, it: int) -> np.random.Generator:
    """Per-iteration stream; the middle word keeps it disjoint from the
    dataset / init / metric streams derived from the same seed."""
    return np.random.default_rng(np.random.SeedSequence([seed & (2**63 - 1), 1, it]))


# ----------------------------------------------------------------------
# loss
# ----------------------------------------------------------------------

def pair_loss_tensor(params_t: Tensor, x_t: np.ndarray, t: np.ndarray,
                     x_r: np.ndarray, r: np.ndarray, dropout_seed: int,
                     weighting: WeightingConfig, cm: CmConfig,
                     teacher_params: Optional[ParamVector] = None,
                     fn_override: Optional[Callable] = None):
    """Weighted consistency loss between f(x_t) and the frozen f(x_r).

    teacher_params defaults to the student values; passing a different
    vector trains against a detached copy, which the stop-gradient tests
    exploit.  fn_override replaces the parameterized model in both
    branches (e.g. with an analytic map); the loss is then constant in
    the parameters.
    """
    ctx = ForwardCtx(dropout_seed=dropout_seed, train_mode=True)
    if fn_override is not None:
        student = Tensor(np.asarray(fn_override(x_t, t), dtype=np.float64))
        target = np.asarray(fn_override(x_r, r), dtype=np.float64)
    else:
        student = consistency_tensor(params_t, x_t, t, ctx, cm)
        tp = teacher_params if teacher_params is not None else ParamVector(
            params_t.value, _layout_of(cm))
        target = consistency_fn(tp, x_r, r, ctx, cm)

    delta = student - Tensor(target)
    raw = (delta * delta).sum(axis=1)                       # (B,) on the tape
    tw = timestep_weight(weighting.timestep_kind, t, r, weighting.sigma_data)
    aw = adaptive_weight(delta.value, weighting.c, weighting.p, weighting.adaptive_kind)
    tw = np.broadcast_to(np.asarray(tw, dtype=np.float64), raw.shape)
    aw = np.broadcast_to(np.asarray(aw, dtype=np.float64), raw.shape)
    loss = (raw * (tw * aw)).mean() * 0.5

    breakdown = [LossBreakdown(raw_sq_l2=float(sq), timestep_weight=float(w1),
                               adaptive_weight=float(w2),
                               weighted_loss=float(w1 * w2 * sq / 2.0))
                 for sq, w1, w2 in zip(raw.value, tw, aw)]
    return loss, breakdown


def _layout_of(cm: CmConfig) -> dict:
    from .nnkit import build_layout
    return build_layout(cm.net_spec)


def ect_loss(params: ParamVector, x0: np.ndarray, pair: NoisePair,
             weighting: WeightingConfig, cm: CmConfig,
             teacher_params: Optional[ParamVector] = None,
             fn_override: Optional[Callable] = None):
    """Shared-noise consistency loss: x_t = x0 + t eps, x_r = x0 + r eps."""
    loss_t, breakdown = ect_loss_tensor(Tensor(params.values), x0, pair, weighting, cm,
                                        teacher_params=teacher_params,
                                        fn_override=fn_override)
    return float(loss_t.value), breakdown


def ect_loss_tensor(params_t: Tensor, x0: np.ndarray, pair: NoisePair,
                    weighting: WeightingConfig, cm: CmConfig,
                    teacher_params: Optional[ParamVector] = None,
                    fn_override: Optional[Callable] = None):
    x0 = np.asarray(x0, dtype=np.float64)
    if np.any(pair.r >= pair.t):
        raise ConfigError("consistency pair requires r < t elementwise")
    x_t = x0 + pair.t[:, None] * pair.epsilon
    x_r = x0 + pair.r[:, None] * pair.epsilon
    return pair_loss_tensor(params_t, x_t, pair.t, x_r, pair.r, pair.dropout_seed,
                            weighting, cm, teacher_params=teacher_params,
                            fn_override=fn_override)


# ----------------------------------------------------------------------
# optimizer / EMA
# ----------------------------------------------------------------------

def effective_lr(cfg: TrainConfig, iters: int) -> float:
    if cfg.lr_decay_tref is None:
        return cfg.lr
    return cfg.lr / np.sqrt(max(iters / cfg.lr_decay_tref, 1.0))


def adam_step(state: TrainState, grad: ParamVector, cfg: TrainConfig) -> TrainState:
    """Bias-corrected adaptive-moment update; pure function of its inputs."""
    if not np.all(np.isfinite(grad.values)):
        raise NumericError("non-finite gradient in adam_step")
    t = state.iters + 1
    m = cfg.adam_beta1 * state.adam_m.values + (1 - cfg.adam_beta1) * grad.values
    v = cfg.adam_beta2 * state.adam_v.values + (1 - cfg.adam_beta2) * grad.values**2
    m_hat = m / (1 - cfg.adam_beta1**t)
    v_hat = v / (1 - cfg.adam_beta2**t)
    lr = effective_lr(cfg, state.iters)
    new_values = state.params.values - lr * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)
    return TrainState(params=state.params.with_values(new_values),
                      ema_params=state.ema_params,
                      adam_m=state.adam_m.with_values(m),
                      adam_v=state.adam_v.with_values(v),
                      iters=t)


def ema_update(ema: ParamVector, params: ParamVector, beta: float) -> ParamVector:
    if not (0.0 <= beta < 1.0):
        raise ConfigError(f"ema beta must be in [0, 1), got {beta}")
    return ema.with_values(beta * ema.values + (1 - beta) * params.values)


# ----------------------------------------------------------------------
# training loop
# ----------------------------------------------------------------------

def train(cfg: TrainConfig, dataset, mode: str = "ect",
          init_params: Optional[ParamVector] = None,
          on_step: Optional[Callable] = None):
    """Run the full loop for cfg.total_iters steps.

    mode "pretrain" forces r = 0 (denoising regression); "ect" follows
    the mapping function.  Deterministic given (cfg, dataset seed).
    on_step, if given, is called with (state, record) after every step.
    Raises DivergenceError carrying the last good state if the loss
    goes non-finite.
    """
    if mode not in TRAIN_MODES:
        raise ConfigError(f"mode must be one of {TRAIN_MODES}, got {mode!r}")
    params = init_params if init_params is not None else init_net(cfg.cm.net_spec, cfg.seed)
    state = fresh_state(params)
    records = []
    for it in range(cfg.total_iters):
        rng = step_rng(cfg.seed, it)
        x0 = dataset.sample(cfg.batch_size)
        pair = draw_pair(cfg.schedule, it, x0.shape[1], cfg.batch_size, rng,
                         force_r_zero=(mode == "pretrain"))
        leaf = Tensor(state.params.values)
        try:
            loss_t, _ = ect_loss_tensor(leaf, x0, pair, cfg.weighting, cfg.cm)
            loss = float(loss_t.value)
            if not np.isfinite(loss):
                raise NumericError(f"non-finite loss {loss}")
            loss_t.backward()
            grad = state.params.with_values(leaf.grad)
            state = adam_step(state, grad, cfg)
        except NumericError as exc:
            raise DivergenceError(f"diverged at iteration {it}: {exc}",
                                  state=state, records=records, iteration=it) from exc
        state = replace(state, ema_params=ema_update(state.ema_params, state.params,
                                                     cfg.ema_beta))
        rec = RunRecord(iter=it, t_mean=float(pair.t.mean()), r_mean=float(pair.r.mean()),
                        loss=loss, grad_norm=float(np.linalg.norm(grad.values)))
        records.append(rec)
        if on_step is not None:
            on_step(state, rec)
    return state, records
