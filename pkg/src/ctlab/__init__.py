"""Desk-scale consistency-model lab: continuous-time tuning and
distillation schedules, adaptive weightings, few-step samplers, and an
analytic Gaussian world every estimate can be checked against."""

__version__ = "0.1.0"

from .cmodel import CmConfig, consistency_fn, skip_out_scales
from .distill import Teacher, datafree_x0, distill, ecd_step, gaussian_teacher, ode_step
from .errors import ConfigError, DivergenceError, NumericError, ShapeError
from .metrics import PowerLawFit, fit_power_law, mmd_rbf, sliced_wasserstein
from .nnkit import (EVAL_CTX, ForwardCtx, NetSpec, ParamVector, finite_diff_grad,
                    forward, init_net, value_and_grad)
from .oracle import (GaussianWorld, gaussian_consistency, gaussian_denoiser,
                     gaussian_score, gaussian_trajectory, mc_score)
from .sampling import SamplePlan, cm_sample, default_plan, diffusion_sample
from .schedule import (NoisePair, ScheduleConfig, ict_interval_pmf, ict_num_intervals,
                       karras_grid, map_r, n_of_t, sample_t)
from .store import (Checkpoint, CheckpointMeta, DatasetSpec, load_checkpoint,
                    make_dataset, save_checkpoint)
from .trainer import (RunRecord, TrainConfig, TrainState, adam_step, ect_loss,
                      ema_update, train)
from .weighting import (LossBreakdown, WeightingConfig, adaptive_weight, pseudo_huber,
                        pseudo_huber_grad, timestep_weight)
