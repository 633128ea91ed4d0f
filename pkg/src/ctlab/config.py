"""Run configuration: one JSON document per run, schema-validated with
path-qualified errors before anything touches the filesystem."""

from __future__ import annotations

import dataclasses
import json
import typing
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .cmodel import CmConfig
from .distill import Teacher, gaussian_teacher, teacher_from_checkpoint
from .errors import ConfigError
from .nnkit import NetSpec
from .oracle import GaussianWorld
from .sampling import SamplePlan, default_plan
from .schedule import ScheduleConfig
from .store import DatasetSpec
from .trainer import TrainConfig
from .weighting import WeightingConfig


@dataclass(frozen=True)
class TrainSection:
    batch_size: int = 128
    total_iters: int = 8000
    pretrain_iters: Optional[int] = None
    lr: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    ema_beta: float = 0.9999
    seed: int = 0
    init_checkpoint: Optional[str] = None
    lr_decay_tref: Optional[int] = None
    ckpt_every: Optional[int] = None


@dataclass(frozen=True)
class ScheduleSection:
    q: float = 2.0
    d: Optional[int] = None  # None -> total_iters // 8
    k: float = 8.0
    b: float = 1.0
    P_mean: float = -1.1
    P_std: float = 2.0
    t_min: float = 0.002
    t_max: float = 80.0
    ceil_mode: bool = True


@dataclass(frozen=True)
class SampleSection:
    steps: int = 2
    t_start: float = 80.0
    intermediates: Optional[tuple] = None  # None -> geometric-mix default
    stochastic: bool = True
    seed: int = 0
    n: int = 4096


@dataclass(frozen=True)
class TeacherSection:
    kind: str = "gaussian"  # gaussian | checkpoint
    mu: tuple = (0.0,)
    s: float = 1.0
    path: Optional[str] = None
    solver: str = "heun"


@dataclass(frozen=True)
class RunConfig:
    name: str
    dataset: DatasetSpec
    net: NetSpec
    sigma_data: float = 0.5
    schedule: ScheduleSection = ScheduleSection()
    weighting: WeightingConfig = WeightingConfig()
    train: TrainSection = TrainSection()
    sample: SampleSection = SampleSection()
    teacher: Optional[TeacherSection] = None
    out_root: Optional[str] = None

    # -- assembled library objects -------------------------------------
    def cm_config(self) -> CmConfig:
        return CmConfig(sigma_data=self.sigma_data, net_spec=self.net)

    def schedule_config(self, total_iters: int) -> ScheduleConfig:
        s = self.schedule
        d = s.d if s.d is not None else max(total_iters // 8, 1)
        return ScheduleConfig(q=s.q, d=d, k=s.k, b=s.b, P_mean=s.P_mean, P_std=s.P_std,
                              t_min=s.t_min, t_max=s.t_max, total_iters=total_iters,
                              ceil_mode=s.ceil_mode)

    def train_config(self, mode: str, seed: Optional[int] = None) -> TrainConfig:
        tr = self.train
        iters = tr.pretrain_iters if (mode == "pretrain" and tr.pretrain_iters) \
            else tr.total_iters
        return TrainConfig(schedule=self.schedule_config(iters), weighting=self.weighting,
                           cm=self.cm_config(), batch_size=tr.batch_size,
                           total_iters=iters, lr=tr.lr, adam_beta1=tr.adam_beta1,
                           adam_beta2=tr.adam_beta2, adam_eps=tr.adam_eps,
                           ema_beta=tr.ema_beta,
                           seed=tr.seed if seed is None else seed,
                           init_checkpoint=tr.init_checkpoint,
                           lr_decay_tref=tr.lr_decay_tref)

    def sample_plan(self, steps: Optional[int] = None) -> SamplePlan:
        sp = self.sample
        n_steps = steps if steps is not None else sp.steps
        if sp.intermediates is not None and steps is None:
            return SamplePlan(steps=n_steps, t_start=sp.t_start,
                              intermediates=sp.intermediates,
                              stochastic=sp.stochastic, seed=sp.seed)
        plan = default_plan(n_steps, t_start=sp.t_start,
                            t_min=self.schedule.t_min, seed=sp.seed)
        return dataclasses.replace(plan, stochastic=sp.stochastic)

    def build_teacher(self) -> Teacher:
        t = self.teacher
        if t is None:
            raise ConfigError("this mode needs a 'teacher' config section")
        if t.kind == "gaussian":
            return gaussian_teacher(GaussianWorld(mu=list(t.mu), s=t.s), solver=t.solver)
        if t.kind == "checkpoint":
            if not t.path:
                raise ConfigError("teacher.path required for kind 'checkpoint'")
            return teacher_from_checkpoint(t.path, solver=t.solver)
        raise ConfigError(f"teacher.kind must be gaussian or checkpoint, got {t.kind!r}")


# ----------------------------------------------------------------------
# strict dict -> dataclass parsing
# ----------------------------------------------------------------------

def _coerce(hint, value, path: str):
    origin = typing.get_origin(hint)
    if origin is typing.Union:
        args = [a for a in typing.get_args(hint) if a is not type(None)]
        if value is None:
            return None
        return _coerce(args[0], value, path)
    if dataclasses.is_dataclass(hint):
        if not isinstance(value, dict):
            raise ConfigError(f"{path}: expected an object")
        return parse_section(hint, value, path)
    if hint is tuple or origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{path}: expected a list")
        return tuple(value)
    if hint is dict:
        if not isinstance(value, dict):
            raise ConfigError(f"{path}: expected an object")
        return dict(value)
    if hint is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return int(value)
    if hint is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true/false, got {value!r}")
        return value
    if hint is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    return value


def parse_section(cls, data: dict, path: str = ""):
    hints = typing.get_type_hints(cls)
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(fields))
    if unknown:
        where = path or cls.__name__
        raise ConfigError(f"{where}: unknown key(s): {', '.join(unknown)}")
    kwargs = {}
    for name, f in fields.items():
        qual = f"{path}.{name}" if path else name
        if name in data:
            try:
                kwargs[name] = _coerce(hints[name], data[name], qual)
            except ConfigError:
                raise
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{qual}: {exc}") from exc
        elif f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING:
            raise ConfigError(f"{qual}: missing required key")
    try:
        return cls(**kwargs)
    except ConfigError as exc:
        raise ConfigError(f"{path or cls.__name__}: {exc}") from exc


def load_run_config(path) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return parse_section(RunConfig, data, "")


def config_snapshot(cfg: RunConfig) -> dict:
    return dataclasses.asdict(cfg)


def save_config_snapshot(cfg: RunConfig, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(config_snapshot(cfg), fh, indent=2, sort_keys=True)
        fh.write("\n")
