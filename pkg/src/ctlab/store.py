"""Datasets, checkpoints, and run logs.

Checkpoints are a text JSON header (format version, net spec, schedule
snapshot, layout, checksum) followed by a little-endian float32 payload
in layout order.  Headers are forward-readable: unknown keys are
ignored on load.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, ShapeError
from .nnkit import NetSpec, ParamVector
from .schedule import ScheduleConfig

DATASET_KINDS = ("swiss_roll", "gaussian", "gaussian_mixture", "checkerboard", "file")

_CKPT_MAGIC = b"CTLAB-CKPT\n"
_CKPT_VERSION = 1
_TENSOR_MAGIC = b"CTT1"

# fixed internal seed so normalization constants are properties of the
# generator, not of the run seed
_CALIBRATION_SEED = 0x5ca1e
_CALIBRATION_N = 1 << 17


@dataclass(frozen=True)
class DatasetSpec:
    kind: str
    params: dict = field(default_factory=dict)
    normalize: bool = True

    def __post_init__(self):
        if self.kind not in DATASET_KINDS:
            raise ConfigError(f"unknown dataset kind {self.kind!r}")
        if self.kind == "file":
            path = self.params.get("path")
            if not path or not Path(path).exists():
                raise ConfigError(f"file dataset needs an existing path, got {path!r}")


class DataSampler:
    """Infinite deterministic stream of x0 batches."""

    def __init__(self, spec: DatasetSpec, seed: int):
        self.spec = spec
        self._rng = np.random.default_rng(np.random.SeedSequence([int(seed) & (2**63 - 1), 0xda7a]))
        self._raw = _raw_generator(spec)
        self._shift, self._scale = 0.0, 1.0
        # gaussian is already parametric in (mu, s); rescaling it would
        # detach the stream from the analytic world it is meant to match
        if spec.normalize and spec.kind != "gaussian":
            target_std = float(spec.params.get("target_std", 0.5))
            calib = self._raw(np.random.default_rng(_CALIBRATION_SEED), _CALIBRATION_N)
            self._shift = calib.mean(axis=0)
            self._scale = target_std / np.sqrt(calib.var(axis=0).mean())
        self.dim = self._raw(np.random.default_rng(0), 1).shape[1]

    def sample(self, n: int) -> np.ndarray:
        x = self._raw(self._rng, n)
        return (x - self._shift) * self._scale


def make_dataset(spec: DatasetSpec, seed: int) -> DataSampler:
    return DataSampler(spec, seed)


def _raw_generator(spec: DatasetSpec):
    p = spec.params
    if spec.kind == "gaussian":
        mu = np.atleast_1d(np.asarray(p.get("mu", [0.0]), dtype=np.float64))
        s = float(p.get("s", 1.0))
        return lambda rng, n: mu + s * rng.standard_normal((n, mu.size))
    if spec.kind == "gaussian_mixture":
        means = np.asarray(p.get("means", [[-1.0], [1.0]]), dtype=np.float64)
        s = float(p.get("s", 0.2))
        weights = np.asarray(p.get("weights", np.ones(len(means)) / len(means)), dtype=np.float64)
        weights = weights / weights.sum()

        def gen(rng, n):
            comp = rng.choice(len(means), size=n, p=weights)
            return means[comp] + s * rng.standard_normal((n, means.shape[1]))
        return gen
    if spec.kind == "swiss_roll":
        noise = float(p.get("noise", 0.05))

        def gen(rng, n):
            a = 1.5 * np.pi * (1.0 + 2.0 * rng.random(n))
            pts = np.stack([a * np.cos(a), a * np.sin(a)], axis=1) / (4.5 * np.pi)
            return pts + noise * rng.standard_normal((n, 2))
        return gen
    if spec.kind == "checkerboard":
        def gen(rng, n):
            x1 = rng.random(n) * 4.0 - 2.0
            x2 = rng.random(n) - rng.integers(0, 2, n) * 2.0
            x2 = x2 + np.floor(x1) % 2
            return np.stack([x1, x2], axis=1)
        return gen
    if spec.kind == "file":
        data = load_vectors(p["path"])
        return lambda rng, n: data[rng.integers(0, len(data), n)]
    raise ConfigError(f"unknown dataset kind {spec.kind!r}")


# ----------------------------------------------------------------------
# vector files: CSV (one row per vector) and a raw binary tensor format
# ----------------------------------------------------------------------

def save_csv(path, data: np.ndarray) -> None:
    np.savetxt(path, np.asarray(data, dtype=np.float64), delimiter=",", fmt="%.10g")


def load_csv(path) -> np.ndarray:
    rows, width = [], None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                row = [float(v) for v in line.split(",")]
            except ValueError as exc:
                raise ConfigError(f"{path}: line {lineno}: {exc}") from exc
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise ConfigError(f"{path}: line {lineno}: expected {width} columns, got {len(row)}")
            rows.append(row)
    if not rows:
        raise ConfigError(f"{path}: no data rows")
    return np.asarray(rows, dtype=np.float64)


def save_tensor(path, data: np.ndarray) -> None:
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2:
        raise ShapeError("tensor files hold (count, dim) arrays")
    with open(path, "wb") as fh:
        fh.write(_TENSOR_MAGIC)
        fh.write(struct.pack("<IQ", data.shape[1], data.shape[0]))
        fh.write(data.astype("<f4").tobytes())


def load_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _TENSOR_MAGIC:
            raise ConfigError(f"{path}: bad magic {magic!r}")
        dim, count = struct.unpack("<IQ", fh.read(12))
        payload = fh.read()
    expected = dim * count * 4
    if len(payload) != expected:
        raise ConfigError(f"{path}: truncated payload ({len(payload)} of {expected} bytes)")
    return np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(count, dim)


def load_vectors(path) -> np.ndarray:
    path = Path(path)
    if path.suffix.lower() == ".csv":
        return load_csv(path)
    return load_tensor(path)


# ----------------------------------------------------------------------
# checkpoints
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class CheckpointMeta:
    net_spec: NetSpec
    sigma_data: float
    schedule: ScheduleConfig | None = None
    iters: int = 0
    seed: int = 0


@dataclass(frozen=True, eq=False)
class Checkpoint:
    header: dict
    params: ParamVector

    @property
    def net_spec(self) -> NetSpec:
        return NetSpec(**self.header["net_spec"])

    @property
    def sigma_data(self) -> float:
        return float(self.header["sigma_data"])

    @property
    def schedule(self) -> ScheduleConfig | None:
        raw = self.header.get("schedule")
        return None if raw is None else ScheduleConfig(**raw)


def _payload_checksum(payload: bytes) -> str:
    return hashlib.blake2b(payload, digest_size=8).hexdigest()


def save_checkpoint(path, params: ParamVector, meta: CheckpointMeta) -> None:
    payload = params.values.astype("<f4").tobytes()
    header = {
        "format_version": _CKPT_VERSION,
        "net_spec": dataclasses.asdict(meta.net_spec),
        "sigma_data": meta.sigma_data,
        "schedule": None if meta.schedule is None else dataclasses.asdict(meta.schedule),
        "iters": int(meta.iters),
        "seed": int(meta.seed),
        "layout": [[name, off, list(shape)] for name, (off, shape) in params.layout.items()],
        "count": int(params.size),
        "checksum": _payload_checksum(payload),
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(payload)


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        magic = fh.read(len(_CKPT_MAGIC))
        if magic != _CKPT_MAGIC:
            raise ConfigError(f"{path}: not a checkpoint file")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        payload = fh.read()
    version = header.get("format_version")
    if version != _CKPT_VERSION:
        raise ConfigError(f"{path}: unsupported checkpoint version {version!r}")
    count = int(header["count"])
    if len(payload) != 4 * count:
        raise ConfigError(f"{path}: truncated payload ({len(payload)} of {4 * count} bytes)")
    if _payload_checksum(payload) != header["checksum"]:
        raise ConfigError(f"{path}: payload checksum mismatch")
    layout = {name: (int(off), tuple(shape)) for name, off, shape in header["layout"]}
    values = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    return Checkpoint(header=header, params=ParamVector(values, layout))


# ----------------------------------------------------------------------
# JSONL logs
# ----------------------------------------------------------------------

def write_jsonl(path, records) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            if dataclasses.is_dataclass(rec):
                rec = dataclasses.asdict(rec)
            fh.write(json.dumps(rec) + "\n")


def read_jsonl(path) -> list:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out
