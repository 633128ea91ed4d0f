"""Command-line front end.

Every command is reproducible from its config file and seeds alone.
Run outputs land in <out_root>/<name>/ with a config snapshot,
checkpoints/, metrics.jsonl, and samples/.  Exit codes: 0 ok, 1 config
error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .cmodel import CmConfig, consistency_fn
from .config import RunConfig, load_run_config, save_config_snapshot
from .distill import DISTILL_MODES, distill
from .errors import ConfigError, DivergenceError
from .metrics import fit_power_law, mmd_rbf, sliced_wasserstein
from .nnkit import EVAL_CTX, ParamVector
from .oracle import GaussianWorld, gaussian_consistency, gaussian_denoiser, gaussian_score, mc_score
from .sampling import cm_sample, diffusion_sample
from .schedule import karras_grid
from .store import (CheckpointMeta, load_checkpoint, load_csv, make_dataset,
                    save_checkpoint, save_csv, save_tensor)
from .trainer import TRAIN_MODES, train
from .weighting import TIMESTEP_KINDS, WeightingConfig

ENV_OUT_ROOT = "CTLAB_OUT_ROOT"


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems as config errors (exit 1)."""

    def error(self, message):
        raise ConfigError(message)


def main(argv=None) -> int:
    try:
        return _dispatch(argv if argv is not None else sys.argv[1:])
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except DivergenceError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2
    except (OSError, RuntimeError, ArithmeticError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


def _dispatch(argv) -> int:
    parser = _Parser(prog="ctlab", description=__doc__)
    parser.add_argument("--version", action="version", version=f"ctlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="pretrain / tune / distill a model")
    p_train.add_argument("config", help="path to a run config JSON document")
    p_train.add_argument("--mode", choices=(*TRAIN_MODES, *DISTILL_MODES), default="ect")
    p_train.add_argument("--resume", nargs="?", const="", default=None, metavar="CKPT",
                         help="initialize from a checkpoint; bare flag picks the "
                              "newest final EMA checkpoint in the run directory")
    p_train.add_argument("--seed", type=int, default=None, help="override train.seed")

    p_sample = sub.add_parser("sample", help="draw few-step samples from a checkpoint")
    p_sample.add_argument("config")
    p_sample.add_argument("--checkpoint", required=True)
    p_sample.add_argument("--steps", type=int, default=None)
    p_sample.add_argument("-n", type=int, default=None, help="number of samples")
    p_sample.add_argument("--out", default=None)

    p_eval = sub.add_parser("eval", help="score a sample file against the config dataset")
    p_eval.add_argument("config")
    p_eval.add_argument("--samples", required=True)
    p_eval.add_argument("--ref-n", type=int, default=8192)
    p_eval.add_argument("--bandwidth", type=float, default=0.5)
    p_eval.add_argument("--out", default=None, help="write a JSONL record here")

    p_fit = sub.add_parser("fit-scaling", help="fit y = K * C^alpha to a compute/metric CSV")
    p_fit.add_argument("csv", help="two columns per row: compute, metric")
    p_fit.add_argument("--out", default=None, help="write the fit as JSON here")

    p_oracle = sub.add_parser("oracle-check", help="run the analytic-world invariant suite")
    p_oracle.add_argument("--dim", type=int, default=2)
    p_oracle.add_argument("--seed", type=int, default=0)

    p_sweep = sub.add_parser("sweep", help="grid over timestep x adaptive weightings")
    p_sweep.add_argument("config")
    p_sweep.add_argument("--iters", type=int, default=None, help="override total_iters per cell")
    p_sweep.add_argument("--out", default=None, help="CSV output path")

    args = parser.parse_args(argv)
    return {
        "train": cmd_train, "sample": cmd_sample, "eval": cmd_eval,
        "fit-scaling": cmd_fit_scaling, "oracle-check": cmd_oracle_check,
        "sweep": cmd_sweep,
    }[args.command](args)


# ----------------------------------------------------------------------
# helpers
# ----------------------------------------------------------------------

def _run_dir(cfg: RunConfig) -> Path:
    root = cfg.out_root or os.environ.get(ENV_OUT_ROOT, "runs")
    return Path(root) / cfg.name


def _resolve_resume(args, run_dir: Path):
    if args.resume is None:
        return None
    if args.resume:
        return Path(args.resume)
    candidates = sorted(run_dir.glob("checkpoints/*_final_ema.ckpt"),
                        key=lambda p: p.stat().st_mtime)
    if not candidates:
        candidates = sorted(run_dir.glob("checkpoints/*_final.ckpt"),
                            key=lambda p: p.stat().st_mtime)
    if not candidates:
        raise ConfigError(f"--resume: no final checkpoint under {run_dir / 'checkpoints'}")
    return candidates[-1]


def _load_params(path) -> ParamVector:
    return load_checkpoint(path).params


def cmd_train(args) -> int:
    cfg = load_run_config(args.config)
    run_dir = _run_dir(cfg)
    resume_path = _resolve_resume(args, run_dir)
    mode = args.mode
    tcfg = cfg.train_config(mode, seed=args.seed)

    init_params = None
    init_source = resume_path or tcfg.init_checkpoint
    if init_source:
        init_params = _load_params(init_source)

    run_dir.mkdir(parents=True, exist_ok=True)
    ckpt_dir = run_dir / "checkpoints"
    save_config_snapshot(cfg, run_dir / "config.json")
    dataset = make_dataset(cfg.dataset, tcfg.seed) if mode != "ecd-datafree" else None

    meta = CheckpointMeta(net_spec=cfg.net, sigma_data=cfg.sigma_data,
                          schedule=tcfg.schedule, seed=tcfg.seed)
    every = cfg.train.ckpt_every or max(tcfg.total_iters // 4, 1)
    metrics_path = run_dir / "metrics.jsonl"
    log = open(metrics_path, "a", encoding="utf-8")

    def on_step(state, rec):
        log.write(json.dumps({"mode": mode, **dataclasses.asdict(rec)}) + "\n")
        if (rec.iter + 1) % every == 0 and rec.iter + 1 < tcfg.total_iters:
            m = dataclasses.replace(meta, iters=state.iters)
            save_checkpoint(ckpt_dir / f"{mode}_it{rec.iter + 1}.ckpt", state.params, m)

    try:
        if mode in TRAIN_MODES:
            state, _ = train(tcfg, dataset, mode=mode, init_params=init_params,
                             on_step=on_step)
        else:
            teacher = cfg.build_teacher()
            state, _ = distill(tcfg, dataset, teacher, mode=mode,
                               init_params=init_params, on_step=on_step)
    except DivergenceError as exc:
        if exc.state is not None:
            m = dataclasses.replace(meta, iters=exc.state.iters)
            save_checkpoint(ckpt_dir / f"{mode}_lastgood.ckpt", exc.state.params, m)
        with open(run_dir / "error.json", "w", encoding="utf-8") as fh:
            json.dump({"mode": mode, "iteration": exc.iteration, "error": str(exc)}, fh)
        log.close()
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2
    finally:
        if not log.closed:
            log.close()

    m = dataclasses.replace(meta, iters=state.iters)
    save_checkpoint(ckpt_dir / f"{mode}_final.ckpt", state.params, m)
    save_checkpoint(ckpt_dir / f"{mode}_final_ema.ckpt", state.ema_params, m)
    print(f"{mode}: {state.iters} iters -> {ckpt_dir / (mode + '_final.ckpt')}")
    return 0


def cmd_sample(args) -> int:
    cfg = load_run_config(args.config)
    ckpt = load_checkpoint(args.checkpoint)
    cm_cfg = CmConfig(sigma_data=ckpt.sigma_data, net_spec=ckpt.net_spec)
    plan = cfg.sample_plan(steps=args.steps)
    n = args.n if args.n is not None else cfg.sample.n
    samples = cm_sample(ckpt.params, plan, n, cm_cfg)

    out = Path(args.out) if args.out else (_run_dir(cfg) / "samples" /
                                           f"samples_{plan.steps}step.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    if samples.shape[1] <= 3 and out.suffix.lower() == ".csv":
        save_csv(out, samples)
    else:
        out = out.with_suffix(".bin")
        save_tensor(out, samples)
    print(f"wrote {n} {plan.steps}-step samples to {out}")
    return 0


def cmd_eval(args) -> int:
    cfg = load_run_config(args.config)
    from .store import load_vectors
    samples = load_vectors(args.samples)
    dataset = make_dataset(cfg.dataset, cfg.train.seed + 1)
    ref = dataset.sample(args.ref_n)
    sw = sliced_wasserstein(samples, ref, n_proj=128, seed=11)
    mmd = mmd_rbf(samples, ref, bandwidth=args.bandwidth)
    record = {"samples": str(args.samples), "n": len(samples),
              "sliced_wasserstein": sw, "mmd2_rbf": mmd, "bandwidth": args.bandwidth}
    print(json.dumps(record))
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        with open(args.out, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(record) + "\n")
    return 0


def cmd_fit_scaling(args) -> int:
    pts = load_csv(args.csv)
    if pts.shape[1] != 2:
        raise ConfigError(f"{args.csv}: expected 2 columns (compute, metric)")
    fit = fit_power_law(pts)
    print(f"K={fit.K:.6g} alpha={fit.alpha:.6g} pearson={fit.pearson_loglog:.6g}"
          + (" (degenerate)" if fit.degenerate else ""))
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(dataclasses.asdict(fit), fh)
    return 0


def cmd_oracle_check(args) -> int:
    rng = np.random.default_rng(args.seed)
    world = GaussianWorld(mu=rng.standard_normal(args.dim), s=1.3)
    checks = []

    x = world.mu + 2.0 * rng.standard_normal((64, world.dim))
    ts = np.exp(rng.uniform(np.log(0.05), np.log(50.0), 64))
    tweedie = np.max(np.abs(x + ts[:, None] ** 2 * gaussian_score(x, ts, world)
                            - gaussian_denoiser(x, ts, world)))
    checks.append(("tweedie identity", tweedie, 1e-12))

    from scipy.integrate import solve_ivp
    worst = 0.0
    for t0 in (0.5, 2.0, 20.0):
        x0 = world.mu + np.array([1.7] * world.dim)
        sol = solve_ivp(lambda s, y: (y - gaussian_denoiser(y[None, :], s, world)[0]) / s,
                        (t0, 1e-9), x0 + t0, rtol=1e-10, atol=1e-12)
        worst = max(worst, float(np.max(np.abs(
            sol.y[:, -1] - gaussian_consistency((x0 + t0)[None, :], t0, world)[0]))))
    checks.append(("flow-ODE endpoint map", worst, 1e-6))

    x_t = world.mu + 1.0
    est = mc_score(x_t, 1.0, world, 200_000, rng)
    exact = gaussian_score(x_t, 1.0, world)
    rel = float(np.linalg.norm(est - exact) / np.linalg.norm(exact))
    checks.append(("monte-carlo score (2%)", rel, 0.02))

    ok = True
    for name, value, tol in checks:
        passed = value <= tol
        ok = ok and passed
        print(f"{'PASS' if passed else 'FAIL'} {name}: {value:.3g} (tol {tol:g})")
    return 0 if ok else 2


def cmd_sweep(args) -> int:
    cfg = load_run_config(args.config)
    run_dir = _run_dir(cfg)
    run_dir.mkdir(parents=True, exist_ok=True)
    out = Path(args.out) if args.out else run_dir / "sweep.csv"
    iters = args.iters if args.iters is not None else cfg.train.total_iters

    rows = []
    for kind in TIMESTEP_KINDS:
        for adaptive in ("none", "inv_l2"):
            w = WeightingConfig(timestep_kind=kind, adaptive_kind=adaptive,
                                c=max(cfg.weighting.c, 1e-4 if adaptive != "none" else 0.0),
                                p=cfg.weighting.p, sigma_data=cfg.weighting.sigma_data)
            rcfg = dataclasses.replace(cfg.train_config("ect"), weighting=w,
                                       total_iters=iters,
                                       schedule=cfg.schedule_config(iters))
            dataset = make_dataset(cfg.dataset, rcfg.seed)
            state, records = train(rcfg, dataset, mode="ect")
            plan = cfg.sample_plan(steps=2)
            cm_cfg = cfg.cm_config()
            samples = cm_sample(state.ema_params, plan, 2048, cm_cfg)
            ref = dataset.sample(2048)
            sw = sliced_wasserstein(samples, ref, n_proj=64, seed=3)
            rows.append((kind, adaptive, records[-1].loss, sw))
            print(f"{kind:22s} {adaptive:7s} loss={records[-1].loss:10.4g} sw2={sw:.4g}")

    with open(out, "w", encoding="utf-8") as fh:
        fh.write("timestep_kind,adaptive_kind,final_loss,sw_2step\n")
        for kind, adaptive, loss, sw in rows:
            fh.write(f"{kind},{adaptive},{loss:.10g},{sw:.10g}\n")
    print(f"wrote {len(rows)} rows to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
