"""
bench.py

Library side of the command-line tool: dataset generation, training,
evaluation and the noise-sweep benchmark. ``cli.py`` parses flags and calls
the ``cmd_*`` functions defined here.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
import torch

from . import datasets
from .checkpoint import load_checkpoint, save_checkpoint
from .config import BenchmarkSpec, default_dataset_path, get_case, normalize_arch
from .datasets import NoiseSpec, TrajectoryDataset, split
from .errors import ConfigError
from .models import ModelConfig, build_model, count_params
from .pde_solvers import generate_ns_dataset, generate_wave_dataset
from .plotting import plot_noise_scatter, plot_rollout_snapshots
from .tensor_core import resolve_dtype, seed_everything
from .training import (
    Normalizer,
    TrainConfig,
    evaluate,
    make_optimizer,
    normalizer_fit,
    predict,
    train,
)

logger = logging.getLogger(__name__)

RESULT_COLUMNS = ("case", "arch", "N", "mse", "params")
TIMING_COLUMNS = ("case", "arch", "train_N", "train_seconds")


def write_manifest(out_dir, command: str, resolved: dict) -> Path:
    """Record the fully resolved configuration of a run as ``manifest.json``."""
    path = Path(out_dir) / "manifest.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump({"command": command, "config": resolved}, f, indent=2, sort_keys=True, default=str)
        f.write("\n")
    return path


def cmd_generate(case: str, n_sims: int, grid: int, seed: int, out_path, workers: int = 1) -> Tuple[Path, dict]:
    """
    Generate and save a dataset for *case*.

    Returns
    -------
    (path, summary)
        summary holds sims, frames, grid and the field's min and max.
    """
    spec = get_case(case)
    if n_sims < 1 or grid < 2:
        raise ConfigError(f"Need n_sims >= 1 and grid >= 2, got {n_sims} and {grid}.")
    if spec.pde == "wave":
        ds = generate_wave_dataset(n_sims, grid, seed, nu=spec.nu, T=spec.T, n_save=spec.n_frames, workers=workers)
    else:
        ds = generate_ns_dataset(n_sims, grid, seed, nu=spec.nu, T=spec.T, n_save=spec.n_frames,
                                 dt_solver=spec.dt_solver, workers=workers)
    ds.meta["case"] = case
    path = datasets.save(ds, out_path)
    summary = {
        "path": str(path),
        "sims": ds.n_sims,
        "frames": ds.n_frames,
        "grid": list(ds.grid_shape),
        "min": float(ds.frames.min()),
        "max": float(ds.frames.max()),
    }
    return path, summary


def load_splits(dataset_path, n_train: Optional[int], n_test: int, subsample: int = 1
                ) -> Tuple[TrajectoryDataset, TrajectoryDataset]:
    ds = datasets.load(dataset_path).subsample(subsample)
    if n_train is None:
        n_train = ds.n_sims - n_test
    return split(ds, n_train, n_test)


def model_config_for(arch: str, case: str, grid_shape, width: int, modes: int, **extra) -> ModelConfig:
    spec = get_case(case)
    return ModelConfig(arch=normalize_arch(arch), width=width, modes=(modes, modes), T_in=spec.T_in,
                       T_out=spec.T_out, domain=spec.domain, grid=tuple(grid_shape), **extra)


def cmd_train(arch: str, dataset_path, train_cfg: TrainConfig, out_dir, case: str = "wave",
              width: int = 32, modes: int = 16, n_train: Optional[int] = None, n_test: int = 20,
              subsample: int = 1, resume=None) -> dict:
    """
    Train one model and write ``model.ckpt`` and ``metrics.csv`` into *out_dir*.

    With *resume* the model, Adam moments, normalizer and epoch counter come
    from that checkpoint and training continues for ``train_cfg.epochs``
    more epochs.
    """
    out_dir = Path(out_dir)
    train_set, test_set = load_splits(dataset_path, n_train, n_test, subsample)
    dtype = resolve_dtype(train_cfg.precision)
    seed_everything(train_cfg.seed)
    normalizer, optimizer, start_epoch = None, None, 0
    if resume is not None:
        ckpt = load_checkpoint(resume)
        model = ckpt.build_model(dtype)
        if ckpt.normalizer_stats is not None:
            normalizer = Normalizer(*ckpt.normalizer_stats)
        optimizer = ckpt.restore_optimizer(model, make_optimizer(model, train_cfg))
        start_epoch = 0 if ckpt.epoch is None else ckpt.epoch + 1
        logger.info("Resuming %s from epoch %d.", resume, start_epoch)
    else:
        cfg = model_config_for(arch, case, train_set.grid_shape, width, modes)
        model = build_model(cfg, seed=train_cfg.seed, dtype=dtype)

    ckpt_path = out_dir / "model.ckpt"
    meta = {"case": case, "dataset": str(dataset_path), "train": train_cfg.to_dict(), "subsample": subsample}

    def checkpoint_fn(epoch, opt, norm):
        save_checkpoint(ckpt_path, model, epoch=epoch, optimizer=opt, normalizer=norm, meta=meta)

    model, history = train(model, train_set, test_set, train_cfg, normalizer=normalizer,
                           metrics_path=out_dir / "metrics.csv", checkpoint_fn=checkpoint_fn,
                           start_epoch=start_epoch, optimizer=optimizer)
    return {
        "checkpoint": str(ckpt_path),
        "metrics": str(out_dir / "metrics.csv"),
        "params": count_params(model),
        "epochs": [r.epoch for r in history],
        "final_train_loss": history[-1].train_loss,
        "final_test_mse": history[-1].test_mse,
    }


def cmd_eval(ckpt_path, dataset_path, noise_N: float = 0.0, n_test: int = 20, subsample: int = 1,
             seed: int = 0, plot_path=None) -> dict:
    """
    Evaluate a checkpoint on the last *n_test* simulations of a dataset.

    Test inputs are corrupted at noise level *noise_N* in normalized space;
    the MSE is reported in physical units against clean targets.
    """
    ckpt = load_checkpoint(ckpt_path)
    if ckpt.normalizer_stats is None:
        raise ConfigError(f"{ckpt_path} has no normalizer; it cannot be evaluated.")
    normalizer = Normalizer(*ckpt.normalizer_stats)
    ds = datasets.load(dataset_path).subsample(subsample)
    cfg = ckpt.config
    ds.check_task(cfg.T_in, cfg.T_out)
    if cfg.arch == "crnn" and ds.grid_shape != cfg.grid:
        raise ConfigError(f"Checkpoint was built for a {cfg.grid} grid, dataset is {ds.grid_shape}.")
    if normalizer.mean.shape[:2] not in ((1, 1), ds.grid_shape):
        raise ConfigError(f"Normalizer grid {normalizer.mean.shape[:2]} does not match dataset grid {ds.grid_shape}.")
    if n_test > ds.n_sims:
        raise ConfigError(f"Dataset has {ds.n_sims} simulations, {n_test} test simulations requested.")
    test_frames = ds.frames[ds.n_sims - n_test:]
    model = ckpt.build_model()
    noise = NoiseSpec(noise_N, seed)
    dtype = next(model.parameters()).dtype
    pred, targets = predict(model, normalizer, test_frames, cfg.T_in, cfg.T_out, noise, dtype=dtype)
    report = {
        "checkpoint": str(ckpt_path),
        "dataset": str(dataset_path),
        "arch": cfg.arch,
        "N": float(noise_N),
        "n_test": int(n_test),
        "params": count_params(model),
        "mse": float(np.mean((pred - targets) ** 2)),
    }
    if plot_path is not None:
        plot_rollout_snapshots(targets[0], {cfg.arch: pred[0]}, plot_path, title=f"{cfg.arch}, N = {noise_N:g}")
        report["plot"] = str(plot_path)
    return report


def format_report(report: dict) -> str:
    return (
        f"arch       : {report['arch']}\n"
        f"params     : {report['params']}\n"
        f"noise N    : {report['N']:g}\n"
        f"test sims  : {report['n_test']}\n"
        f"test MSE   : {report['mse']:.6e}"
    )


def _run_cell(spec: BenchmarkSpec, arch: str, train_N: Optional[float],
              train_frames: np.ndarray, test_frames: np.ndarray, meta: dict) -> dict:
    """Train one arch (at one training noise level) and evaluate it at its noise levels."""
    train_set = TrajectoryDataset(train_frames, meta)
    test_set = TrajectoryDataset(test_frames, meta)
    train_cfg = TrainConfig(epochs=spec.epochs, lr=spec.lr, gamma=spec.gamma, step_size=spec.step_size,
                            batch_size=min(spec.batch_size, train_set.n_sims), seed=spec.seed,
                            precision=spec.precision, noise=train_N or 0.0)
    dtype = resolve_dtype(spec.precision)
    seed_everything(spec.seed)
    cfg = model_config_for(arch, spec.case, train_set.grid_shape, spec.width, spec.modes)
    model = build_model(cfg, seed=spec.seed, dtype=dtype)
    normalizer = normalizer_fit(train_set.frames, train_cfg.normalization)
    tic = time.perf_counter()
    model, _ = train(model, train_set, test_set, train_cfg, normalizer=normalizer)
    seconds = time.perf_counter() - tic

    levels = spec.noise_levels if train_N is None else (train_N,)
    rows = []
    for N in levels:
        mse = evaluate(model, normalizer, test_frames, cfg.T_in, cfg.T_out, NoiseSpec(N, spec.seed), dtype=dtype)
        rows.append({"case": spec.case, "arch": arch, "N": N, "mse": mse, "params": count_params(model)})
    snapshot = None
    top = max(spec.noise_levels)
    if top in levels:
        pred, targets = predict(model, normalizer, test_frames[:1], cfg.T_in, cfg.T_out, NoiseSpec(top, spec.seed),
                                dtype=dtype)
        snapshot = (pred[0], targets[0])
    return {"rows": rows, "timing": {"case": spec.case, "arch": arch, "train_N": train_N, "train_seconds": seconds},
            "snapshot": snapshot}


def _write_csv(path: Path, columns, rows: List[dict]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([repr(row[c]) if isinstance(row[c], float) else row[c] for c in columns])


def cmd_benchmark(spec: BenchmarkSpec, out_dir) -> dict:
    """
    Run the noise sweep described by *spec*.

    Writes into *out_dir*:

    - ``results.csv``  case, arch, N, mse, params (deterministic for a seed)
    - ``timings.csv``  training wall time per cell
    - ``scatter.csv`` and ``scatter.svg``  log10(MSE) against N per arch
    - ``snapshots.svg``  one test rollout per arch at the largest N

    Missing datasets are generated first. Models are never evaluated on the
    split they were trained on.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = Path(spec.dataset) if spec.dataset else default_dataset_path(spec.case, spec.grid, spec.n_sims, spec.seed)
    if not path.exists():
        logger.info("Dataset %s not found; generating it.", path)
        cmd_generate(spec.case, spec.n_sims, spec.grid, spec.seed, path, workers=spec.workers)
    train_set, test_set = load_splits(path, spec.n_train, spec.n_test, spec.subsample)

    cells = [(arch, N) for arch in spec.archs for N in (spec.noise_levels if spec.train_with_noise else (None,))]
    args = [(spec, arch, N, train_set.frames, test_set.frames, train_set.meta) for arch, N in cells]
    if spec.parallel > 1:
        with ProcessPoolExecutor(max_workers=spec.parallel) as pool:
            results = list(pool.map(_run_cell_star, args))
    else:
        results = [_run_cell(*a) for a in args]

    rows = sorted((r for res in results for r in res["rows"]), key=lambda r: (r["arch"], r["N"]))
    timings = [res["timing"] for res in results]
    _write_csv(out_dir / "results.csv", RESULT_COLUMNS, rows)
    _write_csv(out_dir / "timings.csv", TIMING_COLUMNS, timings)
    scatter = [{"arch": r["arch"], "N": r["N"], "log10_mse": math.log10(r["mse"])} for r in rows]
    _write_csv(out_dir / "scatter.csv", ("arch", "N", "log10_mse"), scatter)
    plot_noise_scatter(rows, out_dir / "scatter.svg", title=spec.case)

    snapshots = {arch: res["snapshot"] for (arch, _), res in zip(cells, results) if res["snapshot"] is not None}
    if snapshots:
        truth = next(iter(snapshots.values()))[1]
        plot_rollout_snapshots(truth, {a: s[0] for a, s in snapshots.items()}, out_dir / "snapshots.svg",
                               title=f"{spec.case}, N = {max(spec.noise_levels):g}")
    logger.info("Benchmark finished: %d result rows in %s.", len(rows), out_dir)
    return {"rows": rows, "timings": timings, "dataset": str(path), "out": str(out_dir)}


def _run_cell_star(args):
    torch.set_num_threads(1)
    return _run_cell(*args)
