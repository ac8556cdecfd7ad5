"""
training.py

Normalization, the MSE objective, Adam with step decay and the epoch loop.

The loop keeps the data in normalized space. Noise (if any) corrupts the
normalized training inputs and targets; the test metric is always computed
in physical units against clean targets.
"""
from __future__ import annotations

import csv
import logging
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, List, Optional, Tuple

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .datasets import NoiseSpec, TrajectoryDataset, add_noise, batch_iter, make_windows
from .errors import ConfigError, DivergenceError, ShapeError
from .models import rollout
from .tensor_core import backward, resolve_dtype

logger = logging.getLogger(__name__)

STD_FLOOR = 1e-8
METRIC_COLUMNS = ("epoch", "lr", "train_loss", "test_mse", "wall_ms")


@dataclass
class Normalizer:
    """
    Gaussian statistics of the training split.

    ``mean`` and ``std`` have shape (nx, ny, 1) in pointwise mode and
    (1, 1, 1) in scalar mode, so they broadcast against channels-last
    windows (batch, nx, ny, T).
    """

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.std = np.maximum(np.asarray(self.std, dtype=np.float64), STD_FLOOR)
        if self.mean.shape != self.std.shape:
            raise ShapeError(f"mean {self.mean.shape} and std {self.std.shape} differ in shape.")

    def _stats_like(self, x):
        if isinstance(x, torch.Tensor):
            return (torch.as_tensor(self.mean, dtype=x.dtype, device=x.device),
                    torch.as_tensor(self.std, dtype=x.dtype, device=x.device))
        return self.mean.astype(np.asarray(x).dtype, copy=False), self.std.astype(np.asarray(x).dtype, copy=False)

    def normalize(self, x):
        mean, std = self._stats_like(x)
        return (x - mean) / std

    def denormalize(self, x):
        mean, std = self._stats_like(x)
        return x * std + mean


def normalizer_fit(train_frames: np.ndarray, mode: str = "pointwise") -> Normalizer:
    """
    Fit mean and standard deviation over the training frames only.

    Parameters
    ----------
    train_frames : np.ndarray
        (n_sims, n_frames, nx, ny) training split.
    mode : {"pointwise", "scalar"}
        Per-grid-point statistics or one mean/std for the whole split.

    Returns
    -------
    Normalizer

    Example
    -------
    >>> normalizer_fit(np.full((2, 3, 4, 4), 5.0)).mean[0, 0, 0]
    5.0
    """
    frames = np.asarray(train_frames, dtype=np.float64)
    if frames.ndim != 4 or frames.shape[0] == 0:
        raise ShapeError(f"normalizer_fit needs a nonempty (n_sims, n_frames, nx, ny) array, got {frames.shape}.")
    if mode == "pointwise":
        mean = frames.mean(axis=(0, 1))[..., None]
        std = frames.std(axis=(0, 1))[..., None]
    elif mode == "scalar":
        mean = np.full((1, 1, 1), frames.mean())
        std = np.full((1, 1, 1), frames.std())
    else:
        raise ConfigError(f"Unknown normalization mode '{mode}'. Use 'pointwise' or 'scalar'.")
    return Normalizer(mean, std)


def mse_loss(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    if pred.shape != target.shape:
        raise ShapeError(f"Prediction {tuple(pred.shape)} and target {tuple(target.shape)} differ in shape.")
    return F.mse_loss(pred, target)


@dataclass
class TrainConfig:
    """
    Optimisation settings.

    ``teacher_forcing`` feeds ground-truth frames back during the rollout
    instead of the model's own predictions. ``noise`` is the variance added
    to normalized training inputs and targets; ``resample_noise`` draws a
    fresh corruption every epoch instead of once per dataset.
    """

    epochs: int = 1000
    lr: float = 1e-3
    gamma: float = 0.9
    step_size: int = 100
    batch_size: int = 50
    seed: int = 0
    precision: str = "float32"
    teacher_forcing: bool = False
    noise: float = 0.0
    resample_noise: bool = False
    normalization: str = "pointwise"
    checkpoint_every: int = 0
    betas: Tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8

    def __post_init__(self):
        self.betas = tuple(float(b) for b in self.betas)
        if self.epochs < 1 or self.batch_size < 1 or self.step_size < 1:
            raise ConfigError("epochs, batch_size and step_size must be positive.")
        if self.lr < 0:
            raise ConfigError(f"Learning rate must be >= 0, got {self.lr}.")
        if not 0 < self.gamma <= 1:
            raise ConfigError(f"Decay factor must be in (0, 1], got {self.gamma}.")
        if self.noise < 0:
            raise ConfigError(f"Noise factor must be >= 0, got {self.noise}.")
        if self.checkpoint_every < 0:
            raise ConfigError(f"checkpoint_every must be >= 0, got {self.checkpoint_every}.")
        resolve_dtype(self.precision)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


def step_lr(epoch: int, cfg: TrainConfig) -> float:
    """lr0 * gamma ** (epoch // step_size)."""
    if epoch < 0:
        raise ConfigError(f"epoch must be >= 0, got {epoch}.")
    return cfg.lr * cfg.gamma ** (epoch // cfg.step_size)


def make_optimizer(model: nn.Module, cfg: TrainConfig) -> torch.optim.Adam:
    params = [p for p in model.parameters() if p.requires_grad]
    return torch.optim.Adam(params, lr=cfg.lr, betas=cfg.betas, eps=cfg.eps)


def adam_step(optimizer: torch.optim.Adam, lr: float) -> None:
    """Apply one bias-corrected Adam update at learning rate *lr* using the stored ``.grad`` buffers."""
    for group in optimizer.param_groups:
        group["lr"] = lr
    optimizer.step()


def sequence_loss(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Sum over predicted frames of the per-frame MSE."""
    if pred.shape != target.shape:
        raise ShapeError(f"Prediction {tuple(pred.shape)} and target {tuple(target.shape)} differ in shape.")
    return sum(mse_loss(pred[..., k], target[..., k]) for k in range(pred.shape[-1]))


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    train_loss: float
    test_mse: float
    wall_ms: float


class MetricsWriter:
    """Append-only CSV of :class:`EpochRecord` rows."""

    def __init__(self, path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        if not self.path.exists() or self.path.stat().st_size == 0:
            with open(self.path, "w", newline="") as f:
                csv.writer(f).writerow(METRIC_COLUMNS)

    def append(self, record: EpochRecord) -> None:
        with open(self.path, "a", newline="") as f:
            csv.writer(f).writerow([record.epoch, repr(record.lr), repr(record.train_loss),
                                    repr(record.test_mse), f"{record.wall_ms:.1f}"])


def predict(model: nn.Module, normalizer: Normalizer, frames: np.ndarray, T_in: int, T_out: int,
            noise: Optional[NoiseSpec] = None, batch_size: int = 50, dtype=torch.float32):
    """
    Roll out every simulation in *frames* and return predictions in physical units.

    Inputs are normalized, corrupted at ``noise`` (normalized space only),
    rolled out for T_out frames and denormalized. Targets never pass through
    the noise path.

    Parameters
    ----------
    frames : np.ndarray
        (n_sims, n_frames, nx, ny) raw frames.

    Returns
    -------
    (pred, targets) : np.ndarray
        Both (n_sims, nx, ny, T_out), float64.
    """
    inputs, targets = make_windows(frames, T_in, T_out)
    x = normalizer.normalize(inputs.astype(np.float64))
    if noise is not None:
        x = add_noise(x, noise)
    x = torch.as_tensor(x, dtype=dtype)
    model.eval()
    preds = []
    with torch.no_grad():
        for start in range(0, x.shape[0], batch_size):
            preds.append(rollout(model, x[start:start + batch_size], T_out).double())
    return normalizer.denormalize(torch.cat(preds).numpy()), targets.astype(np.float64)


def evaluate(model: nn.Module, normalizer: Normalizer, frames: np.ndarray, T_in: int, T_out: int,
             noise: Optional[NoiseSpec] = None, batch_size: int = 50, dtype=torch.float32) -> float:
    """Test MSE in physical units against clean targets (see :func:`predict`)."""
    pred, targets = predict(model, normalizer, frames, T_in, T_out, noise, batch_size, dtype)
    return float(np.mean((pred - targets) ** 2))


def _noisy(arr: np.ndarray, N: float, seed: int) -> np.ndarray:
    return add_noise(arr, NoiseSpec(N, seed)) if N > 0 else arr


def _noise_seeds(seed: int, epoch: Optional[int]) -> Tuple[int, int]:
    key = [seed, 0xA0, epoch] if epoch is not None else [seed, 0xA0]
    s_in, s_out = np.random.SeedSequence(key).generate_state(2)
    return int(s_in), int(s_out)


def train(
    model: nn.Module,
    train_set: TrajectoryDataset,
    test_set: TrajectoryDataset,
    cfg: TrainConfig,
    normalizer: Optional[Normalizer] = None,
    metrics_path=None,
    checkpoint_fn: Optional[Callable[[int, torch.optim.Adam, Normalizer], None]] = None,
    start_epoch: int = 0,
    optimizer: Optional[torch.optim.Adam] = None,
) -> Tuple[nn.Module, List[EpochRecord]]:
    """
    Fit *model* on the training split with Adam and a step-decayed learning rate.

    Parameters
    ----------
    model : nn.Module
        Any model accepted by :func:`spectralseq.models.rollout`.
    train_set, test_set : TrajectoryDataset
        Disjoint splits; the normalizer is fitted on *train_set* unless given.
    cfg : TrainConfig
    normalizer : Normalizer, optional
        Reuse fitted statistics (resume).
    metrics_path : path, optional
        Append one CSV row per epoch.
    checkpoint_fn : callable, optional
        Called as ``checkpoint_fn(epoch, optimizer, normalizer)`` every
        ``cfg.checkpoint_every`` epochs and after the last one.
    start_epoch : int
        First epoch index (continues numbering on resume).
    optimizer : torch.optim.Adam, optional
        Restored optimizer state (resume).

    Returns
    -------
    (model, history)
        history holds one :class:`EpochRecord` per epoch run.

    Raises
    ------
    ConfigError
        If batch_size exceeds the number of training simulations.
    DivergenceError
        When a batch loss is NaN or Inf; carries epoch, batch and lr.
    """
    T_in, T_out = model.config.T_in, model.config.T_out
    train_set.check_task(T_in, T_out)
    test_set.check_task(T_in, T_out)
    if cfg.batch_size > train_set.n_sims:
        raise ConfigError(f"batch_size {cfg.batch_size} exceeds the {train_set.n_sims} training simulations.")
    if normalizer is None:
        normalizer = normalizer_fit(train_set.frames, cfg.normalization)
    dtype = resolve_dtype(cfg.precision)
    model.to(dtype)
    if optimizer is None:
        optimizer = make_optimizer(model, cfg)

    raw_in, raw_out = make_windows(train_set.frames, T_in, T_out)
    norm_in = normalizer.normalize(raw_in.astype(np.float64))
    norm_out = normalizer.normalize(raw_out.astype(np.float64))

    def corrupted(epoch):
        s_in, s_out = _noise_seeds(cfg.seed, epoch if cfg.resample_noise else None)
        return (torch.as_tensor(_noisy(norm_in, cfg.noise, s_in), dtype=dtype),
                torch.as_tensor(_noisy(norm_out, cfg.noise, s_out), dtype=dtype))

    inputs, targets = corrupted(None)
    history = []
    last_epoch = start_epoch + cfg.epochs - 1
    for epoch in range(start_epoch, start_epoch + cfg.epochs):
        tic = time.perf_counter()
        lr = step_lr(epoch, cfg)
        if cfg.resample_noise and cfg.noise > 0:
            inputs, targets = corrupted(epoch)
        model.train()
        total, count = 0.0, 0
        for b, (x, y) in enumerate(batch_iter(inputs, targets, cfg.batch_size, cfg.seed, epoch)):
            optimizer.zero_grad(set_to_none=True)
            forcing = y if cfg.teacher_forcing else None
            loss = sequence_loss(rollout(model, x, T_out, forcing=forcing), y)
            if not torch.isfinite(loss):
                raise DivergenceError(
                    f"Loss became {loss.item()} at epoch {epoch}, batch {b} (lr={lr:g}).",
                    epoch=epoch, batch=b, lr=lr,
                )
            backward(loss, model)
            adam_step(optimizer, lr)
            total += loss.item() * x.shape[0]
            count += x.shape[0]
        test_mse = evaluate(model, normalizer, test_set.frames, T_in, T_out, batch_size=cfg.batch_size, dtype=dtype)
        record = EpochRecord(epoch, lr, total / count, test_mse, 1e3 * (time.perf_counter() - tic))
        history.append(record)
        logger.info("epoch %d lr %.3e train_loss %.6e test_mse %.6e", epoch, lr, record.train_loss, test_mse)
        if metrics_path is not None:
            MetricsWriter(metrics_path).append(record)
        if checkpoint_fn is not None and (
            epoch == last_epoch or (cfg.checkpoint_every and (epoch + 1) % cfg.checkpoint_every == 0)
        ):
            checkpoint_fn(epoch, optimizer, normalizer)
    return model, history
