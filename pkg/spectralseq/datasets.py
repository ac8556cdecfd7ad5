"""
datasets.py

Trajectory container, the ``.frnn`` binary format, train/test splitting,
noise corruption and batch iteration.

File layout (all integers little-endian)::

    8s   magic  b"FRNNDATA"
    u8   version (1)
    u64  n_sims, n_frames, nx, ny
    u8   dtype tag (1 = float32, 2 = float64)
    ...  frames, row-major, little-endian
    u64  metadata length
    ...  UTF-8 JSON metadata (sorted keys)
"""
from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional, Tuple, Union

import numpy as np
import torch
from torch.utils.data import DataLoader, TensorDataset

from .errors import (
    BadMagicError,
    ConfigError,
    DatasetFormatError,
    ShapeError,
    TruncatedFileError,
    UnsupportedVersionError,
)

logger = logging.getLogger(__name__)

MAGIC = b"FRNNDATA"
VERSION = 1
HEADER = struct.Struct("<8sB4QB")
LENGTH = struct.Struct("<Q")
DTYPE_TAGS = {1: np.dtype("<f4"), 2: np.dtype("<f8")}
TAG_OF = {np.dtype("<f4"): 1, np.dtype("<f8"): 2}


@dataclass(eq=False)
class TrajectoryDataset:
    """
    Simulations stored as ``frames[sim, frame, x, y]``.

    Parameters
    ----------
    frames : np.ndarray
        Real array of shape (n_sims, n_frames, nx, ny), float32 or float64.
    meta : dict
        JSON-serialisable description (pde name, nu, domain, dt_save, seed,
        generator version, ...).
    """

    frames: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        frames = np.asarray(self.frames)
        if frames.ndim != 4:
            raise ShapeError(f"frames must have shape (n_sims, n_frames, nx, ny), got {frames.shape}.")
        if frames.dtype not in (np.float32, np.float64):
            frames = frames.astype(np.float64)
        if not np.isfinite(frames).all():
            raise ValueError("Dataset frames contain NaN or Inf.")
        self.frames = frames
        self.meta = dict(self.meta)

    @property
    def n_sims(self) -> int:
        return self.frames.shape[0]

    @property
    def n_frames(self) -> int:
        return self.frames.shape[1]

    @property
    def grid_shape(self) -> Tuple[int, int]:
        return self.frames.shape[2], self.frames.shape[3]

    def equals(self, other: "TrajectoryDataset") -> bool:
        """Bitwise equality of frames (dtype included) and metadata."""
        return (
            self.frames.dtype == other.frames.dtype
            and self.frames.shape == other.frames.shape
            and self.frames.tobytes() == other.frames.tobytes()
            and self.meta == other.meta
        )

    def subsample(self, step: int) -> "TrajectoryDataset":
        """Keep every *step*-th grid point along both axes."""
        nx, ny = self.grid_shape
        if step < 1 or nx % step or ny % step:
            raise ConfigError(f"Cannot subsample a {nx}x{ny} grid by {step}.")
        if step == 1:
            return self
        meta = dict(self.meta, subsample=self.meta.get("subsample", 1) * step)
        return TrajectoryDataset(np.ascontiguousarray(self.frames[:, :, ::step, ::step]), meta)

    def check_task(self, T_in: int, T_out: int) -> None:
        if self.n_frames < T_in + T_out:
            raise ConfigError(
                f"Dataset has {self.n_frames} frames per simulation, T_in + T_out = {T_in + T_out} needed."
            )


@dataclass(frozen=True)
class NoiseSpec:
    """Additive Gaussian noise of variance N (std sqrt(N))."""

    N: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not self.N >= 0:
            raise ConfigError(f"Noise factor N is a variance and must be >= 0, got {self.N}.")


def add_noise(x_norm, spec: NoiseSpec):
    """
    Corrupt a normalized field: x + g with g ~ Normal(0, N) i.i.d. per element.

    Accepts a numpy array or a torch tensor and returns the same kind. N = 0
    returns the input unchanged.

    Example
    -------
    >>> x = np.zeros((2, 4, 4))
    >>> np.array_equal(add_noise(x, NoiseSpec(0.0)), x)
    True
    """
    if spec.N == 0:
        return x_norm
    rng = np.random.default_rng(spec.seed)
    std = float(np.sqrt(spec.N))
    if isinstance(x_norm, torch.Tensor):
        g = rng.normal(0.0, std, size=tuple(x_norm.shape))
        return x_norm + torch.as_tensor(g, dtype=x_norm.dtype, device=x_norm.device)
    x = np.asarray(x_norm)
    return x + rng.normal(0.0, std, size=x.shape).astype(x.dtype, copy=False)


def split(ds: TrajectoryDataset, n_train: int, n_test: int) -> Tuple[TrajectoryDataset, TrajectoryDataset]:
    """First *n_train* simulations for training, last *n_test* for testing."""
    if n_train < 1 or n_test < 1:
        raise ConfigError(f"n_train and n_test must be positive, got {n_train} and {n_test}.")
    if n_train + n_test > ds.n_sims:
        raise ConfigError(f"Cannot split {ds.n_sims} simulations into {n_train} + {n_test}.")
    train = TrajectoryDataset(ds.frames[:n_train], dict(ds.meta, split="train"))
    test = TrajectoryDataset(ds.frames[ds.n_sims - n_test:], dict(ds.meta, split="test"))
    return train, test


def make_windows(frames: np.ndarray, T_in: int, T_out: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Cut one (input, target) pair per simulation.

    Parameters
    ----------
    frames : np.ndarray
        (n_sims, n_frames, nx, ny).

    Returns
    -------
    inputs, targets : np.ndarray
        (n_sims, nx, ny, T_in) and (n_sims, nx, ny, T_out), channels-last.
    """
    frames = np.asarray(frames)
    if frames.ndim != 4:
        raise ShapeError(f"frames must be (n_sims, n_frames, nx, ny), got {frames.shape}.")
    if frames.shape[1] < T_in + T_out:
        raise ConfigError(f"{frames.shape[1]} frames cannot hold T_in={T_in} plus T_out={T_out}.")
    model_layout = np.moveaxis(frames, 1, -1)
    return (
        np.ascontiguousarray(model_layout[..., :T_in]),
        np.ascontiguousarray(model_layout[..., T_in:T_in + T_out]),
    )


def epoch_generator(seed: int, epoch: int) -> torch.Generator:
    """Independent torch generator for a (seed, epoch) pair."""
    state = np.random.SeedSequence([seed, epoch]).generate_state(1, dtype=np.uint64)[0]
    return torch.Generator().manual_seed(int(state) & 0x7FFF_FFFF_FFFF_FFFF)


def batch_iter(inputs: torch.Tensor, targets: torch.Tensor, batch_size: int = 50,
               seed: int = 0, epoch: int = 0) -> Iterator[Tuple[torch.Tensor, torch.Tensor]]:
    """
    Seeded shuffled mini-batches; the last partial batch is kept.

    Parameters
    ----------
    inputs, targets : torch.Tensor
        Sample-major tensors (already normalized and, if configured, noisy).
    batch_size : int
        Must not exceed the number of samples.
    seed, epoch : int
        The shuffle order depends on both; the same pair reproduces it.

    Raises
    ------
    ConfigError
        If batch_size is not in [1, n_samples].
    """
    n = inputs.shape[0]
    if targets.shape[0] != n:
        raise ShapeError(f"{n} inputs but {targets.shape[0]} targets.")
    if not 1 <= batch_size <= n:
        raise ConfigError(f"Batch size must be in [1, {n}], got {batch_size}.")
    loader = DataLoader(
        TensorDataset(inputs, targets),
        batch_size=batch_size,
        shuffle=True,
        drop_last=False,
        generator=epoch_generator(seed, epoch),
    )
    return iter(loader)


def save(ds: TrajectoryDataset, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frames = ds.frames.astype(ds.frames.dtype.newbyteorder("<"), copy=False)
    tag = TAG_OF[frames.dtype]
    meta = json.dumps(ds.meta, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(HEADER.pack(MAGIC, VERSION, *frames.shape, tag))
        f.write(np.ascontiguousarray(frames).tobytes(order="C"))
        f.write(LENGTH.pack(len(meta)))
        f.write(meta)
    logger.info("Wrote %s: %d sims x %d frames on %dx%d.", path, *frames.shape)
    return path


def _find_trailer(data: bytes, start: int) -> Optional[int]:
    """Offset of a length-prefixed JSON object that ends the file exactly, or None."""
    if not data.endswith(b"}"):
        return None
    pos = len(data)
    while True:
        pos = data.rfind(b"{", start + LENGTH.size, pos)
        if pos < 0:
            return None
        (meta_len,) = LENGTH.unpack_from(data, pos - LENGTH.size)
        if meta_len == len(data) - pos:
            return pos - LENGTH.size


def load(path: Union[str, Path]) -> TrajectoryDataset:
    """
    Read a ``.frnn`` file written by :func:`save`.

    Raises
    ------
    BadMagicError, UnsupportedVersionError
        On an unknown header.
    TruncatedFileError
        If the file ends before the declared content.
    DatasetFormatError
        If the header dimensions disagree with the payload or the metadata
        trailer is malformed.
    """
    data = Path(path).read_bytes()
    if len(data) < HEADER.size:
        if not MAGIC.startswith(data[: len(MAGIC)]):
            raise BadMagicError(f"{path} is not a trajectory dataset.")
        raise TruncatedFileError(f"{path} ends inside the header ({len(data)} bytes).")
    magic, version, n_sims, n_frames, nx, ny, tag = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise BadMagicError(f"{path} is not a trajectory dataset (magic {magic!r}).")
    if version != VERSION:
        raise UnsupportedVersionError(f"{path} has format version {version}; only {VERSION} is supported.")
    if tag not in DTYPE_TAGS:
        raise DatasetFormatError(f"{path} has unknown dtype tag {tag}.")
    dtype = DTYPE_TAGS[tag]
    payload = n_sims * n_frames * nx * ny * dtype.itemsize
    start = HEADER.size
    trailer = start + payload
    end = None
    if len(data) >= trailer + LENGTH.size:
        (meta_len,) = LENGTH.unpack_from(data, trailer)
        end = trailer + LENGTH.size + meta_len
    if end != len(data):
        found = _find_trailer(data, start)
        if found is not None and found != trailer:
            raise DatasetFormatError(
                f"{path}: header dimensions declare {payload} payload bytes but the file holds {found - start}."
            )
        if end is None or end > len(data):
            raise TruncatedFileError(f"{path} ends before the declared content ({len(data)} bytes).")
        raise DatasetFormatError(f"{path}: {len(data) - end} unexpected bytes after the metadata.")
    raw_meta = data[trailer + LENGTH.size:]
    try:
        meta = json.loads(raw_meta.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DatasetFormatError(f"{path}: malformed metadata trailer ({exc}).") from exc
    frames = np.frombuffer(data, dtype=dtype, count=n_sims * n_frames * nx * ny, offset=start)
    frames = frames.reshape(n_sims, n_frames, nx, ny).astype(dtype.newbyteorder("="), copy=True)
    return TrajectoryDataset(frames, meta)
