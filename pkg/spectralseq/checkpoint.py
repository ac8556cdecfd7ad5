"""
checkpoint.py

Model checkpoints: named little-endian tensors plus a JSON header.

Layout::

    9s   magic b"FRNNCKPT\\x01"
    u64  header length, then UTF-8 JSON {"config", "epoch", "adam_step", "meta"}
    u32  entry count
    per entry:
        u16 name length, name (UTF-8)
        u8  dtype tag (1 = float32, 2 = float64)
        u8  ndim, then ndim x u64 shape
        raw little-endian row-major scalars

Entry names are ``model.<param>``, ``adam.<param>.exp_avg``,
``adam.<param>.exp_avg_sq``, ``normalizer.mean`` and ``normalizer.std``.
"""
from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Union

import numpy as np
import torch
from torch import nn

from .datasets import DTYPE_TAGS, TAG_OF
from .errors import BadMagicError, DatasetFormatError, TruncatedFileError, UnsupportedVersionError
from .models import ModelConfig, build_model

logger = logging.getLogger(__name__)

MAGIC = b"FRNNCKPT"
VERSION = 1
U8, U16, U32, U64 = (struct.Struct(f"<{c}") for c in "BHIQ")


@dataclass
class Checkpoint:
    config: ModelConfig
    tensors: Dict[str, np.ndarray]
    epoch: Optional[int] = None
    adam_step: Optional[int] = None
    meta: dict = field(default_factory=dict)

    def _section(self, prefix: str) -> Dict[str, np.ndarray]:
        return {k[len(prefix):]: v for k, v in self.tensors.items() if k.startswith(prefix)}

    def model_state(self) -> Dict[str, torch.Tensor]:
        return {k: torch.from_numpy(v.copy()) for k, v in self._section("model.").items()}

    def build_model(self, dtype=None) -> nn.Module:
        """Rebuild the saved model; *dtype* defaults to the stored precision."""
        state = self.model_state()
        if dtype is None and state:
            dtype = next(iter(state.values())).dtype
        model = build_model(self.config, dtype=dtype)
        model.load_state_dict(state)
        return model

    @property
    def normalizer_stats(self):
        """(mean, std) arrays, or None if the checkpoint has no normalizer."""
        if "normalizer.mean" not in self.tensors:
            return None
        return self.tensors["normalizer.mean"], self.tensors["normalizer.std"]

    def restore_optimizer(self, model: nn.Module, optimizer: torch.optim.Adam) -> torch.optim.Adam:
        """Load saved Adam moments and step count into *optimizer* (built over *model*)."""
        if self.adam_step is None:
            return optimizer
        adam = self._section("adam.")
        for name, p in model.named_parameters():
            if not p.requires_grad or f"{name}.exp_avg" not in adam:
                continue
            optimizer.state[p] = {
                "step": torch.tensor(float(self.adam_step)),
                "exp_avg": torch.as_tensor(adam[f"{name}.exp_avg"], dtype=p.dtype).clone(),
                "exp_avg_sq": torch.as_tensor(adam[f"{name}.exp_avg_sq"], dtype=p.dtype).clone(),
            }
        return optimizer


def _as_array(t) -> np.ndarray:
    arr = t.detach().cpu().numpy() if isinstance(t, torch.Tensor) else np.asarray(t)
    if arr.dtype not in (np.float32, np.float64):
        arr = arr.astype(np.float64)
    return np.ascontiguousarray(arr.astype(arr.dtype.newbyteorder("<"), copy=False))


def save_checkpoint(path: Union[str, Path], model: nn.Module, epoch: Optional[int] = None,
                    optimizer: Optional[torch.optim.Adam] = None, normalizer=None,
                    meta: Optional[dict] = None) -> Path:
    """
    Write *model* (and optionally Adam state and the normalizer) to *path*.

    Returns
    -------
    Path
        The written file.
    """
    entries = {f"model.{k}": _as_array(v) for k, v in model.state_dict().items()}
    adam_step = None
    if optimizer is not None:
        for name, p in model.named_parameters():
            state = optimizer.state.get(p)
            if not state:
                continue
            adam_step = int(float(state["step"]))
            entries[f"adam.{name}.exp_avg"] = _as_array(state["exp_avg"])
            entries[f"adam.{name}.exp_avg_sq"] = _as_array(state["exp_avg_sq"])
    if normalizer is not None:
        entries["normalizer.mean"] = _as_array(normalizer.mean)
        entries["normalizer.std"] = _as_array(normalizer.std)

    header = json.dumps(
        {"config": model.config.to_dict(), "epoch": epoch, "adam_step": adam_step, "meta": meta or {}},
        sort_keys=True,
    ).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(MAGIC + U8.pack(VERSION))
        f.write(U64.pack(len(header)))
        f.write(header)
        f.write(U32.pack(len(entries)))
        for name, arr in entries.items():
            raw_name = name.encode("utf-8")
            f.write(U16.pack(len(raw_name)) + raw_name)
            f.write(U8.pack(TAG_OF[arr.dtype]) + U8.pack(arr.ndim))
            f.write(b"".join(U64.pack(n) for n in arr.shape))
            f.write(arr.tobytes(order="C"))
    logger.info("Saved checkpoint %s (%d entries, epoch %s).", path, len(entries), epoch)
    return path


class _Reader:
    def __init__(self, data: bytes, path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedFileError(f"{self.path} ends at byte {len(self.data)}, {self.pos + n} needed.")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, s: struct.Struct) -> int:
        return s.unpack(self.take(s.size))[0]


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    """
    Read a checkpoint written by :func:`save_checkpoint`.

    Raises
    ------
    BadMagicError, UnsupportedVersionError, TruncatedFileError, DatasetFormatError
        On a damaged or foreign file.
    """
    r = _Reader(Path(path).read_bytes(), path)
    if len(r.data) < len(MAGIC) and MAGIC.startswith(r.data):
        raise TruncatedFileError(f"{path} ends inside the magic bytes.")
    if r.data[: len(MAGIC)] != MAGIC:
        raise BadMagicError(f"{path} is not a checkpoint.")
    r.take(len(MAGIC))
    version = r.unpack(U8)
    if version != VERSION:
        raise UnsupportedVersionError(f"{path} has checkpoint version {version}; only {VERSION} is supported.")
    try:
        header = json.loads(r.take(r.unpack(U64)).decode("utf-8"))
        config = ModelConfig.from_dict(header["config"])
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise DatasetFormatError(f"{path}: malformed checkpoint header ({exc}).") from exc

    tensors = {}
    for _ in range(r.unpack(U32)):
        name = r.take(r.unpack(U16)).decode("utf-8")
        tag = r.unpack(U8)
        if tag not in DTYPE_TAGS:
            raise DatasetFormatError(f"{path}: entry '{name}' has unknown dtype tag {tag}.")
        dtype = DTYPE_TAGS[tag]
        shape = tuple(r.unpack(U64) for _ in range(r.unpack(U8)))
        count = int(np.prod(shape, dtype=np.int64))
        raw = r.take(count * dtype.itemsize)
        tensors[name] = np.frombuffer(raw, dtype=dtype).reshape(shape).astype(dtype.newbyteorder("="))
    if r.pos != len(r.data):
        raise DatasetFormatError(f"{path}: {len(r.data) - r.pos} unexpected trailing bytes.")
    return Checkpoint(config, tensors, header.get("epoch"), header.get("adam_step"), header.get("meta", {}))
