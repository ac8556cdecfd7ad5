"""
tensor_core.py

Field tensors, 2-D real FFTs and the differentiation contract.

A field tensor is a real ``torch.Tensor`` laid out channels-last as
``(batch, nx, ny, channels)``. Its spectrum is the complex tensor returned by
:func:`rfft2`, shaped ``(batch, nx, ny // 2 + 1, channels)``.

Provides:
    - rfft2 / irfft2: forward (unnormalized) and inverse (1/(nx*ny)) transforms.
    - ParamStore: a bare container of named trainable tensors.
    - backward: reverse-mode pass from a scalar loss into a parameter store.
    - finite_diff_check: central-difference audit of an analytic gradient.
    - seed_everything / resolve_dtype: determinism and precision policy.
"""
from __future__ import annotations

import logging
from typing import Callable, Dict

import numpy as np
import torch
from torch import nn

from .errors import ConfigError, GraphStateError, ShapeError

logger = logging.getLogger(__name__)

SPATIAL_DIMS = (1, 2)

DTYPES = {
    "float32": torch.float32,
    "float64": torch.float64,
}


def resolve_dtype(precision: str) -> torch.dtype:
    """Map a precision name ("float32" or "float64") to a torch dtype."""
    try:
        return DTYPES[precision]
    except KeyError:
        raise ConfigError(f"Unknown precision '{precision}'. Choose one of {sorted(DTYPES)}.") from None


def seed_everything(seed: int) -> None:
    """Seed torch and numpy's legacy global RNG and request deterministic kernels."""
    torch.manual_seed(seed)
    np.random.seed(seed % 2**32)
    torch.use_deterministic_algorithms(True, warn_only=True)


def check_field(f: torch.Tensor, name: str = "field") -> None:
    """Raise ShapeError unless *f* is a (batch, nx, ny, channels) tensor with nx, ny >= 2."""
    if not isinstance(f, torch.Tensor):
        raise TypeError(f"{name} must be a torch.Tensor, got {type(f).__name__}.")
    if f.ndim != 4:
        raise ShapeError(
            f"{name} must have shape (batch, nx, ny, channels), got {tuple(f.shape)}."
        )
    if f.shape[1] < 2 or f.shape[2] < 2:
        raise ShapeError(f"{name} needs at least 2 points per spatial axis, got {tuple(f.shape[1:3])}.")


def rfft2(f: torch.Tensor) -> torch.Tensor:
    """
    Unnormalized 2-D real DFT over the spatial axes of a field tensor.

    Parameters
    ----------
    f : torch.Tensor
        Real field of shape (batch, nx, ny, channels).

    Returns
    -------
    torch.Tensor
        Complex spectrum of shape (batch, nx, ny // 2 + 1, channels). The
        Hermitian-redundant half along ``ny`` is dropped.

    Raises
    ------
    ShapeError
        If *f* is not a 4-axis field with at least 2 points per spatial axis.
    ValueError
        If *f* holds NaN or Inf.
    """
    check_field(f)
    if not torch.isfinite(f).all():
        raise ValueError("rfft2 input contains NaN or Inf.")
    return torch.fft.rfft2(f, dim=SPATIAL_DIMS)


def irfft2(s: torch.Tensor, dims) -> torch.Tensor:
    """
    Inverse of :func:`rfft2`, normalized by 1/(nx*ny).

    Parameters
    ----------
    s : torch.Tensor
        Complex spectrum of shape (batch, nx, ny // 2 + 1, channels).
    dims : tuple of int
        Physical grid size (nx, ny).

    Returns
    -------
    torch.Tensor
        Real field of shape (batch, nx, ny, channels).

    Raises
    ------
    ShapeError
        If the spectrum shape is inconsistent with *dims*.
    """
    nx, ny = (int(d) for d in dims)
    if s.ndim != 4 or s.shape[1] != nx or s.shape[2] != ny // 2 + 1:
        raise ShapeError(
            f"Spectrum of shape {tuple(s.shape)} is inconsistent with a {nx}x{ny} grid "
            f"(expected (batch, {nx}, {ny // 2 + 1}, channels))."
        )
    return torch.fft.irfft2(s, s=(nx, ny), dim=SPATIAL_DIMS)


class ParamStore(nn.Module):
    """
    Named trainable tensors with paired gradient buffers.

    Every model in spectralseq is an ``nn.Module`` and can be used wherever a
    ParamStore is expected; this class covers ad-hoc parameter sets.

    Example
    -------
    >>> store = ParamStore(theta=torch.tensor([1.0, 2.0, 3.0]))
    >>> grads = backward((store.theta ** 2).sum(), store)
    >>> grads["theta"]
    tensor([2., 4., 6.])
    """

    def __init__(self, **tensors):
        super().__init__()
        for name, value in tensors.items():
            self.register_parameter(name, nn.Parameter(torch.as_tensor(value).clone()))


def backward(loss: torch.Tensor, store: nn.Module) -> Dict[str, torch.Tensor]:
    """
    Back-propagate a scalar loss and collect dLoss/dtheta for every parameter.

    Gradients accumulate into ``param.grad`` as usual; call
    ``store.zero_grad()`` between passes to reproduce identical gradients.

    Parameters
    ----------
    loss : torch.Tensor
        Scalar output of a recorded forward pass.
    store : nn.Module
        Module owning the parameters.

    Returns
    -------
    dict
        Parameter name -> gradient tensor (zeros for parameters the loss does
        not depend on).

    Raises
    ------
    GraphStateError
        If no forward pass was recorded for *loss* or its graph was already
        consumed by an earlier backward.
    ShapeError
        If *loss* is not a scalar.
    """
    if not isinstance(loss, torch.Tensor) or loss.grad_fn is None:
        raise GraphStateError("backward called before a forward pass was recorded for this loss.")
    if loss.numel() != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {tuple(loss.shape)}.")
    try:
        loss.backward()
    except RuntimeError as exc:
        raise GraphStateError(f"backward failed on the recorded graph: {exc}") from exc
    grads = {}
    for name, p in store.named_parameters():
        if not p.requires_grad:
            continue
        grads[name] = p.grad if p.grad is not None else torch.zeros_like(p)
    return grads


def finite_diff_check(op: Callable[[torch.Tensor], torch.Tensor], point: torch.Tensor, eps: float = 1e-5) -> float:
    """
    Compare the autograd gradient of a scalar op with central differences.

    Parameters
    ----------
    op : callable
        Maps a tensor shaped like *point* to a scalar tensor.
    point : torch.Tensor
        Where to differentiate. Use double precision.
    eps : float, optional
        Central-difference half step (default 1e-5).

    Returns
    -------
    float
        max_i |analytic_i - numeric_i| / (|numeric_i| + 1e-12).

    Raises
    ------
    ConfigError
        If eps <= 0.
    """
    if eps <= 0:
        raise ConfigError(f"Finite-difference step must be positive, got {eps}.")
    x = point.detach().clone().requires_grad_(True)
    out = op(x)
    (analytic,) = torch.autograd.grad(out, x, allow_unused=True)
    if analytic is None:
        analytic = torch.zeros_like(x)
    analytic = analytic.detach().reshape(-1)

    flat = point.detach().clone().reshape(-1)
    numeric = torch.empty_like(flat)
    with torch.no_grad():
        for i in range(flat.numel()):
            orig = flat[i].item()
            flat[i] = orig + eps
            f_plus = float(op(flat.view(point.shape)))
            flat[i] = orig - eps
            f_minus = float(op(flat.view(point.shape)))
            flat[i] = orig
            numeric[i] = (f_plus - f_minus) / (2.0 * eps)

    rel = (analytic - numeric).abs() / (numeric.abs() + 1e-12)
    return float(rel.max())
