"""
models.py

Benchmark architectures and the shared autoregressive rollout.

Every model is an ``nn.Module`` with a ``config`` (ModelConfig) and a
``recurrent`` flag:

- non-recurrent (FNO-2d): ``model(window) -> next frame`` where window is
  (batch, nx, ny, T_in) and the result (batch, nx, ny, 1);
- recurrent (F-RNN, RNN, C-RNN): ``model.init_state(window) -> state`` and
  ``model.step(frame, state) -> (next frame, state)``.

Example
-------
>>> cfg = ModelConfig(arch="fno2d", width=32, modes=(16, 16), T_in=20, T_out=30)
>>> count_params(build_model(cfg))
4203617
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import List, Optional, Tuple

import torch
from torch import nn

from .errors import ConfigError, ShapeError
from .grid import NS_DOMAIN, GridCoords
from .spectral_layers import (
    ACTIVATIONS,
    FourierLayer,
    FRNNCell,
    PointwiseWeights,
    RNNCell,
    coordinate_channels,
    init_hidden,
    pointwise_linear,
)
from .tensor_core import check_field

ARCHS = ("fno2d", "frnn", "rnn", "crnn")
DEFAULT_LAYERS = {"fno2d": 4, "frnn": 2, "rnn": 2, "crnn": 4}
DEFAULT_ACTIVATION = {"fno2d": "identity", "frnn": "tanh", "rnn": "tanh", "crnn": "tanh"}


@dataclass
class ModelConfig:
    """
    Architecture hyper-parameters.

    Parameters
    ----------
    arch : {"fno2d", "frnn", "rnn", "crnn"}
    width : int
        Channels of the Fourier layers / hidden size of the grid cells.
    modes : (m1, m2)
        Retained Fourier modes per axis.
    n_layers : int, optional
        Fourier layers (fno2d), stacked cells (frnn, rnn) or RNN layers
        (crnn). Defaults to 4 / 2 / 2 / 4.
    T_in, T_out : int
        Input window and rollout length.
    step : int
        Must be 1.
    activation : str, optional
        Final activation: after the last Fourier layer for fno2d (default
        "identity"), after the last cell for the recurrent archs (default
        "tanh"). Inner layers use ReLU.
    domain : ((x0, x1), (y0, y1))
        Physical extent used for the coordinate channels.
    projection_width : int
        Hidden width of the fno2d projection head.
    grid : (nx, ny)
        Frame size; fixes the dense layers of crnn.
    hidden : int
        crnn RNN hidden size.
    conv_channels : tuple of int
        crnn encoder channel schedule; the last entry repeats when the grid
        needs more stride-2 stages.
    bottleneck : int
        crnn encoder output edge length.
    bias : bool
        Whether pointwise maps carry biases.
    """

    arch: str = "fno2d"
    width: int = 32
    modes: Tuple[int, int] = (16, 16)
    n_layers: Optional[int] = None
    T_in: int = 20
    T_out: int = 30
    step: int = 1
    activation: Optional[str] = None
    domain: Tuple[Tuple[float, float], Tuple[float, float]] = NS_DOMAIN
    projection_width: int = 128
    grid: Tuple[int, int] = (64, 64)
    hidden: int = 256
    conv_channels: Tuple[int, ...] = (16, 32, 64)
    bottleneck: int = 4
    bias: bool = True

    def __post_init__(self):
        if self.arch not in ARCHS:
            raise ConfigError(f"Unknown architecture '{self.arch}'. Choose one of {ARCHS}.")
        self.modes = tuple(int(m) for m in self.modes)
        self.domain = tuple(tuple(float(v) for v in axis) for axis in self.domain)
        self.grid = tuple(int(n) for n in self.grid)
        self.conv_channels = tuple(int(c) for c in self.conv_channels)
        if self.n_layers is None:
            self.n_layers = DEFAULT_LAYERS[self.arch]
        if self.activation is None:
            self.activation = DEFAULT_ACTIVATION[self.arch]
        if self.step != 1:
            raise ConfigError(f"Only step size 1 is supported, got {self.step}.")
        if self.T_in < 1 or self.T_out < 1:
            raise ConfigError(f"T_in and T_out must be at least 1, got {self.T_in} and {self.T_out}.")
        if len(self.modes) != 2 or min(self.modes) < 1:
            raise ConfigError(f"modes must be two positive ints, got {self.modes}.")
        if self.width < 1 or self.n_layers < 1 or self.projection_width < 1 or self.hidden < 1:
            raise ConfigError("width, n_layers, projection_width and hidden must be positive.")
        if self.arch in ("frnn", "rnn") and self.width < 3:
            raise ConfigError(f"Recurrent grid models need width >= 3 for the hidden-state layout, got {self.width}.")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"Unknown activation '{self.activation}'.")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


def _grid_of(field_: torch.Tensor, domain) -> GridCoords:
    return GridCoords(field_.shape[1], field_.shape[2], domain)


class FNO2d(nn.Module):
    """Lifting -> n Fourier layers -> two-layer projection; input is T_in frames plus x, y."""

    recurrent = False

    def __init__(self, config: ModelConfig, dtype=None):
        super().__init__()
        self.config = config
        w, (m1, m2), n = config.width, config.modes, config.n_layers
        self.lifting = PointwiseWeights(config.T_in + 2, w, bias=config.bias, dtype=dtype)
        self.layers = nn.ModuleList(
            FourierLayer(w, w, m1, m2, activation="relu" if i < n - 1 else config.activation,
                         bias=config.bias, dtype=dtype)
            for i in range(n)
        )
        self.projection = nn.ModuleList([
            PointwiseWeights(w, config.projection_width, bias=config.bias, dtype=dtype),
            PointwiseWeights(config.projection_width, 1, bias=config.bias, dtype=dtype),
        ])

    def forward(self, window: torch.Tensor) -> torch.Tensor:
        check_field(window, "window")
        if window.shape[-1] != self.config.T_in:
            raise ShapeError(f"FNO2d expects {self.config.T_in} input frames, got {window.shape[-1]}.")
        grid = _grid_of(window, self.config.domain)
        coords = coordinate_channels(grid, window.shape[0], dtype=window.dtype, device=window.device)
        x = pointwise_linear(torch.cat([window, coords], dim=-1), self.lifting)
        for layer in self.layers:
            x = layer(x)
        x = torch.relu(pointwise_linear(x, self.projection[0]))
        return pointwise_linear(x, self.projection[1])


class FRNN(nn.Module):
    """
    Stacked recurrent cells on the grid.

    With ``spectral=True`` the cells are Fourier recurrent cells; with
    ``spectral=False`` they are plain recurrent cells with pointwise maps (the
    "rnn" architecture). Cell i+1 consumes cell i's output y_t; each keeps
    its own hidden state.
    """

    recurrent = True

    def __init__(self, config: ModelConfig, spectral: bool = True, dtype=None):
        super().__init__()
        self.config = config
        self.spectral = spectral
        w, (m1, m2), n = config.width, config.modes, config.n_layers
        self.lifting = PointwiseWeights(3, w, bias=config.bias, dtype=dtype)
        cells = []
        for i in range(n):
            act = "relu" if i < n - 1 else config.activation
            if spectral:
                cells.append(FRNNCell(w, w, m1, m2, activation=act, bias=config.bias, dtype=dtype))
            else:
                cells.append(RNNCell(w, w, activation=act, bias=config.bias, dtype=dtype))
        self.cells = nn.ModuleList(cells)
        self.projection = PointwiseWeights(w, 1, bias=config.bias, dtype=dtype)

    def init_state(self, window: torch.Tensor) -> List[torch.Tensor]:
        grid = _grid_of(window, self.config.domain)
        h0 = init_hidden(window, self.config.width, grid)
        return [h0 for _ in self.cells]

    def step(self, frame: torch.Tensor, state: List[torch.Tensor]):
        check_field(frame, "frame")
        if frame.shape[-1] != 1:
            raise ShapeError(f"Recurrent step takes one frame, got {frame.shape[-1]} channels.")
        grid = _grid_of(frame, self.config.domain)
        coords = coordinate_channels(grid, frame.shape[0], dtype=frame.dtype, device=frame.device)
        x = pointwise_linear(torch.cat([frame, coords], dim=-1), self.lifting)
        new_state = []
        for cell, h in zip(self.cells, state):
            h, x = cell(x, h)
            new_state.append(h)
        return pointwise_linear(x, self.projection), new_state


def crnn_stages(config: ModelConfig) -> int:
    """Number of stride-2 stages that take the grid down to the bottleneck edge."""
    nx, ny = config.grid
    smallest = min(nx, ny)
    if smallest < config.bottleneck or smallest % config.bottleneck:
        raise ConfigError(f"Grid {nx}x{ny} cannot be reduced to a {config.bottleneck}-point bottleneck.")
    stages = int(round(math.log2(smallest / config.bottleneck)))
    if stages < 1 or config.bottleneck * 2 ** stages != smallest or nx % 2 ** stages or ny % 2 ** stages:
        raise ConfigError(
            f"C-RNN needs grid sides equal to bottleneck ({config.bottleneck}) times a power of two, got {nx}x{ny}."
        )
    return stages


class CRNN(nn.Module):
    """
    Convolutional encoder -> stacked plain RNN on a flat vector -> transposed-convolution decoder.

    The encoder halves the grid with kernel-5 convolutions until the shorter
    side equals ``bottleneck``, then a dense layer maps to ``hidden``. The
    decoder mirrors it back to the frame size.
    """

    recurrent = True

    def __init__(self, config: ModelConfig, dtype=None):
        super().__init__()
        self.config = config
        stages = crnn_stages(config)
        channels = list(config.conv_channels[:stages])
        channels += [channels[-1]] * (stages - len(channels))
        self.channels = channels
        nx, ny = config.grid
        self.bottleneck_shape = (channels[-1], nx // 2 ** stages, ny // 2 ** stages)
        flat = channels[-1] * self.bottleneck_shape[1] * self.bottleneck_shape[2]

        enc, c_in = [], 1
        for c in channels:
            enc += [nn.Conv2d(c_in, c, kernel_size=5, stride=2, padding=2, bias=config.bias), nn.ReLU()]
            c_in = c
        self.encoder = nn.Sequential(*enc)
        self.encoder_dense = nn.Linear(flat, config.hidden, bias=config.bias)

        self.cells = nn.ModuleList(
            RNNCell(config.hidden, config.hidden,
                    activation="relu" if i < config.n_layers - 1 else config.activation, bias=config.bias)
            for i in range(config.n_layers)
        )

        self.decoder_dense = nn.Linear(config.hidden, flat, bias=config.bias)
        dec, outs = [], channels[::-1][1:] + [1]
        for i, (c_in, c_out) in enumerate(zip(channels[::-1], outs)):
            dec.append(nn.ConvTranspose2d(c_in, c_out, kernel_size=5, stride=2, padding=2,
                                          output_padding=1, bias=config.bias))
            if i < len(outs) - 1:
                dec.append(nn.ReLU())
        self.decoder = nn.Sequential(*dec)
        if dtype is not None:
            self.to(dtype)

    def encode(self, frame: torch.Tensor) -> torch.Tensor:
        check_field(frame, "frame")
        if tuple(frame.shape[1:3]) != self.config.grid or frame.shape[-1] != 1:
            raise ShapeError(f"C-RNN built for one {self.config.grid} frame, got {tuple(frame.shape[1:])}.")
        z = self.encoder(frame.permute(0, 3, 1, 2))
        return self.encoder_dense(z.flatten(1))

    def decode(self, z: torch.Tensor) -> torch.Tensor:
        x = self.decoder_dense(z).view(z.shape[0], *self.bottleneck_shape)
        return self.decoder(x).permute(0, 2, 3, 1)

    def init_state(self, window: torch.Tensor) -> List[torch.Tensor]:
        zeros = torch.zeros(window.shape[0], self.config.hidden, dtype=window.dtype, device=window.device)
        return [zeros for _ in self.cells]

    def step(self, frame: torch.Tensor, state: List[torch.Tensor]):
        x = self.encode(frame)
        new_state = []
        for cell, h in zip(self.cells, state):
            h, x = cell(x, h)
            new_state.append(h)
        return self.decode(x), new_state


def build_fno2d(cfg: ModelConfig, dtype=None) -> FNO2d:
    if cfg.arch != "fno2d":
        raise ConfigError(f"build_fno2d needs arch 'fno2d', got '{cfg.arch}'.")
    return FNO2d(cfg, dtype=dtype)


def build_frnn(cfg: ModelConfig, dtype=None) -> FRNN:
    if cfg.arch != "frnn":
        raise ConfigError(f"build_frnn needs arch 'frnn', got '{cfg.arch}'.")
    return FRNN(cfg, spectral=True, dtype=dtype)


def build_rnn(cfg: ModelConfig, dtype=None) -> FRNN:
    if cfg.arch != "rnn":
        raise ConfigError(f"build_rnn needs arch 'rnn', got '{cfg.arch}'.")
    return FRNN(cfg, spectral=False, dtype=dtype)


def build_crnn(cfg: ModelConfig, dtype=None) -> CRNN:
    if cfg.arch != "crnn":
        raise ConfigError(f"build_crnn needs arch 'crnn', got '{cfg.arch}'.")
    return CRNN(cfg, dtype=dtype)


BUILDERS = {
    "fno2d": build_fno2d,
    "frnn": build_frnn,
    "rnn": build_rnn,
    "crnn": build_crnn,
}


def build_model(cfg: ModelConfig, seed: Optional[int] = None, dtype=None) -> nn.Module:
    """Build the architecture named by ``cfg.arch``; *seed* fixes the initial weights."""
    if seed is not None:
        torch.manual_seed(seed)
    return BUILDERS[cfg.arch](cfg, dtype=dtype)


def count_params(model: nn.Module) -> int:
    """Trainable scalars; complex weights are stored as (re, im) pairs and count twice."""
    return sum(p.numel() for p in model.parameters() if p.requires_grad)


def rollout(model: nn.Module, window: torch.Tensor, T_out: int, forcing: Optional[torch.Tensor] = None) -> torch.Tensor:
    """
    Autoregressive prediction of T_out frames with step size 1.

    Parameters
    ----------
    model : nn.Module
        A model as described in the module docstring.
    window : torch.Tensor
        (batch, nx, ny, T_in) input frames.
    T_out : int
        Frames to emit.
    forcing : torch.Tensor, optional
        (batch, nx, ny, >= T_out - 1) frames fed back instead of the model's
        own predictions (teacher forcing).

    Returns
    -------
    torch.Tensor
        (batch, nx, ny, T_out) predictions.

    Notes
    -----
    Non-recurrent models slide the window: predict, drop the oldest frame,
    append the prediction. Recurrent models read the T_in frames one at a
    time; the output after the last one is prediction 1, and each
    prediction is then fed back as the next input.
    """
    T_in = model.config.T_in
    if window.ndim != 4 or window.shape[-1] != T_in:
        raise ShapeError(f"rollout needs a (batch, nx, ny, {T_in}) window, got {tuple(window.shape)}.")
    if T_out < 1:
        raise ConfigError(f"T_out must be at least 1, got {T_out}.")
    if forcing is not None and forcing.shape[-1] < T_out - 1:
        raise ShapeError(f"Teacher forcing needs at least {T_out - 1} frames, got {forcing.shape[-1]}.")

    preds = []
    if not model.recurrent:
        current = window
        for k in range(T_out):
            pred = model(current)
            preds.append(pred)
            if k < T_out - 1:
                fed = pred if forcing is None else forcing[..., k:k + 1]
                current = torch.cat([current[..., 1:], fed], dim=-1)
    else:
        state = model.init_state(window)
        for t in range(T_in):
            pred, state = model.step(window[..., t:t + 1], state)
        preds.append(pred)
        for k in range(1, T_out):
            fed = pred if forcing is None else forcing[..., k - 1:k]
            pred, state = model.step(fed, state)
            preds.append(pred)
    return torch.cat(preds, dim=-1)
