"""
spectral_layers.py

The cell and layer primitives the models are assembled from:

    fourier_layer    y = act(F^-1(R F(x)) + W x)
    rnn_cell_step    h_t = Wx x_t + Wh h_{t-1};  y_t = act(h_t)
    frnn_cell_step   h_t = F^-1(Rx F(x_t)) + Wx x_t + F^-1(Rh F(h_{t-1})) + Wh h_{t-1};  y_t = act(h_t)

Both recurrent steps carry the pre-activation h_t forward, not act(h_t).
Functions take weights explicitly; the nn.Module wrappers below own them.
"""
from __future__ import annotations

from typing import Callable, Tuple

import torch
from torch import nn

from .errors import ConfigError, ShapeError
from .grid import GridCoords
from .tensor_core import check_field, irfft2, rfft2

ACTIVATIONS = {
    "relu": torch.relu,
    "tanh": torch.tanh,
    "identity": lambda t: t,
}


def get_activation(name: str) -> Callable[[torch.Tensor], torch.Tensor]:
    try:
        return ACTIVATIONS[name]
    except KeyError:
        raise ConfigError(f"Unknown activation '{name}'. Choose one of {sorted(ACTIVATIONS)}.") from None


class SpectralWeights(nn.Module):
    """
    Complex weights R for the retained Fourier modes.

    Two blocks of shape (in_channels, out_channels, m1, m2): ``pos`` acts on
    rows kx = 0..m1-1 and ``neg`` on rows kx = -m1..-1 of the half spectrum.
    Each block is stored as a real tensor with a trailing (re, im) axis, so
    every complex weight counts as two trainable scalars.
    """

    def __init__(self, in_channels: int, out_channels: int, m1: int, m2: int, dtype=None):
        super().__init__()
        if min(in_channels, out_channels, m1, m2) < 1:
            raise ConfigError(
                f"SpectralWeights needs positive sizes, got in={in_channels}, out={out_channels}, modes=({m1}, {m2})."
            )
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.m1 = m1
        self.m2 = m2
        scale = 1.0 / (in_channels * out_channels)
        shape = (in_channels, out_channels, m1, m2, 2)
        self.pos = nn.Parameter(scale * torch.rand(shape, dtype=dtype))
        self.neg = nn.Parameter(scale * torch.rand(shape, dtype=dtype))

    def blocks(self) -> Tuple[torch.Tensor, torch.Tensor]:
        return torch.view_as_complex(self.pos), torch.view_as_complex(self.neg)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return spectral_conv(x, self)


class PointwiseWeights(nn.Module):
    """Per-grid-point affine map over the channel (last) axis: x @ W + b."""

    def __init__(self, in_channels: int, out_channels: int, bias: bool = True, dtype=None):
        super().__init__()
        if in_channels < 1 or out_channels < 1:
            raise ConfigError(f"PointwiseWeights needs positive widths, got {in_channels} -> {out_channels}.")
        self.in_channels = in_channels
        self.out_channels = out_channels
        bound = in_channels ** -0.5
        self.weight = nn.Parameter(torch.empty(in_channels, out_channels, dtype=dtype).uniform_(-bound, bound))
        if bias:
            self.bias = nn.Parameter(torch.empty(out_channels, dtype=dtype).uniform_(-bound, bound))
        else:
            self.register_parameter("bias", None)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return pointwise_linear(x, self)


def spectral_conv(x: torch.Tensor, R: SpectralWeights) -> torch.Tensor:
    """
    F^-1(R F(x)): multiply the retained low modes by R, zero the rest.

    Parameters
    ----------
    x : torch.Tensor
        Field of shape (batch, nx, ny, R.in_channels).
    R : SpectralWeights

    Returns
    -------
    torch.Tensor
        Field of shape (batch, nx, ny, R.out_channels).

    Raises
    ------
    ShapeError
        On a channel mismatch.
    ConfigError
        If m1 > nx // 2 or m2 > ny // 2 + 1.
    """
    check_field(x, "spectral_conv input")
    batch, nx, ny, channels = x.shape
    if channels != R.in_channels:
        raise ShapeError(f"spectral_conv expects {R.in_channels} input channels, got {channels}.")
    if R.m1 > nx // 2 or R.m2 > ny // 2 + 1:
        raise ConfigError(
            f"Modes ({R.m1}, {R.m2}) exceed what a {nx}x{ny} grid resolves "
            f"(at most ({nx // 2}, {ny // 2 + 1}))."
        )
    m1, m2 = R.m1, R.m2
    x_ft = rfft2(x)
    pos, neg = R.blocks()
    out_ft = torch.zeros(batch, nx, ny // 2 + 1, R.out_channels, dtype=x_ft.dtype, device=x.device)
    out_ft[:, :m1, :m2, :] = torch.einsum("bxyi,ioxy->bxyo", x_ft[:, :m1, :m2, :], pos)
    out_ft[:, -m1:, :m2, :] = torch.einsum("bxyi,ioxy->bxyo", x_ft[:, -m1:, :m2, :], neg)
    return irfft2(out_ft, (nx, ny))


def pointwise_linear(x: torch.Tensor, W: PointwiseWeights) -> torch.Tensor:
    """Apply W at every grid point. Works on any tensor whose last axis is channels."""
    if x.shape[-1] != W.in_channels:
        raise ShapeError(f"pointwise_linear expects {W.in_channels} channels, got {x.shape[-1]}.")
    y = torch.matmul(x, W.weight)
    if W.bias is not None:
        y = y + W.bias
    return y


def fourier_layer(x: torch.Tensor, R: SpectralWeights, W: PointwiseWeights, activation: str = "relu") -> torch.Tensor:
    act = get_activation(activation)
    return act(spectral_conv(x, R) + pointwise_linear(x, W))


def _check_hidden(x_t: torch.Tensor, h_prev: torch.Tensor, Wh: PointwiseWeights) -> None:
    if h_prev.shape[:-1] != x_t.shape[:-1]:
        raise ShapeError(
            f"Hidden state {tuple(h_prev.shape)} does not match input {tuple(x_t.shape)} outside the channel axis."
        )
    if h_prev.shape[-1] != Wh.in_channels:
        raise ShapeError(f"Hidden state has {h_prev.shape[-1]} channels, Wh expects {Wh.in_channels}.")


def rnn_cell_step(x_t, h_prev, Wx: PointwiseWeights, Wh: PointwiseWeights, activation: str = "tanh"):
    """
    One step of the plain recurrent cell.

    Returns
    -------
    (h_t, y_t)
        h_t = Wx x_t + Wh h_prev (pre-activation, fed to the next step) and
        y_t = activation(h_t).
    """
    _check_hidden(x_t, h_prev, Wh)
    if Wx.out_channels != Wh.out_channels:
        raise ShapeError(f"Wx maps to {Wx.out_channels} channels but Wh to {Wh.out_channels}.")
    h_t = pointwise_linear(x_t, Wx) + pointwise_linear(h_prev, Wh)
    return h_t, get_activation(activation)(h_t)


def frnn_cell_step(x_t, h_prev, Rx: SpectralWeights, Rh: SpectralWeights,
                   Wx: PointwiseWeights, Wh: PointwiseWeights, activation: str = "tanh"):
    """
    One step of the Fourier recurrent cell.

    Returns
    -------
    (h_t, y_t)
        h_t = F^-1(Rx F(x_t)) + Wx x_t + F^-1(Rh F(h_prev)) + Wh h_prev and
        y_t = activation(h_t). h_t is stored pre-activation.

    Raises
    ------
    ShapeError
        If x_t and h_prev differ in batch or grid, or channels mismatch.
    ConfigError
        If the mode counts exceed the grid.
    """
    check_field(x_t, "frnn input")
    _check_hidden(x_t, h_prev, Wh)
    h_t = spectral_conv(x_t, Rx) + pointwise_linear(x_t, Wx) + spectral_conv(h_prev, Rh) + pointwise_linear(h_prev, Wh)
    return h_t, get_activation(activation)(h_t)


def coordinate_channels(grid: GridCoords, batch: int, dtype=None, device=None) -> torch.Tensor:
    """(batch, nx, ny, 2) tensor holding the x and y coordinate grids."""
    gx, gy = grid.channel_mesh()
    coords = torch.stack(
        [torch.as_tensor(gx, dtype=dtype, device=device), torch.as_tensor(gy, dtype=dtype, device=device)],
        dim=-1,
    )
    return coords.unsqueeze(0).expand(batch, -1, -1, -1)


def init_hidden(u_window: torch.Tensor, hidden_channels: int, grid: GridCoords) -> torch.Tensor:
    """
    Initial hidden state: the first frame repeated, then the coordinate grids.

    Parameters
    ----------
    u_window : torch.Tensor
        Input frames, shape (batch, nx, ny, T_in).
    hidden_channels : int
        Must be >= 3.
    grid : GridCoords
        Grid of the input; its domain sets the coordinate values.

    Returns
    -------
    torch.Tensor
        (batch, nx, ny, hidden_channels): channels [0, hidden_channels - 2)
        hold frame 0, the last two hold x and y.
    """
    if hidden_channels < 3:
        raise ConfigError(f"hidden_channels must be at least 3 (one field copy plus x and y), got {hidden_channels}.")
    check_field(u_window, "u_window")
    batch, nx, ny, _ = u_window.shape
    if (grid.nx, grid.ny) != (nx, ny):
        raise ShapeError(f"Grid {grid.nx}x{grid.ny} does not match the window's {nx}x{ny}.")
    copies = u_window[..., :1].expand(-1, -1, -1, hidden_channels - 2)
    coords = coordinate_channels(grid, batch, dtype=u_window.dtype, device=u_window.device)
    return torch.cat([copies, coords], dim=-1)


class FourierLayer(nn.Module):
    def __init__(self, in_channels, out_channels, m1, m2, activation="relu", bias=True, dtype=None):
        super().__init__()
        get_activation(activation)
        self.activation = activation
        self.spectral = SpectralWeights(in_channels, out_channels, m1, m2, dtype=dtype)
        self.pointwise = PointwiseWeights(in_channels, out_channels, bias=bias, dtype=dtype)

    def forward(self, x):
        return fourier_layer(x, self.spectral, self.pointwise, self.activation)


class RNNCell(nn.Module):
    """Plain recurrent cell holding Wx and Wh; ``forward(x, h) -> (h_t, y_t)``."""

    def __init__(self, in_channels, hidden_channels, activation="tanh", bias=True, dtype=None):
        super().__init__()
        get_activation(activation)
        self.activation = activation
        self.hidden_channels = hidden_channels
        self.wx = PointwiseWeights(in_channels, hidden_channels, bias=bias, dtype=dtype)
        self.wh = PointwiseWeights(hidden_channels, hidden_channels, bias=bias, dtype=dtype)

    def forward(self, x_t, h_prev):
        return rnn_cell_step(x_t, h_prev, self.wx, self.wh, self.activation)


class FRNNCell(nn.Module):
    """Fourier recurrent cell holding Rx, Rh, Wx, Wh; ``forward(x, h) -> (h_t, y_t)``."""

    def __init__(self, in_channels, hidden_channels, m1, m2, activation="tanh", bias=True, dtype=None):
        super().__init__()
        get_activation(activation)
        self.activation = activation
        self.hidden_channels = hidden_channels
        self.wx = PointwiseWeights(in_channels, hidden_channels, bias=bias, dtype=dtype)
        self.wh = PointwiseWeights(hidden_channels, hidden_channels, bias=bias, dtype=dtype)
        self.rx = SpectralWeights(in_channels, hidden_channels, m1, m2, dtype=dtype)
        self.rh = SpectralWeights(hidden_channels, hidden_channels, m1, m2, dtype=dtype)

    def forward(self, x_t, h_prev):
        return frnn_cell_step(x_t, h_prev, self.rx, self.rh, self.wx, self.wh, self.activation)
