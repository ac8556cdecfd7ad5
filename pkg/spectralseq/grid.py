"""Uniform periodic grids shared by the PDE solvers and the model input channels."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .errors import ConfigError

WAVE_DOMAIN = ((-1.0, 1.0), (-1.0, 1.0))
NS_DOMAIN = ((0.0, 1.0), (0.0, 1.0))


@dataclass(frozen=True)
class GridCoords:
    """
    A uniform nx x ny grid on a periodic rectangle.

    Parameters
    ----------
    nx, ny : int
        Points per axis.
    domain : ((x0, x1), (y0, y1))
        Physical extent. The solver grid excludes the right end point (it is
        the periodic image of the left one).
    """

    nx: int
    ny: int
    domain: Tuple[Tuple[float, float], Tuple[float, float]] = NS_DOMAIN

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2:
            raise ConfigError(f"Grid needs at least 2 points per axis, got {self.nx}x{self.ny}.")
        (x0, x1), (y0, y1) = self.domain
        if not (x1 > x0 and y1 > y0):
            raise ConfigError(f"Degenerate domain {self.domain}.")
        object.__setattr__(self, "domain", ((float(x0), float(x1)), (float(y0), float(y1))))

    @property
    def lengths(self) -> Tuple[float, float]:
        (x0, x1), (y0, y1) = self.domain
        return x1 - x0, y1 - y0

    @property
    def spacing(self) -> Tuple[float, float]:
        lx, ly = self.lengths
        return lx / self.nx, ly / self.ny

    @property
    def x(self) -> np.ndarray:
        (x0, _), _ = self.domain
        return x0 + self.spacing[0] * np.arange(self.nx)

    @property
    def y(self) -> np.ndarray:
        _, (y0, _) = self.domain
        return y0 + self.spacing[1] * np.arange(self.ny)

    def mesh(self) -> Tuple[np.ndarray, np.ndarray]:
        """Periodic solver points as (X, Y), each (nx, ny), 'ij' indexing."""
        return np.meshgrid(self.x, self.y, indexing="ij")

    def channel_mesh(self) -> Tuple[np.ndarray, np.ndarray]:
        """Coordinate channels for the models: both end points included, so they span the domain exactly."""
        (x0, x1), (y0, y1) = self.domain
        return np.meshgrid(np.linspace(x0, x1, self.nx), np.linspace(y0, y1, self.ny), indexing="ij")

    def wavenumbers(self) -> Tuple[np.ndarray, np.ndarray]:
        """Angular wavenumbers (KX, KY) of the full 2-D FFT, 'ij' indexing."""
        dx, dy = self.spacing
        kx = 2.0 * np.pi * np.fft.fftfreq(self.nx, d=dx)
        ky = 2.0 * np.pi * np.fft.fftfreq(self.ny, d=dy)
        return np.meshgrid(kx, ky, indexing="ij")

    def rfft_wavenumbers(self) -> Tuple[np.ndarray, np.ndarray]:
        """Angular wavenumbers matching ``np.fft.rfft2`` output, each (nx, ny // 2 + 1)."""
        dx, dy = self.spacing
        kx = 2.0 * np.pi * np.fft.fftfreq(self.nx, d=dx)
        ky = 2.0 * np.pi * np.fft.rfftfreq(self.ny, d=dy)
        return np.meshgrid(kx, ky, indexing="ij")

    def subsample(self, step: int) -> "GridCoords":
        if step < 1 or self.nx % step or self.ny % step:
            raise ConfigError(f"Cannot subsample a {self.nx}x{self.ny} grid by {step}.")
        return GridCoords(self.nx // step, self.ny // step, self.domain)
