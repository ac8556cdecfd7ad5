"""
pde_solvers.py

Ground-truth trajectories for the benchmarks.

Wave equation   u_tt = nu * (u_xx + u_yy) on (-1, 1)^2, periodic, u_t(0) = 0,
                leapfrog in time, Fourier collocation for the Laplacian.
Navier-Stokes   w_t + u . grad w = nu * lap w + f on (0, 1)^2, periodic,
                vorticity form, pseudo-spectral with 2/3 dealiasing and
                Crank-Nicolson on the viscous term.

Initial conditions come from Latin-hypercube-sampled Gaussians (wave) and
Gaussian random fields (Navier-Stokes).
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .datasets import TrajectoryDataset
from .errors import ConfigError, DivergenceError, ShapeError
from .grid import NS_DOMAIN, WAVE_DOMAIN, GridCoords

logger = logging.getLogger(__name__)

GENERATOR = "spectralseq-pde/1"

LHS_DEFAULT_RANGES: Dict[str, Tuple[float, float]] = {
    "a": (10.0, 100.0),
    "b": (-0.5, 0.5),
    "c": (-0.5, 0.5),
}


# ---------------------------------------------------------------------------
#                         Initial conditions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WaveIC:
    """Gaussian bump exp(-a((x - b)^2 + (y - c)^2)) of width a centred at (b, c)."""

    a: float
    b: float = 0.0
    c: float = 0.0

    def __post_init__(self):
        if not self.a > 0:
            raise ConfigError(f"Gaussian width parameter a must be positive, got {self.a}.")


def latin_hypercube(n: int, bounds: Sequence[Tuple[float, float]], seed: Optional[int] = None) -> np.ndarray:
    """
    Latin hypercube design: one point per stratum along every axis.

    Each axis [lo, hi] is cut into n equal strata; every stratum holds
    exactly one sample, drawn uniformly inside it, and the strata are
    paired across axes by independent random permutations.

    Parameters
    ----------
    n : int
        Number of samples (rows).
    bounds : sequence of (lo, hi)
        One interval per factor (column).
    seed : int, optional

    Returns
    -------
    np.ndarray
        (n, len(bounds)) samples.

    Raises
    ------
    ConfigError
        If n < 1, no bounds are given, or an interval is degenerate.
    """
    if n < 1:
        raise ConfigError(f"Need at least one sample, got n={n}.")
    if len(bounds) == 0:
        raise ConfigError("Latin hypercube needs at least one parameter range.")
    lo = np.array([b[0] for b in bounds], dtype=np.float64)
    hi = np.array([b[1] for b in bounds], dtype=np.float64)
    if np.any(~(hi > lo)):
        raise ConfigError(f"Degenerate parameter interval in {list(bounds)}.")
    rng = np.random.default_rng(seed)
    strata = np.column_stack([rng.permutation(n) for _ in range(len(bounds))])
    unit = (strata + rng.random(strata.shape)) / n
    return lo + unit * (hi - lo)


def lhs_sample(n: int, ranges: Optional[Dict[str, Tuple[float, float]]] = None, seed: Optional[int] = None) -> List[WaveIC]:
    """Draw *n* wave initial conditions with a Latin hypercube over (a, b, c)."""
    ranges = dict(LHS_DEFAULT_RANGES, **(ranges or {}))
    samples = latin_hypercube(n, [ranges["a"], ranges["b"], ranges["c"]], seed)
    return [WaveIC(float(a), float(b), float(c)) for a, b, c in samples]


def wave_initial_condition(ic: WaveIC, grid: GridCoords) -> np.ndarray:
    """
    Sample the Gaussian bump on *grid*.

    Example
    -------
    >>> g = GridCoords(4, 4, WAVE_DOMAIN)
    >>> round(float(wave_initial_condition(WaveIC(1.0), g)[0, 2]), 6)   # (x, y) = (-1, 0)
    0.367879
    """
    (x0, x1), (y0, y1) = grid.domain
    if not (x0 <= ic.b <= x1 and y0 <= ic.c <= y1):
        raise ConfigError(f"Gaussian centre ({ic.b}, {ic.c}) lies outside the domain {grid.domain}.")
    X, Y = grid.mesh()
    return np.exp(-ic.a * ((X - ic.b) ** 2 + (Y - ic.c) ** 2))


def gaussian_random_field(grid: GridCoords, alpha: float = 2.5, tau: float = 7.0,
                          sigma: Optional[float] = None, seed: Optional[int] = None) -> np.ndarray:
    """
    Periodic zero-mean random field with spectrum sigma * (|k|^2 + tau^2)^(-alpha/2).

    Parameters
    ----------
    grid : GridCoords
    alpha : float
        Spectral decay exponent; the power spectrum falls as |k|^(-2 alpha).
    tau : float
        Inverse length scale where the decay sets in.
    sigma : float, optional
        Amplitude, default tau^(alpha - 1).
    seed : int, optional

    Returns
    -------
    np.ndarray
        (nx, ny) field with zero mean.
    """
    if not (alpha > 0 and tau > 0):
        raise ConfigError(f"alpha and tau must be positive, got alpha={alpha}, tau={tau}.")
    if sigma is None:
        sigma = tau ** (alpha - 1.0)
    rng = np.random.default_rng(seed)
    noise_h = np.fft.rfft2(rng.standard_normal((grid.nx, grid.ny)))
    KX, KY = grid.rfft_wavenumbers()
    amplitude = sigma * (KX ** 2 + KY ** 2 + tau ** 2) ** (-alpha / 2.0)
    amplitude[0, 0] = 0.0
    field = np.fft.irfft2(noise_h * amplitude, s=(grid.nx, grid.ny))
    field *= math.sqrt(grid.nx * grid.ny)
    return field - field.mean()


# ---------------------------------------------------------------------------
#                              Wave equation
# ---------------------------------------------------------------------------

def spectral_laplacian(u: np.ndarray, grid: GridCoords) -> np.ndarray:
    """Fourier-collocation Laplacian of a periodic (nx, ny) field."""
    KX, KY = grid.rfft_wavenumbers()
    return np.fft.irfft2(-(KX ** 2 + KY ** 2) * np.fft.rfft2(u), s=u.shape)


def spectral_gradient(u: np.ndarray, grid: GridCoords) -> Tuple[np.ndarray, np.ndarray]:
    """(du/dx, du/dy) with the unpaired Nyquist entries zeroed so both stay real."""
    KX, KY = _first_derivative_wavenumbers(grid)
    u_h = np.fft.rfft2(u)
    return (np.fft.irfft2(1j * KX * u_h, s=u.shape),
            np.fft.irfft2(1j * KY * u_h, s=u.shape))


def _first_derivative_wavenumbers(grid: GridCoords):
    KX, KY = grid.rfft_wavenumbers()
    KX, KY = KX.copy(), KY.copy()
    if grid.nx % 2 == 0:
        KX[grid.nx // 2, :] = 0.0
    if grid.ny % 2 == 0:
        KY[:, -1] = 0.0
    return KX, KY


def wave_stable_dt(grid: GridCoords, nu: float = 1.0) -> float:
    """Leapfrog stability limit 2 / sqrt(nu * max|k|^2) for the spectral Laplacian."""
    KX, KY = grid.rfft_wavenumbers()
    return 2.0 / math.sqrt(nu * float(np.max(KX ** 2 + KY ** 2)))


def _leapfrog_step(u_prev, u, dt, grid, nu):
    return 2.0 * u - u_prev + dt * dt * nu * spectral_laplacian(u, grid)


def leapfrog(u_prev: np.ndarray, u: np.ndarray, n_steps: int, dt: float, grid: GridCoords,
             nu: float = 1.0) -> Tuple[np.ndarray, np.ndarray]:
    """
    Advance the pair (u^{n-1}, u^n) by *n_steps* leapfrog steps.

    Returns the final pair. Passing the pair back in swapped order runs the
    scheme backwards in time.
    """
    for _ in range(n_steps):
        u_prev, u = u, _leapfrog_step(u_prev, u, dt, grid, nu)
    return u_prev, u


def wave_energy(u: np.ndarray, u_t: np.ndarray, grid: GridCoords, nu: float = 1.0) -> float:
    """Discrete energy  sum(u_t^2 + nu |grad u|^2) dx dy."""
    ux, uy = spectral_gradient(u, grid)
    dx, dy = grid.spacing
    return float(np.sum(u_t ** 2 + nu * (ux ** 2 + uy ** 2)) * dx * dy)


def solve_wave(u0: np.ndarray, grid: GridCoords, nu: float = 1.0, T: float = 1.0, n_save: int = 50,
               dt: Optional[float] = None, cfl_safety: float = 0.5, return_velocity: bool = False):
    """
    Integrate u_tt = nu lap u from rest with leapfrog time stepping.

    Parameters
    ----------
    u0 : np.ndarray
        Initial displacement on *grid*.
    grid : GridCoords
    nu : float
        Squared wave speed.
    T : float
        Final time.
    n_save : int
        Number of saved frames, uniformly spaced on [0, T] (t = 0 included).
    dt : float, optional
        Requested step, default ``cfl_safety * wave_stable_dt``. It is
        shortened so that every saved time falls on a step.
    return_velocity : bool
        Also return u_t at the saved frames (central differences).

    Returns
    -------
    np.ndarray or (np.ndarray, np.ndarray)
        (n_save, nx, ny) frames, and velocities if requested.

    Raises
    ------
    ConfigError
        If dt reaches the leapfrog stability limit.
    """
    u0 = np.asarray(u0, dtype=np.float64)
    if u0.shape != (grid.nx, grid.ny):
        raise ShapeError(f"u0 has shape {u0.shape}, grid is {grid.nx}x{grid.ny}.")
    if n_save < 2:
        raise ConfigError(f"n_save must be at least 2, got {n_save}.")
    if not (nu > 0 and T > 0):
        raise ConfigError(f"nu and T must be positive, got nu={nu}, T={T}.")
    limit = wave_stable_dt(grid, nu)
    if dt is None:
        dt = cfl_safety * limit
    if dt >= limit:
        raise ConfigError(f"dt={dt:g} violates the leapfrog stability bound dt < {limit:g}.")
    interval = T / (n_save - 1)
    steps_per_save = math.ceil(interval / dt - 1e-12)
    dt = interval / steps_per_save
    logger.debug("solve_wave: dt=%.3e, %d steps per frame, %d frames.", dt, steps_per_save, n_save)

    frames = [u0]
    velocity = [np.zeros_like(u0)]
    u_prev = u0
    u = u0 + 0.5 * dt * dt * nu * spectral_laplacian(u0, grid)
    for n in range(1, steps_per_save * (n_save - 1) + 1):
        u_next = _leapfrog_step(u_prev, u, dt, grid, nu)
        if n % steps_per_save == 0:
            frames.append(u)
            velocity.append((u_next - u_prev) / (2.0 * dt))
        u_prev, u = u, u_next
    frames = np.stack(frames)
    if return_velocity:
        return frames, np.stack(velocity)
    return frames


# ---------------------------------------------------------------------------
#                        Navier-Stokes, vorticity form
# ---------------------------------------------------------------------------

def ns_forcing(grid: GridCoords) -> np.ndarray:
    """f(x, y) = 0.1 (sin(2 pi (x + y)) + cos(2 pi (x + y)))."""
    X, Y = grid.mesh()
    return 0.1 * (np.sin(2.0 * np.pi * (X + Y)) + np.cos(2.0 * np.pi * (X + Y)))


@dataclass
class NSConfig:
    """
    Navier-Stokes settings.

    Parameters
    ----------
    nu : float
        Kinematic viscosity (1e-3 laminar, 1e-5 turbulent).
    forcing : {"sinusoidal", "none"} or np.ndarray
        Forcing field f; an array must match the grid.
    dt_solver : float
        Internal time step (shortened to land on the save times).
    dt_save : float, optional
        Time between saved frames; used when n_save is not given.
    cfl : float
        Largest allowed max|u| dt / dx at the initial state.
    """

    nu: float = 1e-3
    forcing: Union[str, np.ndarray] = "sinusoidal"
    dt_solver: float = 1e-3
    dt_save: Optional[float] = None
    cfl: float = 1.0

    def __post_init__(self):
        if not self.nu > 0:
            raise ConfigError(f"Viscosity must be positive, got {self.nu}.")
        if not self.dt_solver > 0:
            raise ConfigError(f"dt_solver must be positive, got {self.dt_solver}.")
        if isinstance(self.forcing, str) and self.forcing not in ("sinusoidal", "none"):
            raise ConfigError(f"Unknown forcing '{self.forcing}'.")

    def forcing_field(self, grid: GridCoords) -> np.ndarray:
        if isinstance(self.forcing, str):
            return ns_forcing(grid) if self.forcing == "sinusoidal" else np.zeros((grid.nx, grid.ny))
        f = np.asarray(self.forcing, dtype=np.float64)
        if f.shape != (grid.nx, grid.ny):
            raise ShapeError(f"Forcing has shape {f.shape}, grid is {grid.nx}x{grid.ny}.")
        return f


def _streamfunction_velocity(w_h, KX, KY, lap_inv, shape):
    psi_h = w_h * lap_inv
    return (np.fft.irfft2(1j * KY * psi_h, s=shape),
            np.fft.irfft2(-1j * KX * psi_h, s=shape))


def velocity_from_vorticity(w: np.ndarray, grid: GridCoords) -> Tuple[np.ndarray, np.ndarray]:
    """Velocity (u, v) = (psi_y, -psi_x) from lap psi = -w."""
    KX, KY = _first_derivative_wavenumbers(grid)
    K2, _ = _laplacian_symbols(grid)
    lap_inv = np.zeros_like(K2)
    lap_inv[K2 > 0] = 1.0 / K2[K2 > 0]
    return _streamfunction_velocity(np.fft.rfft2(w), KX, KY, lap_inv, w.shape)


def _laplacian_symbols(grid: GridCoords):
    KX, KY = grid.rfft_wavenumbers()
    K2 = KX ** 2 + KY ** 2
    kx_cut = (2.0 / 3.0) * np.max(np.abs(KX))
    ky_cut = (2.0 / 3.0) * np.max(np.abs(KY))
    dealias = (np.abs(KX) <= kx_cut) & (np.abs(KY) <= ky_cut)
    return K2, dealias


def enstrophy(w: np.ndarray):
    """Sum of w^2 over the grid; works on one frame or a stack (last two axes)."""
    return np.sum(np.asarray(w) ** 2, axis=(-2, -1))


def solve_navier_stokes(w0: np.ndarray, cfg: NSConfig, grid: GridCoords, T: float,
                        n_save: Optional[int] = None) -> np.ndarray:
    """
    Evolve vorticity with a pseudo-spectral Crank-Nicolson scheme.

    Each step computes the velocity from the stream function, the advection
    term u . grad w in physical space (dealiased with the 2/3 rule), then

        w_h <- ((1 - dt nu k^2 / 2) w_h - dt (u . grad w)_h + dt f_h) / (1 + dt nu k^2 / 2)

    Parameters
    ----------
    w0 : np.ndarray
        Zero-mean initial vorticity on *grid*.
    cfg : NSConfig
    grid : GridCoords
    T : float
        Final time.
    n_save : int, optional
        Frames saved at T k / n_save, k = 1..n_save (t = 0 excluded).
        Defaults to T / cfg.dt_save.

    Returns
    -------
    np.ndarray
        (n_save, nx, ny) vorticity frames.

    Raises
    ------
    ConfigError
        If w0 is not zero-mean or the initial CFL number exceeds cfg.cfl.
    DivergenceError
        If the state becomes NaN or Inf; ``step`` holds the step index.
    """
    w0 = np.asarray(w0, dtype=np.float64)
    if w0.shape != (grid.nx, grid.ny):
        raise ShapeError(f"w0 has shape {w0.shape}, grid is {grid.nx}x{grid.ny}.")
    if not T > 0:
        raise ConfigError(f"T must be positive, got {T}.")
    if n_save is None:
        if cfg.dt_save is None:
            raise ConfigError("Give n_save or NSConfig.dt_save.")
        n_save = int(round(T / cfg.dt_save))
    if n_save < 1:
        raise ConfigError(f"n_save must be at least 1, got {n_save}.")
    scale = max(1.0, float(np.max(np.abs(w0))))
    if abs(w0.mean()) > 1e-10 * scale:
        raise ConfigError(f"Initial vorticity must have zero mean, got mean {w0.mean():.3e}.")

    interval = T / n_save
    steps_per_save = math.ceil(interval / cfg.dt_solver - 1e-12)
    dt = interval / steps_per_save

    KX, KY = _first_derivative_wavenumbers(grid)
    K2, dealias = _laplacian_symbols(grid)
    lap_inv = np.zeros_like(K2)
    lap_inv[K2 > 0] = 1.0 / K2[K2 > 0]
    shape = w0.shape

    u, v = _streamfunction_velocity(np.fft.rfft2(w0), KX, KY, lap_inv, shape)
    dx, dy = grid.spacing
    courant = dt * max(float(np.max(np.abs(u))) / dx, float(np.max(np.abs(v))) / dy)
    if courant > cfg.cfl:
        raise ConfigError(f"Initial CFL number {courant:.3f} exceeds {cfg.cfl}; reduce dt_solver.")
    logger.debug("solve_navier_stokes: dt=%.3e, %d steps per frame, CFL %.3f.", dt, steps_per_save, courant)

    f_h = np.fft.rfft2(cfg.forcing_field(grid))
    w_h = np.fft.rfft2(w0)
    implicit = 1.0 + 0.5 * dt * cfg.nu * K2
    explicit = 1.0 - 0.5 * dt * cfg.nu * K2
    frames = []
    for step in range(1, steps_per_save * n_save + 1):
        u, v = _streamfunction_velocity(w_h, KX, KY, lap_inv, shape)
        w_x = np.fft.irfft2(1j * KX * w_h, s=shape)
        w_y = np.fft.irfft2(1j * KY * w_h, s=shape)
        advection_h = np.fft.rfft2(u * w_x + v * w_y) * dealias
        w_h = (explicit * w_h - dt * advection_h + dt * f_h) / implicit
        if step % steps_per_save == 0:
            w = np.fft.irfft2(w_h, s=shape)
            if not np.isfinite(w).all():
                raise DivergenceError(f"Navier-Stokes solution blew up at step {step}.", step=step)
            frames.append(w)
    return np.stack(frames)


# ---------------------------------------------------------------------------
#                            Dataset generators
# ---------------------------------------------------------------------------

def _run_wave(ic: WaveIC, grid: GridCoords, nu: float, T: float, n_save: int) -> np.ndarray:
    return solve_wave(wave_initial_condition(ic, grid), grid, nu=nu, T=T, n_save=n_save)


def _run_ns(index: int, seed: int, grid: GridCoords, cfg: NSConfig, T: float, n_save: int,
            alpha: float, tau: float) -> np.ndarray:
    w0 = gaussian_random_field(grid, alpha=alpha, tau=tau, seed=seed + index)
    return solve_navier_stokes(w0, cfg, grid, T, n_save)


def _map(fn, items, workers: int):
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def generate_wave_dataset(n_sims: int, n_grid: int = 64, seed: int = 0, nu: float = 1.0, T: float = 1.0,
                          n_save: int = 50, ranges=None, workers: int = 1) -> TrajectoryDataset:
    """
    Wave trajectories from Latin-hypercube Gaussian initial conditions.

    The design is drawn once from *seed*, so serial and parallel generation
    give the same dataset.
    """
    grid = GridCoords(n_grid, n_grid, WAVE_DOMAIN)
    ics = lhs_sample(n_sims, ranges, seed)
    frames = _map(partial(_run_wave, grid=grid, nu=nu, T=T, n_save=n_save), ics, workers)
    meta = {
        "pde": "wave",
        "nu": nu,
        "domain": [list(a) for a in grid.domain],
        "T": T,
        "dt_save": T / (n_save - 1),
        "seed": seed,
        "generator": GENERATOR,
        "ics": [[ic.a, ic.b, ic.c] for ic in ics],
    }
    logger.info("Generated %d wave simulations on %dx%d.", n_sims, n_grid, n_grid)
    return TrajectoryDataset(np.stack(frames), meta)


def generate_ns_dataset(n_sims: int, n_grid: int = 64, seed: int = 0, nu: float = 1e-3, T: float = 40.0,
                        n_save: int = 40, dt_solver: float = 1e-3, forcing="sinusoidal",
                        alpha: float = 2.5, tau: float = 7.0, workers: int = 1) -> TrajectoryDataset:
    """Navier-Stokes trajectories; simulation i starts from a random field seeded with seed + i."""
    grid = GridCoords(n_grid, n_grid, NS_DOMAIN)
    cfg = NSConfig(nu=nu, forcing=forcing, dt_solver=dt_solver)
    fn = partial(_run_ns, seed=seed, grid=grid, cfg=cfg, T=T, n_save=n_save, alpha=alpha, tau=tau)
    frames = _map(fn, range(n_sims), workers)
    meta = {
        "pde": "navier_stokes",
        "nu": nu,
        "domain": [list(a) for a in grid.domain],
        "T": T,
        "dt_save": T / n_save,
        "dt_solver": dt_solver,
        "seed": seed,
        "generator": GENERATOR,
        "grf": {"alpha": alpha, "tau": tau},
    }
    logger.info("Generated %d Navier-Stokes simulations (nu=%g) on %dx%d.", n_sims, nu, n_grid, n_grid)
    return TrajectoryDataset(np.stack(frames), meta)
