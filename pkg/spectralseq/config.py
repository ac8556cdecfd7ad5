"""
config.py

Benchmark cases, run profiles and configuration precedence.

Precedence, lowest first: built-in defaults, the ``--profile`` table, a
JSON file given with ``--config``, explicit command-line flags.
"""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Dict, Optional, Tuple

from .errors import ConfigError
from .grid import NS_DOMAIN, WAVE_DOMAIN

DATA_DIR_ENV = "SPECTRALSEQ_DATA_DIR"
DEFAULT_NOISE_LEVELS = (0.0, 0.05, 0.1, 0.25)
ARCH_ALIASES = {"fno": "fno2d", "fno2d": "fno2d", "frnn": "frnn", "rnn": "rnn", "crnn": "crnn"}


@dataclass(frozen=True)
class CaseSpec:
    """One benchmark problem: which PDE, where, and how the frames split into T_in / T_out."""

    name: str
    pde: str
    domain: Tuple[Tuple[float, float], Tuple[float, float]]
    T_in: int
    T_out: int
    n_frames: int
    T: float
    nu: float
    dt_solver: Optional[float] = None


CASES: Dict[str, CaseSpec] = {
    "wave": CaseSpec("wave", "wave", WAVE_DOMAIN, T_in=20, T_out=30, n_frames=50, T=1.0, nu=1.0),
    "ns_laminar": CaseSpec("ns_laminar", "navier_stokes", NS_DOMAIN, T_in=20, T_out=20, n_frames=40,
                           T=40.0, nu=1e-3, dt_solver=1e-3),
    "ns_turbulent": CaseSpec("ns_turbulent", "navier_stokes", NS_DOMAIN, T_in=10, T_out=10, n_frames=20,
                             T=20.0, nu=1e-5, dt_solver=5e-4),
}


def get_case(name: str) -> CaseSpec:
    try:
        return CASES[name]
    except KeyError:
        raise ConfigError(f"Unknown case '{name}'. Choose one of {sorted(CASES)}.") from None


def normalize_arch(name: str) -> str:
    try:
        return ARCH_ALIASES[name.lower()]
    except KeyError:
        raise ConfigError(f"Unknown architecture '{name}'. Choose one of {sorted(ARCH_ALIASES)}.") from None


@dataclass(frozen=True)
class Profile:
    grid: int
    subsample: int
    n_train: int
    n_test: int
    width: int
    modes: int
    epochs: int
    batch_size: int


PROFILES: Dict[str, Profile] = {
    "desk": Profile(grid=64, subsample=2, n_train=100, n_test=20, width=16, modes=8, epochs=200, batch_size=10),
    "paper": Profile(grid=64, subsample=1, n_train=800, n_test=200, width=32, modes=16, epochs=1000, batch_size=50),
}

DEFAULTS = {
    "case": "wave",
    "archs": ["crnn", "fno2d", "frnn"],
    "noise_levels": list(DEFAULT_NOISE_LEVELS),
    "seed": 0,
    "lr": 1e-3,
    "gamma": 0.9,
    "step_size": 100,
    "precision": "float32",
    "teacher_forcing": False,
    "resample_noise": False,
    "normalization": "pointwise",
    "train_with_noise": False,
    "checkpoint_every": 0,
    "parallel": 1,
    "workers": 1,
    "profile": "desk",
}


def _load_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as f:
            data = json.load(f)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"Config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"Config file {path} must hold a JSON object.")
    return data


def resolve(profile: Optional[str] = None, config_path=None, overrides: Optional[dict] = None) -> dict:
    """
    Merge defaults < profile < JSON file < overrides into one flat dict.

    ``None`` values in *overrides* mean "flag not given" and are skipped.

    Raises
    ------
    ConfigError
        On an unknown profile or a key the JSON file should not contain.
    """
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    file_values = _load_json(config_path) if config_path else {}
    name = overrides.get("profile") or file_values.get("profile") or profile or DEFAULTS["profile"]
    if name not in PROFILES:
        raise ConfigError(f"Unknown profile '{name}'. Choose one of {sorted(PROFILES)}.")

    known = set(DEFAULTS) | {f.name for f in fields(Profile)} | {"n_sims", "dataset", "out", "arch", "noise"}
    unknown = set(file_values) - known
    if unknown:
        raise ConfigError(f"Unknown keys in {config_path}: {sorted(unknown)}.")

    resolved = dict(DEFAULTS)
    resolved.update(asdict(PROFILES[name]))
    resolved.update(file_values)
    resolved.update(overrides)
    resolved["profile"] = name
    resolved["archs"] = [normalize_arch(a) for a in resolved["archs"]]
    if "arch" in resolved:
        resolved["arch"] = normalize_arch(resolved["arch"])
    resolved.setdefault("n_sims", resolved["n_train"] + resolved["n_test"])
    get_case(resolved["case"])
    if any(n < 0 for n in resolved["noise_levels"]):
        raise ConfigError(f"Noise levels must be >= 0, got {resolved['noise_levels']}.")
    return resolved


def data_dir() -> Path:
    return Path(os.environ.get(DATA_DIR_ENV, "data"))


def default_dataset_path(case: str, grid: int, n_sims: int, seed: int) -> Path:
    """Where an auto-generated dataset for these settings lives."""
    return data_dir() / f"{case}_g{grid}_n{n_sims}_s{seed}.frnn"


@dataclass
class BenchmarkSpec:
    """
    One noise sweep.

    Every arch in ``archs`` is trained on ``case`` and evaluated at every
    level in ``noise_levels``. With ``train_with_noise`` each arch is
    retrained once per level with that level applied to training data.
    """

    case: str = "wave"
    archs: Tuple[str, ...] = ("crnn", "fno2d", "frnn")
    noise_levels: Tuple[float, ...] = DEFAULT_NOISE_LEVELS
    grid: int = 64
    subsample: int = 2
    n_train: int = 100
    n_test: int = 20
    epochs: int = 200
    width: int = 16
    modes: int = 8
    batch_size: int = 10
    lr: float = 1e-3
    gamma: float = 0.9
    step_size: int = 100
    seed: int = 0
    precision: str = "float32"
    train_with_noise: bool = False
    parallel: int = 1
    workers: int = 1
    dataset: Optional[str] = None

    def __post_init__(self):
        get_case(self.case)
        self.archs = tuple(normalize_arch(a) for a in self.archs)
        self.noise_levels = tuple(float(n) for n in self.noise_levels)
        if not self.archs:
            raise ConfigError("A benchmark needs at least one architecture.")
        if any(n < 0 for n in self.noise_levels) or not self.noise_levels:
            raise ConfigError(f"Noise levels must be a nonempty list of values >= 0, got {self.noise_levels}.")
        if self.parallel < 1:
            raise ConfigError(f"parallel must be >= 1, got {self.parallel}.")

    @classmethod
    def from_resolved(cls, resolved: dict) -> "BenchmarkSpec":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in resolved.items() if k in names})

    @property
    def n_sims(self) -> int:
        return self.n_train + self.n_test

    def to_dict(self) -> dict:
        return asdict(self)
