"""Experiment configuration: TOML recipes plus command-line overrides.

A recipe is a flat TOML table whose keys are :class:`ExperimentConfig` field
names. Angles are given in degrees, SNRs in dB.
"""
import dataclasses
import sys
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path
from typing import Optional, Tuple

import numpy as np

from .._validation import is_power_of_two
from ..exceptions import ConfigurationError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

MODES = ("su", "mu", "noise-diagnostics", "codebook", "beampattern")

SU_METHODS = (
    "unquantized",
    "onebit",
    "sigmadelta",
    "sigmadelta-fixed-c",
    "sigmadelta-nosteer",
    "sigmadelta-c-step1",
)
MU_METHODS = ("unquantized", "onebit", "sigmadelta", "sigmadelta-fixed-c")


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str = "su"
    description: str = ""
    snr_db: Tuple[float, ...] = (0.0,)
    trials: int = 100
    seed: int = 0
    jobs: int = 1
    methods: Tuple[str, ...] = ("unquantized", "sigmadelta")
    # geometry
    n_bs: int = 128
    n_ue: int = 32
    d_bs: float = 0.125
    # pilots
    t1: int = 10
    t2: int = 1
    t: int = 1
    # paths and users
    n_paths: int = 1
    n_users: int = 8
    paths_per_user: int = 1
    # channel sampler
    aoa_sector_deg: Tuple[float, float] = (-10.0, 10.0)
    aod_sector_deg: Tuple[float, float] = (-75.0, 75.0)
    min_aoa_spacing_deg: float = 20.0
    min_aod_spacing_cos: float = 0.1
    gain_model: str = "unit_modulus"
    tau: float = 0.5
    on_grid_aoa: bool = False
    on_grid_aod: bool = True
    noiseless: bool = False
    # grids
    aoa_step_deg: float = 1.0
    n_aod_grid: int = 128
    # ablations
    fixed_clip: float = 1.0
    # diagnostics
    snapshots: int = 10000
    steering_deg: Tuple[float, ...] = (0.0,)
    aoa_deg: float = 10.0
    stages: Tuple[int, ...] = (1, 2)
    out: Optional[str] = field(default=None, compare=False)

    def __post_init__(self):
        for name in ("snr_db", "methods", "aoa_sector_deg", "aod_sector_deg", "steering_deg", "stages"):
            value = getattr(self, name)
            if isinstance(value, (str, int, float)):
                value = (value,)
            object.__setattr__(self, name, tuple(value))
        self.validate()

    def validate(self):
        def bad(name, why):
            raise ConfigurationError(f"invalid config field {name!r}: {why}")

        if self.mode not in MODES:
            bad("mode", f"{self.mode!r} is not one of {MODES}")
        for name in ("trials", "jobs", "n_bs", "n_ue", "t1", "t2", "t", "n_paths",
                     "n_users", "paths_per_user", "snapshots", "n_aod_grid"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int) or v < 1:
                bad(name, f"must be a positive integer, got {v!r}")
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or self.seed < 0:
            bad("seed", f"must be a non-negative integer, got {self.seed!r}")
        if not self.snr_db:
            bad("snr_db", "must not be empty")
        if not all(np.isfinite(float(s)) for s in self.snr_db):
            bad("snr_db", "values must be finite")
        if not is_power_of_two(self.n_aod_grid):
            bad("n_aod_grid", f"must be a power of two, got {self.n_aod_grid}")
        if self.n_aod_grid < self.n_ue:
            bad("n_aod_grid", "must be at least n_ue")
        if self.d_bs <= 0:
            bad("d_bs", "must be positive")
        for name in ("aoa_sector_deg", "aod_sector_deg"):
            sec = getattr(self, name)
            if len(sec) != 2 or not (-90.0 < sec[0] <= sec[1] < 90.0):
                bad(name, f"must be [lo, hi] with -90 < lo <= hi < 90, got {list(sec)}")
        if self.min_aoa_spacing_deg < 0 or self.min_aod_spacing_cos < 0 or self.tau < 0:
            bad("min_aoa_spacing_deg/min_aod_spacing_cos/tau", "must be non-negative")
        if self.gain_model not in ("unit_modulus", "truncated_gaussian"):
            bad("gain_model", f"unknown model {self.gain_model!r}")
        if self.fixed_clip <= 0:
            bad("fixed_clip", "must be positive")
        if self.aoa_step_deg <= 0 or not np.isclose(180.0 / self.aoa_step_deg,
                                                     round(180.0 / self.aoa_step_deg)):
            bad("aoa_step_deg", "must divide 180")
        allowed = MU_METHODS if self.mode == "mu" else SU_METHODS
        if not self.methods:
            bad("methods", "must not be empty")
        for m in self.methods:
            if m not in allowed:
                bad("methods", f"{m!r} is not available in mode {self.mode!r}; choose from {allowed}")
        if len(set(self.methods)) != len(self.methods):
            bad("methods", "duplicate entries")
        if any(abs(s) > 90 for s in self.steering_deg):
            bad("steering_deg", "must lie in [-90, 90]")
        if not -90 < self.aoa_deg < 90:
            bad("aoa_deg", "must lie in (-90, 90)")
        n_stages = int(np.log2(self.n_aod_grid))
        if any(not 1 <= s <= n_stages for s in self.stages):
            bad("stages", f"must lie in 1..{n_stages}")

    @property
    def snr_linear(self):
        return tuple(10.0 ** (float(s) / 10.0) for s in self.snr_db)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


_FIELD_NAMES = {f.name for f in fields(ExperimentConfig)}


def config_from_mapping(data):
    unknown = sorted(set(data) - _FIELD_NAMES)
    if unknown:
        raise ConfigurationError(f"unknown config field(s): {', '.join(unknown)}")
    try:
        return ExperimentConfig(**data)
    except TypeError as exc:
        raise ConfigurationError(str(exc)) from exc


def builtin_recipes():
    root = resources.files("sdmimo") / "recipes"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".toml"))


def _read_recipe(source):
    path = Path(source)
    if path.is_file():
        return path.read_bytes().decode("utf-8"), path.stem
    name = source[:-5] if source.endswith(".toml") else source
    if name in builtin_recipes():
        text = (resources.files("sdmimo") / "recipes" / f"{name}.toml").read_text(encoding="utf-8")
        return text, name
    raise ConfigurationError(
        f"config {source!r} is neither a file nor a built-in recipe ({', '.join(builtin_recipes())})"
    )


def load_config(source, **overrides):
    """Load a recipe file or built-in recipe name and apply non-``None`` overrides."""
    text, _ = _read_recipe(source)
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"cannot parse {source!r}: {exc}") from exc
    data.update({k: v for k, v in overrides.items() if v is not None})
    return config_from_mapping(data)
