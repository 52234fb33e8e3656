"""Angular SU-MIMO and MU-MIMO channel models and parameter samplers."""
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from ._validation import check_complex_array, check_int, check_positive
from .exceptions import ConfigurationError, DimensionError

MAX_REJECTIONS = 10**6


def steering_bs(theta, n, d=0.125):
    """Response ``[1, exp(-j 2 pi d sin theta), ...]`` of the base-station ULA."""
    return np.exp(-2j * np.pi * d * np.arange(n) * np.sin(theta))


def steering_ue(phi, n):
    """Response of the critically spaced (half-wavelength) UE array."""
    return np.exp(-1j * np.pi * np.arange(n) * np.sin(phi))


def bs_manifold(thetas, n, d=0.125):
    """Stack BS steering vectors column-wise: ``n x len(thetas)``."""
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    return np.exp(-2j * np.pi * d * np.outer(np.arange(n), np.sin(thetas)))


def ue_manifold(phis, n):
    phis = np.atleast_1d(np.asarray(phis, dtype=float))
    return np.exp(-1j * np.pi * np.outer(np.arange(n), np.sin(phis)))


@dataclass(frozen=True)
class ArrayGeometry:
    """Receive (BS) and transmit (UE) uniform linear arrays."""

    n_bs: int = 128
    n_ue: int = 32
    d_bs: float = 0.125
    d_ue: float = 0.5

    def __post_init__(self):
        check_int(self.n_bs, "n_bs")
        check_int(self.n_ue, "n_ue")
        check_positive(self.d_bs, "d_bs")
        if self.d_ue != 0.5:
            raise ConfigurationError("the UE array is critically spaced; d_ue must be 0.5")


def _check_angles(angles, name):
    angles = np.atleast_1d(np.asarray(angles, dtype=float))
    if angles.ndim != 1 or angles.size == 0:
        raise ConfigurationError(f"{name} must be a non-empty 1-D sequence")
    if np.any(np.abs(angles) >= np.pi / 2):
        raise ConfigurationError(f"{name} must lie strictly inside (-pi/2, pi/2)")
    return angles


@dataclass(frozen=True)
class SuChannelParams:
    aoas: np.ndarray
    aods: np.ndarray
    gains: np.ndarray

    def __post_init__(self):
        aoas = _check_angles(self.aoas, "aoas")
        aods = _check_angles(self.aods, "aods")
        gains = np.atleast_1d(np.asarray(self.gains, dtype=np.complex128))
        if not (aoas.shape == aods.shape == gains.shape):
            raise DimensionError("aoas, aods and gains must have equal lengths")
        object.__setattr__(self, "aoas", aoas)
        object.__setattr__(self, "aods", aods)
        object.__setattr__(self, "gains", gains)

    @property
    def n_paths(self):
        return self.aoas.size


@dataclass(frozen=True)
class MuChannelParams:
    """Per-user AoAs and gains of single-antenna users."""

    aoas: Tuple[np.ndarray, ...]
    gains: Tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.aoas) != len(self.gains) or len(self.aoas) == 0:
            raise DimensionError("need one (aoas, gains) pair per user, at least one user")
        aoas = tuple(_check_angles(a, "aoas") for a in self.aoas)
        gains = tuple(np.atleast_1d(np.asarray(g, dtype=np.complex128)) for g in self.gains)
        for a, g in zip(aoas, gains):
            if a.shape != g.shape:
                raise DimensionError("per-user aoas and gains must have equal lengths")
        object.__setattr__(self, "aoas", aoas)
        object.__setattr__(self, "gains", gains)

    @property
    def n_users(self):
        return len(self.aoas)

    @property
    def n_paths(self):
        return [a.size for a in self.aoas]


def su_channel_matrix(p, g):
    """``H = A_BS diag(alpha) A_UE^H / sqrt(L)``, shape ``n_bs x n_ue``."""
    A_bs = bs_manifold(p.aoas, g.n_bs, g.d_bs)
    A_ue = ue_manifold(p.aods, g.n_ue)
    return (A_bs * p.gains) @ A_ue.conj().T / np.sqrt(p.n_paths)


def simo_channel(aoas, gains, g):
    aoas = np.atleast_1d(aoas)
    gains = np.atleast_1d(np.asarray(gains, dtype=np.complex128))
    return bs_manifold(aoas, g.n_bs, g.d_bs) @ gains / np.sqrt(aoas.size)


def mu_channel_matrix(p, g):
    """Columns are the per-user SIMO channels: ``n_bs x K``."""
    return np.column_stack([simo_channel(a, al, g) for a, al in zip(p.aoas, p.gains)])


def complex_normal(rng, shape):
    """Circularly symmetric CN(0, 1) samples."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def received_pilot_block(H, S, snr, rng=None, noiseless=False):
    """Unquantized received block ``sqrt(P) H S + Z``.

    ``S`` must have unit-norm columns. ``rng`` may be omitted only when
    ``noiseless`` is set.
    """
    H = check_complex_array(H, "H")
    S = check_complex_array(S, "S")
    if H.shape[1] != S.shape[0]:
        raise DimensionError(f"H is {H.shape} but S is {S.shape}")
    norms = np.linalg.norm(S, axis=0)
    if np.any(np.abs(norms - 1.0) > 1e-12):
        raise ConfigurationError("pilot columns must have unit norm")
    P = check_positive(snr, "snr", strict=False)
    X = np.sqrt(P) * (H @ S)
    if not noiseless:
        X = X + complex_normal(rng, X.shape)
    return X


@dataclass(frozen=True)
class ChannelSamplerSpec:
    """How random channel realizations are drawn.

    Angles are in radians. ``min_aod_spacing_cos`` is measured in direction
    cosine (``sin phi``) units. ``gain_model`` is ``"unit_modulus"`` or
    ``"truncated_gaussian"``; with the latter, ``tau = 0`` gives plain CN(0, 1)
    gains. When ``aod_grid`` is given the AoDs are snapped to its nearest point.
    """

    aoa_sector: Tuple[float, float] = (np.deg2rad(-10.0), np.deg2rad(10.0))
    aod_sector: Tuple[float, float] = (np.deg2rad(-75.0), np.deg2rad(75.0))
    min_aoa_spacing: float = np.deg2rad(20.0)
    min_aod_spacing_cos: float = 0.1
    gain_model: str = "unit_modulus"
    tau: float = 0.5
    aod_grid: np.ndarray = field(default=None, compare=False)
    aoa_grid: np.ndarray = field(default=None, compare=False)

    def __post_init__(self):
        for name in ("aoa_sector", "aod_sector"):
            lo, hi = getattr(self, name)
            if not (-np.pi / 2 < lo <= hi < np.pi / 2):
                raise ConfigurationError(f"{name} must satisfy -pi/2 < lo <= hi < pi/2")
        check_positive(self.min_aoa_spacing, "min_aoa_spacing", strict=False)
        check_positive(self.min_aod_spacing_cos, "min_aod_spacing_cos", strict=False)
        check_positive(self.tau, "tau", strict=False)
        if self.gain_model not in ("unit_modulus", "truncated_gaussian"):
            raise ConfigurationError(f"unknown gain_model {self.gain_model!r}")


def _snap(values, grid):
    grid = np.asarray(grid)
    return grid[np.abs(values[:, None] - grid[None, :]).argmin(axis=1)]


def _spaced_uniform(rng, n, sector, min_gap, transform=None, grid=None):
    """Rejection-sample ``n`` values from ``sector`` with pairwise gap ``min_gap``.

    ``transform`` maps samples to the space where the gap is measured. With a
    ``grid`` the samples are snapped to its nearest in-sector point.
    """
    lo, hi = sector
    if grid is not None:
        grid = np.asarray(grid)
        grid = grid[(grid >= lo) & (grid <= hi)]
        if grid.size == 0:
            raise ConfigurationError(f"no grid point lies inside sector {sector}")
    for _ in range(MAX_REJECTIONS):
        v = rng.uniform(lo, hi, size=n)
        if grid is not None:
            v = _snap(v, grid)
        if n == 1:
            return v
        w = transform(v) if transform is not None else v
        gaps = np.abs(w[:, None] - w[None, :])[np.triu_indices(n, 1)]
        if gaps.min() >= min_gap:
            return v
    raise ConfigurationError(
        f"could not place {n} values in sector {sector} with spacing {min_gap}"
    )


def sample_gains(rng, n, spec):
    if spec.gain_model == "unit_modulus":
        return np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, size=n))
    out = np.empty(n, dtype=np.complex128)
    for i in range(n):
        for _ in range(MAX_REJECTIONS):
            a = complex_normal(rng, ())
            if abs(a.real) >= spec.tau and abs(a.imag) >= spec.tau:
                out[i] = a
                break
        else:
            raise ConfigurationError(f"truncated gaussian with tau={spec.tau} is infeasible")
    return out


def sample_su_channel(spec, n_paths, rng):
    """Draw one SU-MIMO realization; paths are returned sorted by AoA."""
    n_paths = check_int(n_paths, "n_paths")
    aoas = _spaced_uniform(rng, n_paths, spec.aoa_sector, spec.min_aoa_spacing, grid=spec.aoa_grid)
    aods = _spaced_uniform(
        rng, n_paths, spec.aod_sector, spec.min_aod_spacing_cos, transform=np.sin, grid=spec.aod_grid
    )
    gains = sample_gains(rng, n_paths, spec)
    order = np.argsort(aoas, kind="stable")
    return SuChannelParams(aoas[order], aods[order], gains[order])


def sample_mu_channel(spec, n_paths: List[int], rng):
    """Draw one MU-MIMO realization, ``n_paths[k]`` paths for user ``k``."""
    aoas, gains = [], []
    for L in n_paths:
        L = check_int(L, "n_paths")
        a = _spaced_uniform(rng, L, spec.aoa_sector, spec.min_aoa_spacing, grid=spec.aoa_grid)
        al = sample_gains(rng, L, spec)
        order = np.argsort(a, kind="stable")
        aoas.append(a[order])
        gains.append(al[order])
    return MuChannelParams(tuple(aoas), tuple(gains))
