"""Two-step parametric SU-MIMO channel estimation.

Step 1 sends omnidirectional pilots and estimates AoAs (Bartlett peaks) and
path gains (prewhitened least squares). Step 2 estimates one AoD per path by
recursive bisection over a hierarchical precoder codebook, with one bit of
feedback per stage and the converter steered to the path's estimated AoA.
"""
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import List, Optional, Union

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import (
    check_complex_array,
    check_int,
    check_positive,
    is_power_of_two,
)
from .adc import (
    AdcConfig,
    OneBit,
    SigmaDelta,
    Unquantized,
    apply_front_end,
    quant_level_for_clip,
)
from .channel import ArrayGeometry, bs_manifold, received_pilot_block, steering_bs, ue_manifold
from .exceptions import ConfigurationError, DimensionError
from .noisemodel import NoiseModel, prewhitener

FRONT_ENDS = ("unquantized", "onebit", "sigmadelta")


class RankDeficiencyWarning(UserWarning):
    """Least-squares gains were computed from a rank-deficient model."""


def aoa_grid(step_deg=1.0):
    """Search grid from -90 to 90 degrees (inclusive), in radians."""
    n = int(round(180.0 / step_deg))
    if not np.isclose(n * step_deg, 180.0):
        raise ConfigurationError("step_deg must divide 180")
    return np.deg2rad(np.linspace(-90.0, 90.0, n + 1))


def aod_grid(n_grid=128):
    """``n_grid`` angles uniformly spaced in direction cosine over ``[-1, 1]``."""
    n_grid = check_int(n_grid, "n_grid", minimum=2)
    if not is_power_of_two(n_grid):
        raise ConfigurationError(f"the AoD grid size must be a power of two, got {n_grid}")
    return np.arcsin(np.linspace(-1.0, 1.0, n_grid))


def step1_precoder(n_t):
    """Precoder that excites only the first UE antenna, so every AoD sees gain 1."""
    p = np.zeros(check_int(n_t, "n_t"), dtype=np.complex128)
    p[0] = 1.0
    return p


def clip_level_step1(snr):
    """Three standard deviations of each part of a CN(0, P + 1) input."""
    P = check_positive(snr, "snr", strict=False)
    return 3.0 * np.sqrt((P + 1.0) / 2.0)


def clip_level_step2(snr, n_t):
    """Clip level for the worst-case beamformed input variance ``P N_t + 1``."""
    P = check_positive(snr, "snr", strict=False)
    return 3.0 * np.sqrt((P * check_int(n_t, "n_t") + 1.0) / 2.0)


def bartlett_spectrum(Y, grid, d=0.125):
    """``a(theta)^H R a(theta)`` with ``R = Y Y^H / T`` for every grid angle.

    ``Y`` is antennas x snapshots.
    """
    Y = check_complex_array(Y, "Y")
    A = bs_manifold(grid, Y.shape[0], d)
    return np.sum(np.abs(A.conj().T @ Y) ** 2, axis=1) / Y.shape[1]


def find_peaks(spectrum, n_peaks):
    """Indices of the ``n_peaks`` strongest local maxima, sorted ascending.

    A local maximum is strictly greater than its neighbours (one neighbour at
    the grid edges). Missing peaks are filled with the largest remaining
    values. Ties go to the lowest index.
    """
    s = np.asarray(spectrum, dtype=float)
    n_peaks = check_int(n_peaks, "n_peaks")
    if n_peaks > s.size:
        raise ConfigurationError(f"cannot pick {n_peaks} peaks from a grid of {s.size}")
    left = np.r_[-np.inf, s[:-1]]
    right = np.r_[s[1:], -np.inf]
    is_peak = (s > left) & (s > right)
    by_value = np.argsort(-s, kind="stable")
    ranked = [i for i in by_value if is_peak[i]] + [i for i in by_value if not is_peak[i]]
    return np.sort(np.array(ranked[:n_peaks], dtype=int))


def gain_wls(Y, aoas, snr, whitener=None, d=0.125):
    """Prewhitened least-squares path gains.

    The model is ``vec(W Y) = Psi alpha + noise`` with
    ``Psi = 1_T (x) sqrt(P / L) W A(aoas)``. Because every snapshot carries the
    same signal, the normal equations reduce to a fit of the whitened mean
    snapshot. Returns ``(gains, rank_deficient)``; a rank-deficient model
    yields the minimum-norm solution.
    """
    Y = check_complex_array(Y, "Y")
    aoas = np.atleast_1d(np.asarray(aoas, dtype=float))
    L = aoas.size
    n = Y.shape[0]
    if Y.shape[1] * n < L:
        raise DimensionError("fewer observations than unknown gains")
    P = check_positive(snr, "snr")
    B = np.sqrt(P / L) * bs_manifold(aoas, n, d)
    y_bar = Y.mean(axis=1)
    if whitener is not None:
        B = whitener @ B
        y_bar = whitener @ y_bar
    gains, _, rank, _ = np.linalg.lstsq(B, y_bar, rcond=None)
    deficient = rank < L
    if deficient:
        warnings.warn("duplicate or collinear AoA estimates; returning minimum-norm gains",
                      RankDeficiencyWarning, stacklevel=2)
    return gains, bool(deficient)


class AoaGainEstimator(BaseEstimator):
    """Step-1 estimator: Bartlett AoAs followed by prewhitened LS gains.

    ``fit`` takes the received Step-1 block snapshot-major, shape
    ``(T1, n_antennas)``.

    Parameters
    ----------
    n_paths : int
    snr : float
        Linear SNR ``P``.
    spacing : float
        BS element spacing in wavelengths.
    grid : array or None
        AoA search grid in radians; defaults to 1 degree steps.
    noise_cov : array or None
        Effective noise covariance used for prewhitening; identity if None.

    Attributes
    ----------
    spectrum_, aoa_indices_, aoas_, gains_, channel_, rank_deficient_
    """

    def __init__(self, n_paths=1, snr=1.0, spacing=0.125, grid=None, noise_cov=None):
        self.n_paths = n_paths
        self.snr = snr
        self.spacing = spacing
        self.grid = grid
        self.noise_cov = noise_cov

    def fit(self, X, y=None):
        Y = check_complex_array(X, "X").T
        grid = aoa_grid() if self.grid is None else np.asarray(self.grid, dtype=float)
        W = None if self.noise_cov is None else prewhitener(self.noise_cov)
        self.spectrum_ = bartlett_spectrum(Y, grid, self.spacing)
        self.aoa_indices_ = find_peaks(self.spectrum_, self.n_paths)
        self.aoas_ = grid[self.aoa_indices_]
        self.gains_, self.rank_deficient_ = gain_wls(Y, self.aoas_, self.snr, W, self.spacing)
        n = Y.shape[0]
        self.channel_ = bs_manifold(self.aoas_, n, self.spacing) @ self.gains_ / np.sqrt(self.n_paths)
        self.n_features_in_ = n
        return self

    def score(self, X, y=None):
        """Coefficient of determination of ``X`` against the fitted ``sqrt(P) h``."""
        check_is_fitted(self, "channel_")
        X = check_complex_array(X, "X")
        resid = X - np.sqrt(self.snr) * self.channel_[None, :]
        return float(1.0 - np.sum(np.abs(resid) ** 2) / np.sum(np.abs(X) ** 2))


@dataclass(frozen=True, eq=False)
class Codebook:
    """Hierarchical precoders; ``precoders[s]`` holds stage ``s + 1`` columns.

    Stage ``s`` (1-based) has ``2**s`` unit-norm precoders; precoder ``i``
    targets grid indices ``partition(s, i)``. The children of ``(s, i)`` are
    ``(s + 1, 2i)`` and ``(s + 1, 2i + 1)`` (0-based ``i``).
    """

    grid: np.ndarray
    precoders: List[np.ndarray]
    regularized: bool = False

    @property
    def n_stages(self):
        return len(self.precoders)

    def partition(self, stage, index):
        size = self.grid.size >> stage
        return np.arange(index * size, (index + 1) * size)


def design_codebook(n_t, grid):
    """Least-squares precoders whose beampatterns approximate sector indicators."""
    grid = np.asarray(grid, dtype=float)
    D = grid.size
    if not is_power_of_two(D) or D < 2:
        raise ConfigurationError(f"the AoD grid size must be a power of two, got {D}")
    n_t = check_int(n_t, "n_t")
    if D < n_t:
        raise ConfigurationError(f"the AoD grid ({D}) must be at least as large as n_t ({n_t})")
    dictionary = ue_manifold(grid, n_t).conj().T
    gram = dictionary.conj().T @ dictionary
    regularized = np.linalg.cond(gram) > 1e12
    if regularized:
        gram = gram + 1e-10 * np.eye(n_t)
    stages = []
    for s in range(1, int(np.log2(D)) + 1):
        n_sec = 2**s
        target = np.kron(np.eye(n_sec), np.ones((D // n_sec, 1)))
        P = np.linalg.solve(gram, dictionary.conj().T @ target)
        P /= np.linalg.norm(P, axis=0)
        P.setflags(write=False)
        stages.append(P)
    return Codebook(grid, stages, bool(regularized))


@lru_cache(maxsize=8)
def _cached_codebook(n_t, n_grid):
    return design_codebook(n_t, aod_grid(n_grid))


def path_energy(Y, theta, d=0.125):
    """``|c^H Y 1 / T|^2`` with the combiner ``c = a_BS(theta) / sqrt(N_r)``."""
    Y = check_complex_array(Y, "Y")
    c = steering_bs(theta, Y.shape[0], d) / np.sqrt(Y.shape[0])
    return float(np.abs(c.conj() @ Y.mean(axis=1)) ** 2)


def bisect_aod(transmit, theta, codebook, d=0.125):
    """Recursive bisection for the AoD of the path arriving from ``theta``.

    ``transmit(p)`` sends pilots precoded with ``p`` and returns the received
    (quantized) block. Each stage probes the two children of the surviving
    sector and keeps the one with the larger path energy (the lower child on
    ties). Returns the 0-based AoD grid index.
    """
    i = 0
    for P in codebook.precoders:
        e0 = path_energy(transmit(P[:, 2 * i]), theta, d)
        e1 = path_energy(transmit(P[:, 2 * i + 1]), theta, d)
        i = 2 * i + int(e1 > e0)
    return i


class UplinkLink:
    """Channel-use oracle holding the true channel.

    ``transmit`` forms ``sqrt(P) H S + Z`` with fresh noise, passes it through
    the requested front end and counts one channel use per pilot column.
    """

    def __init__(self, H, snr, rng=None, noiseless=False):
        self.H = check_complex_array(H, "H")
        self.snr = check_positive(snr, "snr", strict=False)
        self.rng = rng
        self.noiseless = noiseless
        if rng is None and not noiseless:
            raise ConfigurationError("a random generator is required unless noiseless")
        self.channel_uses = 0

    def transmit(self, S, front_end):
        S = np.asarray(S, dtype=np.complex128)
        if S.ndim == 1:
            S = S[:, None]
        X = received_pilot_block(self.H, S, self.snr, self.rng, self.noiseless)
        self.channel_uses += S.shape[1]
        return apply_front_end(X, front_end)


def make_front_end(kind, n_antennas, spacing, clip_level, steering_angle=0.0):
    """Front end of type ``kind`` for a given clip level.

    The 1-bit baseline uses the quantization level that the sigma-delta
    converter would use without steering (``b = c``).
    """
    if kind == "unquantized":
        return Unquantized()
    if kind == "onebit":
        return OneBit(quant_level_for_clip(clip_level, 0.0))
    if kind == "sigmadelta":
        return SigmaDelta(AdcConfig.from_clip_level(n_antennas, spacing, clip_level, steering_angle))
    raise ConfigurationError(f"unknown front end {kind!r}; expected one of {FRONT_ENDS}")


def noise_cov_for(front_end):
    """Effective noise covariance assumed for prewhitening, ``None`` for white."""
    if isinstance(front_end, SigmaDelta):
        return NoiseModel.from_config(front_end.config).r_n
    return None


def whitener_for(front_end):
    if isinstance(front_end, SigmaDelta):
        return NoiseModel.from_config(front_end.config).whitener
    return None


@dataclass(frozen=True)
class SuScenario:
    """Everything the SU estimator knows in advance.

    ``step1_clip`` / ``step2_clip`` override the adaptive clip levels with a
    fixed value; ``step2_clip="step1"`` reuses the Step-1 level in Step 2.
    ``steer_step2=False`` keeps the converter at broadside during Step 2.
    """

    geometry: ArrayGeometry = field(default_factory=ArrayGeometry)
    snr: float = 1.0
    n_paths: int = 1
    t1: int = 10
    t2: int = 1
    front_end: str = "sigmadelta"
    n_aod_grid: int = 128
    aoa_step_deg: float = 1.0
    steer_step2: bool = True
    step1_clip: Optional[float] = None
    step2_clip: Optional[Union[float, str]] = None

    def __post_init__(self):
        check_positive(self.snr, "snr", strict=False)
        check_int(self.n_paths, "n_paths")
        check_int(self.t1, "t1")
        check_int(self.t2, "t2")
        if self.front_end not in FRONT_ENDS:
            raise ConfigurationError(f"unknown front end {self.front_end!r}")
        if not is_power_of_two(self.n_aod_grid):
            raise ConfigurationError(f"n_aod_grid must be a power of two, got {self.n_aod_grid}")
        if isinstance(self.step2_clip, str) and self.step2_clip != "step1":
            raise ConfigurationError("step2_clip must be a number, None or 'step1'")

    @property
    def total_pilots(self):
        return self.t1 + 2 * self.n_paths * self.t2 * int(np.log2(self.n_aod_grid))

    def clip_levels(self):
        c1 = clip_level_step1(self.snr) if self.step1_clip is None else float(self.step1_clip)
        if self.step2_clip is None:
            c2 = clip_level_step2(self.snr, self.geometry.n_ue)
        elif self.step2_clip == "step1":
            c2 = c1
        else:
            c2 = float(self.step2_clip)
        return c1, c2


@dataclass(frozen=True, eq=False)
class ChannelEstimate:
    aoas: np.ndarray
    aods: np.ndarray
    gains: np.ndarray
    H: np.ndarray
    aod_indices: np.ndarray
    spectrum: np.ndarray
    rank_deficient: bool = False


def assemble_channel(aoas, aods, gains, g):
    A_bs = bs_manifold(aoas, g.n_bs, g.d_bs)
    A_ue = ue_manifold(aods, g.n_ue)
    return (A_bs * gains) @ A_ue.conj().T / np.sqrt(len(gains))


def run_step1(link, scenario, grid=None):
    """Omnidirectional pilots, Bartlett AoAs and whitened LS gains."""
    g = scenario.geometry
    c1, _ = scenario.clip_levels()
    fe = make_front_end(scenario.front_end, g.n_bs, g.d_bs, c1, 0.0)
    S = np.repeat(step1_precoder(g.n_ue)[:, None], scenario.t1, axis=1)
    Y1 = link.transmit(S, fe)
    grid = aoa_grid(scenario.aoa_step_deg) if grid is None else grid
    spectrum = bartlett_spectrum(Y1, grid, g.d_bs)
    aoas = grid[find_peaks(spectrum, scenario.n_paths)]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RankDeficiencyWarning)
        gains, deficient = gain_wls(Y1, aoas, max(scenario.snr, np.finfo(float).tiny),
                                    whitener_for(fe), g.d_bs)
    return aoas, gains, spectrum, deficient


def run_step2(link, scenario, aoas, codebook=None):
    """AoD grid indices, one bisection per estimated AoA."""
    g = scenario.geometry
    _, c2 = scenario.clip_levels()
    codebook = codebook or _cached_codebook(g.n_ue, scenario.n_aod_grid)
    indices = []
    for theta in aoas:
        steer = float(theta) if scenario.steer_step2 else 0.0
        fe = make_front_end(scenario.front_end, g.n_bs, g.d_bs, c2, steer)

        def transmit(p, fe=fe):
            return link.transmit(np.repeat(p[:, None], scenario.t2, axis=1), fe)

        indices.append(bisect_aod(transmit, theta, codebook, g.d_bs))
    return np.array(indices, dtype=int), codebook.grid


def estimate_su_channel(link, scenario, codebook=None):
    """Run both steps against ``link`` and assemble the channel estimate."""
    aoas, gains, spectrum, deficient = run_step1(link, scenario)
    aod_idx, grid = run_step2(link, scenario, aoas, codebook)
    aods = grid[aod_idx]
    H = assemble_channel(aoas, aods, gains, scenario.geometry)
    return ChannelEstimate(aoas, aods, gains, H, aod_idx, spectrum, deficient)
