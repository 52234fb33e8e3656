"""MU-MIMO channel estimation with orthogonal pilots.

Every channel use carries a ``K x K`` unitary pilot matrix. Despreading the
quantized output separates the users, after which each user's SIMO channel is
estimated with the Step-1 machinery (Bartlett AoAs plus whitened LS gains).
"""
import warnings
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from ._validation import check_complex_array, check_int, check_positive
from .channel import bs_manifold
from .estimator import (
    FRONT_ENDS,
    RankDeficiencyWarning,
    whitener_for,
    aoa_grid,
    bartlett_spectrum,
    clip_level_step1,
    find_peaks,
    gain_wls,
    make_front_end,
)
from .exceptions import ConfigurationError, DimensionError


def orthogonal_pilots(n_users):
    """Unitary DFT pilot matrix of size ``n_users``."""
    K = check_int(n_users, "n_users")
    k = np.arange(K)
    return np.exp(-2j * np.pi * np.outer(k, k) / K) / np.sqrt(K)


def despread(Y, S):
    """``Y S^H``: column ``k`` holds the contribution of user ``k``."""
    Y = check_complex_array(Y, "Y")
    S = check_complex_array(S, "S")
    if Y.shape[1] != S.shape[1] or S.shape[0] != S.shape[1]:
        raise DimensionError(f"Y {Y.shape} and S {S.shape} do not match")
    return Y @ S.conj().T


@dataclass(frozen=True)
class MuScenario:
    """``n_paths`` gives the (known) number of paths of every user."""

    n_paths: Tuple[int, ...]
    n_bs: int = 128
    d_bs: float = 0.125
    snr: float = 1.0
    t: int = 1
    front_end: str = "sigmadelta"
    aoa_step_deg: float = 1.0
    clip: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "n_paths", tuple(check_int(L, "n_paths") for L in self.n_paths))
        if not self.n_paths:
            raise ConfigurationError("need at least one user")
        check_int(self.n_bs, "n_bs")
        check_int(self.t, "t")
        check_positive(self.snr, "snr", strict=False)
        if self.front_end not in FRONT_ENDS:
            raise ConfigurationError(f"unknown front end {self.front_end!r}")

    @property
    def n_users(self):
        return len(self.n_paths)


@dataclass(frozen=True, eq=False)
class MuEstimate:
    aoas: Tuple[np.ndarray, ...]
    gains: Tuple[np.ndarray, ...]
    H: np.ndarray
    rank_deficient: bool = False


def estimate_mu_channels(link, scenario):
    """Estimate every user's SIMO channel from ``scenario.t`` pilot rounds.

    ``link`` is an :class:`~sdmimo.estimator.UplinkLink` whose channel matrix
    has one column per user.
    """
    K = scenario.n_users
    if link.H.shape != (scenario.n_bs, K):
        raise DimensionError(f"link channel is {link.H.shape}, expected {(scenario.n_bs, K)}")
    c = clip_level_step1(scenario.snr) if scenario.clip is None else float(scenario.clip)
    fe = make_front_end(scenario.front_end, scenario.n_bs, scenario.d_bs, c, 0.0)
    W = whitener_for(fe)
    S = orthogonal_pilots(K)
    rounds = [despread(link.transmit(S, fe), S) for _ in range(scenario.t)]
    per_user = np.stack(rounds, axis=2)  # n_bs x K x T

    grid = aoa_grid(scenario.aoa_step_deg)
    snr = max(scenario.snr, np.finfo(float).tiny)
    aoas, gains, cols = [], [], []
    deficient = False
    for k, L in enumerate(scenario.n_paths):
        Yk = per_user[:, k, :]
        th = grid[find_peaks(bartlett_spectrum(Yk, grid, scenario.d_bs), L)]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RankDeficiencyWarning)
            al, bad = gain_wls(Yk, th, snr, W, scenario.d_bs)
        deficient |= bad
        aoas.append(th)
        gains.append(al)
        cols.append(bs_manifold(th, scenario.n_bs, scenario.d_bs) @ al / np.sqrt(L))
    return MuEstimate(tuple(aoas), tuple(gains), np.column_stack(cols), deficient)

