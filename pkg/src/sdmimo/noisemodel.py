"""Quantization-noise model of the spatial sigma-delta ADC.

The linearized model writes the converter output as ``y = x + q`` with
``q = U^{-1} e`` and treats the per-channel errors ``e_n`` as independent and
uniform on ``[-b, b]`` in each part, which gives
``R_q = (2 b^2 / 3) U^{-1} U^{-H}``.
"""
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import solve_triangular

from ._validation import check_complex_array, check_positive
from .adc import AdcConfig, build_u_matrix
from .channel import bs_manifold
from .exceptions import DimensionError, NumericalError

MU = 0.5 + 0.5j


def frac(x):
    """Fractional part ``x - floor(x)``, in ``[0, 1)`` also for negative ``x``."""
    x = np.asarray(x, dtype=float)
    f = x - np.floor(x)
    # tiny negative x rounds up to exactly 1
    return np.where(f >= 1.0, 0.0, f)


def _cfrac(z):
    return frac(z.real) + 1j * frac(z.imag)


def _cfloor(z):
    return np.floor(z.real) + 1j * np.floor(z.imag)


def lemma1_error(x, b):
    """Closed-form quantizer error of the unsteered converter.

    ``x`` is a vector (or a matrix whose columns are snapshots) that the
    clipper leaves untouched. Channel ``n`` (1-based) has real error
    ``b - 2b <(n-1)/2 + sum_{k<=n} Re x_k / (2b)>`` and likewise for the
    imaginary part.
    """
    b = check_positive(b, "b")
    x = np.asarray(x, dtype=np.complex128)
    n = np.arange(x.shape[0], dtype=float)
    if x.ndim == 2:
        n = n[:, None]
    arg = 0.5 * n * (1 + 1j) + np.cumsum(x, axis=0) / (2.0 * b)
    return b - 2.0 * b * frac(arg.real) + 1j * (b - 2.0 * b * frac(arg.imag))


def floor_identity_residual(x, y, cfg):
    """Max deviation between both sides of the floor-form input/output relation.

    ``0.5/b U y + nu - mu 1 == floor(0.5/b U x + nu)`` with ``nu = mu V 1``.
    The identity is exact for the unsteered converter while the clipper is
    inactive; otherwise the residual is generally positive.
    """
    x = check_complex_array(x, "x", ndim=1)
    y = check_complex_array(y, "y", ndim=1)
    if x.shape != y.shape or x.shape[0] != cfg.n_channels:
        raise DimensionError(f"x {x.shape} and y {y.shape} must both have {cfg.n_channels} entries")
    U = cfg.u_matrix()
    V = U - np.eye(cfg.n_channels)
    nu = MU * V.sum(axis=1)
    scale = 0.5 / cfg.quant_level
    lhs = scale * (U @ y) + nu - MU
    rhs = _cfloor(scale * (U @ x) + nu)
    d = lhs - rhs
    return float(max(np.abs(d.real).max(), np.abs(d.imag).max()))


def _u_inverse(cfg):
    n = cfg.n_channels
    return solve_triangular(build_u_matrix(n, cfg.phase), np.eye(n), lower=True)


def quant_noise_cov(cfg):
    """``R_q = (2 b^2 / 3) U^{-1} U^{-H}``."""
    Ui = _u_inverse(cfg)
    R = (2.0 * cfg.quant_level**2 / 3.0) * (Ui @ Ui.conj().T)
    return 0.5 * (R + R.conj().T)


def effective_noise_cov(cfg):
    """Receiver plus quantization noise covariance ``I + R_q``."""
    return np.eye(cfg.n_channels) + quant_noise_cov(cfg)


def prewhitener(r_n):
    """Hermitian inverse square root of a positive definite matrix."""
    r_n = check_complex_array(r_n, "r_n")
    if r_n.shape[0] != r_n.shape[1]:
        raise DimensionError(f"r_n must be square, got {r_n.shape}")
    w, Q = np.linalg.eigh(0.5 * (r_n + r_n.conj().T))
    if w[0] <= 0:
        raise NumericalError(f"matrix is not positive definite; smallest eigenvalue {w[0]:.3e}")
    return (Q / np.sqrt(w)) @ Q.conj().T


@dataclass(frozen=True, eq=False)
class NoiseModel:
    cfg: AdcConfig
    r_q: np.ndarray
    r_n: np.ndarray
    whitener: np.ndarray

    @classmethod
    def from_config(cls, cfg):
        return _cached_model(cfg)


@lru_cache(maxsize=64)
def _cached_model(cfg):
    r_q = quant_noise_cov(cfg)
    r_n = np.eye(cfg.n_channels) + r_q
    W = prewhitener(r_n)
    for a in (r_q, r_n, W):
        a.setflags(write=False)
    return NoiseModel(cfg, r_q, r_n, W)


def _check_pair(X, Y):
    X = check_complex_array(X, "X")
    Y = check_complex_array(Y, "Y")
    if X.shape != Y.shape:
        raise DimensionError(f"X {X.shape} and Y {Y.shape} must have the same shape")
    return X, Y


def input_noise_correlation(X, Y):
    """Sample estimate of ``E[x_n (y_n - x_n)^*]`` for every channel ``n``."""
    X, Y = _check_pair(X, Y)
    return np.mean(X * np.conj(Y - X), axis=1)


def angular_noise_spectrum(X, Y, theta_grid, d=0.125):
    """Mean of ``|a(theta)^H (y - x)|^2`` over snapshots, for every grid angle."""
    X, Y = _check_pair(X, Y)
    A = bs_manifold(theta_grid, X.shape[0], d)
    return np.mean(np.abs(A.conj().T @ (Y - X)) ** 2, axis=1)
