"""First-order 1-bit spatial sigma-delta ADC with angle steering.

Arrays follow the antenna-major layout ``(n_channels, n_snapshots)`` in the
functional API. The scikit-learn transformers at the bottom of the module take
snapshot-major input ``(n_snapshots, n_channels)`` so they compose with
pipelines.
"""
from dataclasses import dataclass
from typing import Union

import numpy as np
from numba import njit
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import (
    check_complex_array,
    check_int,
    check_length,
    check_positive,
)
from .exceptions import ConfigurationError


def steering_phase(steering_angle, spacing):
    """Feedback phase shift that centres the noise null on ``steering_angle``.

    The sign is negative because the array response uses ``exp(-j 2 pi d n sin)``:
    the shaped noise ``e_n - exp(j phase) e_{n-1}`` vanishes along a direction
    whose per-element phase advance equals ``-phase``.
    """
    return -2.0 * np.pi * spacing * np.sin(steering_angle)


def overload_clip_level(quant_level, phase):
    """Largest clip level that keeps the feedback loop from overloading."""
    b = check_positive(quant_level, "quant_level")
    return b * (2.0 - abs(np.cos(phase)) - abs(np.sin(phase)))


def quant_level_for_clip(clip_level, phase):
    """Invert :func:`overload_clip_level` for the quantization level."""
    c = check_positive(clip_level, "clip_level")
    return c / (2.0 - abs(np.cos(phase)) - abs(np.sin(phase)))


@dataclass(frozen=True)
class AdcConfig:
    """Static parameters of an ``n_channels`` spatial sigma-delta converter.

    Attributes
    ----------
    n_channels : int
        Number of antennas / converter channels.
    spacing_wavelengths : float
        Element spacing of the receive array in wavelengths.
    quant_level : float
        Output level ``b`` of the 1-bit quantizer (volts).
    clip_level : float
        Amplitude limit ``c`` applied to the real and imaginary input parts.
    steering_angle : float
        Angle in radians around which quantization noise is suppressed.
    """

    n_channels: int
    spacing_wavelengths: float
    quant_level: float
    clip_level: float
    steering_angle: float = 0.0

    def __post_init__(self):
        check_int(self.n_channels, "n_channels")
        check_positive(self.spacing_wavelengths, "spacing_wavelengths")
        check_positive(self.quant_level, "quant_level")
        check_positive(self.clip_level, "clip_level")
        if not abs(self.steering_angle) <= np.pi / 2:
            raise ConfigurationError(
                f"steering_angle must lie in [-pi/2, pi/2], got {self.steering_angle!r}"
            )

    @property
    def phase(self):
        return steering_phase(self.steering_angle, self.spacing_wavelengths)

    @classmethod
    def from_clip_level(cls, n_channels, spacing_wavelengths, clip_level, steering_angle=0.0):
        """Build a config whose quantization level satisfies the overload condition."""
        phase = steering_phase(steering_angle, spacing_wavelengths)
        b = quant_level_for_clip(clip_level, phase)
        return cls(n_channels, spacing_wavelengths, b, float(clip_level), float(steering_angle))

    @classmethod
    def from_quant_level(cls, n_channels, spacing_wavelengths, quant_level, steering_angle=0.0):
        phase = steering_phase(steering_angle, spacing_wavelengths)
        c = overload_clip_level(quant_level, phase)
        return cls(n_channels, spacing_wavelengths, float(quant_level), c, float(steering_angle))

    def u_matrix(self):
        return build_u_matrix(self.n_channels, self.phase)


def clip(x, c):
    """Limit the real and imaginary parts of ``x`` to ``[-c, c]`` independently."""
    x = np.asarray(x, dtype=np.complex128)
    return np.clip(x.real, -c, c) + 1j * np.clip(x.imag, -c, c)


def _sign(v):
    # sign(0) := +1
    return np.where(v >= 0, 1.0, -1.0)


def quantize_1bit(x, b):
    """Map each part of ``x`` to ``+-b``; zero maps to ``+b``."""
    x = np.asarray(x, dtype=np.complex128)
    return b * _sign(x.real) + 1j * b * _sign(x.imag)


def build_u_matrix(n, phase):
    """Lower-triangular feedback matrix with ``U[m, k] = exp(j (m - k) phase)``."""
    n = check_int(n, "n")
    lag = np.subtract.outer(np.arange(n), np.arange(n))
    return np.where(lag >= 0, np.exp(1j * phase * lag), 0.0)


@njit(cache=True)
def _sd_recursion(X, b, c, rot):
    n, t = X.shape
    Y = np.empty_like(X)
    E = np.empty_like(X)
    for j in range(t):
        e_prev = 0j
        for i in range(n):
            x = X[i, j]
            xr = min(max(x.real, -c), c)
            xi = min(max(x.imag, -c), c)
            r = complex(xr, xi) - rot * e_prev
            yr = b if r.real >= 0.0 else -b
            yi = b if r.imag >= 0.0 else -b
            y = complex(yr, yi)
            e_prev = y - r
            Y[i, j] = y
            E[i, j] = e_prev
    return Y, E


def sd_quantize(X, cfg):
    """Convert every column of ``X`` independently.

    Returns the quantized block ``Y`` and the per-channel quantizer errors
    ``E`` (both ``n_channels x n_snapshots``). The feedback state restarts at
    zero for every column.
    """
    X = check_complex_array(X, "X")
    check_length(X, cfg.n_channels, "X")
    rot = complex(np.exp(1j * cfg.phase))
    return _sd_recursion(X, float(cfg.quant_level), float(cfg.clip_level), rot)


def sd_quantize_snapshot(x, cfg):
    """Single-snapshot version of :func:`sd_quantize`; returns ``(y, e)``."""
    x = check_complex_array(x, "x", ndim=1)
    Y, E = sd_quantize(x[:, None], cfg)
    return Y[:, 0], E[:, 0]


@dataclass(frozen=True)
class Unquantized:
    """Ideal (infinite resolution) receiver."""


@dataclass(frozen=True)
class OneBit:
    """Regular per-antenna 1-bit quantizer without feedback."""

    quant_level: float

    def __post_init__(self):
        check_positive(self.quant_level, "quant_level")


@dataclass(frozen=True)
class SigmaDelta:
    config: AdcConfig


FrontEnd = Union[Unquantized, OneBit, SigmaDelta]


def apply_front_end(X, fe):
    """Pass the received block ``X`` (antennas x snapshots) through ``fe``."""
    X = check_complex_array(X, "X")
    if isinstance(fe, Unquantized):
        return X.copy()
    if isinstance(fe, OneBit):
        return quantize_1bit(X, fe.quant_level)
    if isinstance(fe, SigmaDelta):
        return sd_quantize(X, fe.config)[0]
    raise ConfigurationError(f"unknown front end {fe!r}")


class SigmaDeltaADC(TransformerMixin, BaseEstimator):
    """Spatial sigma-delta converter as a scikit-learn transformer.

    Each row of the input is one snapshot across the array. Give either
    ``clip_level`` or ``quant_level``; the other follows from the overload
    condition at the steering phase. When both are ``None`` the clip level is
    set during :meth:`fit` to three standard deviations of the real and
    imaginary input parts.

    Parameters
    ----------
    clip_level, quant_level : float or None
    steering_angle : float, default 0
        Radians.
    spacing : float, default 1/8
        Element spacing in wavelengths.
    """

    def __init__(self, clip_level=None, quant_level=None, steering_angle=0.0, spacing=0.125):
        self.clip_level = clip_level
        self.quant_level = quant_level
        self.steering_angle = steering_angle
        self.spacing = spacing

    def fit(self, X, y=None):
        X = check_complex_array(X, "X")
        n = X.shape[1]
        if self.clip_level is not None and self.quant_level is not None:
            raise ConfigurationError("set only one of clip_level and quant_level")
        if self.quant_level is not None:
            cfg = AdcConfig.from_quant_level(n, self.spacing, self.quant_level, self.steering_angle)
        else:
            c = self.clip_level
            if c is None:
                c = 3.0 * np.sqrt(np.mean(np.abs(X) ** 2) / 2.0)
            cfg = AdcConfig.from_clip_level(n, self.spacing, c, self.steering_angle)
        self.config_ = cfg
        self.n_features_in_ = n
        return self

    def transform(self, X):
        check_is_fitted(self, "config_")
        X = check_complex_array(X, "X")
        return sd_quantize(X.T, self.config_)[0].T


class OneBitADC(TransformerMixin, BaseEstimator):
    """Memoryless 1-bit quantizer; ``quant_level=None`` picks ``3 sigma`` at fit time."""

    def __init__(self, quant_level=None):
        self.quant_level = quant_level

    def fit(self, X, y=None):
        X = check_complex_array(X, "X")
        b = self.quant_level
        if b is None:
            b = 3.0 * np.sqrt(np.mean(np.abs(X) ** 2) / 2.0)
        self.quant_level_ = check_positive(b, "quant_level")
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "quant_level_")
        return quantize_1bit(check_complex_array(X, "X"), self.quant_level_)
