"""Converter and codebook diagnostics emitted as CSV text.

The noise diagnostics feed the converter with single-path snapshots
``sqrt(P) a(theta) alpha + z`` where ``theta`` is uniform in the configured AoA
sector and ``alpha`` has unit modulus.
"""
import csv
import io

import numpy as np

from ..adc import AdcConfig, OneBit, SigmaDelta, Unquantized, apply_front_end
from ..channel import bs_manifold, complex_normal, steering_bs, ue_manifold
from ..estimator import _cached_codebook, aoa_grid, clip_level_step1, clip_level_step2
from ..noisemodel import angular_noise_spectrum, input_noise_correlation
from .runner import header_lines


def single_path_snapshots(cfg, snr, rng):
    """``n_bs x snapshots`` block with one random path per snapshot plus noise."""
    n, T = cfg.n_bs, cfg.snapshots
    lo, hi = np.deg2rad(cfg.aoa_sector_deg)
    theta = rng.uniform(lo, hi, size=T)
    alpha = np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, size=T))
    X = np.sqrt(snr) * bs_manifold(theta, n, cfg.d_bs) * alpha
    return X + complex_normal(rng, X.shape)


def _csv(cfg, columns, rows):
    buf = io.StringIO()
    for line in header_lines(cfg):
        buf.write(line + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    w.writerows(rows)
    return buf.getvalue()


def noise_spectrum_data(cfg):
    """``{(front_end, steering_deg): spectrum}`` over a 1-degree grid, plus the grid."""
    snr = cfg.snr_linear[0]
    c = clip_level_step1(snr)
    grid = aoa_grid(1.0)
    out = {}
    for k, psi in enumerate(cfg.steering_deg):
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, k]))
        X = single_path_snapshots(cfg, snr, rng)
        cfg_sd = AdcConfig.from_clip_level(cfg.n_bs, cfg.d_bs, c, np.deg2rad(psi))
        out[("sigmadelta", psi)] = angular_noise_spectrum(X, apply_front_end(X, SigmaDelta(cfg_sd)),
                                                          grid, cfg.d_bs)
        if k == 0:
            out[("onebit", None)] = angular_noise_spectrum(X, apply_front_end(X, OneBit(c)),
                                                           grid, cfg.d_bs)
    return grid, out


def noise_spectrum_csv(cfg):
    grid, data = noise_spectrum_data(cfg)
    deg = np.rad2deg(grid)
    rows = []
    for (fe, psi), spec in data.items():
        for t, v in zip(deg, spec):
            rows.append([fe, "" if psi is None else format(psi, "g"), format(t, ".0f"), format(v, ".8e")])
    return _csv(cfg, ("front_end", "steering_deg", "theta_deg", "power"), rows)


def input_corr_data(cfg):
    """Per-channel ``|E[x_n q_n^*]|`` for the unsteered converter and the 1-bit baseline."""
    snr = cfg.snr_linear[0]
    c = clip_level_step1(snr)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0]))
    X = single_path_snapshots(cfg, snr, rng)
    cfg_sd = AdcConfig.from_clip_level(cfg.n_bs, cfg.d_bs, c, 0.0)
    return {
        "sigmadelta": np.abs(input_noise_correlation(X, apply_front_end(X, SigmaDelta(cfg_sd)))),
        "onebit": np.abs(input_noise_correlation(X, apply_front_end(X, OneBit(c)))),
    }


def input_corr_csv(cfg):
    rows = []
    for fe, corr in input_corr_data(cfg).items():
        rows.extend([fe, n + 1, format(v, ".8e")] for n, v in enumerate(corr))
    return _csv(cfg, ("front_end", "channel", "abs_corr"), rows)


BEAM_VARIANTS = ("unquantized", "sigmadelta-steered", "sigmadelta-unsteered",
                 "sigmadelta-fixed-c-steered", "sigmadelta-fixed-c-unsteered")


def _beam_front_end(cfg, variant, snr, theta):
    if variant == "unquantized":
        return Unquantized()
    c = cfg.fixed_clip if "fixed-c" in variant else clip_level_step2(snr, cfg.n_ue)
    steer = theta if variant.endswith("-steered") else 0.0
    return SigmaDelta(AdcConfig.from_clip_level(cfg.n_bs, cfg.d_bs, c, steer))


def beampattern_data(cfg, variants=BEAM_VARIANTS):
    """Energy ``|c^H y|^2`` of a unit-gain path at ``cfg.aoa_deg`` as its AoD sweeps the grid.

    Returns ``{(variant, stage, precoder): energies}`` and the AoD grid.
    """
    snr = cfg.snr_linear[0]
    theta = float(np.deg2rad(cfg.aoa_deg))
    cb = _cached_codebook(cfg.n_ue, cfg.n_aod_grid)
    a = steering_bs(theta, cfg.n_bs, cfg.d_bs)
    comb = a / np.sqrt(cfg.n_bs)
    A_ue = ue_manifold(cb.grid, cfg.n_ue)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0]))
    out = {}
    for stage in cfg.stages:
        P = cb.precoders[stage - 1]
        for i in range(P.shape[1]):
            rho = A_ue.conj().T @ P[:, i]
            X = np.sqrt(snr) * np.outer(a, rho)
            if not cfg.noiseless:
                X = X + complex_normal(rng, X.shape)
            for v in variants:
                Y = apply_front_end(X, _beam_front_end(cfg, v, snr, theta))
                out[(v, stage, i)] = np.abs(comb.conj() @ Y) ** 2
    return cb.grid, out


def beampattern_csv(cfg):
    grid, data = beampattern_data(cfg)
    deg = np.rad2deg(grid)
    rows = []
    for (v, stage, i), e in data.items():
        rows.extend([v, stage, i, format(p, ".6f"), format(x, ".8e")] for p, x in zip(deg, e))
    return _csv(cfg, ("variant", "stage", "precoder", "aod_deg", "energy"), rows)


def codebook_csv(cfg):
    cb = _cached_codebook(cfg.n_ue, cfg.n_aod_grid)
    rows = []
    for s, P in enumerate(cb.precoders, start=1):
        for i in range(P.shape[1]):
            rows.extend([s, i, m, format(z.real, ".17g"), format(z.imag, ".17g")]
                        for m, z in enumerate(P[:, i]))
    return _csv(cfg, ("stage", "precoder", "antenna", "real", "imag"), rows)
