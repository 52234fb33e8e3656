"""Seeded Monte-Carlo runner for the SU and MU experiments.

Every trial draws its channel from ``SeedSequence([seed, trial, 0])`` and its
receiver noise from ``SeedSequence([seed, trial, 1, snr_index])``, so all
methods and SNR points of a trial share the same channel (common random
numbers) and each method sees the same noise realization. Results are reduced
in trial order, which makes the output independent of the worker count.
"""
import csv
import io
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial
from typing import List, Optional

import numpy as np

from ..channel import (
    ArrayGeometry,
    ChannelSamplerSpec,
    mu_channel_matrix,
    sample_mu_channel,
    sample_su_channel,
    su_channel_matrix,
)
from ..estimator import SuScenario, UplinkLink, _cached_codebook, aoa_grid, aod_grid, estimate_su_channel
from ..exceptions import ConfigurationError
from ..mumimo import MuScenario, estimate_mu_channels
from .metrics import metric_angle_error, metric_nmse, nmse_db

AGGREGATE_COLUMNS = ("method", "snr_db", "trials", "e_theta", "nmse_alpha_db", "e_phi", "nmse_h_db")
TRIAL_COLUMNS = ("method", "snr_db", "trial", "e_theta", "e_phi", "nmse_alpha_num",
                 "nmse_alpha_den", "nmse_h_num", "nmse_h_den", "channel_uses")


@dataclass(frozen=True)
class TrialRecord:
    method: str
    snr_db: float
    trial: int
    e_theta: int
    e_phi: Optional[int]
    nmse_alpha_num: float
    nmse_alpha_den: float
    nmse_h_num: float
    nmse_h_den: float
    channel_uses: int

    def __post_init__(self):
        if min(self.nmse_alpha_num, self.nmse_alpha_den, self.nmse_h_num, self.nmse_h_den) < 0:
            raise ValueError("NMSE numerators and denominators must be non-negative")


def trial_rngs(seed, trial, snr_index):
    channel = np.random.default_rng(np.random.SeedSequence([seed, trial, 0]))
    noise_seq = np.random.SeedSequence([seed, trial, 1, snr_index])
    return channel, noise_seq


def geometry_of(cfg):
    return ArrayGeometry(n_bs=cfg.n_bs, n_ue=cfg.n_ue, d_bs=cfg.d_bs)


def sampler_of(cfg):
    return ChannelSamplerSpec(
        aoa_sector=tuple(np.deg2rad(cfg.aoa_sector_deg)),
        aod_sector=tuple(np.deg2rad(cfg.aod_sector_deg)),
        min_aoa_spacing=float(np.deg2rad(cfg.min_aoa_spacing_deg)),
        min_aod_spacing_cos=cfg.min_aod_spacing_cos,
        gain_model=cfg.gain_model,
        tau=cfg.tau,
        aod_grid=aod_grid(cfg.n_aod_grid) if cfg.on_grid_aod else None,
        aoa_grid=aoa_grid(cfg.aoa_step_deg) if cfg.on_grid_aoa else None,
    )


def su_scenario(cfg, method, snr):
    kw = dict(
        geometry=geometry_of(cfg), snr=snr, n_paths=cfg.n_paths, t1=cfg.t1, t2=cfg.t2,
        n_aod_grid=cfg.n_aod_grid, aoa_step_deg=cfg.aoa_step_deg,
    )
    if method in ("unquantized", "onebit", "sigmadelta"):
        return SuScenario(front_end=method, **kw)
    if method == "sigmadelta-fixed-c":
        return SuScenario(front_end="sigmadelta", step1_clip=cfg.fixed_clip,
                          step2_clip=cfg.fixed_clip, **kw)
    if method == "sigmadelta-nosteer":
        return SuScenario(front_end="sigmadelta", steer_step2=False, **kw)
    if method == "sigmadelta-c-step1":
        return SuScenario(front_end="sigmadelta", step2_clip="step1", **kw)
    raise ConfigurationError(f"unknown SU method {method!r}")


def mu_scenario(cfg, method, snr):
    kw = dict(n_paths=(cfg.paths_per_user,) * cfg.n_users, n_bs=cfg.n_bs, d_bs=cfg.d_bs,
              snr=snr, t=cfg.t, aoa_step_deg=cfg.aoa_step_deg)
    if method == "sigmadelta-fixed-c":
        return MuScenario(front_end="sigmadelta", clip=cfg.fixed_clip, **kw)
    return MuScenario(front_end=method, **kw)


def run_su_trial(cfg, trial, snr_index):
    """All methods of one SU trial at one SNR point."""
    g = geometry_of(cfg)
    channel_rng, noise_seq = trial_rngs(cfg.seed, trial, snr_index)
    truth = sample_su_channel(sampler_of(cfg), cfg.n_paths, channel_rng)
    H = su_channel_matrix(truth, g)
    snr_db = float(cfg.snr_db[snr_index])
    snr = cfg.snr_linear[snr_index]
    a_grid = aoa_grid(cfg.aoa_step_deg)
    codebook = _cached_codebook(cfg.n_ue, cfg.n_aod_grid)
    records = []
    for method in cfg.methods:
        scenario = su_scenario(cfg, method, snr)
        link = UplinkLink(H, snr, np.random.default_rng(noise_seq), noiseless=cfg.noiseless)
        est = estimate_su_channel(link, scenario, codebook)
        if link.channel_uses != scenario.total_pilots:
            raise RuntimeError(
                f"pilot accounting mismatch: {link.channel_uses} != {scenario.total_pilots}"
            )
        a_num, a_den = metric_nmse(est.gains, truth.gains)
        h_num, h_den = metric_nmse(est.H, H)
        records.append(TrialRecord(
            method, snr_db, trial,
            metric_angle_error(est.aoas, truth.aoas, a_grid),
            metric_angle_error(est.aods, truth.aods, codebook.grid),
            a_num, a_den, h_num, h_den, link.channel_uses,
        ))
    return records


def run_mu_trial(cfg, trial, snr_index):
    """All methods of one MU trial at one SNR point."""
    g = geometry_of(cfg)
    channel_rng, noise_seq = trial_rngs(cfg.seed, trial, snr_index)
    truth = sample_mu_channel(sampler_of(cfg), [cfg.paths_per_user] * cfg.n_users, channel_rng)
    H = mu_channel_matrix(truth, g)
    snr_db = float(cfg.snr_db[snr_index])
    snr = cfg.snr_linear[snr_index]
    a_grid = aoa_grid(cfg.aoa_step_deg)
    true_gains = np.concatenate(truth.gains)
    records = []
    for method in cfg.methods:
        scenario = mu_scenario(cfg, method, snr)
        link = UplinkLink(H, snr, np.random.default_rng(noise_seq), noiseless=cfg.noiseless)
        est = estimate_mu_channels(link, scenario)
        e_theta = max(metric_angle_error(e, t, a_grid) for e, t in zip(est.aoas, truth.aoas))
        a_num, a_den = metric_nmse(np.concatenate(est.gains), true_gains)
        h_num, h_den = metric_nmse(est.H, H)
        records.append(TrialRecord(method, snr_db, trial, e_theta, None,
                                   a_num, a_den, h_num, h_den, link.channel_uses))
    return records


def _run_task(cfg, task):
    snr_index, trial = task
    fn = run_mu_trial if cfg.mode == "mu" else run_su_trial
    return fn(cfg, trial, snr_index)


def run_trials(cfg, jobs=None):
    """Every trial record, ordered by SNR point, then trial, then method."""
    if cfg.mode not in ("su", "mu"):
        raise ConfigurationError(f"mode {cfg.mode!r} is not a Monte-Carlo experiment")
    jobs = cfg.jobs if jobs is None else jobs
    tasks = [(i, t) for i in range(len(cfg.snr_db)) for t in range(cfg.trials)]
    fn = partial(_run_task, cfg)
    if jobs <= 1:
        chunks = map(fn, tasks)
        return [r for chunk in chunks for r in chunk]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        chunksize = max(1, len(tasks) // (4 * jobs))
        return [r for chunk in pool.map(fn, tasks, chunksize=chunksize) for r in chunk]


@dataclass(frozen=True)
class AggregateRow:
    method: str
    snr_db: float
    trials: int
    e_theta: float
    nmse_alpha_db: float
    e_phi: Optional[float]
    nmse_h_db: float


def aggregate(records: List[TrialRecord]):
    """Rows per (method, SNR) in first-appearance order; NMSE is a ratio of sums."""
    groups = {}
    for r in records:
        groups.setdefault((r.method, r.snr_db), []).append(r)
    rows = []
    for (method, snr_db), rs in groups.items():
        n = len(rs)
        e_phi = None if rs[0].e_phi is None else sum(r.e_phi for r in rs) / n
        rows.append(AggregateRow(
            method, snr_db, n,
            sum(r.e_theta for r in rs) / n,
            nmse_db(sum(r.nmse_alpha_num for r in rs), sum(r.nmse_alpha_den for r in rs)),
            e_phi,
            nmse_db(sum(r.nmse_h_num for r in rs), sum(r.nmse_h_den for r in rs)),
        ))
    methods = list(dict.fromkeys(r.method for r in records))
    rows.sort(key=lambda row: methods.index(row.method))
    return rows


def _fmt(x, spec):
    return "" if x is None else format(float(x), spec)


def header_lines(cfg):
    lines = []
    if cfg.description:
        lines.append(f"# {cfg.description}")
    if cfg.mode in ("su", "mu"):
        lines.append(f"# mode={cfg.mode} seed={cfg.seed} trials={cfg.trials}")
        if not cfg.on_grid_aoa:
            lines.append("# e_theta: continuous true AoAs snapped to the nearest grid point")
    else:
        lines.append(f"# mode={cfg.mode} seed={cfg.seed}")
    return lines


def aggregate_csv(cfg, rows):
    buf = io.StringIO()
    for line in header_lines(cfg):
        buf.write(line + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(AGGREGATE_COLUMNS)
    for r in rows:
        w.writerow([r.method, _fmt(r.snr_db, "g"), r.trials, _fmt(r.e_theta, ".6f"),
                    _fmt(r.nmse_alpha_db, ".4f"), _fmt(r.e_phi, ".6f"), _fmt(r.nmse_h_db, ".4f")])
    return buf.getvalue()


def trials_csv(records):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRIAL_COLUMNS)
    for r in records:
        w.writerow([r.method, _fmt(r.snr_db, "g"), r.trial, r.e_theta,
                    "" if r.e_phi is None else r.e_phi,
                    _fmt(r.nmse_alpha_num, ".17g"), _fmt(r.nmse_alpha_den, ".17g"),
                    _fmt(r.nmse_h_num, ".17g"), _fmt(r.nmse_h_den, ".17g"), r.channel_uses])
    return buf.getvalue()


def write_atomic(path, text):
    """Write ``text`` to ``path`` through a temporary file and a rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".csv")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def trials_path(out):
    root, ext = os.path.splitext(out)
    return f"{root}_trials{ext or '.csv'}"


def run_experiment(cfg, per_trial=False, jobs=None):
    """Run ``cfg`` and return ``(aggregate_text, per_trial_text_or_None)``."""
    records = run_trials(cfg, jobs)
    text = aggregate_csv(cfg, aggregate(records))
    return text, (trials_csv(records) if per_trial else None)
