"""Command-line entry point.

Exit codes: 0 on success, 2 for configuration errors, 3 for numerical failures.
"""
import argparse
import os
import sys

import numpy as np

from ..exceptions import ConfigurationError, NumericalError
from . import diagnostics
from .config import load_config
from .runner import run_experiment, trials_path, write_atomic

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3

DEFAULT_RECIPES = {
    ("simulate", "su"): "su_los",
    ("simulate", "mu"): "mu_los",
    ("diagnose", "noise-spectrum"): "noise_diagnostics",
    ("diagnose", "input-corr"): "noise_diagnostics",
    ("diagnose", "beampattern"): "beampattern",
    ("codebook", "dump"): "codebook",
}
MODE_OF = {
    ("simulate", "su"): "su",
    ("simulate", "mu"): "mu",
    ("diagnose", "noise-spectrum"): "noise-diagnostics",
    ("diagnose", "input-corr"): "noise-diagnostics",
    ("diagnose", "beampattern"): "beampattern",
    ("codebook", "dump"): "codebook",
}


def _float_list(text):
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _str_list(text):
    return tuple(v.strip() for v in text.split(",") if v.strip())


def _common(p, simulate=False):
    p.add_argument("--config", help="recipe file or built-in recipe name")
    p.add_argument("--seed", type=int)
    p.add_argument("--snr", type=_float_list, help="comma-separated SNRs in dB")
    p.add_argument("--out", help="output CSV path (default: stdout)")
    if simulate:
        p.add_argument("--trials", type=int)
        p.add_argument("--front-end", type=_str_list,
                       help="comma-separated methods, e.g. unquantized,sigmadelta")
        p.add_argument("--per-trial", action="store_true",
                       help="also write per-trial rows to <out>_trials.csv")
        p.add_argument("--jobs", type=int, help="worker processes (output does not depend on it)")


def build_parser():
    parser = argparse.ArgumentParser(prog="sdmimo", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="Monte-Carlo channel estimation experiments")
    sim_sub = sim.add_subparsers(dest="target", required=True)
    for t in ("su", "mu"):
        _common(sim_sub.add_parser(t), simulate=True)

    diag = sub.add_parser("diagnose", help="converter and beampattern diagnostics")
    diag_sub = diag.add_subparsers(dest="target", required=True)
    for t in ("noise-spectrum", "input-corr", "beampattern"):
        _common(diag_sub.add_parser(t))

    cb = sub.add_parser("codebook", help="hierarchical precoder codebook")
    cb_sub = cb.add_subparsers(dest="target", required=True)
    _common(cb_sub.add_parser("dump"))
    return parser


def resolve_config(args):
    key = (args.command, args.target)
    overrides = dict(
        seed=args.seed,
        snr_db=args.snr,
        trials=getattr(args, "trials", None),
        methods=getattr(args, "front_end", None),
        jobs=getattr(args, "jobs", None),
    )
    cfg = load_config(args.config or DEFAULT_RECIPES[key], **overrides)
    if cfg.mode != MODE_OF[key]:
        raise ConfigurationError(
            f"invalid config field 'mode': recipe is {cfg.mode!r} but the command needs {MODE_OF[key]!r}"
        )
    return cfg


def execute(args):
    cfg = resolve_config(args)
    key = (args.command, args.target)
    per_trial_text = None
    if args.command == "simulate":
        if args.per_trial and not args.out:
            raise ConfigurationError("--per-trial needs --out")
        text, per_trial_text = run_experiment(cfg, per_trial=args.per_trial)
    elif key == ("diagnose", "noise-spectrum"):
        text = diagnostics.noise_spectrum_csv(cfg)
    elif key == ("diagnose", "input-corr"):
        text = diagnostics.input_corr_csv(cfg)
    elif key == ("diagnose", "beampattern"):
        text = diagnostics.beampattern_csv(cfg)
    else:
        text = diagnostics.codebook_csv(cfg)
    if args.out:
        write_atomic(args.out, text)
        if per_trial_text is not None:
            write_atomic(trials_path(args.out), per_trial_text)
    else:
        sys.stdout.write(text)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        execute(args)
    except ConfigurationError as exc:
        print(f"sdmimo: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"sdmimo: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except BrokenPipeError:
        # downstream reader closed early (e.g. ``| head``)
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
    return EXIT_OK

