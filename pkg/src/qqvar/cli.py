"""Command-line front end: ``qqvar {simulate,rate,bounds,decompose,ci}``.

Exit codes: 0 success, 1 numerical failure, 2 malformed config or
arguments, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from .bounds import (
    expected_norm,
    fit_constant,
    perturbation_grid,
    verify_bound,
)
from .config import ConfigError, load_bounds_config, load_sim_config
from .decomposition import compute
from .dist import MvtModel, population_quantile, sample_mvt
from .empirical import QUANTILE_CONVENTION
from .inference import quantile_ci
from .montecarlo import (
    _csv_text,
    _write,
    perturb_weights,
    reproduce_tables,
    run_rate_study,
    write_rate_outputs,
)

OUT_ENV = "QQVAR_OUT"
EXIT_NUMERIC, EXIT_CONFIG, EXIT_IO = 1, 2, 3

logger = logging.getLogger("qqvar")


def _vector(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers: {text}") from exc


def _out_dir(args):
    return args.out or os.environ.get(OUT_ENV) or "qqvar-out"


def _progress(cell):
    logger.info("cell nu=%g alpha=%g n=%d: |D1|=%.5g |D2|=%.5g |D3|=%.5g",
                cell.nu, cell.alpha, cell.n, cell.mean_abs_d1, cell.mean_abs_d2,
                cell.mean_abs_d3)


def cmd_simulate(args):
    config = load_sim_config(args.config, seed=args.seed)
    out = _out_dir(args)
    reproduce_tables(config, out, threads=args.threads, progress=_progress)
    print(out)
    return 0


def cmd_rate(args):
    config = load_sim_config(args.config, seed=args.seed)
    out = _out_dir(args)
    fits, cells = run_rate_study(config, threads=args.threads, extended=args.extended or None,
                                 synthetic_slope=args.synthetic_slope, progress=_progress)
    extra = {"synthetic_slope": args.synthetic_slope, "extended": bool(args.extended)}
    write_rate_outputs(config, fits, cells, out, threads=args.threads, extra=extra)
    for nu, fit in fits.items():
        print(f"nu={nu:g} slope={fit.slope:.4f} intercept={fit.intercept:.4f} "
              f"R2={fit.r_squared:.4f}")
    return 0


def cmd_bounds(args):
    cfg = load_bounds_config(args.config, seed=args.seed)
    out = _out_dir(args)
    model = MvtModel.equicorrelated(cfg.p, cfg.rho, cfg.nu)
    w0 = np.asarray(cfg.w0, dtype=float)
    q0 = population_quantile(model, w0, cfg.alpha)
    n_mc = cfg.n_mc or None
    e_norm = expected_norm(model)
    holdout = perturbation_grid(model, w0, q0, cfg.grid_size, cfg.radius, cfg.holdout_seed,
                                include_zero=True)
    rows, constants, violations = [], {}, {}
    for which in cfg.kinds:
        if cfg.constant is not None:
            c = cfg.constant
        else:
            calib = perturbation_grid(model, w0, q0, cfg.grid_size, cfg.radius,
                                      cfg.calibration_seed)
            c = fit_constant(model, w0, q0, calib, which, safety=cfg.safety,
                             method=cfg.fit_method, e_norm_r=e_norm)
        reports = verify_bound(model, w0, q0, holdout, c, which, n_mc=n_mc,
                               seed=cfg.mc_seed, e_norm_r=e_norm)
        constants[which] = c
        violations[which] = sum(r.violation for r in reports)
        for i, r in enumerate(reports):
            rows.append([which, i, r.inputs["dw_norm"], r.inputs["dt"], r.observed, r.mcse,
                         r.bound_value, r.constant_used, r.slack, r.violation])
    os.makedirs(out, exist_ok=True)
    _write(os.path.join(out, "bounds.csv"), _csv_text(
        ["which", "index", "dw_norm", "dt", "observed", "mcse", "bound_value",
         "constant_used", "slack", "violation"], rows))
    doc = {
        "command": "bounds", "tool": "qqvar", "version": __version__,
        "config": vars(cfg), "q0": q0, "e_norm_r": e_norm,
        "constants": constants, "violations": violations,
        "observed_method": "exact quadrature" if n_mc is None else f"monte carlo n={n_mc}",
        "outputs": ["bounds.csv"],
    }
    _write(os.path.join(out, "manifest.json"), json.dumps(doc, indent=2) + "\n")
    for which in cfg.kinds:
        print(f"{which}: constant={constants[which]:.6g} violations={violations[which]}")
    return 0


def _model_from_args(args):
    return MvtModel.equicorrelated(args.p, args.rho, args.nu)


def cmd_decompose(args):
    model = _model_from_args(args)
    w0 = np.asarray(args.w0 if args.w0 else [1.0 / args.p] * args.p, dtype=float)
    if args.same_weights:
        w_hat = w0.copy()
    elif args.w_hat:
        w_hat = np.asarray(args.w_hat, dtype=float)
    else:
        w_hat = perturb_weights(w0, args.n, args.perturb_seed)
    sample = sample_mvt(model, args.n, args.seed)
    dec = compute(model, sample, w0, w_hat, args.alpha)
    doc = {
        "model": {"p": args.p, "rho": args.rho, "nu": args.nu, "boundary": model.boundary},
        "alpha": args.alpha, "n": args.n, "seed": args.seed,
        "w0": w0.tolist(), "w_hat": w_hat.tolist(),
        "quantile_convention": QUANTILE_CONVENTION,
        **dec.as_dict(),
    }
    text = json.dumps(doc, indent=2) + "\n"
    if args.out:
        os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
        _write(args.out, text)
    sys.stdout.write(text)
    return 0


def cmd_ci(args):
    model = _model_from_args(args)
    w = np.asarray(args.w if args.w else [1.0 / args.p] * args.p, dtype=float)
    sample = sample_mvt(model, args.n, args.seed)
    methods = ("analytic", "kernel") if args.method == "both" else (args.method,)
    doc = {
        "alpha": args.alpha, "gamma": args.gamma, "n": args.n, "seed": args.seed,
        "population_quantile": population_quantile(model, w, args.alpha), "intervals": {},
    }
    for method in methods:
        ci = quantile_ci(sample, w, args.alpha, args.gamma, model=model, method=method,
                         evaluated_at=args.at)
        doc["intervals"][method] = {
            "center": ci.center, "half_width": ci.half_width, "lower": ci.lower,
            "upper": ci.upper, "gamma": ci.gamma, "z": ci.z,
            "density_used": ci.density_used, "density_method": ci.density_method,
            "evaluated_at": ci.evaluated_at,
        }
    sys.stdout.write(json.dumps(doc, indent=2) + "\n")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="qqvar", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"qqvar {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def run_flags(p, default_config):
        p.add_argument("--config", default=default_config,
                       help="TOML config, bundled config name, or a previous manifest.json")
        p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./qqvar-out)")
        p.add_argument("--seed", type=int, help="override the master seed")
        p.add_argument("--threads", type=int, default=1, help="worker processes")

    p = sub.add_parser("simulate", help="reproduce the decomposition tables")
    run_flags(p, "paper_tables")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("rate", help="log-log rate regression of mean |D3| on n")
    run_flags(p, "rate")
    p.add_argument("--extended", action="store_true", help="add the n=10^6 endpoint")
    p.add_argument("--synthetic-slope", type=float, default=None,
                   help="skip simulation and regress an exact power law n**SLOPE")
    p.set_defaults(func=cmd_rate)

    p = sub.add_parser("bounds", help="calibrate and verify symmetric-difference bounds")
    run_flags(p, "bounds")
    p.set_defaults(func=cmd_bounds)

    def model_flags(p):
        p.add_argument("--p", type=int, default=5)
        p.add_argument("--rho", type=float, default=0.5)
        p.add_argument("--nu", type=float, default=10.0)
        p.add_argument("--alpha", type=float, default=0.95)
        p.add_argument("--n", type=int, default=10000)
        p.add_argument("--seed", type=int, default=0, help="sample seed")

    p = sub.add_parser("decompose", help="one D1 + D2 + D3 decomposition as JSON")
    model_flags(p)
    p.add_argument("--w0", type=_vector, help="reference weights (default equal)")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--w-hat", type=_vector, help="estimated weights")
    group.add_argument("--same-weights", action="store_true", help="use w_hat = w0")
    p.add_argument("--perturb-seed", type=int, default=1,
                   help="seed for the N(0, I/n) weight perturbation")
    p.add_argument("--out", help="also write the JSON to this file")
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("ci", help="asymptotic confidence interval for the projected quantile")
    model_flags(p)
    p.add_argument("--w", type=_vector, help="weights (default equal)")
    p.add_argument("--gamma", type=float, default=0.05)
    p.add_argument("--method", choices=("analytic", "kernel", "both"), default="analytic")
    p.add_argument("--at", choices=("population", "empirical"), default="population",
                   help="evaluate the density at q_alpha(w) or at q_hat_alpha(w)")
    p.set_defaults(func=cmd_ci)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "threads", 1) < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"invalid argument: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ArithmeticError, np.linalg.LinAlgError, AssertionError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
