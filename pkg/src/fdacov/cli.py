"""Command-line interface: ``fdacov {estimate,bandwidth,ci,simulate}``.

Exit codes: 0 success, 2 input error, 3 numerical degeneracy, 4 configuration
error. Failures print one JSON object to stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from fdacov.bandwidth import Regime, Target, rule_of_thumb
from fdacov.config import RunConfig, build_config, load_config_file
from fdacov.data import load_panel
from fdacov.errors import ConfigError, FdacovError, InputError, NumericalError
from fdacov.inference import Method, confidence_intervals, prepare
from fdacov.llk import fit_mean
from fdacov.polyfit import fit_pilots

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3
EXIT_CONFIG = 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _fmt(x: float) -> str:
    return f"{float(x):.10g}"


def _common(p: argparse.ArgumentParser, with_input: bool = True) -> None:
    p.add_argument("--config", help="flat 'key = value' file; flags given here override it")
    if with_input:
        p.add_argument("--input", required=True, help="long-format CSV with columns curve_id,u,z,y")
    p.add_argument("--kernel", choices=["gaussian", "epanechnikov"], help="smoothing kernel (default gaussian)")
    p.add_argument("--seed", type=int, help="seed for subsampling steps (default 0)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fdacov", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("estimate", help="mean surface on a regular grid")
    _common(p)
    p.add_argument("--regime", choices=["sparse", "dense"], help="bandwidth rule (default dense)")
    p.add_argument("--grid-size", type=int, help="points per axis of the evaluation grid on [0,1]^2 (default 11)")
    p.add_argument("--bandwidth", help="explicit 'h_u,h_z' instead of the rule-of-thumb")
    p.add_argument("--with-inference", action="store_true", help="add bias, se_v1 and se_v1v2 columns")
    p.add_argument("--output", help="CSV path (default stdout)")

    p = sub.add_parser("bandwidth", help="rule-of-thumb bandwidths for both targets and regimes (JSON)")
    _common(p)
    p.add_argument("--cov-variant", choices=["diagonal", "cube"], help="integration domain of the covariance curvature terms")
    p.add_argument("--output", help="JSON path (default stdout)")

    p = sub.add_parser("ci", help="pointwise confidence intervals for the mean (JSON lines)")
    _common(p)
    p.add_argument("--point", action="append", required=True, help="'u,z' evaluation point; repeat for several")
    p.add_argument("--method", choices=[mt.value for mt in Method], help="interval type (default dense-corrected)")
    p.add_argument("--alpha", type=float, help="two-sided level; the interval uses z_{1-alpha/2} (default 0.1)")

    p = sub.add_parser("simulate", help="Monte-Carlo coverage study and variance table")
    _common(p, with_input=False)
    p.add_argument("--dgp", choices=["1", "2", "both"], help="data-generating process (default 1)")
    p.add_argument("--m", help="comma-separated points per curve (default 5,10,15)")
    p.add_argument("--n", type=int, help="curves per sample (default 100)")
    p.add_argument("--reps", type=int, help="replications per cell (default 300)")
    p.add_argument("--alpha", type=float, help="two-sided level (default 0.1)")
    p.add_argument("--methods", help="comma-separated methods or 'all' (default all)")
    p.add_argument("--gamma-weights", help="'w1,w2' weights of the true covariance (default: score variances 3,2)")
    p.add_argument("--out", required=True, help="output directory for the CSV reports")
    return parser


_FLAG_KEYS = {
    "kernel": "kernel",
    "seed": "seed",
    "regime": "regime",
    "grid_size": "grid_size",
    "cov_variant": "cov_variant",
    "alpha": "alpha",
    "dgp": "dgp",
    "m": "m",
    "n": "n",
    "reps": "reps",
    "methods": "methods",
    "gamma_weights": "gamma_weights",
}


def resolve_config(args) -> RunConfig:
    file_values = load_config_file(args.config) if getattr(args, "config", None) else {}
    overrides = {key: getattr(args, attr) for attr, key in _FLAG_KEYS.items() if hasattr(args, attr)}
    return build_config(file_values, overrides)


def _parse_pair(text: str, what: str) -> tuple[float, float]:
    try:
        a, b = (float(v) for v in text.split(","))
    except ValueError as exc:
        raise ConfigError(f"{what} must be two comma-separated numbers, got {text!r}") from exc
    return a, b


def cmd_estimate(args, cfg: RunConfig, out) -> int:
    fixed = _parse_pair(args.bandwidth, "--bandwidth") if args.bandwidth else None
    sample = load_panel(args.input)
    icfg = cfg.inference_config()
    regime = Regime(cfg.regime)
    ctx = None
    if args.with_inference:
        ctx = prepare(sample, icfg)
        bw = ctx.bandwidths.get(Target.MEAN, regime)
        h_u, h_z = bw.h_u, bw.h_z
    elif fixed is not None:
        h_u, h_z = fixed
    else:
        pilots = fit_pilots(sample, icfg.max_quadruples_per_curve, icfg.seed, icfg.cv_max_points)
        bw = rule_of_thumb(sample, pilots, icfg.kernel, icfg.grid, icfg.cov_variant).get(Target.MEAN, regime)
        h_u, h_z = bw.h_u, bw.h_z
    grid = np.linspace(0.0, 1.0, cfg.grid_size)
    header = ["u", "z", "estimate"] + (["bias", "se_v1", "se_v1v2"] if ctx else [])
    rows = []
    method = Method.DENSE_CORRECTED if regime is Regime.DENSE else Method.SPARSE_CORRECTED
    for u in grid:
        for z in grid:
            if ctx is None:
                est = fit_mean(sample, float(u), float(z), h_u, h_z, icfg.kernel).value
                rows.append([u, z, est])
            else:
                ci = confidence_intervals(sample, (float(u), float(z)), [method], cfg.alpha, context=ctx)[0]
                rows.append([u, z, ci.estimate, ci.bias, np.sqrt(ci.v1), np.sqrt(ci.v1 + ci.v2)])
    w = csv.writer(out, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return EXIT_OK


def cmd_bandwidth(args, cfg: RunConfig, out) -> int:
    sample = load_panel(args.input)
    icfg = cfg.inference_config()
    pilots = fit_pilots(sample, icfg.max_quadruples_per_curve, icfg.seed, icfg.cv_max_points)
    rot = rule_of_thumb(sample, pilots, icfg.kernel, icfg.grid, icfg.cov_variant)
    report = rot.to_dict()
    report["n"], report["m"], report["kernel"] = sample.n, sample.m, cfg.kernel
    json.dump(report, out, indent=2, sort_keys=True)
    out.write("\n")
    return EXIT_OK


def cmd_ci(args, cfg: RunConfig, out) -> int:
    points = [_parse_pair(p, "--point") for p in args.point]
    method = Method(args.method or Method.DENSE_CORRECTED)
    sample = load_panel(args.input)
    ctx = prepare(sample, cfg.inference_config())
    for pt in points:
        ci = confidence_intervals(sample, pt, [method], cfg.alpha, context=ctx)[0]
        out.write(json.dumps(ci.to_dict(), sort_keys=True) + "\n")
    return EXIT_OK


def cmd_simulate(args, cfg: RunConfig, out) -> int:
    from fdacov.simulation import coverage_report, run_experiment, variance_report, write_reports

    overrides = {} if cfg.gamma_weights is None else {"gamma_weights": cfg.gamma_weights}
    records = run_experiment(
        dgps=cfg.dgp,
        ms=cfg.m,
        n=cfg.n,
        reps=cfg.reps,
        alpha=cfg.alpha,
        seed=cfg.seed,
        config=cfg.inference_config(),
        spec_overrides=overrides,
    )
    paths = write_reports(args.out, coverage_report(records, cfg.methods, cfg.alpha), variance_report(records))
    failures = sum(r.error is not None for r in records)
    out.write(json.dumps({"outputs": [str(p) for p in paths], "reps": len(records), "failed_reps": failures}) + "\n")
    return EXIT_OK


_COMMANDS = {
    "estimate": cmd_estimate,
    "bandwidth": cmd_bandwidth,
    "ci": cmd_ci,
    "simulate": cmd_simulate,
}


def _fail(exc: Exception, code: int) -> int:
    payload = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    sys.stderr.write(json.dumps(payload) + "\n")
    return code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = resolve_config(args)
        path = getattr(args, "output", None)
        if path:
            with open(path, "w", newline="", encoding="utf-8") as fh:
                return _COMMANDS[args.command](args, cfg, fh)
        return _COMMANDS[args.command](args, cfg, sys.stdout)
    except ConfigError as exc:
        return _fail(exc, EXIT_CONFIG)
    except InputError as exc:
        return _fail(exc, EXIT_INPUT)
    except NumericalError as exc:
        return _fail(exc, EXIT_NUMERIC)
    except FdacovError as exc:
        return _fail(exc, EXIT_INPUT)
    except OSError as exc:
        return _fail(exc, EXIT_INPUT)


if __name__ == "__main__":
    sys.exit(main())
