"""Command-line entry point: ``smoothzo run|fit|diagnose|kernel-info``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from . import __version__
from .bounds import expected_exponent
from .estimator import exact_one_point_mean_1d, gradient_bias_bound, smoothed_gradient_check
from .harness import ConfigError, ExperimentConfig, load_summary, run_experiment
from .kernels import build_kernel, discrepancy_note, kernel_moment, kernel_norm_bounds
from .optimizer import RunDivergence
from .rates import DEFAULT_TOLERANCE, FitError, fit_rate

EXIT_OK, EXIT_CONFIG, EXIT_FIT, EXIT_DIVERGED = 0, 2, 3, 4


def _print_table(summary: dict) -> None:
    print(f"{summary['config']['name']}: regime={summary['config']['regime']} "
          f"beta={summary['config']['beta']} metric={summary['metric']}")
    print(f"{'N':>9} {'median':>12} {'q25':>12} {'q75':>12} {'bound':>12}  flags")
    for row in summary["per_N"]:
        flags = []
        if row["stability_violated"]:
            flags.append("step>threshold")
        if row["diverged"]:
            flags.append(f"diverged={row['diverged']}")
        fmt = lambda v: f"{v:12.5g}" if isinstance(v, float) else f"{'-':>12}"
        print(f"{row['N']:>9} {fmt(row['median'])} {fmt(row['q25'])} {fmt(row['q75'])} "
              f"{fmt(row['bound'])}  {' '.join(flags)}")


def _print_fit(fit: dict) -> None:
    if "error" in fit:
        print(f"fit: FAILED ({fit['error']})")
        return
    exp = fit["expected_exponent"]
    target = "" if exp is None else f" expected {-exp:.4f} +/- {fit['tolerance']}"
    verdict = {True: "PASS", False: "FAIL", None: "n/a"}[fit["passed"]]
    print(f"fit: slope {fit['slope']:.4f}{target}: {verdict}")


def cmd_run(args) -> int:
    cfg = ExperimentConfig.load(args.config)
    if args.workers:
        cfg.workers = args.workers
    result = run_experiment(cfg, output_dir=args.output_dir)
    _print_table(result.summary)
    if result.fit:
        _print_fit(result.fit)
    print(f"summary: {result.summary_path}")
    if result.diverged:
        print("some runs diverged (iterate norm above 1e12)", file=sys.stderr)
        return EXIT_DIVERGED
    if result.fit and result.fit.get("passed") is False:
        return EXIT_FIT
    return EXIT_OK


def cmd_fit(args) -> int:
    groups: dict = {}
    metric = args.metric
    regime = beta = None
    for path in args.summaries:
        data = load_summary(path)
        metric = metric or data["metric"]
        regime, beta = data["config"]["regime"], data["config"]["beta"]
        for c in data["cells"]:
            if not c["diverged"] and c.get(metric) is not None:
                groups.setdefault(c["N"], []).append(c[metric])
    if args.expected is not None:
        exp = args.expected
    else:
        exp = expected_exponent(args.regime or regime, args.beta or beta)
    try:
        rf = fit_rate(groups, exp, args.tolerance)
    except FitError as exc:
        print(f"fit: FAILED ({exc})")
        return EXIT_FIT
    out = rf.to_dict()
    if args.json:
        print(json.dumps(out, sort_keys=True, indent=2))
    else:
        for N, med, (lo, hi) in zip(rf.N, rf.medians, rf.iqr):
            print(f"{N:>9} {med:12.5g} [{lo:.4g}, {hi:.4g}]")
        _print_fit(out)
    return EXIT_FIT if rf.passed is False else EXIT_OK


_FUNCTIONS = {
    "sphere": (lambda X: 0.5 * np.sum(X * X, axis=-1), lambda x: x, None),
    "quartic": (lambda X: np.sum(X**4, axis=-1), lambda x: 4 * x**3, lambda b: 24.0 if b == 4 else None),
    "logistic": (lambda X: np.sum(np.logaddexp(0.0, -X), axis=-1),
                 lambda x: -1.0 / (1.0 + np.exp(x)), None),
}


def cmd_diagnose(args) -> int:
    f, grad, mpow = _FUNCTIONS[args.function]
    kernel = build_kernel(args.beta)
    x = np.full(args.dim, args.x, dtype=float)
    gen = np.random.default_rng(args.seed)
    check = smoothed_gradient_check(f, x, args.delta, kernel, args.samples, gen, grad,
                                    mpow(args.beta) if mpow else None)
    out = {"function": args.function, "dim": args.dim, "x": x.tolist(), "delta": args.delta,
           "beta": args.beta, **check.to_dict()}
    if args.dim == 1:
        mean = exact_one_point_mean_1d(f, float(x[0]), args.delta, kernel)
        out["exact_mean"] = mean
        out["exact_bias"] = abs(mean - float(np.atleast_1d(grad(x))[0]))
        if mpow:
            out["bias_bound"] = gradient_bias_bound(kernel, mpow(args.beta), args.delta)
    print(json.dumps(out, sort_keys=True, indent=2))
    return EXIT_OK


def cmd_kernel_info(args) -> int:
    k = build_kernel(args.beta)
    rep = kernel_norm_bounds(k)
    out = {
        "beta": k.beta,
        "coefficients": [str(c) for c in k.exact_coeffs],
        "moments": {str(s): str(kernel_moment(k, s)) for s in range(0, k.beta + 2)},
        "norm_bounds": rep.as_dict(),
    }
    note = discrepancy_note(args.beta)
    if note:
        out["note"] = note
    print(json.dumps(out, indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="smoothzo", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment config (YAML)")
    r.add_argument("config")
    r.add_argument("--output-dir", default=None)
    r.add_argument("--workers", type=int, default=None)
    r.set_defaults(func=cmd_run)

    f = sub.add_parser("fit", help="fit the log-log rate slope of one or more summaries")
    f.add_argument("summaries", nargs="+")
    g = f.add_mutually_exclusive_group()
    g.add_argument("--expected", type=float, default=None, help="expected exponent a in N^-a")
    g.add_argument("--regime", default=None)
    f.add_argument("--beta", type=int, default=None)
    f.add_argument("--metric", default=None)
    f.add_argument("--tolerance", type=float, default=DEFAULT_TOLERANCE)
    f.add_argument("--json", action="store_true")
    f.set_defaults(func=cmd_fit)

    d = sub.add_parser("diagnose", help="Monte Carlo check of the smoothed gradient")
    d.add_argument("--function", choices=sorted(_FUNCTIONS), default="sphere")
    d.add_argument("--dim", type=int, default=2)
    d.add_argument("--x", type=float, default=0.5, help="evaluation point (all coordinates)")
    d.add_argument("--delta", type=float, default=0.5)
    d.add_argument("--beta", type=int, default=2)
    d.add_argument("--samples", type=int, default=200_000)
    d.add_argument("--seed", type=int, default=0)
    d.set_defaults(func=cmd_diagnose)

    k = sub.add_parser("kernel-info", help="exact kernel coefficients, moments and norm bounds")
    k.add_argument("--beta", type=int, required=True)
    k.set_defaults(func=cmd_kernel_info)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RunDivergence as exc:
        print(f"run diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
