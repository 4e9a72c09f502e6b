"""Command-line entry point: ``trunctail {estimate,simulate,asymptotics,selftest}``.

Exit codes: 0 success, 1 selftest failure, 2 usage or input error,
3 estimator-domain error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .asymptotics import (
    AsymptoticParams,
    DivergentIntegralError,
    dn_process,
    gamma_process_variance,
    limit_moments,
)
from .estimators import ESTIMATOR_NAMES, TAIL_CONVENTIONS, EstimatorError, estimate
from .kernels import KERNELS, check_kernel, get_kernel
from .model import DataFormatError, read_csv
from .simulation import REPORT_COLUMNS, ConfigError, SimulationConfig, run_grid, with_replicates
from .threshold import RTConfig, ThresholdError, auto_k

EXIT_OK, EXIT_SELFTEST, EXIT_USAGE, EXIT_ESTIMATOR = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _fail(code, message):
    print(f"error: {message}", file=sys.stderr)
    return code


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="trunctail", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    est = sub.add_parser("estimate", help="estimate gamma1 from an x,y CSV file")
    est.add_argument("data", type=Path)
    est.add_argument("--estimator", choices=ESTIMATOR_NAMES, default="kernel")
    est.add_argument("--kernel", choices=sorted(KERNELS), default="biweight")
    grp = est.add_mutually_exclusive_group(required=True)
    grp.add_argument("--k", type=int, help="number of top order statistics")
    grp.add_argument("--k-auto", action="store_true", help="select k by the stability criterion")
    est.add_argument("--rt-theta", type=float, default=RTConfig.theta)
    est.add_argument("--tail-convention", choices=TAIL_CONVENTIONS, default="partial-sum")
    est.add_argument("--table", action="store_true", help="aligned key/value lines instead of JSON")
    est.add_argument("--dn-dump", type=Path, metavar="CSV", help="write the D_n diagnostic curve")

    sim = sub.add_parser("simulate", help="run a Monte Carlo grid from a config file")
    sim.add_argument("config", type=Path)
    sim.add_argument("--replicates", type=int)
    sim.add_argument("--out", type=Path, help="CSV report path")
    sim.add_argument("--workers", type=int, help="worker processes (default: $TRUNCTAIL_WORKERS or 1)")
    sim.add_argument("--json", action="store_true", help="print report rows as JSON instead of tables")
    sim.add_argument("--quiet", action="store_true")

    asy = sub.add_parser("asymptotics", help="limit mean and variance of the kernel estimator")
    asy.add_argument("--gamma1", type=float, required=True)
    g2 = asy.add_mutually_exclusive_group(required=True)
    g2.add_argument("--gamma2", type=float, help="use 'inf' for complete data")
    g2.add_argument("--p", type=float, help="observed fraction gamma2/(gamma1+gamma2)")
    asy.add_argument("--tau1", type=float, default=-1.0)
    asy.add_argument("--lam", "--lambda", dest="lam", type=float, default=0.0)
    asy.add_argument("--kernel", choices=sorted(KERNELS), default="biweight")
    asy.add_argument("--form", choices=("process", "theorem"), default="process")
    asy.add_argument("--paths", type=int, default=10_000)
    asy.add_argument("--grid", type=int, default=4000)
    asy.add_argument("--seed", type=int, default=0)
    asy.add_argument("--no-mc", action="store_true", help="skip the Monte Carlo route")

    st = sub.add_parser("selftest", help="kernel conformance, estimator identities, variance cross-check")
    st.add_argument("--paths", type=int, default=4000)
    return parser


# --- estimate -------------------------------------------------------------------


def cmd_estimate(args) -> int:
    if args.k is not None and args.k < 2:
        return _fail(EXIT_USAGE, f"k must be ≥ 2, got {args.k}")
    try:
        sample = read_csv(args.data)
    except FileNotFoundError:
        return _fail(EXIT_USAGE, f"no such file: {args.data}")
    except DataFormatError as exc:
        return _fail(EXIT_USAGE, f"{args.data}: {exc}")
    if args.k is not None and args.k > sample.n - 1:
        return _fail(EXIT_USAGE, f"k must be <= n - 1 = {sample.n - 1}, got {args.k}")
    extra = {}
    if args.estimator == "kernel":
        extra["tail_convention"] = args.tail_convention
    try:
        if args.k_auto:
            cfg = RTConfig(theta=args.rt_theta)
            k = auto_k(sample, args.estimator, kernel=args.kernel, cfg=cfg, **extra)
        else:
            k = args.k
        result = estimate(sample, args.estimator, k, kernel=args.kernel, **extra)
    except (EstimatorError, ThresholdError, ArithmeticError) as exc:
        return _fail(EXIT_ESTIMATOR, str(exc))
    except ValueError as exc:
        return _fail(EXIT_USAGE, str(exc))
    out = result.to_dict()
    if args.estimator == "kernel":
        out["kernel"] = args.kernel
    if not args.table:
        print(json.dumps(out))
    else:
        width = max(len(key) for key in out)
        for key, value in out.items():
            print(f"{key:<{width}}  {value!r}" if isinstance(value, float) else f"{key:<{width}}  {value}")
    if args.dn_dump is not None:
        _dump_dn(sample, result, args)
    return EXIT_OK


def _dump_dn(sample, result, args):
    xs = np.sort(sample.x)
    top, base = xs[-1], xs[-result.k - 1]
    grid = np.geomspace(1.0, 1.5 * top / base, 200)
    dn = dn_process(sample, result.k, grid, kernel=args.kernel, gamma1_hat=result.gamma1_hat)
    with open(args.dn_dump, "w", encoding="utf-8") as fh:
        fh.write("x,dn\n")
        for x, d in zip(grid, dn):
            fh.write(f"{float(x)!r},{float(d)!r}\n")


# --- simulate -------------------------------------------------------------------


def cmd_simulate(args) -> int:
    try:
        cfg = SimulationConfig.load(args.config)
        if args.replicates is not None:
            cfg = with_replicates(cfg, args.replicates)
    except FileNotFoundError:
        return _fail(EXIT_USAGE, f"no such config file: {args.config}")
    except ConfigError as exc:
        return _fail(EXIT_USAGE, f"{args.config}: {exc}")
    progress = None if args.quiet else (lambda msg: print(msg, file=sys.stderr))
    try:
        report = run_grid(cfg, workers=args.workers, progress=progress)
    except ConfigError as exc:
        return _fail(EXIT_USAGE, str(exc))
    if args.out is not None:
        report.write_csv(args.out)
    if args.json:
        print(json.dumps([{c: getattr(r, c) for c in REPORT_COLUMNS} for r in report.rows]))
    else:
        print(f"gamma1 = {cfg.gamma1:g}, {cfg.replicates} replicates, master seed {cfg.master_seed}")
        print(report.pretty())
    for err in report.errors:
        print(f"warning: {err}", file=sys.stderr)
    return EXIT_OK


# --- asymptotics ----------------------------------------------------------------


def cmd_asymptotics(args) -> int:
    try:
        if args.p is not None:
            params = AsymptoticParams.from_p(args.gamma1, args.p, tau1=args.tau1, lam=args.lam)
        else:
            params = AsymptoticParams(args.gamma1, args.gamma2, tau1=args.tau1, lam=args.lam)
    except ValueError as exc:
        return _fail(EXIT_USAGE, str(exc))
    out = {}
    try:
        mom = limit_moments(params, args.kernel, form=args.form)
        out.update(mu=mom.mu, sigma2=mom.sigma2, quadrature_error=mom.quadrature_error)
    except DivergentIntegralError as exc:
        # report and fall back to the Monte Carlo route
        out.update(mu=None, sigma2=None, quadrature_error=None, divergence=str(exc))
    if args.no_mc:
        out.update(mc_sigma2=None, mc_stderr=None)
    else:
        mc = gamma_process_variance(params, args.kernel, paths=args.paths, grid=args.grid, seed=args.seed)
        out.update(mc_sigma2=mc.variance, mc_stderr=mc.stderr)
    print(json.dumps(out))
    return EXIT_OK if out["sigma2"] is not None else EXIT_ESTIMATOR


# --- selftest -------------------------------------------------------------------


def run_selftest(paths: int = 4000, seed: int = 0):
    """Yield ``(label, passed, detail)`` for each check."""
    from .estimators import bmn_estimate, hill_estimate, kernel_estimate
    from .model import TruncationDesign, complete_data_mode, sample_truncated

    for name in KERNELS:
        for res in check_kernel(get_kernel(name)):
            yield f"[{res.condition}] {name}", res.passed, res.detail

    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(20):
        xs = rng.pareto(1.5, size=int(rng.integers(5, 80))) + 1.0
        s = complete_data_mode(xs)
        for k in range(2, s.n):
            h = hill_estimate(xs, k).gamma1_hat
            worst = max(
                worst,
                abs(kernel_estimate(s, k, "indicator").gamma1_hat - h),
                abs(bmn_estimate(s, k).gamma1_hat - h),
            )
    yield "[hill-reduction]", worst < 1e-12, f"max gap {worst:.3g}"

    sample = sample_truncated(TruncationDesign.from_p(0.6, 0.8, 400), seed)
    gap = 0.0
    for k in (10, 40, 120):
        ind = kernel_estimate(sample, k, "indicator").gamma1_hat
        gap = max(gap, abs(ind - bmn_estimate(sample, k).gamma1_hat))
    yield "[indicator=bmn]", gap < 1e-12, f"max gap {gap:.3g}"

    params = AsymptoticParams(0.6, 1.4)
    quad = limit_moments(params, "biweight").sigma2
    mc = gamma_process_variance(params, "biweight", paths=paths, grid=2000, seed=seed)
    z = abs(quad - mc.variance) / mc.stderr
    yield (
        "[sigma2-crosscheck]",
        z < 3.0,
        f"gamma1=0.6 gamma2=1.4 biweight: quadrature {quad:.5f}, Monte Carlo {mc.variance:.5f} +- {mc.stderr:.5f} ({z:.2f} SE)",
    )


def cmd_selftest(args) -> int:
    failed = []
    for label, passed, detail in run_selftest(paths=args.paths):
        print(f"{'ok  ' if passed else 'FAIL'} {label}: {detail}")
        if not passed:
            failed.append(label)
    if failed:
        print("selftest failed: " + ", ".join(failed), file=sys.stderr)
        return EXIT_SELFTEST
    print("selftest passed")
    return EXIT_OK


COMMANDS = {
    "estimate": cmd_estimate,
    "simulate": cmd_simulate,
    "asymptotics": cmd_asymptotics,
    "selftest": cmd_selftest,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "gamma2", None) is not None and math.isnan(args.gamma2):
        return _fail(EXIT_USAGE, "gamma2 must be a number or inf")
    return COMMANDS[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
