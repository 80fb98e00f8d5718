"""``depcomb`` command-line interface.

Exit codes: 0 success, 1 usage or configuration error, 2 invalid input data,
3 numerical failure.
"""
import argparse
import re
import sys
import time

import numpy as np

from . import __version__, efficiency, synthetic
from ._io import write_rows
from .combiners import GcSpec, combine_independent, gc_eval
from .dependent import (
    EmpiricalNullCdf,
    GaussianCopulaSampler,
    IndependentUniformSampler,
    build_empirical_null,
    combine_dependent,
)
from .errors import ConfigurationError, DataValidationError, DomainError, NumericError
from .microbiome import TESTS, OtuDesign, combined_microbiome_test

DEFAULT_SEED = 1


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigurationError(f"{self.prog}: {message}")


def read_pvalue_file(path):
    """Rows of p-values separated by commas or whitespace; ``#`` starts a comment."""
    rows = []
    try:
        fh = open(path)
    except OSError as exc:
        raise DataValidationError(f"{path}: cannot open ({exc.strerror})") from None
    with fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            row = []
            for cell in filter(None, re.split(r"[,\s]+", line)):
                try:
                    v = float(cell)
                except ValueError:
                    raise DataValidationError(f"{path}:{lineno}: not a number: {cell!r}") from None
                if not 0.0 <= v <= 1.0:
                    raise DataValidationError(f"{path}:{lineno}: p-value {cell} outside [0, 1]")
                row.append(v)
            if rows and len(row) != len(rows[0][1]):
                raise DataValidationError(
                    f"{path}:{lineno}: expected {len(rows[0][1])} p-values, found {len(row)}")
            rows.append((lineno, row))
    if not rows:
        raise DataValidationError(f"{path}: no p-values found")
    return np.array([r for _, r in rows])


def _specs(methods):
    return [GcSpec.parse(m) for m in (methods or ["fisher"])]


def _emit(args, rows, columns):
    rows = sorted(rows, key=lambda r: str(r.get("method", ""))) if "method" in columns else rows
    write_rows(args.output, rows, columns, args.format, args.precision)


def _summary(args, started, extra=""):
    print(f"seed={args.seed} runtime={time.perf_counter() - started:.2f}s{extra}", file=sys.stderr)


def cmd_combine(args):
    p = read_pvalue_file(args.pvalues)
    rows = []
    for spec in _specs(args.method):
        stats = np.atleast_1d(gc_eval(spec, p))
        pc = np.atleast_1d(combine_independent(spec, p))
        for i in range(p.shape[0]):
            rows.append({"method": spec.label, "row": i + 1, "k": p.shape[1],
                         "statistic": float(stats[i]), "p_value": float(pc[i]), "seed": args.seed})
    _emit(args, rows, ["method", "row", "k", "statistic", "p_value", "seed"])


def _null_for(args, spec, k):
    if args.null:
        cdf = EmpiricalNullCdf.load(args.null)
        if cdf.spec != spec:
            raise ConfigurationError(f"{args.null}: null was built for {cdf.spec.label}")
        return cdf
    if args.sampler is None:
        raise ConfigurationError("combine-dep needs --null FILE or --sampler")
    if args.sampler == "gaussian-copula":
        sampler = GaussianCopulaSampler.equicorrelated(args.rho, k)
    else:
        sampler = IndependentUniformSampler(k)
    return build_empirical_null(sampler, spec, args.B, args.seed, args.threads, args.add_one)


def cmd_combine_dep(args):
    p = read_pvalue_file(args.pvalues)
    specs = _specs(args.method)
    if args.save_null and len(specs) != 1:
        raise ConfigurationError("--save-null needs exactly one --method")
    rows = []
    for spec in specs:
        cdf = _null_for(args, spec, p.shape[1])
        if args.save_null:
            cdf.save(args.save_null)
        pc = np.atleast_1d(combine_dependent(spec, p, cdf))
        for i in range(p.shape[0]):
            rows.append({"method": "d" + spec.label, "row": i + 1, "k": p.shape[1], "B": cdf.B,
                         "p_value": float(pc[i]), "seed": args.seed})
    _emit(args, rows, ["method", "row", "k", "B", "p_value", "seed"])


def cmd_microbiome(args):
    started = time.perf_counter()
    design = OtuDesign.from_csv(args.y, args.x, args.z, kind=args.kind)
    result = combined_microbiome_test(design, _specs(args.method), tuple(args.tests), args.B,
                                      args.seed, args.alpha, resamples=args.resamples)
    rows = [dict(r, reject=r["p_value"] <= args.alpha, seed=args.seed) for r in result.records()]
    if args.independent:
        rows += [{"method": k, "statistic": float("nan"), "p_value": v,
                  "reject": v <= args.alpha, "seed": args.seed}
                 for k, v in result.independent.items()]
    _emit(args, rows, ["method", "statistic", "p_value", "reject", "seed"])
    _summary(args, started, f" n={design.n} p={design.p} kind={design.kind} B={args.B}")


_OVERRIDES = ("reps", "B", "seed")


def cmd_simulate(args):
    started = time.perf_counter()
    scenario = synthetic.Scenario.from_file(args.scenario)
    text = scenario.to_text()
    extra = [f"{k} = {getattr(args, k)}" for k in _OVERRIDES if getattr(args, k) is not None]
    extra += list(args.set or [])
    if extra:
        scenario = synthetic.Scenario.from_text(text + "\n".join(extra), "--set")
    mode = args.mode
    if mode == "auto":
        mode = "power" if scenario.beta > 0 else "size"
    runner = synthetic.run_power_experiment if mode == "power" else synthetic.run_size_experiment
    result = runner(scenario, threads=args.threads)
    _emit(args, result.rows, list(synthetic.ExperimentResult.COLUMNS))
    args.seed = scenario.seed
    _summary(args, started, f" mode={mode} reps={scenario.reps} B={scenario.B}")


def cmd_counterexample(args):
    started = time.perf_counter()
    alphas = synthetic.alpha_grid(args.alpha_max, args.alpha_min, args.alpha_step)
    result = synthetic.run_counterexample_experiment(alphas, args.reps, args.B, args.seed,
                                                     args.threads)
    rows = [dict(r, seed=args.seed) for r in result.records()]
    _emit(args, rows, list(synthetic.CounterexampleResult.COLUMNS) + ["seed"])
    _summary(args, started, f" reps={args.reps} B={args.B}")


def cmd_efficiency(args):
    started = time.perf_counter()
    rows = efficiency.power_grid(args.rho, args.effect, args.n, args.alpha, args.reps, args.B,
                                 args.seed)
    rows = [dict(r, seed=args.seed) for r in rows]
    write_rows(args.output, rows, ["rho", "effect", "method", "power", "mc_se", "seed"],
               args.format, args.precision)
    _summary(args, started, f" reps={args.reps} B={args.B}")


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser():
    parser = _Parser(prog="depcomb", description="Combine dependent p-values.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = _Parser(add_help=False)
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--output", "-o", default="-", help="output file (default: stdout)")
    common.add_argument("--precision", type=int, default=6, help="significant digits")
    common.add_argument("--seed", type=int, help=f"base seed (default {DEFAULT_SEED})")
    common.add_argument("--threads", type=int, default=1)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def method_arg(p):
        p.add_argument("--method", "-m", action="append",
                       help="combination method, e.g. fisher, cauchy, pareto:eta=0.5 (repeatable)")

    p = sub.add_parser("combine", parents=[common], help="combine independent p-values")
    p.add_argument("pvalues", help="file with one p-value vector per line")
    method_arg(p)
    p.set_defaults(func=cmd_combine)

    p = sub.add_parser("combine-dep", parents=[common], help="combine dependent p-values")
    p.add_argument("pvalues")
    method_arg(p)
    p.add_argument("--null", help="cached empirical null file")
    p.add_argument("--sampler", choices=("gaussian-copula", "independent"))
    p.add_argument("--rho", type=float, default=0.0, help="equicorrelation of the copula")
    p.add_argument("-B", type=int, default=500, help="number of null draws")
    p.add_argument("--add-one", action="store_true", help="use (count + 1) / (B + 1)")
    p.add_argument("--save-null", help="write the empirical null to this file")
    p.set_defaults(func=cmd_combine_dep)

    p = sub.add_parser("microbiome", parents=[common], help="MiRKAT + MiHC combined test")
    p.add_argument("--y", required=True, help="response CSV")
    p.add_argument("--x", required=True, help="covariate CSV")
    p.add_argument("--z", required=True, help="OTU count CSV with a header of OTU ids")
    p.add_argument("--kind", choices=("auto", "continuous", "binary"), default="auto")
    method_arg(p)
    p.add_argument("--tests", nargs="+", choices=TESTS, default=list(TESTS))
    p.add_argument("-B", type=int, default=500)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--resamples", type=int, default=1000, help="MiHC null resamples")
    p.add_argument("--independent", action="store_true",
                   help="also report combinations that assume independence")
    p.set_defaults(func=cmd_microbiome)

    p = sub.add_parser("simulate", parents=[common], help="size or power experiment")
    p.add_argument("scenario", help="key = value scenario file")
    p.add_argument("--mode", choices=("auto", "size", "power"), default="auto")
    p.add_argument("--reps", type=int)
    p.add_argument("-B", type=int)
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a scenario key")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("counterexample", parents=[common], help="Cauchy counterexample sizes")
    p.add_argument("--reps", type=int, default=100_000)
    p.add_argument("-B", type=int, default=1_000_000)
    p.add_argument("--alpha-min", type=float, default=0.001)
    p.add_argument("--alpha-max", type=float, default=0.3)
    p.add_argument("--alpha-step", type=float, default=0.005)
    p.set_defaults(func=cmd_counterexample)

    p = sub.add_parser("efficiency", parents=[common], help="bivariate normal power grid")
    p.add_argument("--rho", type=_floats, default=[0.0, 0.3, 0.6, 0.9])
    p.add_argument("--effect", type=_floats, default=[0.5, 1.0, 2.0],
                   help="sqrt(n) (mu1 - mu0) values")
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--reps", type=int, default=100_000)
    p.add_argument("-B", type=int, default=100_000)
    p.set_defaults(func=cmd_efficiency)
    return parser


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        if args.seed is None and args.func is not cmd_simulate:
            args.seed = DEFAULT_SEED
        args.func(args)
    except DataValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3
    except (ConfigurationError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
