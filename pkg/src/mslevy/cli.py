"""Command-line front end.

Exit codes: 0 success or all checks passed, 1 runtime error or a failed
check, 2 convergence warning, 64 usage error.

Specification grammar for --alpha and --set::

    const:C | affine:A,B | cubic:V0,V1,...
    interval:A,B | point:A | cantor:A,B,LAMBDA | empty | union:[SET;SET;...]

Both flags also accept the JSON fragments used in experiment configs, for
example '{"kind": "cantor", "a": 0, "b": 1, "lambda": 0.3333333333}'.
"""
import argparse
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .config import alpha_arg, set_arg
from .dimension import PointCloud, default_fit_range, fit_dim, image, localized_dim, scale_ladder
from .errors import DegenerateFitError
from .experiments import (WORKERS_ENV, ExperimentConfig, default_workers, load_suite, persist,
                          run_check, run_suite)
from .series import TAGS, generate, sample_path
from .sets import lemma3_scan, predict_dim_X, predict_dim_Z, spread_check

EXIT_OK, EXIT_FAIL, EXIT_WARN, EXIT_USAGE = 0, 1, 2, 64


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _nseq(text):
    vals = [int(v) for v in text.split(",") if v.strip()]
    if not vals or any(b <= a for a, b in zip(vals, vals[1:])) or vals[0] < 1:
        raise ValueError("nseq must be increasing positive integers")
    return vals


def _floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise ValueError("must be >= 1")
    return v


def _emit(obj):
    sys.stdout.write(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _finite(x):
    return x if isinstance(x, (int, str)) or x is None or math.isfinite(x) else None


# -- subcommands -----------------------------------------------------------

def cmd_simulate(args):
    r = generate(args.seed, args.terms)
    times = np.linspace(0.0, 1.0, args.grid) if args.grid > 1 else np.zeros(1)
    path = sample_path(r, args.alpha, times, args.process, quad_tol=args.quad_tol)
    if args.out.endswith(".bin"):
        path.write_binary(args.out)
    else:
        path.to_csv(args.out)
    print(args.out)
    return EXIT_OK


def _predict(alpha, e, target, nseq):
    return (predict_dim_Z if target == "Z" else predict_dim_X)(alpha, e, nseq)


def cmd_predict(args):
    rep = _predict(args.alpha, args.set, args.target, args.nseq)
    out = rep.to_dict()
    _emit(out)
    return EXIT_OK if rep.converged and (rep.companion is None or rep.companion.converged) else EXIT_WARN


def cmd_partition_scan(args):
    scan = lemma3_scan(args.alpha, args.set, args.nseq)
    spreads = spread_check(scan)
    lip = args.alpha.lipschitz_bound
    ok = all(abs(v) <= lip / row["n"] + 1e-12 for row in spreads for k, v in row.items() if " - " in k)
    _emit({"variants": {k: v.to_dict() for k, v in scan.items()}, "spreads": spreads,
           "lipschitz": lip, "spread_bound_holds": ok})
    converged = all(v.converged for v in scan.values())
    return EXIT_OK if converged else EXIT_WARN


def _read_points(path):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    times = data[:, 0] if data.shape[1] > 1 else None
    return PointCloud(data[:, -1], times, {"source": os.path.basename(path)})


def cmd_dim(args):
    if args.points:
        cloud = _read_points(args.points)
    else:
        missing = [f for f in ("alpha", "set", "seed") if getattr(args, f) is None]
        if missing:
            raise _UsageError("dim needs --points or all of --alpha, --set, --seed")
        r = generate(args.seed, args.terms)
        cloud = image(r, args.alpha, args.set, args.level, args.process)
    kw = {"rule": args.rule, "min_count": args.min_count, "headroom": args.headroom}
    scales, counts = scale_ladder(cloud)
    rng = default_fit_range(cloud, scales, counts, **kw) if scales.size else None
    if rng is None:
        raise DegenerateFitError("no scales fall inside the fit range")
    est = fit_dim(scales, counts, rng)
    out = est.to_dict()
    if args.cells > 1:
        value, per_cell = localized_dim(cloud, args.cells, **kw)
        out["localized"] = {"cells": args.cells, "value": value, "per_cell": [_finite(v) for v in per_cell]}
    if args.out_json:
        est.to_json(args.out_json)
    if args.out_csv:
        est.to_csv(args.out_csv)
    _emit(out)
    return EXIT_OK


def cmd_cf_check(args):
    cfg = ExperimentConfig(
        name="cf_check", kind="ecf", alpha=args.alpha, seeds=list(range(args.seed, args.seed + args.replicates)),
        theta=args.theta, increments=[{"tag": args.tag, "s": args.s, "t": args.t}])
    cfg.truncation = type(cfg.truncation)("fixed", args.terms)
    entry, tables = run_check(cfg)
    rows = next(iter(tables.values()))[1]
    _emit({"passed": entry["passed"], "summary": entry["summary"], "warnings": entry["warnings"],
           "rows": [dict(zip(["tag", "s", "t", "theta", "ecf", "target", "deviation"], r)) for r in rows]})
    return EXIT_OK if entry["passed"] else EXIT_FAIL


def cmd_experiment(args):
    suite = load_suite(args.config)
    out = args.out or suite["output"] or "report"
    if not os.path.isabs(out) and args.out is None:
        out = os.path.join(os.getcwd(), out)
    report = run_suite(suite["checks"], workers=args.workers,
                       log=lambda m: print(m, file=sys.stderr), only=set(args.only or []))
    path = persist(report, out)
    for c in report.checks:
        print(f"{'PASS' if c['passed'] else 'FAIL'} {c['name']}" + (f"  ({c['error']})" if c.get("error") else ""))
    print(path)
    return EXIT_OK if report.passed else EXIT_FAIL


class _UsageError(Exception):
    pass


def build_parser():
    p = _Parser(prog="mslevy", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    s = sub.add_parser("simulate", help="write a sample path as CSV (or .bin cache)")
    s.add_argument("--alpha", type=alpha_arg, required=True)
    s.add_argument("--process", choices=TAGS, required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--terms", type=_positive_int, default=100000)
    s.add_argument("--grid", type=_positive_int, default=1025, help="number of uniform grid points on [0, 1]")
    s.add_argument("--quad-tol", type=float, default=1e-6, help="absolute tolerance for Y")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("predict", help="partition-formula dimension of X(E) or Z(E)")
    s.add_argument("--alpha", type=alpha_arg, required=True)
    s.add_argument("--set", type=set_arg, required=True)
    s.add_argument("--target", choices=("X", "Z"), required=True)
    s.add_argument("--nseq", type=_nseq, default=[64, 128, 256, 512, 1024, 2048, 4096])
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("partition-scan", help="all six partition sequences and their spreads")
    s.add_argument("--alpha", type=alpha_arg, required=True)
    s.add_argument("--set", type=set_arg, required=True)
    s.add_argument("--nseq", type=_nseq, default=[64, 128, 256, 512, 1024, 2048, 4096])
    s.set_defaults(func=cmd_partition_scan)

    s = sub.add_parser("dim", help="box-counting dimension of a point file or a simulated image")
    s.add_argument("--points", help="CSV with a header row; the last column holds the values")
    s.add_argument("--alpha", type=alpha_arg)
    s.add_argument("--set", type=set_arg)
    s.add_argument("--process", choices=("X", "Z"), default="Z")
    s.add_argument("--seed", type=int)
    s.add_argument("--terms", type=_positive_int, default=100000)
    s.add_argument("--level", type=int, default=12)
    s.add_argument("--rule", choices=("spacing", "window"), default="spacing")
    s.add_argument("--min-count", type=int, default=16)
    s.add_argument("--headroom", type=float, default=8.0)
    s.add_argument("--cells", type=_positive_int, default=1)
    s.add_argument("--out-json")
    s.add_argument("--out-csv")
    s.set_defaults(func=cmd_dim)

    s = sub.add_parser("cf-check", help="empirical characteristic function of one increment")
    s.add_argument("--alpha", type=alpha_arg, required=True)
    s.add_argument("--tag", choices=("X", "Z"), default="Z")
    s.add_argument("--s", type=float, default=0.0)
    s.add_argument("--t", type=float, default=1.0)
    s.add_argument("--theta", type=_floats, default=[0.5, 1.0, 2.0, 4.0])
    s.add_argument("--seed", type=int, required=True, help="first seed; replicates use consecutive seeds")
    s.add_argument("--replicates", type=_positive_int, default=1000)
    s.add_argument("--terms", type=_positive_int, default=50000)
    s.set_defaults(func=cmd_cf_check)

    s = sub.add_parser("experiment", help="run an experiment suite")
    esub = s.add_subparsers(dest="action", required=True, metavar="ACTION")
    r = esub.add_parser("run", help="run CONFIG.json and write report.json plus tables/*.csv")
    r.add_argument("config")
    r.add_argument("--out", help="output directory (default: the config's output entry)")
    r.add_argument("--workers", type=_positive_int, default=default_workers(),
                   help=f"worker processes (default from ${WORKERS_ENV}, else 1)")
    r.add_argument("--only", nargs="*", help="run only the named checks")
    r.set_defaults(func=cmd_experiment)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"mslevy: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:
        print(f"mslevy: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
