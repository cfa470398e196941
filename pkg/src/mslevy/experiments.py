"""Monte Carlo experiment harness and report persistence.

A suite is a list of checks. Each check expands into independent tasks
(one seed, or a fixed-size block of seeds) whose results are reduced in
seed order, so reports do not depend on how many worker processes ran the
tasks.
"""
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
import copy
import csv
import ctypes
import ctypes.util
import datetime as _dt
import io
import json
import math
import os
import platform
import time

import numpy as np
import scipy
from scipy import stats

from . import __version__
from .config import alpha_from_json, alpha_to_json, set_from_json, set_to_json
from .dimension import default_fit_range, fit_dim, image, localized_dim, scale_ladder
from .errors import DegenerateFitError, PersistError
from .quadrature import sine_power_integral
from .sets import (Interval, alpha_bounds, exact_dim, hull_alpha_bounds, lemma3_scan,
                   predict_dim_X, predict_dim_Z, spread_check)
from .series import TruncationPolicy, _stable_terms, _z_terms, generate, masked_sum, sample_path
from .stable_core import AlphaSpec, CharFnQuery, c_alpha, log_phi_X_increment, log_phi_Z_increment

SCHEMA_VERSION = 1
SEED_BLOCK = 250
DEFAULT_NSEQ = [64, 128, 256, 512, 1024, 2048, 4096]
KINDS = ("calpha", "identity", "ecf", "dimension", "partition", "lemma1", "lemma2")
WORKERS_ENV = "MSLEVY_WORKERS"


def expand_seeds(spec):
    """Seeds from a list or from ``{"start": s, "count": m}``."""
    if isinstance(spec, dict):
        return list(range(int(spec.get("start", 0)), int(spec.get("start", 0)) + int(spec["count"])))
    return [int(s) for s in spec]


@dataclass
class ExperimentConfig:
    """One check of a suite. Fields not used by a kind are ignored."""

    name: str
    kind: str
    alpha: AlphaSpec = None
    set: object = None
    tag: str = "Z"
    level: int = 12
    truncation: TruncationPolicy = field(default_factory=TruncationPolicy)
    seeds: list = field(default_factory=list)
    theta: list = field(default_factory=lambda: [0.5, 1.0, 2.0, 4.0])
    increments: list = field(default_factory=list)
    tolerance: float = 0.1
    band: list = None
    estimator: dict = field(default_factory=dict)
    nseq: list = field(default_factory=lambda: list(DEFAULT_NSEQ))
    params: dict = field(default_factory=dict)
    criterion: str = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown check kind {self.kind!r}")
        needs_seeds = self.kind in ("identity", "ecf", "dimension", "lemma1", "lemma2")
        if needs_seeds and not self.seeds:
            raise ValueError(f"check {self.name!r} needs a nonempty seed list")

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        kw = {"name": d.pop("name"), "kind": d.pop("kind")}
        if "alpha" in d:
            kw["alpha"] = alpha_from_json(d.pop("alpha"))
        if "set" in d:
            kw["set"] = set_from_json(d.pop("set"))
        if "truncation" in d:
            t = d.pop("truncation")
            kw["truncation"] = TruncationPolicy(t.get("mode", "fixed"), t["value"])
        if "seeds" in d:
            kw["seeds"] = expand_seeds(d.pop("seeds"))
        for key in ("tag", "level", "theta", "increments", "tolerance", "band", "estimator",
                    "nseq", "params", "criterion"):
            if key in d:
                kw[key] = d.pop(key)
        if d:
            raise ValueError(f"unknown keys in check {kw['name']!r}: {sorted(d)}")
        return cls(**kw)

    def to_dict(self):
        out = {"name": self.name, "kind": self.kind}
        if self.alpha is not None:
            out["alpha"] = alpha_to_json(self.alpha)
        if self.set is not None:
            out["set"] = set_to_json(self.set)
        out.update({
            "tag": self.tag, "level": self.level,
            "truncation": {"mode": self.truncation.mode, "value": self.truncation.value},
            "seeds": _compact_seeds(self.seeds), "theta": list(self.theta),
            "increments": list(self.increments), "tolerance": self.tolerance, "band": self.band,
            "estimator": dict(self.estimator), "nseq": list(self.nseq), "params": dict(self.params),
            "criterion": self.criterion,
        })
        return out

    @property
    def terms(self):
        return self.truncation.terms(self.alpha)


def _compact_seeds(seeds):
    if len(seeds) > 2 and seeds == list(range(seeds[0], seeds[0] + len(seeds))):
        return {"start": seeds[0], "count": len(seeds)}
    return list(seeds)


def _blocks(seeds, size=SEED_BLOCK):
    return [seeds[i:i + size] for i in range(0, len(seeds), size)]


def _clean(x):
    """JSON-safe copy: NaN and infinities become None, numpy scalars become Python."""
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    return x


# -- C_alpha --------------------------------------------------------------

def _calpha_task(cfg, _):
    rows = []
    for a in cfg.params.get("alphas", [0.2, 0.5, 0.99, 1.0, 1.01, 1.5, 1.9]):
        closed = c_alpha(a)
        quad = sine_power_integral(a) ** (-1.0 / a)
        rows.append([a, closed, quad, abs(closed - quad) / abs(quad)])
    return rows


def _calpha_finish(cfg, results):
    rows = results[0]
    rtol = cfg.params.get("rtol", 1e-6)
    worst = max(r[3] for r in rows)
    return {"passed": worst <= rtol, "summary": {"max_rel_error": worst, "rtol": rtol},
            "tables": {"calpha": (["alpha", "closed_form", "quadrature", "rel_error"], rows)}}


# -- decomposition identity -------------------------------------------------

def _identity_task(cfg, seed):
    grid = np.linspace(0.0, 1.0, int(cfg.params.get("grid", 101)))
    tol = float(cfg.params.get("quad_tol", 1e-6))
    r = generate(seed, cfg.terms)
    x = sample_path(r, cfg.alpha, grid, "X").values
    y = sample_path(r, cfg.alpha, grid, "Y", quad_tol=tol).values
    z = sample_path(r, cfg.alpha, grid, "Z").values
    return [seed, float(np.max(np.abs(x - y - z))), float(np.max(np.abs(x)))]


def _identity_finish(cfg, results):
    worst = max(r[1] for r in results)
    tol = cfg.tolerance
    return {"passed": worst < tol, "summary": {"max_residual": worst, "tolerance": tol,
                                               "terms": cfg.terms, "seeds": len(results)},
            "tables": {"residuals": (["seed", "max_residual", "max_abs_X"], results)}}


# -- empirical characteristic functions -------------------------------------

def _increments(cfg):
    out = []
    for inc in cfg.increments:
        tag, s, t = inc["tag"], float(inc["s"]), float(inc["t"])
        if tag not in ("X", "Z") or not 0.0 <= s <= t <= 1.0:
            raise ValueError(f"bad increment {inc!r}")
        out.append((tag, s, t))
    return out


def increment_values(r, alpha, incs):
    """X(t) - X(s) or Z(t) - Z(s) on one realisation, for each increment.

    Each increment uses the same masked sums as the single-time evaluators.
    """
    v = r.jump_locations
    zterms = _z_terms(r, alpha) if any(tag == "Z" for tag, _, _ in incs) else None
    field_terms = {}

    def xterms(t):
        if t not in field_terms:
            field_terms[t] = _stable_terms(r, float(alpha.eval(t)))
        return field_terms[t]

    vals = []
    for tag, s, t in incs:
        if tag == "Z":
            vals.append(masked_sum(zterms, (v > s) & (v <= t)))
        else:
            val = masked_sum(xterms(t), v <= t)
            if s > 0.0:
                val -= masked_sum(xterms(s), v <= s)
            vals.append(val)
    return vals


def _ecf_task(cfg, seeds):
    incs = _increments(cfg)
    n = cfg.terms
    return np.array([increment_values(generate(sd, n), cfg.alpha, incs) for sd in seeds])


def ecf_target(alpha, tag, s, t, theta):
    q = CharFnQuery(s, t, float(theta))
    if tag == "Z":
        return math.exp(log_phi_Z_increment(alpha, q))
    return math.exp(log_phi_X_increment(alpha, q))


def _ecf_finish(cfg, results):
    values = np.concatenate(results, axis=0)
    m = values.shape[0]
    bound = 3.0 / math.sqrt(m)
    rows = []
    for j, (tag, s, t) in enumerate(_increments(cfg)):
        for th in cfg.theta:
            ecf = float(np.mean(np.cos(th * values[:, j])))
            target = ecf_target(cfg.alpha, tag, s, t, th)
            rows.append([tag, s, t, th, ecf, target, abs(ecf - target)])
    worst = max(r[6] for r in rows)
    warnings = [] if m >= 1000 else [f"only {m} replicates; the 3/sqrt(M) band is unreliable"]
    return {"passed": worst <= bound, "warnings": warnings,
            "summary": {"max_deviation": worst, "bound": bound, "replicates": m, "terms": cfg.terms},
            "tables": {"ecf": (["tag", "s", "t", "theta", "ecf", "target", "deviation"], rows)}}


# -- dimension recovery -----------------------------------------------------

def _estimator_kw(cfg):
    e = cfg.estimator
    return {"rule": e.get("rule", "window"), "min_count": e.get("min_count", 16),
            "headroom": e.get("headroom", 8)}


def _dimension_task(cfg, seed):
    r = generate(seed, cfg.terms)
    cloud = image(r, cfg.alpha, cfg.set, cfg.level, cfg.tag)
    kw = _estimator_kw(cfg)
    cells = int(cfg.estimator.get("cells", 1))
    try:
        local, per_cell = localized_dim(cloud, cells, **kw)
    except DegenerateFitError:
        local, per_cell = float("nan"), []
    scales, counts = scale_ladder(cloud)
    rng = default_fit_range(cloud, scales, counts, kw["rule"], kw["min_count"], kw["headroom"])
    try:
        glob = fit_dim(scales, counts, rng) if rng is not None else None
    except DegenerateFitError:
        glob = None
    return {"seed": seed, "estimate": local, "cells": per_cell,
            "global": None if glob is None else glob.to_dict(), "points": len(cloud)}


def lower_bound_flag(alpha, e):
    lo, hi = hull_alpha_bounds(alpha, e)
    if hi - lo > 0.5 * lo * lo:
        return [f"alpha range over the hull ({hi - lo:.3g}) exceeds alpha_*^2/2 ({0.5 * lo * lo:.3g}); "
                "the lower-bound hypothesis for X does not hold"]
    return []


def _dimension_finish(cfg, results):
    est = np.array([r["estimate"] for r in results], dtype=float)
    finite = est[np.isfinite(est)]
    warnings = []
    if finite.size < est.size:
        warnings.append(f"{est.size - finite.size} seeds gave no usable fit")
    median = float(np.median(finite)) if finite.size else float("nan")
    q1, q3 = (np.percentile(finite, [25, 75]) if finite.size else (np.nan, np.nan))
    pred = (predict_dim_Z if cfg.tag == "Z" else predict_dim_X)(cfg.alpha, cfg.set, cfg.nseq)
    warnings.extend(pred.warnings)
    if cfg.tag == "X":
        warnings.extend(lower_bound_flag(cfg.alpha, cfg.set))
    if cfg.band is not None:
        lo, hi = cfg.band
        passed = bool(lo <= median <= hi)
    else:
        passed = bool(abs(median - pred.dim) <= cfg.tolerance)
    a_lo, a_hi = alpha_bounds(cfg.alpha, cfg.set)
    dim_e = exact_dim(cfg.set)
    glob = [r["global"]["slope"] if r["global"] else float("nan") for r in results]
    summary = {
        "median": median, "iqr": [float(q1), float(q3)], "prediction": pred.dim,
        "prediction_report": pred.to_dict(), "tolerance": cfg.tolerance, "band": cfg.band,
        "global_median": float(np.nanmedian(glob)) if np.isfinite(glob).any() else float("nan"),
        "alternatives": {"alpha_lower_times_dim": min(1.0, a_lo * dim_e),
                         "alpha_upper_times_dim": min(1.0, a_hi * dim_e)},
        "terms": cfg.terms, "level": cfg.level, "estimator": _estimator_kw(cfg) | {
            "cells": int(cfg.estimator.get("cells", 1))},
    }
    per_seed = []
    ladders = []
    for r in results:
        g = r["global"]
        per_seed.append([r["seed"], r["estimate"], g["slope"] if g else float("nan"),
                         g["r2"] if g else float("nan"), g["stderr"] if g else float("nan"), r["points"]])
        if g:
            i0, i1 = g["fit_range"]
            for k, (s, c) in enumerate(zip(g["scales"], g["counts"])):
                ladders.append([r["seed"], -math.log(s), math.log(c), int(i0 <= k <= i1)])
    return {"passed": passed, "warnings": warnings, "summary": summary,
            "seeds": [{"seed": r["seed"], "estimate": r["estimate"], "cells": r["cells"],
                       "global": r["global"]} for r in results],
            "tables": {"per_seed": (["seed", "estimate", "global_slope", "global_r2", "global_stderr",
                                     "points"], per_seed),
                       "ladders": (["seed", "log_inv_delta", "log_count", "in_fit"], ladders)}}


# -- partition scan -----------------------------------------------------------

def _partition_task(cfg, _):
    scan = lemma3_scan(cfg.alpha, cfg.set, cfg.nseq)
    return {k: v.to_dict() for k, v in scan.items()}, spread_check(scan)


def _partition_finish(cfg, results):
    scan, spreads = results[0]
    lip = cfg.alpha.lipschitz_bound
    last = [v["values"][-1] for v in scan.values()]
    agree = max(last) - min(last)
    slack = float(cfg.params.get("float_slack", 1e-12))
    worst = 0.0
    rows = []
    names = list(scan)
    for j, row in enumerate(spreads):
        n = row["n"]
        pair_vals = [v for k, v in row.items() if " - " in k]
        excess = max(abs(v) - lip / n for v in pair_vals)
        worst = max(worst, excess)
        rows.append([n] + [scan[k]["values"][j] for k in names] + pair_vals + [lip / n])
    agree_tol = cfg.params.get("agree_tol", 0.01)
    header = ["n"] + names + [k for k in spreads[0] if " - " in k] + ["K_over_n"]
    return {"passed": agree <= agree_tol and worst <= slack,
            "summary": {"limits": dict(zip(names, last)), "agreement": agree, "agree_tol": agree_tol,
                        "max_spread_excess": worst, "lipschitz": lip},
            "tables": {"scan": (header, rows)}}


# -- moment scaling -----------------------------------------------------------

def _ladder(cfg):
    p = cfg.params
    top = float(p.get("top", 0.25))
    count = int(p.get("count", 8))
    return top * 2.0 ** -np.arange(count)


def _lemma1_task(cfg, seeds):
    s = float(cfg.params["start"])
    beta = float(cfg.params["beta"])
    gaps = _ladder(cfg)
    times = np.concatenate([[s], s + gaps[::-1]])
    out = np.empty((len(seeds), gaps.size))
    for j, sd in enumerate(seeds):
        vals = sample_path(generate(sd, cfg.terms), cfg.alpha, times, cfg.tag).values
        inc = np.abs(vals[1:] - vals[0])[::-1]
        with np.errstate(divide="ignore"):
            out[j] = inc ** -beta   # a gap without jumps gives inf; reported in the summary
    return out


def _lemma2_task(cfg, seeds):
    a = float(cfg.params["start"])
    p = float(cfg.params["p"])
    pts = int(cfg.params.get("grid_points", 1024))
    lengths = _ladder(cfg)
    grid = np.unique(np.concatenate([np.linspace(a, a + ln, pts) for ln in lengths]))
    ends = np.searchsorted(grid, a + lengths, side="right")
    out = np.empty((len(seeds), lengths.size))
    for j, sd in enumerate(seeds):
        vals = sample_path(generate(sd, cfg.terms), cfg.alpha, grid, cfg.tag).values
        hi = np.maximum.accumulate(vals)
        lo = np.minimum.accumulate(vals)
        out[j] = (hi[ends - 1] - lo[ends - 1]) ** p
    return out


def _scaling_finish(cfg, results, lemma):
    samples = np.concatenate(results, axis=0)
    m = samples.shape[0]
    ladder = _ladder(cfg)
    warnings = []
    blank = int(np.count_nonzero(~np.isfinite(samples).all(axis=1)))
    if blank:
        # the truncated series has no jump in some interval, so the moment is infinite
        warnings.append(f"{blank} replicates have an interval without jumps; raise the term count")
        return {"passed": False, "warnings": warnings,
                "summary": {"slope": float("nan"), "replicates": m, "terms": cfg.terms,
                            "replicates_without_jumps": blank}}
    mean = samples.mean(axis=0)
    se = samples.std(axis=0, ddof=1) / math.sqrt(m)
    fit = stats.linregress(np.log(ladder), np.log(mean))
    start = float(cfg.params["start"])
    hull = Interval(start, start + float(ladder[0]))
    lo, hi = alpha_bounds(cfg.alpha, hull)
    if lemma == 1:
        beta = float(cfg.params["beta"])
        bound = -beta / lo - 0.1
        reference = -beta / lo
        extra = {"beta": beta, "alpha_lower": lo}
    else:
        p = float(cfg.params["p"])
        eps = float(cfg.params.get("eps", 0.05))
        bound = p / (max(1.0, hi) + eps) - 0.1
        reference = p / lo if cfg.alpha.is_constant else float("nan")
        extra = {"p": p, "eps": eps, "alpha_upper": hi, "grid_points": int(cfg.params.get("grid_points", 1024))}
    rel = se / mean
    if np.any(rel > 0.2):
        warnings.append(f"unstable estimate: relative stderr up to {float(np.max(rel)):.3g}")
    if lemma == 2 and np.any(np.diff(mean) > 0.0):
        warnings.append("E[sup^p] is not monotone along the ladder")
    rows = [[float(g), float(mu), float(e)] for g, mu, e in zip(ladder, mean, se)]
    summary = {"slope": float(fit.slope), "slope_stderr": float(fit.stderr), "bound": bound,
               "stable_reference": reference, "replicates": m, "terms": cfg.terms} | extra
    return {"passed": bool(fit.slope >= bound), "warnings": warnings, "summary": summary,
            "tables": {"moments": (["length", "mean", "stderr"], rows)}}


RUNNERS = {
    "calpha": (lambda cfg: [None], _calpha_task, _calpha_finish),
    "identity": (lambda cfg: list(cfg.seeds), _identity_task, _identity_finish),
    "ecf": (lambda cfg: _blocks(cfg.seeds), _ecf_task, _ecf_finish),
    "dimension": (lambda cfg: list(cfg.seeds), _dimension_task, _dimension_finish),
    "partition": (lambda cfg: [None], _partition_task, _partition_finish),
    "lemma1": (lambda cfg: _blocks(cfg.seeds), _lemma1_task, lambda c, r: _scaling_finish(c, r, 1)),
    "lemma2": (lambda cfg: _blocks(cfg.seeds), _lemma2_task, lambda c, r: _scaling_finish(c, r, 2)),
}


def _run_task(args):
    cfg, payload = args
    return RUNNERS[cfg.kind][1](cfg, payload)


# -- reports ---------------------------------------------------------------------

@dataclass
class Report:
    checks: list
    tables: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    timestamp: str = ""
    environment: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(c["passed"] for c in self.checks)

    def check(self, name):
        for c in self.checks:
            if c["name"] == name:
                return c
        raise KeyError(name)

    def to_dict(self):
        return _clean({"schema_version": SCHEMA_VERSION, "timestamp": self.timestamp,
                       "environment": self.environment, "passed": self.passed, "checks": self.checks})


def environment():
    return {"package": "mslevy", "version": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__}


def _finish_check(cfg, results):
    out = RUNNERS[cfg.kind][2](cfg, results)
    tables = out.pop("tables", {})
    entry = {"name": cfg.name, "kind": cfg.kind, "criterion": cfg.criterion, "passed": bool(out.pop("passed")),
             "warnings": out.pop("warnings", []), "config": cfg.to_dict()}
    entry.update(out)
    files = {}
    for tname, table in tables.items():
        fname = f"tables/{cfg.name}_{tname}.csv"
        files[tname] = fname
        entry.setdefault("tables", {})[tname] = fname
    return entry, {files[k]: v for k, v in tables.items()}


def run_check(cfg, workers=1, pool=None):
    """Run one check; returns (report entry, tables)."""
    payloads = RUNNERS[cfg.kind][0](cfg)
    light = copy.copy(cfg)
    light.seeds = []   # the payloads carry the seeds; avoid pickling the full list per task
    tasks = [(light, payload) for payload in payloads]
    if pool is None:
        results = [_run_task(t) for t in tasks]
    else:
        results = list(pool.map(_run_task, tasks))
    return _finish_check(cfg, results)


def run_dimension_experiment(cfg, tag=None):
    if tag is not None:
        cfg.tag = tag
    return run_check(cfg)[0]


def ecf_validation(cfg, increment=None, tag=None):
    if increment is not None:
        cfg.increments = [{"tag": tag or cfg.tag, "s": increment[0], "t": increment[1]}]
    return run_check(cfg)[0]


def lemma1_scaling(cfg):
    return run_check(cfg)[0]


def lemma2_scaling(cfg):
    return run_check(cfg)[0]


def identity_check(cfg):
    return run_check(cfg)[0]


def load_suite(path):
    with open(path) as fh:
        d = json.load(fh)
    return parse_suite(d)


def parse_suite(d):
    checks = []
    for c in d["checks"]:
        c = dict(c)
        if c.pop("enabled", True):
            checks.append(ExperimentConfig.from_dict(c))
    return {"output": d.get("output"), "checks": checks}


def tune_allocator():
    """Keep large numpy temporaries on the glibc heap.

    Monte Carlo loops allocate and free many arrays of a few hundred
    kilobytes; by default glibc serves those with fresh mmaps and pays page
    faults on every touch. Raising the mmap and trim thresholds roughly
    halves the per-replicate cost. No effect (and no error) off glibc.
    """
    try:
        libc = ctypes.CDLL(ctypes.util.find_library("c") or "libc.so.6")
        libc.mallopt(-1, 1 << 28)   # M_TRIM_THRESHOLD
        libc.mallopt(-3, 1 << 26)   # M_MMAP_THRESHOLD
    except (OSError, AttributeError):
        pass


def default_workers():
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def run_suite(checks, workers=None, log=None, only=None):
    """Run every check in order. Failures inside a check are recorded in the
    report instead of aborting the suite."""
    workers = default_workers() if workers is None else max(1, int(workers))
    entries, tables, timings = [], {}, {}
    tune_allocator()
    pool = ProcessPoolExecutor(max_workers=workers, initializer=tune_allocator) if workers > 1 else None
    try:
        for cfg in checks:
            if only and cfg.name not in only:
                continue
            t0 = time.perf_counter()
            try:
                entry, tab = run_check(cfg, workers, pool)
            except Exception as exc:   # recorded, suite continues
                entry = {"name": cfg.name, "kind": cfg.kind, "criterion": cfg.criterion, "passed": False,
                         "warnings": [], "error": f"{type(exc).__name__}: {exc}", "config": cfg.to_dict()}
                tab = {}
            timings[cfg.name] = time.perf_counter() - t0
            entries.append(entry)
            tables.update(tab)
            if log is not None:
                log(f"{'PASS' if entry['passed'] else 'FAIL'} {cfg.name} ({timings[cfg.name]:.1f} s)")
    finally:
        if pool is not None:
            pool.shutdown()
    stamp = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    return Report(entries, tables, timings, stamp, environment())


def _csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def _atomic_write(path, text):
    tmp = f"{path}.tmp{os.getpid()}"
    try:
        with open(tmp, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise PersistError(f"cannot write {path}: {exc.strerror or exc}") from exc


def report_json(report):
    return json.dumps(report.to_dict(), indent=2, sort_keys=True, allow_nan=False) + "\n"


def persist(report, path):
    """Write report.json, timings.json and tables/*.csv below directory ``path``."""
    try:
        os.makedirs(os.path.join(path, "tables"), exist_ok=True)
    except OSError as exc:
        raise PersistError(f"cannot create {path}: {exc.strerror or exc}") from exc
    for rel, (header, rows) in sorted(report.tables.items()):
        _atomic_write(os.path.join(path, rel), _csv_text(header, rows))
    _atomic_write(os.path.join(path, "timings.json"),
                  json.dumps({k: round(v, 3) for k, v in report.timings.items()}, indent=2) + "\n")
    _atomic_write(os.path.join(path, "report.json"), report_json(report))
    return os.path.join(path, "report.json")


def load_report(path):
    """Read back report.json from a directory (or the file itself)."""
    if os.path.isdir(path):
        path = os.path.join(path, "report.json")
    with open(path) as fh:
        d = json.load(fh)
    if d.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"{path}: unsupported schema version {d.get('schema_version')!r}")
    return d
