"""The shipped acceptance suite, one test per criterion.

The suite runs once per session with a single worker; criterion 9 reruns
it with two workers and compares the reports.
"""
import json
import math
import time
from importlib import resources

import pytest

from conftest import record
from mslevy.experiments import load_report, load_suite, persist, report_json, run_suite

LN23 = math.log(2.0) / math.log(3.0)


def _suite_path():
    return str(resources.files("mslevy").joinpath("data/acceptance.json"))


@pytest.fixture(scope="session")
def acceptance(tmp_path_factory):
    suite = load_suite(_suite_path())
    report = run_suite(suite["checks"], workers=1, log=print)
    out = tmp_path_factory.mktemp("acceptance")
    persist(report, str(out))
    return report, out


def _checks(report, criterion):
    found = [c for c in report.checks if c["criterion"] == criterion]
    assert found, f"no checks for criterion {criterion}"
    return found


def _seconds(report, checks):
    return sum(report.timings[c["name"]] for c in checks)


def _verdict(criterion, conditions, detail):
    ok = all(conditions.values())
    failed = [k for k, v in conditions.items() if not v]
    record(criterion, ok, detail + (f"  failed: {', '.join(failed)}" if failed else ""))
    assert ok, f"criterion {criterion}: {failed} ({detail})"


def test_criterion_1_c_alpha(acceptance):
    report, _ = acceptance
    (c,) = _checks(report, "1")
    secs = _seconds(report, [c])
    s = c["summary"]
    _verdict("1", {"rel error <= 1e-6": c["passed"] and s["max_rel_error"] <= 1e-6, "runtime < 5 s": secs < 5},
             f"max rel error {s['max_rel_error']:.2e} over 7 alphas, {secs:.1f} s")


def test_criterion_2_identity(acceptance):
    report, _ = acceptance
    (c,) = _checks(report, "2")
    secs = _seconds(report, [c])
    s = c["summary"]
    _verdict("2", {"residual < 1e-3": c["passed"] and s["max_residual"] < 1e-3,
                   "N = 1e4, 10 seeds": s["terms"] == 10000 and s["seeds"] == 10,
                   "runtime < 60 s": secs < 60},
             f"max |X-Y-Z| {s['max_residual']:.2e}, {secs:.1f} s")


def test_criterion_3_ecf(acceptance):
    report, _ = acceptance
    (c,) = _checks(report, "3")
    secs = _seconds(report, [c])
    s = c["summary"]
    _verdict("3", {"deviation < 3/sqrt(M)": c["passed"] and s["max_deviation"] < 3 / math.sqrt(1e5),
                   "M = 1e5": s["replicates"] == 100000, "runtime < 300 s": secs < 300},
             f"max deviation {s['max_deviation']:.4f} vs {s['bound']:.4f}, M={s['replicates']}, {secs:.1f} s")


def test_criterion_4_stable_dimension(acceptance):
    report, _ = acceptance
    z, x = _checks(report, "4")
    secs = _seconds(report, [z, x])
    zm, xm = z["summary"]["median"], x["summary"]["median"]
    _verdict("4", {"Z median in 0.7 +- 0.1": abs(zm - 0.7) <= 0.1 and z["passed"],
                   "X median in [0.85, 1.0]": 0.85 <= xm <= 1.0 and x["passed"],
                   "X prediction 1": x["summary"]["prediction"] == 1.0,
                   "runtime < 900 s": secs < 900},
             f"Z median {zm:.3f}, X median {xm:.3f}, {secs:.1f} s")


def test_criterion_5_multistable_dimension(acceptance):
    report, _ = acceptance
    (c,) = _checks(report, "5")
    s = c["summary"]
    pred, med, alt = s["prediction"], s["median"], s["alternatives"]["alpha_lower_times_dim"]
    _verdict("5", {"prediction 0.9": abs(pred - 0.9) < 1e-9,
                   "median in 0.9 +- 0.1": c["passed"] and abs(med - pred) <= 0.1,
                   "alternative 3 tolerances away": abs(pred - alt) >= 3 * s["tolerance"],
                   "closer to prediction than alternative": abs(med - pred) < abs(med - alt)},
             f"median {med:.3f} (prediction {pred}, alternative {alt}), {report.timings[c['name']]:.1f} s")


def test_criterion_6_cantor_image(acceptance):
    report, _ = acceptance
    (c,) = _checks(report, "6")
    s = c["summary"]
    med, alt = s["median"], s["alternatives"]["alpha_lower_times_dim"]
    _verdict("6", {"prediction ln2/ln3": abs(s["prediction"] - LN23) < 1e-9,
                   "median in ln2/ln3 +- 0.1": c["passed"] and abs(med - LN23) <= 0.1,
                   "alpha*dim alternative excluded": abs(med - alt) > 0.1},
             f"median {med:.3f} vs {LN23:.4f}; alternative {alt:.3f}")


def test_criterion_7_lemma3(acceptance):
    report, _ = acceptance
    checks = _checks(report, "7")
    secs = _seconds(report, checks)
    agree = max(c["summary"]["agreement"] for c in checks)
    excess = max(c["summary"]["max_spread_excess"] for c in checks)
    _verdict("7", {"six variants within 0.01": agree <= 0.01,
                   "spread <= K/n": excess <= 1e-12,
                   "both sets pass": all(c["passed"] for c in checks), "runtime < 10 s": secs < 10},
             f"worst agreement {agree:.2e}, worst spread excess {excess:.1e}, {secs:.1f} s")


def test_criterion_8_moment_scaling(acceptance):
    report, _ = acceptance
    checks = _checks(report, "8")
    secs = _seconds(report, checks)
    parts = [f"{c['name']} {c['summary']['slope']:+.3f}>={c['summary']['bound']:+.3f}" for c in checks]
    cond = {c["name"]: c["passed"] and c["summary"]["slope"] >= c["summary"]["bound"]
            and c["summary"]["replicates"] == 10000 for c in checks}
    cond["runtime < 600 s"] = secs < 600
    _verdict("8", cond, "; ".join(parts) + f", {secs:.1f} s")


def test_criterion_9_determinism(acceptance, tmp_path):
    report, out = acceptance
    first = load_report(str(out))
    t0 = time.perf_counter()
    again = run_suite(load_suite(_suite_path())["checks"], workers=2)
    secs = time.perf_counter() - t0
    persist(again, str(tmp_path))
    second = load_report(str(tmp_path))
    for d in (first, second):
        d.pop("timestamp")
    same = json.dumps(first, sort_keys=True) == json.dumps(second, sort_keys=True)
    tables_same = all((out / rel).read_bytes() == (tmp_path / rel).read_bytes() for rel in report.tables)
    _verdict("9", {"report identical": same, "tables identical": tables_same,
                   "suite passed": report.passed and again.passed},
             f"workers 1 vs 2 over {len(report.checks)} checks, rerun {secs:.0f} s")


def test_report_is_strict_json(acceptance):
    report, out = acceptance
    text = (out / "report.json").read_text()
    assert text == report_json(report)
    json.loads(text, parse_constant=lambda c: pytest.fail(f"non-standard constant {c}"))
