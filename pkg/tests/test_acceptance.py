"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` (the summary lines are written
even when pytest captures output).
"""

import io
import json
import math
import time

import numpy as np
import pytest

from csbp_genealogy import merger_rate, mrca_probability, small_time_verify
from csbp_genealogy.cli import execute
from csbp_genealogy.fixtures import feller, feller2, resolve_mechanism
from csbp_genealogy.particles import estimate_mrca


@pytest.fixture
def report(capsys):
    def emit(number, title, ok, elapsed, budget, detail=""):
        in_time = elapsed <= budget
        verdict = "PASS" if ok and in_time else "FAIL"
        with capsys.disabled():
            print(f"\n[{verdict}] criterion {number:>2}: {title} ({elapsed:.1f}s of {budget:.0f}s) {detail}")
        assert ok, detail
        assert in_time, f"took {elapsed:.1f}s, budget {budget}s"
    return emit


def cli_json(argv):
    buf = io.StringIO()
    code = execute(argv + ["--format", "json"], buf)
    doc = json.loads(buf.getvalue())
    return code, [dict(zip(doc["columns"], row)) for row in doc["rows"]]


def test_c01_gamma_identity(report):
    from csbp_genealogy import gamma_identity_check
    t0 = time.perf_counter()
    worst = max(abs(gamma_identity_check(j, z) - 1.0) for j in range(7) for z in (0.1, 1.0, 10.0))
    report(1, "gamma mixture identity", worst <= 1e-9, time.perf_counter() - t0, 5,
           f"max deviation {worst:.2e}")


def test_c02_gamma_factorial(report):
    t0 = time.perf_counter()
    code, rows = cli_json(["verify", "gamma"])
    worst = max(r["deviation"] for r in rows if r["check"] == "factorial")
    dims = {len(r["point"]) for r in rows if r["check"] == "factorial"}
    report(2, "gamma-factorial identity", code == 0 and worst <= 1e-8 and dims == {1, 2, 3},
           time.perf_counter() - t0, 30, f"max relative deviation {worst:.2e} over {len(rows)} rows")


def test_c03_discrete_poissonization(report):
    t0 = time.perf_counter()
    code, rows = cli_json(["verify", "discrete"])
    exact = all(r["lhs"] == r["rhs"] for r in rows if r["mode"] == "exact")
    report(3, "discrete Poissonization", code == 0 and exact and rows, time.perf_counter() - t0, 60,
           f"{len(rows)} model/sample/event checks, all exact")


@pytest.mark.slow
def test_c04_partition_identity(report):
    t0 = time.perf_counter()
    code, rows = cli_json(["verify", "partition", "--max-k", "4", "--max-m", "3"])
    worst = max(r["relative_gap"] for r in rows)
    mechs = {r["mechanism"] for r in rows}
    report(4, "forest partition identity", code == 0 and worst <= 1e-8 and {"feller3", "atom3"} <= mechs,
           time.perf_counter() - t0, 300, f"{len(rows)} cases, max relative gap {worst:.2e}")


def test_c05_semigroup(report):
    t0 = time.perf_counter()
    code, rows = cli_json(["verify", "semigroup"])
    per_mech = {}
    for r in rows:
        per_mech.setdefault(r["mechanism"], []).append(r["defect"])
    worst = max(max(v) for v in per_mech.values())
    ok = code == 0 and worst <= 1e-8 and all(len(v) == 27 for v in per_mech.values())
    report(5, "semigroup property", ok, time.perf_counter() - t0, 30,
           f"{len(per_mech)} mechanisms x 27 points, max defect {worst:.2e}")


@pytest.mark.slow
def test_c06_mrca_closed_form(report):
    exact = 1.0 - 3.0 * math.exp(-2.0)
    t0 = time.perf_counter()
    quad = mrca_probability(2, 1.0, 1.0, feller(0.5)).value
    t_quad = time.perf_counter() - t0
    est = estimate_mrca(feller(0.5), [1.0], 1.0, 2, (50, 100, 200), 100_000, seed=2024)
    t_mc = time.perf_counter() - t0 - t_quad
    row = est.rows[-1]
    allow = 3 * row.stderr + est.allowance(row.n)
    ok = abs(quad - exact) <= 1e-6 and abs(row.estimate - quad) <= allow and t_quad <= 10
    report(6, "MRCA closed form", ok, t_quad + t_mc, 600,
           f"quadrature gap {abs(quad - exact):.1e} in {t_quad:.2f}s; particles (n=200) "
           f"{row.estimate:.5f} vs allowance {allow:.4f}")


@pytest.mark.slow
def test_c07_small_time_rates(report):
    t0 = time.perf_counter()
    code, rows = cli_json(["verify", "small-time", "--case", "feller", "--case", "atom2",
                           "--t-grid", "4e-3,2e-3,1e-3,5e-4"])
    at_1e3 = [r for r in rows if r["t"] == 1e-3]
    worst = max(r["relative_gap"] for r in at_1e3)
    agree = max(abs(r["limit_integral"] - r["limit_closed"]) for r in rows)
    ok = code == 0 and worst <= 0.05 and agree <= 1e-6 and {r["case"] for r in rows} == {"feller", "atom2"}
    report(7, "small-time rates", ok, time.perf_counter() - t0, 300,
           f"max relative gap at t=1e-3 {worst:.2e}; limit evaluations differ by {agree:.1e}")


def test_c08_neveu_and_bolthausen_sznitman(report):
    t0 = time.perf_counter()
    neveu = resolve_mechanism("neveu")
    rates = [merger_rate(neveu, [x], (4,), (2,), 0) for x in (0.1, 0.5, 1.0, 3.0, 20.0)]
    spread = max(rates) - min(rates)
    _, bs = cli_json(["rates", "--family", "bs", "--k", "4"])
    bs_42 = [r["rate"] for r in bs if r["alpha"] == [2]][0]
    ok = spread <= 1e-10 and abs(rates[0] - 1 / 3) <= 1e-10 and abs(bs_42 - 1 / 3) <= 1e-10
    report(8, "Neveu x-independence and BS rates", ok, time.perf_counter() - t0, 5,
           f"spread over x {spread:.1e}; rate {rates[0]:.12f}")


@pytest.mark.slow
def test_c09_two_type_feller_rates(report):
    t0 = time.perf_counter()
    mech, x = feller2(), (1.0, 2.0)
    cases = [((2, 0), (2, 0), 0, 2 * mech.beta[0] / x[0]),
             ((0, 2), (0, 2), 1, 2 * mech.beta[1] / x[1]),
             ((1, 1), (1, 0), 1, mech.kappa[1, 0] * x[1] / x[0]),
             ((1, 1), (0, 1), 0, mech.kappa[0, 1] * x[0] / x[1])]
    worst = 0.0
    for k, alpha, c, closed in cases:
        (row,) = small_time_verify(mech, x, k, alpha, c, [1e-3])
        assert row.limit_closed == pytest.approx(closed, rel=1e-12)
        worst = max(worst, row.relative_gap)
    report(9, "two-type Feller pair and type-change rates", worst <= 0.05, time.perf_counter() - t0, 120,
           f"max relative gap at t=1e-3 {worst:.2e}")


@pytest.mark.slow
@pytest.mark.parametrize("source", [["--family", "kingman", "--k", "5"],
                                    ["--family", "bs", "--k", "5"],
                                    ["--mech", "feller2", "--x", "1,2", "--k", "3,2"]],
                         ids=["kingman", "bs", "typed-kingman"])
def test_c10_coalescent_simulator(report, source):
    t0 = time.perf_counter()
    code, rows = cli_json(["coalescent", "simulate", *source, "--runs", "100000", "--seed", "7"])
    worst = max(abs(r["z"]) for r in rows)
    report(10, f"typed coalescent first events ({source[1]})", code == 0 and worst <= 3,
           time.perf_counter() - t0, 300, f"{len(rows)} event kinds, max |z| {worst:.2f}")


@pytest.mark.slow
def test_c11_mixture_identity(report):
    t0 = time.perf_counter()
    code, rows = cli_json(["verify", "mixture", "--population", "deterministic",
                           "--population", "exponential", "--replicas", "100000", "--seed", "11"])
    worst = max(abs(r["z"]) for r in rows)
    report(11, "continuous mixture identity", code == 0 and worst <= 3, time.perf_counter() - t0, 300,
           f"{len(rows)} events, max |z| {worst:.2f}")


def test_c12_determinism(report, tmp_path):
    t0 = time.perf_counter()
    outputs = []
    for threads in ("1", "1", "3"):
        buf = io.StringIO()
        execute(["verify", "mixture", "--replicas", "2000", "--seed", "5", "--threads", threads], buf)
        outputs.append(buf.getvalue().encode())
    buf = io.StringIO()
    execute(["verify", "discrete"], buf)
    again = io.StringIO()
    execute(["verify", "discrete"], again)
    ok = outputs[0] == outputs[1] == outputs[2] and buf.getvalue() == again.getvalue()
    report(12, "byte-identical reruns", ok, time.perf_counter() - t0, 300,
           "verify mixture (1 and 3 threads) and verify discrete")
