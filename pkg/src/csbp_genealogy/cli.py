"""Command-line entry point.

Every command writes a table: CSV with ``#`` metadata lines by default, or a
JSON document with ``--format json``.  Exit status is 0 on success, 2 when a
verification band is violated, and 1 on any operational error.

    csbp-genealogy verify gamma
    csbp-genealogy mrca --mech feller --T 1 --x 1 --k 2
    csbp-genealogy run experiment.json
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import itertools
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path

import numpy as np

from . import coalescent as co
from . import discrete as dc
from . import forests as fo
from . import particles as pa
from . import poissonize as po
from .errors import CSBPError, ContractError
from .fixtures import resolve_mechanism
from .laplace import SolutionProvider, semigroup_defect, solve_u
from .multiindex import multi_indices, norm1
from .populations import population_from_spec

THREADS_ENV = "CSBP_GENEALOGY_THREADS"
EXIT_OK, EXIT_ERROR, EXIT_BAND = 0, 1, 2


def _version() -> str:
    try:
        return metadata.version("csbp-genealogy")
    except metadata.PackageNotFoundError:
        return "0+unknown"


@dataclass
class Table:
    columns: list
    rows: list = field(default_factory=list)
    ok: bool = True
    notes: list = field(default_factory=list)

    def add(self, *values):
        self.rows.append(list(values))


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (tuple, list)):
        return " ".join(str(x) for x in v)
    return str(v)


def _json_cell(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else repr(v)
    if isinstance(v, (tuple, list)):
        return [_json_cell(x) for x in v]
    return v


def render(table: Table, meta: dict, fmt: str) -> str:
    if fmt == "json":
        doc = {"meta": meta, "columns": table.columns, "ok": bool(table.ok), "notes": table.notes,
               "rows": [[_json_cell(v) for v in row] for row in table.rows]}
        return json.dumps(doc, indent=2) + "\n"
    buf = io.StringIO()
    for key, val in meta.items():
        buf.write(f"# {key}: {val}\n")
    for note in table.notes:
        buf.write(f"# note: {note}\n")
    buf.write(f"# status: {'pass' if table.ok else 'fail'}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(table.columns)
    for row in table.rows:
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


def pool_map(fn, items, threads: int):
    """Ordered map; the result never depends on ``threads``."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


# -- argument types ------------------------------------------------------------------
def floats(text: str) -> tuple:
    try:
        return tuple(float(v) for v in str(text).split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def ints(text: str) -> tuple:
    try:
        return tuple(int(v) for v in str(text).split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def int_lists(text: str) -> tuple:
    """``2,1;1,3`` -> ``((2, 1), (1, 3))``."""
    return tuple(ints(part) for part in str(text).split(";") if part.strip())


def _vec(v, d, name):
    v = tuple(v)
    if len(v) == 1 and d > 1:
        v = v * d
    if len(v) != d:
        raise ContractError(f"--{name} needs {d} entries, got {len(v)}")
    return v


# -- plain computations ---------------------------------------------------------------
def cmd_mechanism_validate(a) -> Table:
    if (a.file is None) == (a.mech is None):
        raise ContractError("give the mechanism either as an argument or with --mech")
    mech = resolve_mechanism(a.file or a.mech)
    t = Table(["check", "ok", "detail"])
    for name, ok, detail in mech.validate():
        t.add(name, ok, detail)
        t.ok &= ok
    return t


def cmd_laplace_eval(a) -> Table:
    mech = resolve_mechanism(a.mech)
    lam = _vec(a.lam, mech.d, "lam")
    sol = solve_u(mech, a.t, lam, a.degree)
    t = Table(["i", "alpha", "value"])
    for i in range(mech.d):
        for alpha in multi_indices(mech.d, a.degree):
            t.add(i, alpha, sol.derivative(i, alpha))
    return t


def cmd_forest_enumerate(a) -> Table:
    d = a.d or len(a.k)
    count = fo.count_forests(a.k, a.m, d)
    if a.count_only:
        t = Table(["k", "m", "d", "count"])
        t.add(tuple(a.k), a.m, d, count)
        return t
    t = Table(["index", "forest", "rootdegree"])
    for idx, H in enumerate(fo.enumerate_forests(a.k, a.m, d, cap=a.cap)):
        t.add(idx, H.to_text(), H.stats().rootdegree)
    t.notes.append(f"count={count}")
    return t


def cmd_forest_law(a) -> Table:
    mech = resolve_mechanism(a.mech)
    x, lam = _vec(a.x, mech.d, "x"), _vec(a.lam, mech.d, "lam")
    prov = SolutionProvider(mech, max(norm1(a.k), 1))
    forests = list(fo.enumerate_forests(a.k, len(a.mesh) - 1, mech.d, cap=a.cap))
    law = fo.conditional_forest_law(a.k, a.mesh, x, lam, prov, cap=a.cap)
    pref = fo.q_prefactor(a.k, a.mesh[-1], x, lam, prov)
    energies = fo.all_energies(a.k, a.mesh, x, lam, prov, cap=a.cap)
    t = Table(["index", "forest", "energy", "q_probability", "conditional"])
    for idx, (H, e, p) in enumerate(zip(forests, energies, law)):
        t.add(idx, H.to_text(), e, pref * e, p)
    t.notes.append(f"sum_q={math.fsum(pref * energies)!r}")
    return t


def cmd_forest_law_p(a) -> Table:
    mech = resolve_mechanism(a.mech)
    x = _vec(a.x, mech.d, "x")
    if a.forest:
        forests = [fo.LabeledForest.from_text(s, mech.d) for s in a.forest]
    else:
        forests = list(fo.enumerate_forests(a.k, len(a.mesh) - 1, mech.d, cap=a.cap))
    res = pool_map(lambda H: po.forest_law_P(H, a.mesh, x, mech), forests, a.threads)
    t = Table(["forest", "probability", "error"])
    for H, r in zip(forests, res):
        t.add(H.to_text(), r.value, r.error)
    if not a.forest:
        surv = po.sample_survival_probability(a.k, a.mesh[-1], x, mech)
        t.notes.append(f"sum={math.fsum(r.value for r in res)!r} survival={surv.value!r}")
    return t


def cmd_mrca(a) -> Table:
    mech = resolve_mechanism(a.mech)
    t = Table(["k", "T", "x", "probability", "error"])
    for k in a.k:
        r = po.mrca_probability(k, a.T, a.x, mech)
        t.add(k, a.T, a.x, r.value, r.error)
    return t


def _rate_source(a):
    if a.family:
        name, _, arg = a.family.partition(":")
        if name == "kingman":
            return co.kingman_rates(float(arg) if arg else 0.5)
        if name in ("bs", "bolthausen-sznitman"):
            return co.bolthausen_sznitman_rates()
        if name == "beta":
            return co.beta_coalescent_rates(float(arg))
        raise ContractError(f"unknown coalescent family {a.family!r}")
    if not a.mech:
        raise ContractError("give --family or --mech")
    mech = resolve_mechanism(a.mech)
    return co.rate_data_from_mechanism(mech, _vec(a.x, mech.d, "x"))


def cmd_rates(a) -> Table:
    table = co.RateTable.from_data(_rate_source(a))
    k = tuple(a.k)
    if len(k) != table.d:
        raise ContractError(f"--k needs {table.d} entries")
    t = Table(["alpha", "c", "kind", "rate", "total"])
    for alpha, c, total in table.events(k):
        ways = math.prod(math.comb(n, m) for n, m in zip(k, alpha))
        kind = "merge" if sum(alpha) >= 2 else "type-change"
        t.add(alpha, c, kind, total / ways, total)
    return t


def cmd_coalescent_simulate(a) -> Table:
    table = co.RateTable.from_data(_rate_source(a))
    k = tuple(a.k)
    law = table.first_event_law(k)
    events = co.simulate_typed_coalescent(table, k, a.runs, a.seed, max_events=1)
    freq = co.first_event_frequencies(events, a.runs)
    t = Table(["alpha", "c", "frequency", "analytic", "stderr", "z"])
    for key in sorted(set(law) | set(freq)):
        p = law.get(key, 0.0)
        f = freq.get(key, 0.0)
        se = math.sqrt(p * (1 - p) / a.runs)
        z = (f - p) / se if se > 0 else (0.0 if f == p else math.inf)
        t.add(key[0], key[1], f, p, se, z)
        t.ok &= abs(z) <= a.z_band
    return t


def cmd_particle_mrca(a) -> Table:
    mech = resolve_mechanism(a.mech)
    x = _vec(a.x, mech.d, "x")
    est = pa.estimate_mrca(mech, x, a.T, _vec(a.k, mech.d, "k"), a.n, a.replicas, a.seed)
    ref = a.reference
    if ref is None and a.quadrature_reference:
        ref = po.mrca_probability(a.k[0], a.T, x[0], mech).value
    t = Table(["n", "estimate", "stderr", "reference", "allowance", "pass"])
    for row in est.rows:
        allow = 3 * row.stderr + est.allowance(row.n)
        ok = True if ref is None else abs(row.estimate - ref) <= allow
        t.add(row.n, row.estimate, row.stderr, "" if ref is None else ref, allow, ok)
        t.ok &= ok
    t.notes.append(f"intercept={est.intercept!r} bias_coefficient={est.bias_coefficient!r}")
    return t


# -- verification ----------------------------------------------------------------------
def verify_gamma(a) -> Table:
    t = Table(["check", "index", "point", "value", "exact", "deviation", "band", "pass"])
    items = [("identity", j, z) for j in range(7) for z in (0.1, 1.0, 10.0)]
    ys = [(0.2,), (1.0,), (3.0,), (0.5, 2.0), (1.0, 1.0), (2.0, 0.7), (0.5, 1.0, 2.0), (1.0, 1.0, 1.0),
          (0.3, 0.8, 1.5)]
    for y in ys:
        for k in multi_indices(len(y), 5):
            items.append(("factorial", k, y))

    def one(item):
        kind, idx, pt = item
        if kind == "identity":
            v = po.gamma_identity_check(idx, pt)
            return kind, idx, pt, v, 1.0, abs(v - 1.0), 1e-9
        v, exact = po.gamma_factorial_check(idx, pt)
        return kind, idx, pt, v, exact, abs(v - exact) / exact, 1e-8

    for row in pool_map(one, items, a.threads):
        ok = row[5] <= row[6]
        t.add(*row, ok)
        t.ok &= ok
    return t


def verify_semigroup(a) -> Table:
    names = a.mech or ["feller", "feller2", "atom2", "stable", "neveu"]
    t = Table(["mechanism", "s", "t", "theta", "defect", "band", "pass"])
    items = []
    for name in names:
        mech = resolve_mechanism(name)
        thetas = [(0.3, 1.1, 0.6), (1.0, 0.5, 2.0), (4.0, 2.5, 0.1)]
        thetas = [th[:mech.d] for th in thetas]
        for s, tt, th in itertools.product((0.1, 0.5, 1.0), (0.2, 0.7, 1.5), thetas):
            items.append((name, mech, s, tt, th))
    res = pool_map(lambda it: semigroup_defect(it[1], it[2], it[3], it[4]), items, a.threads)
    for (name, _, s, tt, th), dfc in zip(items, res):
        ok = dfc <= 1e-8
        t.add(name, s, tt, th, dfc, 1e-8, ok)
        t.ok &= ok
    return t


def verify_discrete(a) -> Table:
    t = Table(["model", "k", "event", "lhs", "rhs", "gap", "mode", "pass"])
    models = dc.shipped_models()
    for name, model in models.items():
        outcomes = dc.enumerate_population_law(model)
        ks = [(1,), (2,), (3,)] if model.d == 1 else [(1, 0), (1, 1), (2, 1)]
        for k in ks:
            for chk in dc.bernoulli_identity_check(outcomes, k, dc.shipped_events(model.d)):
                ok = chk.gap <= 1e-12 and (chk.mode != "exact" or chk.lhs == chk.rhs)
                t.add(name, k, chk.event, str(chk.lhs), str(chk.rhs), chk.gap, chk.mode, ok)
                t.ok &= ok
    return t


PARTITION_CASES = {
    "feller": ((1.0,), (0.7,)),
    "atom1": ((1.5,), (0.8,)),
    "feller2": ((1.0, 2.0), (0.7, 1.2)),
    "atom2": ((1.0, 2.0), (0.7, 1.2)),
    "feller3": ((1.0, 0.5, 2.0), (0.6, 1.1, 0.9)),
    "atom3": ((1.0, 0.5, 2.0), (0.6, 1.1, 0.9)),
}
MESHES = {1: (0.0, 1.0), 2: (0.0, 0.4, 1.0), 3: (0.0, 0.2, 0.5, 1.0)}


def verify_partition(a) -> Table:
    t = Table(["mechanism", "k", "m", "forests", "enumerated", "jet", "relative_gap", "band", "pass"])
    names = a.mech or list(PARTITION_CASES)
    items = []
    for name in names:
        mech = resolve_mechanism(name)
        x, lam = PARTITION_CASES.get(name, ((1.0,) * mech.d, (0.7,) * mech.d))
        for k in multi_indices(mech.d, a.max_k):
            if norm1(k) == 0:
                continue
            for m in range(1, a.max_m + 1):
                items.append((name, mech, x, lam, k, m))
    providers = {it[0]: SolutionProvider(it[1], a.max_k) for it in items}

    def one(it):
        name, _, x, lam, k, m = it
        return fo.partition_function(k, MESHES[m], x, lam, providers[name], cap=a.cap)

    for (name, _, _, _, k, m), r in zip(items, pool_map(one, items, a.threads)):
        ok = r.relative_gap <= 1e-8
        t.add(name, k, m, r.count, r.enumerated, r.jet, r.relative_gap, 1e-8, ok)
        t.ok &= ok
    return t


SMALL_TIME_CASES = {
    "feller": ("feller", (1.0,), [((2,), (2,), 0)]),
    "feller2": ("feller2", (1.0, 2.0), [((2, 0), (2, 0), 0), ((0, 2), (0, 2), 1),
                                        ((1, 1), (1, 0), 1), ((1, 1), (0, 1), 0)]),
    "atom2": ("atom2", (1.0, 2.0), [((2, 1), (2, 0), 0), ((2, 2), (2, 0), 1)]),
}


def verify_small_time(a) -> Table:
    cases = a.case or ["feller"]
    t = Table(["case", "k", "alpha", "c", "t", "ratio", "limit_integral", "limit_closed",
               "gap", "relative_gap", "pass"])
    items = []
    for name in cases:
        if name not in SMALL_TIME_CASES:
            raise ContractError(f"unknown small-time case {name!r}; choose from {sorted(SMALL_TIME_CASES)}")
        mname, x, triples = SMALL_TIME_CASES[name]
        for k, alpha, c in triples:
            items.append((name, resolve_mechanism(mname), x, k, alpha, c))
    grid = sorted(a.t_grid, reverse=True)
    res = pool_map(lambda it: co.small_time_verify(it[1], it[2], it[3], it[4], it[5], grid), items, a.threads)
    for (name, _, _, k, alpha, c), rows in zip(items, res):
        agree = abs(rows[0].limit_integral - rows[0].limit_closed) <= 1e-6 * max(1.0, abs(rows[0].limit_closed))
        halving = co.gap_halving_ok(rows)
        near = rows[-1].relative_gap <= 0.05
        for r in rows:
            t.add(name, k, alpha, c, r.t, r.ratio, r.limit_integral, r.limit_closed, r.gap,
                  r.relative_gap, agree and halving and near)
        t.ok &= agree and halving and near
    return t


MIXTURE_POPULATIONS = {
    "deterministic": ({"kind": "deterministic", "z": [2.0]}, ("full", "first_below_median",
                                                               "all_below_median", "first_below_one",
                                                               "population_above")),
    "exponential": ({"kind": "exponential", "means": [1.5]}, ("full", "first_below_median",
                                                              "all_below_median", "first_below_one",
                                                              "population_above")),
    "feller": ({"kind": "feller", "beta": 0.5, "T": 1.0, "x": 1.0},
               ("full", "first_below_median", "population_above", "same_cluster")),
}


def verify_mixture(a) -> Table:
    names = a.population or ["deterministic", "exponential"]
    t = Table(["population", "k", "event", "lhs", "lhs_se", "rhs", "rhs_se", "z", "pass"])
    for offset, name in enumerate(names):
        if name not in MIXTURE_POPULATIONS:
            raise ContractError(f"unknown population {name!r}; choose from {sorted(MIXTURE_POPULATIONS)}")
        spec, events = MIXTURE_POPULATIONS[name]
        pop = population_from_spec(spec)
        for kk, k in enumerate(a.k):
            seed = int(np.random.SeedSequence([a.seed, offset, kk]).generate_state(1)[0])
            for chk in po.mixture_identity_mc(k, pop, events, a.replicas, seed):
                ok = abs(chk.z) <= 3.0
                t.add(name, k, chk.event, chk.lhs, chk.lhs_se, chk.rhs, chk.rhs_se, chk.z, ok)
                t.ok &= ok
    return t


VERIFY = {
    "gamma": verify_gamma,
    "mixture": verify_mixture,
    "discrete": verify_discrete,
    "partition": verify_partition,
    "small-time": verify_small_time,
    "semigroup": verify_semigroup,
}


# -- parser --------------------------------------------------------------------------
class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ContractError(f"{self.prog}: {message}")


def _common(p):
    p.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--output", "-o", help="write here instead of stdout")
    p.add_argument("--threads", type=int, default=None,
                   help=f"worker threads (default ${THREADS_ENV} or 1)")


def build_parser() -> argparse.ArgumentParser:
    root = _Parser(prog="csbp-genealogy", description=__doc__.splitlines()[0])
    root.add_argument("--version", action="version", version=_version())
    sub = root.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def leaf(parent, name, fn, help_):
        p = parent.add_parser(name, help=help_)
        p.set_defaults(fn=fn)
        _common(p)
        return p

    g = sub.add_parser("mechanism").add_subparsers(dest="action", required=True, parser_class=_Parser)
    p = leaf(g, "validate", cmd_mechanism_validate, "check a mechanism document")
    p.add_argument("file", nargs="?", help="mechanism file, fixture name or inline JSON")
    p.add_argument("--mech")

    g = sub.add_parser("laplace").add_subparsers(dest="action", required=True, parser_class=_Parser)
    p = leaf(g, "eval", cmd_laplace_eval, "u(t, lam) and its lambda-derivatives")
    p.add_argument("--mech", required=True)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--lambda", "--lam", dest="lam", type=floats, required=True)
    p.add_argument("--degree", type=int, default=0)

    g = sub.add_parser("forest").add_subparsers(dest="action", required=True, parser_class=_Parser)
    p = leaf(g, "enumerate", cmd_forest_enumerate, "list labelled forests in canonical order")
    p.add_argument("--k", type=ints, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--d", type=int, default=None)
    p.add_argument("--cap", type=int, default=fo.DEFAULT_CAP)
    p.add_argument("--count-only", action="store_true")
    p = leaf(g, "law", cmd_forest_law, "forest law under Poisson sampling at rate lam")
    for name, typ in (("--mech", str), ("--mesh", floats), ("--x", floats), ("--k", ints)):
        p.add_argument(name, type=typ, required=True)
    p.add_argument("--lambda", "--lam", dest="lam", type=floats, required=True)
    p.add_argument("--cap", type=int, default=fo.DEFAULT_CAP)

    p = leaf(sub, "forest-law-p", cmd_forest_law_p, "forest law of a uniform k-sample")
    for name, typ in (("--mech", str), ("--mesh", floats), ("--x", floats), ("--k", ints)):
        p.add_argument(name, type=typ, required=True)
    p.add_argument("--forest", action="append", help="forest text; repeatable (default: all)")
    p.add_argument("--cap", type=int, default=10_000)

    p = leaf(sub, "mrca", cmd_mrca, "chance a k-sample has one ancestor at time 0")
    p.add_argument("--mech", required=True)
    p.add_argument("--T", type=float, required=True)
    p.add_argument("--x", type=float, required=True)
    p.add_argument("--k", type=ints, required=True)

    p = leaf(sub, "rates", cmd_rates, "typed Lambda-coalescent rate table")
    p.add_argument("--family")
    p.add_argument("--mech")
    p.add_argument("--x", type=floats, default=(1.0,))
    p.add_argument("--k", type=ints, required=True)

    g = sub.add_parser("coalescent").add_subparsers(dest="action", required=True, parser_class=_Parser)
    p = leaf(g, "simulate", cmd_coalescent_simulate, "first-event law of the typed coalescent")
    p.add_argument("--family")
    p.add_argument("--mech")
    p.add_argument("--x", type=floats, default=(1.0,))
    p.add_argument("--k", type=ints, required=True)
    p.add_argument("--runs", type=int, default=10_000)
    p.add_argument("--z-band", type=float, default=3.0)

    g = sub.add_parser("verify").add_subparsers(dest="check", required=True, parser_class=_Parser)
    leaf(g, "gamma", verify_gamma, "gamma mixture and gamma-factorial identities")
    p = leaf(g, "mixture", verify_mixture, "Monte Carlo check of the continuous mixture identity")
    p.add_argument("--population", action="append")
    p.add_argument("--k", type=int_lists, default=((1,), (2,)))
    p.add_argument("--replicas", type=int, default=10_000)
    leaf(g, "discrete", verify_discrete, "exact Bernoulli identity on Galton-Watson fixtures")
    p = leaf(g, "partition", verify_partition, "forest partition function against jets")
    p.add_argument("--mech", action="append")
    p.add_argument("--max-k", type=int, default=3)
    p.add_argument("--max-m", type=int, default=3)
    p.add_argument("--cap", type=int, default=5_000_000)
    p = leaf(g, "small-time", verify_small_time, "small-time forest rates against merger rates")
    p.add_argument("--case", action="append")
    p.add_argument("--t-grid", type=floats, default=(4e-3, 2e-3, 1e-3, 5e-4))
    p = leaf(g, "semigroup", verify_semigroup, "u(t, u(s, theta)) = u(t + s, theta)")
    p.add_argument("--mech", action="append")

    g = sub.add_parser("particle").add_subparsers(dest="action", required=True, parser_class=_Parser)
    p = leaf(g, "mrca", cmd_particle_mrca, "particle-system estimate of the MRCA probability")
    p.add_argument("--mech", required=True)
    p.add_argument("--x", type=floats, required=True)
    p.add_argument("--T", type=float, required=True)
    p.add_argument("--k", type=ints, required=True)
    p.add_argument("--n", type=ints, default=(50, 100, 200))
    p.add_argument("--replicas", type=int, default=10_000)
    p.add_argument("--reference", type=float, default=None)
    p.add_argument("--quadrature-reference", action="store_true")

    p = sub.add_parser("run", help="run a JSON experiment config")
    p.add_argument("config")
    p.set_defaults(fn=None)
    return root


# -- config files --------------------------------------------------------------------
CONFIG_KEYS = {"command", "params", "seed", "threads", "output", "format"}


def config_to_argv(doc) -> list:
    if not isinstance(doc, dict):
        raise ContractError("config must be a JSON object")
    unknown = set(doc) - CONFIG_KEYS
    if unknown:
        raise ContractError(f"unknown config keys: {sorted(unknown)}")
    if "command" not in doc:
        raise ContractError("config needs a 'command'")
    argv = str(doc["command"]).split()
    if argv and argv[0] == "run":
        raise ContractError("configs cannot nest 'run'")
    params = doc.get("params", {})
    if not isinstance(params, dict):
        raise ContractError("'params' must be an object")
    for key in ("seed", "threads", "output", "format"):
        if key in doc:
            params = {**params, key: doc[key]}
    for key, val in params.items():
        flag = "--" + key.replace("_", "-")
        if val is True:
            argv.append(flag)
        elif val is False or val is None:
            continue
        elif isinstance(val, dict):
            argv += [flag, json.dumps(val, sort_keys=True)]
        elif isinstance(val, list) and val and all(isinstance(v, str) for v in val):
            for v in val:  # repeatable option
                argv += [flag, v]
        elif isinstance(val, list):
            parts = [";".join(",".join(map(str, r)) for r in val)] if any(isinstance(v, list) for v in val) \
                else [",".join(map(str, val))]
            argv += [flag, parts[0]]
        else:
            argv += [flag, str(val)]
    return argv


def _load_config(path: str):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ContractError(f"cannot read {path}: {exc.strerror}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ContractError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None


def _meta(args) -> dict:
    skip = {"fn", "output", "format", "threads"}
    params = {k: v for k, v in sorted(vars(args).items()) if k not in skip}
    canon = json.dumps(params, sort_keys=True, default=str)
    return {
        "tool": f"csbp-genealogy {_version()}",
        "command": _command_name(args),
        "seed": args.seed,
        "config_sha256": hashlib.sha256(canon.encode()).hexdigest(),
    }


def _command_name(args) -> str:
    parts = [args.command]
    for key in ("action", "check"):
        if getattr(args, key, None):
            parts.append(getattr(args, key))
    return " ".join(parts)


def execute(argv: list, stdout=None) -> int:
    stdout = stdout or sys.stdout
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return execute(config_to_argv(_load_config(args.config)), stdout)
    if args.threads is None:
        env = os.environ.get(THREADS_ENV, "1")
        try:
            args.threads = max(1, int(env))
        except ValueError:
            raise ContractError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    table = args.fn(args)
    text = render(table, _meta(args), args.format)
    if args.output:
        Path(args.output).write_text(text)
    else:
        stdout.write(text)
    return EXIT_OK if table.ok else EXIT_BAND


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        return execute(argv)
    except (CSBPError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
