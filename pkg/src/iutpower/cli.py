"""Command-line front end.

Exit codes: 0 success, 2 malformed input or usage, 3 numerical failure,
4 a group with fewer than two observations.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import re
import string
import sys
import tempfile

import numpy as np

from . import mvdist
from .example_data import example_dataset
from .inference import (
    MAX_PATTERN_J,
    decide,
    enumerate_alternative_patterns,
    format_pattern,
    marginal_p,
    maxt_adjusted_p,
    normalize_alternative,
    simultaneous_ci,
)
from .models import Dataset, DegenerateGroupError, SingularDesignError, fit_all
from .simulation import Scenario, run_table

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3
EXIT_SMALL_GROUP = 4

LETTERS = string.ascii_lowercase
_NUMERIC_ERRORS = (
    ArithmeticError,
    np.linalg.LinAlgError,
    mvdist.NonconvergenceError,
    mvdist.NotPSDError,
    SingularDesignError,
)

log = logging.getLogger("iutpower")


class InputError(Exception):
    """Malformed input; maps to exit code 2."""


# ---------------------------------------------------------------------------
# formatting and output

def fmt_prob(p, decimals: int = 3) -> str:
    """Probability cell: fixed decimals, scientific with 3 digits at or below 1e-3."""
    if p is None:
        return ""
    p = float(p)
    if p == 0.0:
        return f"{0:.{decimals}f}"
    if abs(p) <= 1e-3:
        return f"{p:.2e}"
    return f"{p:.{decimals}f}"


def fmt_num(x) -> str:
    return f"{float(x):g}"


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def write_atomic(path: str, text: str) -> None:
    """Write ``text`` to a temporary sibling, then rename it over ``path``."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".csv")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# scenario files

_SCALAR_KEYS = {"label", "alpha", "sims", "seed", "design", "rho"}
_FIELD = re.compile(r"^(?:n(\d+)|m([a-z])(\d+)|s([a-z])|rho(\d+))$")


def _pairs(J):
    return [(i, j) for i in range(J) for j in range(i + 1, J)]


def _number(rec, key, where, kind=float):
    value = rec[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise InputError(f"{where}: field {key!r} must be a number, got {value!r}")
    if kind is int:
        if float(value) != int(value):
            raise InputError(f"{where}: field {key!r} must be an integer, got {value!r}")
        return int(value)
    return float(value)


def scenario_from_record(rec: dict, defaults: dict, where: str) -> Scenario:
    """Build a Scenario from named fields such as ``n1, ma1, sa, rho``."""
    if not isinstance(rec, dict):
        raise InputError(f"{where}: expected an object, got {type(rec).__name__}")
    rec = {**defaults, **rec}
    sizes, means, sds, rhos = {}, {}, {}, {}
    for key in rec:
        if key in _SCALAR_KEYS:
            continue
        m = _FIELD.match(key)
        if not m:
            raise InputError(f"{where}: unknown field {key!r}")
        if m.group(1):
            sizes[int(m.group(1))] = _number(rec, key, where, int)
        elif m.group(2):
            means[(LETTERS.index(m.group(2)), int(m.group(3)))] = _number(rec, key, where)
        elif m.group(4):
            sds[LETTERS.index(m.group(4))] = _number(rec, key, where)
        else:
            rhos[int(m.group(5))] = _number(rec, key, where)

    k = len(sizes)
    if sorted(sizes) != list(range(1, k + 1)) or k < 2:
        raise InputError(f"{where}: group sizes must be n1..nk with k >= 2, got {sorted(sizes)}")
    J = len(sds)
    if sorted(sds) != list(range(J)) or J < 1:
        raise InputError(f"{where}: standard deviations must be sa, sb, ... without gaps")
    mu = np.empty((k, J))
    for j in range(J):
        for g in range(1, k + 1):
            key = f"m{LETTERS[j]}{g}"
            if (j, g) not in means:
                raise InputError(f"{where}: missing field {key!r}")
            mu[g - 1, j] = means.pop((j, g))
    if means:
        (j, g), _ = next(iter(means.items()))
        raise InputError(f"{where}: field 'm{LETTERS[j]}{g}' does not match n1..n{k}, sa..")

    if "rho" in rec and rhos:
        raise InputError(f"{where}: give either 'rho' or 'rho1..', not both")
    try:
        if J == 1:
            rho = np.ones((1, 1))
            if rhos or ("rho" in rec and rec["rho"] not in (None, 1, 1.0)):
                raise InputError(f"{where}: field 'rho' is meaningless for one endpoint")
        elif rhos:
            pairs = _pairs(J)
            if sorted(rhos) != list(range(1, len(pairs) + 1)):
                raise InputError(f"{where}: field 'rho': expected rho1..rho{len(pairs)}")
            rho = np.eye(J)
            for n, (a, b) in enumerate(pairs, start=1):
                rho[a, b] = rho[b, a] = rhos[n]
        elif "rho" in rec:
            value = rec["rho"]
            if isinstance(value, list):
                rho = np.asarray(value, dtype=float)
            else:
                r = _number(rec, "rho", where)
                if not -1.0 <= r <= 1.0:
                    raise InputError(f"{where}: field 'rho' = {r} is not a correlation")
                rho = mvdist.equicorrelated(J, r)
        else:
            raise InputError(f"{where}: missing field 'rho'")
        rho = mvdist.validate_correlation(rho, name="rho")
    except InputError:
        raise
    except (ValueError, TypeError) as exc:
        raise InputError(f"{where}: field 'rho': {exc}") from None

    extra = {}
    for key, kind in (("alpha", float), ("sims", int), ("seed", int)):
        if key in rec:
            extra[key] = _number(rec, key, where, kind)
    if "design" in rec:
        extra["design"] = rec["design"]
    try:
        return Scenario(group_sizes=tuple(sizes[g] for g in range(1, k + 1)), means=mu,
                        sds=np.array([sds[j] for j in range(J)]), rho=rho,
                        label=str(rec.get("label", "")), **extra)
    except ValueError as exc:
        raise InputError(f"{where}: {exc}") from None


def load_scenarios(path: str, overrides: dict) -> list:
    """Parse a scenario file: a list of records or ``{"defaults", "scenarios"}``."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    defaults = {}
    if isinstance(doc, dict):
        unknown = set(doc) - {"defaults", "scenarios"}
        if unknown:
            raise InputError(f"{path}: unknown top-level field {sorted(unknown)[0]!r}")
        defaults = doc.get("defaults", {})
        if not isinstance(defaults, dict):
            raise InputError(f"{path}: 'defaults' must be an object")
        doc = doc.get("scenarios")
    if not isinstance(doc, list) or not doc:
        raise InputError(f"{path}: expected a nonempty list of scenarios")
    out = []
    for i, rec in enumerate(doc, start=1):
        if isinstance(rec, dict):
            rec = {**rec, **overrides}
        out.append(scenario_from_record(rec, defaults, f"{path}: scenario {i}"))
    return out


def _echo_columns(scenarios):
    first = scenarios[0]
    k, J = first.k, first.n_endpoints
    for i, sc in enumerate(scenarios, start=1):
        if (sc.k, sc.n_endpoints) != (k, J):
            raise InputError(f"scenario {i}: all scenarios in one file need the same "
                             f"number of groups and endpoints")
    equi = all(J == 1 or mvdist._equi_rho(sc.rho) is not None for sc in scenarios)
    cols = ["label"] + [f"n{g + 1}" for g in range(k)]
    cols += [f"m{LETTERS[j]}{g + 1}" for j in range(J) for g in range(k)]
    cols += [f"s{LETTERS[j]}" for j in range(J)]
    cols += ["rho"] if equi else [f"rho{n + 1}" for n in range(len(_pairs(J)))]
    return cols, equi


def _echo_row(sc: Scenario, equi: bool):
    row = [sc.label] + [str(n) for n in sc.group_sizes]
    row += [fmt_num(sc.means[g, j]) for j in range(sc.n_endpoints) for g in range(sc.k)]
    row += [fmt_num(s) for s in sc.sds]
    if equi:
        row.append(fmt_num(sc.rho[0, 1]) if sc.n_endpoints > 1 else "1")
    else:
        row += [fmt_num(sc.rho[a, b]) for a, b in _pairs(sc.n_endpoints)]
    return row


def result_table(entries) -> str:
    """CSV of echoed inputs followed by IUT, UIT, m*, e*, aiaUIT, RR."""
    scenarios = [e.scenario for e in entries]
    cols, equi = _echo_columns(scenarios)
    m_cols, e_cols = scenarios[0].hypothesis_labels()
    header = cols + ["IUT", "UIT", *m_cols, *e_cols, "aiaUIT", "RR"]
    rows = []
    for e in entries:
        r = e.row
        rows.append(_echo_row(e.scenario, equi)
                    + [fmt_prob(r.iut), fmt_prob(r.uit)]
                    + [fmt_prob(x) for x in r.m] + [fmt_prob(x) for x in r.e]
                    + [fmt_prob(r.aia), "" if r.rr is None else f"{r.rr:.3f}"])
    return _csv_text(header, rows)


# ---------------------------------------------------------------------------
# data analysis

def dataset_csv(data: Dataset, group_col: str = "Dose") -> str:
    rows = [[g, *(repr(float(v)) for v in y)] for g, y in zip(data.groups, data.responses)]
    return _csv_text([group_col, *data.endpoint_names], rows)


def read_dataset(path: str, group_col: str, control=None, endpoints=None) -> Dataset:
    try:
        with open(path, encoding="utf-8-sig", newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    if not rows:
        raise InputError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if group_col not in header:
        raise InputError(f"{path}: group column {group_col!r} not found in header {header}")
    gi = header.index(group_col)
    if endpoints:
        missing = [e for e in endpoints if e not in header]
        if missing:
            raise InputError(f"{path}: endpoint column {missing[0]!r} not found")
        cols = [header.index(e) for e in endpoints]
    else:
        cols = [i for i in range(len(header)) if i != gi]
    if not cols:
        raise InputError(f"{path}: no endpoint columns besides {group_col!r}")
    groups, values = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not any(cell.strip() for cell in row):
            continue
        if len(row) != len(header):
            raise InputError(f"{path}: row {lineno} has {len(row)} fields, expected {len(header)}")
        vals = []
        for c in cols:
            try:
                v = float(row[c])
            except ValueError:
                raise InputError(f"{path}: row {lineno}, column {header[c]!r}: "
                                 f"not a number: {row[c]!r}") from None
            if not np.isfinite(v):
                raise InputError(f"{path}: row {lineno}, column {header[c]!r}: non-finite value")
            vals.append(v)
        groups.append(row[gi].strip())
        values.append(vals)
    if not values:
        raise InputError(f"{path}: no data rows")
    try:
        return Dataset(groups=np.array(groups, dtype=object), responses=np.array(values),
                       endpoint_names=tuple(header[c] for c in cols), control=control)
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from None


def analyze_dataset(data: Dataset, alpha=0.05, alternative="greater", kind="sandwich"):
    """Joint inference, decisions and confidence limits; returns output texts."""
    sizes = data.group_sizes
    small = [lev for lev, n in zip(data.levels, sizes) if n < 2]
    if small:
        raise DegenerateGroupError(f"groups with fewer than 2 rows: {small}")
    if len(data.levels) < 2:
        raise InputError("need at least two groups")
    ji = fit_all(data, kind)
    adj = maxt_adjusted_p(ji, alternative)
    marg = marginal_p(ji, alternative)
    outcome = decide(marg, adj, alpha, alternative)
    ci = simultaneous_ci(ji, 1 - alpha, alternative)

    report = _csv_text(["hypothesis", "adjusted_p", "marginal_p"],
                       [[h, fmt_prob(a, 4), fmt_prob(m, 4)]
                        for h, a, m in zip(ji.hypothesis_names, adj, marg)])
    alt = normalize_alternative(alternative)
    ci_cols = {"greater": ["lower"], "less": ["upper"], "two_sided": ["lower", "upper"]}[alt]
    ci_rows = []
    for i, h in enumerate(ji.hypothesis_names):
        limits = {"lower": ci.lower[i], "upper": ci.upper[i]}
        ci_rows.append([h, f"{ji.estimates[i]:.6g}", *(f"{limits[c]:.6g}" for c in ci_cols)])
    ci_text = _csv_text(["hypothesis", "estimate", *ci_cols], ci_rows)

    width = max(len(h) for h in ji.hypothesis_names)
    lines = [f"{'hypothesis':<{width}}  {'adjusted_p':>10}  {'marginal_p':>10}"]
    lines += [f"{h:<{width}}  {fmt_prob(a, 4):>10}  {fmt_prob(m, 4):>10}"
              for h, a, m in zip(ji.hypothesis_names, adj, marg)]
    verdict = {True: "reject", False: "do not reject"}
    lines += [
        "",
        f"covariance: {kind}, df = {ji.df:g}, alternative: {alt}, alpha = {alpha:g}",
        f"p_iut_max = {outcome.p_iut_max:.3g}  (IUT: {verdict[outcome.iut_reject]})",
        f"p_aia_max = {outcome.p_aia_max:.3g}  (aiaUIT: {verdict[outcome.aia_reject]})",
        f"UIT: {verdict[outcome.uit_reject]}",
        f"simultaneous {1 - alpha:.0%} critical value: {ci.quantile:.4f}",
    ]
    return report, ci_text, "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# commands

def cmd_simulate(args) -> int:
    overrides = {k: v for k, v in (("sims", args.sims), ("seed", args.seed),
                                   ("alpha", args.alpha)) if v is not None}
    scenarios = load_scenarios(args.scenarios, overrides)
    _echo_columns(scenarios)
    n = len(scenarios)

    def progress(i, done):
        print(f"scenario {i + 1}/{n}: {done}/{scenarios[i].sims}", file=sys.stderr, flush=True)

    entries = run_table(scenarios, workers=args.workers, progress=progress)
    failed = [(i, e) for i, e in enumerate(entries, start=1) if e.error is not None]
    for i, e in failed:
        label = f" ({e.scenario.label})" if e.scenario.label else ""
        print(f"error: scenario {i}{label}: {e.error}", file=sys.stderr)
    if failed:
        return EXIT_NUMERIC
    write_atomic(args.out, result_table(entries))
    return EXIT_OK


def _emit(report, ci_text, summary, args):
    if getattr(args, "ci_out", None):
        write_atomic(args.ci_out, ci_text)
    if args.out:
        write_atomic(args.out, report)
    sys.stdout.write(summary)


def cmd_example(args) -> int:
    data = example_dataset()
    report, ci_text, summary = analyze_dataset(data, args.alpha, "greater", "sandwich")
    if args.data_out:
        write_atomic(args.data_out, dataset_csv(data))
    _emit(report, ci_text, summary, args)
    return EXIT_OK


def cmd_analyze(args) -> int:
    endpoints = [e.strip() for e in args.endpoints.split(",")] if args.endpoints else None
    data = read_dataset(args.data, args.group_col, args.control, endpoints)
    kind = {"model": "model_based"}.get(args.cov, args.cov)
    report, ci_text, summary = analyze_dataset(data, args.alpha, args.alternative, kind)
    _emit(report, ci_text, summary, args)
    return EXIT_OK


def cmd_patterns(args) -> int:
    if not 1 <= args.j <= MAX_PATTERN_J:
        raise InputError(f"--j must lie in 1..{MAX_PATTERN_J}, got {args.j}")
    for pattern in enumerate_alternative_patterns(args.j):
        print(format_pattern(pattern))
    return EXIT_OK


def _alpha(text):
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0 < value < 1:
        raise argparse.ArgumentTypeError(f"alpha must lie strictly between 0 and 1, got {value}")
    return value


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="iutpower", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log warnings to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="Monte Carlo power for a scenario file")
    s.add_argument("--scenarios", required=True, help="JSON scenario file")
    s.add_argument("--sims", type=int, help="override replicates per scenario")
    s.add_argument("--seed", type=int, help="override the seed of every scenario")
    s.add_argument("--alpha", type=_alpha, help="override the level of every scenario")
    s.add_argument("--workers", type=int, default=1, help="worker processes (default 1)")
    s.add_argument("--out", required=True, help="result CSV")
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("example", help="analyse the embedded dose-finding example")
    e.add_argument("--alpha", type=_alpha, default=0.05)
    e.add_argument("--out", help="p-value report CSV")
    e.add_argument("--ci-out", help="simultaneous confidence limits CSV")
    e.add_argument("--data-out", help="export the embedded data as CSV")
    e.set_defaults(func=cmd_example)

    a = sub.add_parser("analyze", help="analyse a CSV dataset")
    a.add_argument("--data", required=True)
    a.add_argument("--group-col", required=True)
    a.add_argument("--control", help="control group label (default: first in natural order)")
    a.add_argument("--endpoints", help="comma-separated endpoint columns (default: all others)")
    a.add_argument("--alpha", type=_alpha, default=0.05)
    a.add_argument("--alternative", default="greater",
                   choices=["greater", "less", "two-sided", "two_sided"])
    a.add_argument("--cov", default="sandwich", choices=["model", "model_based", "sandwich"])
    a.add_argument("--out", help="p-value report CSV")
    a.add_argument("--ci-out", help="simultaneous confidence limits CSV")
    a.set_defaults(func=cmd_analyze)

    t = sub.add_parser("patterns", help="list the alternative patterns of J hypotheses")
    t.add_argument("--j", type=int, required=True)
    t.set_defaults(func=cmd_patterns)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.verbose else logging.ERROR,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except DegenerateGroupError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SMALL_GROUP
    except SingularDesignError as exc:
        print(f"error: endpoint {exc.endpoint!r}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except _NUMERIC_ERRORS as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
