"""Batch command-line front end.

Every subcommand writes one report (JSON or CSV) atomically and maps the
verdicts it collected onto the exit code: 0 all hold, 2 something undecided
or inconclusive, 1 a failed check or any usage/budget/internal error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
from datetime import datetime, timezone

import numpy as np
from gmpy2 import mpq

from ergosum import birkhoff_lab as lab
from ergosum import cf_engine, kronecker_orbit as orbit, t1_construction as t1, t2_construction as t2
from ergosum.enclosure import Verdict, parse_rational, rational_str

COMMANDS = ("cf", "gaps", "disc", "t1-build", "t1-verify", "t2-build", "t2-verify",
            "sum", "koksma", "prop1", "prop2", "thma")
CSV_DEFAULT = {"gaps", "thma"}

DEFAULTS = {
    "theta": "GOLDEN",
    "phi": "0",
    "f": "cos1",
    "tol": None,
    "budget_q": 10**6,
    "depth": 16,
    "threads": os.cpu_count() or 1,
    "out": None,
    "format": None,
    "no_timestamp": False,
    "n_max": t1.DEFAULT_N_MAX,
    "grid": 1024,
    "epsilon": "1/20",
    "nu": None,
    "nu_max": None,
    "Q": None,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit 2, which means "undecided" here
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _positive(text: str) -> int:
    v = int(text)
    if v <= 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _nonneg(text: str) -> int:
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ergosum", description="Certified Birkhoff sums over irrational rotations.",
                argument_default=argparse.SUPPRESS)
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="key=value file; flags given on the command line win")
    p.add_argument("--theta", help="built-in name (GOLDEN, SQRT2, TICHY-SLOW, TICHY-FAST) or spec file")
    p.add_argument("--nu", type=_nonneg, help="convergent index")
    p.add_argument("--nu-max", dest="nu_max", type=_nonneg, help="largest index scanned by experiments")
    p.add_argument("--Q", type=_positive, help="number of orbit points")
    p.add_argument("--phi", help="shift p/q")
    p.add_argument("--f", help="zero, cos1, cosM:k, sawtooth, t1:f, t2:g or fourier:PATH")
    p.add_argument("--tol", help="evaluation tolerance p/q")
    p.add_argument("--epsilon", help="cluster width p/q for prop2")
    p.add_argument("--budget-q", dest="budget_q", type=_positive, help="largest Q enumerated")
    p.add_argument("--depth", type=_positive, help="max refinement depth")
    p.add_argument("--threads", type=_positive, help="worker threads for sums")
    p.add_argument("--n-max", dest="n_max", type=_positive, help="schedule depth for t1-build")
    p.add_argument("--grid", type=_positive, help="phi grid size for thma")
    p.add_argument("--out", help="report path, '-' for stdout")
    p.add_argument("--format", choices=("json", "csv"))
    p.add_argument("--no-timestamp", dest="no_timestamp", action="store_true")
    return p


_INT_KEYS = {"budget_q", "depth", "threads", "n_max", "grid", "nu", "nu_max", "Q"}


def read_config(path: str) -> dict:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key=value")
            key, value = (t.strip() for t in line.split("=", 1))
            key = key.lstrip("-").replace("-", "_")
            if key not in DEFAULTS:
                raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
            if key == "no_timestamp":
                out[key] = value.lower() in ("1", "true", "yes")
            elif key in _INT_KEYS:
                out[key] = int(value)
            else:
                out[key] = value
    return out


def resolve_config(argv) -> argparse.Namespace:
    ns = build_parser().parse_args(argv)
    given = vars(ns)
    merged = dict(DEFAULTS)
    if "config" in given:
        merged.update(read_config(given["config"]))
    merged.update({k: v for k, v in given.items() if k != "config"})
    merged["command"] = given["command"]
    if merged["format"] is None:
        merged["format"] = "csv" if merged["command"] in CSV_DEFAULT else "json"
    if merged["format"] not in ("json", "csv"):
        raise UsageError(f"unknown format {merged['format']!r}")
    for key in ("budget_q", "depth", "threads", "n_max", "grid"):
        if merged[key] <= 0:
            raise UsageError(f"{key} must be positive")
    if merged["out"] is None:
        merged["out"] = f"{merged['command']}.{merged['format']}"
    return argparse.Namespace(**merged)


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

def write_atomic(path: str, text: str) -> None:
    if path == "-":
        sys.stdout.write(text)
        return
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".ergosum-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def render_json(payload: dict, cfg) -> str:
    doc = dict(payload)
    if not cfg.no_timestamp:
        doc["timestamp"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def render_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _q(x) -> str:
    return rational_str(x)


def _pair(v) -> tuple:
    """Exact report values are scalars, interval values are ``[lo, hi]``."""
    return (v[0], v[1]) if isinstance(v, (list, tuple)) else (v, v)


def _strip_timing(d: dict, cfg) -> dict:
    if cfg.no_timestamp:
        d.pop("elapsed", None)
    return d


# ---------------------------------------------------------------------------
# commands; each returns (verdicts, json payload, csv header, csv rows)
# ---------------------------------------------------------------------------

def _spec(cfg):
    return cf_engine.resolve_spec(cfg.theta)


def _nu_list(cfg, spec, start: int = 1) -> list:
    if cfg.nu is not None:
        return [cfg.nu]
    last = cf_engine.max_nu_with_Q(spec, cfg.budget_q)
    return list(range(start, last + 1))


def cmd_cf(cfg):
    spec = _spec(cfg)
    nu_max = cfg.nu if cfg.nu is not None else 20
    convs = cf_engine.convergents(spec, nu_max + 1)
    rows, items, verdicts = [], [], []
    for c in convs:
        if c.nu < 0 or c.nu > nu_max:
            continue
        cert = cf_engine.verify_q12(spec, c.nu, cfg.depth)
        verdicts.append(cert.verdict)
        items.append({"nu": c.nu, "a": str(spec.quotient(c.nu)), "P": str(c.P), "Q": str(c.Q),
                      "quality_times_next_q": cert.enclosure.as_strings(), "depth": cert.depth,
                      "verdict": cert.verdict.value})
        lo, hi = cert.enclosure.as_strings()
        rows.append([c.nu, c.Q, 0, lo, hi, "1/2", cert.verdict.value])
    payload = {"theta": str(spec), "spec": cf_engine.dumps(spec), "convergents": items,
               "verdict": Verdict.all(verdicts).value}
    return verdicts, payload, lab.CSV_HEADER, rows


def cmd_gaps(cfg):
    spec = _spec(cfg)
    profiles, verdicts, items = [], [], []
    for nu in _nu_list(cfg, spec):
        if int(spec.Q(nu)) > cfg.budget_q:
            raise MemoryError(f"Q_{nu} exceeds --budget-q {cfg.budget_q}")
        prof = orbit.three_gap_profile(orbit.sorted_orbit(spec, nu, budget=cfg.budget_q))
        expected = (int(spec.Q(nu)) - int(spec.Q(nu - 1)), int(spec.Q(nu - 1)))
        v = Verdict.HOLDS if (prof.count_short, prof.count_long) == expected else Verdict.FAILS
        verdicts.append(v)
        profiles.append(prof)
        items.append({"nu": nu, "count_short": prof.count_short, "count_long": prof.count_long,
                      "short": prof.short_len.as_strings(), "long": prof.long_len.as_strings(),
                      "verdict": v.value})
    payload = {"theta": str(spec), "levels": items, "verdict": Verdict.all(verdicts).value}
    return verdicts, payload, orbit.GAPS_CSV_HEADER, [p.csv_row() for p in profiles]


def cmd_disc(cfg):
    spec = _spec(cfg)
    phi = parse_rational(cfg.phi)
    targets = [(nu, int(spec.Q(nu))) for nu in _nu_list(cfg, spec)] if cfg.Q is None else [(None, cfg.Q)]
    verdicts, items, rows = [], [], []
    for nu, Q in targets:
        if Q > cfg.budget_q:
            raise MemoryError(f"Q = {Q} exceeds --budget-q {cfg.budget_q}")
        D = orbit.orbit_discrepancy(spec, Q, phi)
        # the bound D <= 2 is only claimed at convergent denominators
        v = D.le(2) if nu is not None else Verdict.HOLDS
        verdicts.append(v)
        items.append({"nu": nu, "Q": Q, "discrepancy": D.as_strings(), "verdict": v.value})
        lo, hi = D.as_strings()
        rows.append(["" if nu is None else nu, Q, _q(phi), lo, hi, "2" if nu is not None else "", v.value])
    payload = {"theta": str(spec), "phi": _q(phi), "levels": items, "verdict": Verdict.all(verdicts).value}
    return verdicts, payload, lab.CSV_HEADER, rows


def cmd_t1_build(cfg):
    s = t1.build_schedule(cfg.n_max)
    verdicts, rows = [], []
    for n in range(1, cfg.n_max + 1):
        v = Verdict.HOLDS if s.l1_bound[n] <= mpq(1, n) else Verdict.FAILS
        verdicts.append(v)
        rows.append([n, s.N[n], 0, "", _q(s.l1_bound[n]), _q(mpq(1, n)), v.value])
    payload = {"schedule": s.to_dict(), "l1_checks": [r[-1] for r in rows],
               "partial_variation_20": _q(t1.partial_variation(20)), "verdict": Verdict.all(verdicts).value}
    return verdicts, payload, lab.CSV_HEADER, rows


def cmd_t1_verify(cfg):
    spec = _spec(cfg)
    s = t1.build_schedule(cfg.n_max)
    phi = parse_rational(cfg.phi)
    levels = [cfg.nu] if cfg.nu is not None else t1.resolvable_levels(s, spec)
    reports = [t1.decomposition_verify(s, spec, nu, phi) for nu in levels]
    verdicts = [r.verdict for r in reports]
    rows = []
    for r in reports:
        lo, hi = r.total.as_strings()
        rows.append([r.nu, "", _q(phi), lo, hi, _q(mpq(22, r.n)), r.verdict.value])
    payload = {"theta": str(spec), "phi": _q(phi), "reports": [r.to_dict() for r in reports],
               "verdict": Verdict.all(verdicts).value}
    return verdicts, payload, lab.CSV_HEADER, rows


def cmd_t2_build(cfg):
    spec = _spec(cfg)
    nu = cfg.nu if cfg.nu is not None else 4
    tree = t2.build_level(spec, nu, budget=cfg.budget_q)
    inv = t2.tree_invariants(tree)
    flags = {k: v for k, v in inv.items() if isinstance(v, bool)}
    verdicts = [Verdict.HOLDS if ok else Verdict.FAILS for ok in flags.values()]
    segs = list(tree.segments())
    payload = {"theta": str(spec), "nu": nu, "Q": tree.Q,
               "invariants": {k: (v if isinstance(v, (bool, int, str)) else str(v)) for k, v in inv.items()},
               "segments": segs, "verdict": Verdict.all(verdicts).value}
    flat = [_flatten(row) for row in segs]
    header = list(flat[0]) if flat else ["level", "k"]
    return verdicts, payload, header, [[row[h] for h in header] for row in flat]


def _flatten(row: dict) -> dict:
    out = {}
    for key, value in row.items():
        if isinstance(value, dict):
            out.update({f"{key}_{sub}": v for sub, v in value.items()})
        else:
            out[key] = value
    return out


def cmd_t2_verify(cfg):
    spec = _spec(cfg)
    nu = cfg.nu if cfg.nu is not None else 5
    rep = t2.sum_bound_verify(spec, nu, budget=cfg.budget_q)
    rows = [[nu, rep.Q, 0, *_pair(c["value"]), _pair(c["bound"])[1], c["verdict"]] for c in rep.checks]
    payload = {"theta": str(spec), **rep.to_dict()}
    return [rep.verdict], payload, lab.CSV_HEADER, rows


def _sum_Q(cfg, spec) -> tuple:
    if cfg.Q is not None:
        return None, cfg.Q
    if cfg.nu is not None:
        return cfg.nu, int(spec.Q(cfg.nu))
    raise UsageError("give --Q or --nu")


def cmd_sum(cfg):
    spec = _spec(cfg)
    phi = parse_rational(cfg.phi)
    nu, Q = _sum_Q(cfg, spec)
    f = lab.resolve_function(cfg.f, spec)
    rep = lab.birkhoff_sum(f, spec, phi, Q, budget=cfg.budget_q, threads=cfg.threads)
    lo, hi = rep.sum.as_strings()
    payload = {"theta": str(spec), "f": cfg.f, "nu": nu, **_strip_timing(rep.to_dict(not cfg.no_timestamp), cfg),
               "verdict": Verdict.HOLDS.value}
    return [Verdict.HOLDS], payload, lab.CSV_HEADER, [["" if nu is None else nu, Q, _q(phi), lo, hi, "", "holds"]]


def cmd_koksma(cfg):
    spec = _spec(cfg)
    phi = parse_rational(cfg.phi)
    nu, Q = _sum_Q(cfg, spec)
    if Q > cfg.budget_q:
        raise MemoryError(f"Q = {Q} exceeds --budget-q {cfg.budget_q}")
    f = lab.resolve_function(cfg.f, spec)
    batch = orbit.approximate_points(spec, np.arange(Q, dtype=np.int64), phi, target_product=(Q + 1) << 64)
    chk = lab.koksma_check(f, batch)
    lo, hi = chk.value.as_strings()
    payload = {"theta": str(spec), "f": cfg.f, "nu": nu, "phi": _q(phi), **chk.to_dict()}
    return [chk.verdict], payload, lab.CSV_HEADER, [["" if nu is None else nu, Q, _q(phi), lo, hi,
                                                     chk.bound.as_strings()[1], chk.verdict.value]]


def _experiment(cfg, report):
    rows = []
    for name, c in report.checks.items():
        lo, hi = c.value.as_strings() if c.value is not None else ("", "")
        rows.append([report.detail.get("nu_n", ""), report.detail.get("Q_m", ""), 0, lo, hi,
                     c.bound.as_strings()[1] if c.bound is not None else "", c.verdict.value])
    return [report.verdict], {"theta": cfg.theta, "f": cfg.f, **report.to_dict()}, lab.CSV_HEADER, rows


def cmd_prop1(cfg):
    spec = _spec(cfg)
    f = lab.resolve_function(cfg.f, spec)
    nu_max = cfg.nu_max if cfg.nu_max is not None else 40
    return _experiment(cfg, lab.prop1_experiment(f, spec, nu_max, budget=cfg.budget_q))


def cmd_prop2(cfg):
    spec = _spec(cfg)
    f = lab.resolve_function(cfg.f, spec)
    nu_max = cfg.nu_max if cfg.nu_max is not None else 40
    eps = parse_rational(cfg.epsilon)
    return _experiment(cfg, lab.prop2_experiment(f, spec, nu_max, eps, budget=cfg.budget_q))


def cmd_thma(cfg):
    spec = _spec(cfg)
    f = lab.resolve_function(cfg.f, spec)
    if f.fourier is None:
        raise UsageError(f"{cfg.f} has no finite Fourier expansion")
    nu_max = cfg.nu_max if cfg.nu_max is not None else (cfg.nu if cfg.nu is not None else 20)
    scan = lab.theorem_a_scan(f.fourier, spec, range(1, nu_max + 1), grid=cfg.grid, budget=cfg.budget_q)
    rows = [r.csv_row() for r in scan]
    payload = {"theta": str(spec), "f": cfg.f, "grid": cfg.grid,
               "rows": [dict(zip(lab.CSV_HEADER, r)) for r in rows], "verdict": "holds"}
    return [Verdict.HOLDS], payload, lab.CSV_HEADER, rows


HANDLERS = {
    "cf": cmd_cf, "gaps": cmd_gaps, "disc": cmd_disc, "t1-build": cmd_t1_build, "t1-verify": cmd_t1_verify,
    "t2-build": cmd_t2_build, "t2-verify": cmd_t2_verify, "sum": cmd_sum, "koksma": cmd_koksma,
    "prop1": cmd_prop1, "prop2": cmd_prop2, "thma": cmd_thma,
}


def exit_code(verdicts) -> int:
    v = Verdict.all(verdicts)
    return {Verdict.HOLDS: 0, Verdict.UNDECIDED: 2, Verdict.FAILS: 1}[v]


def run(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        cfg = resolve_config(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"ergosum: {exc}", file=sys.stderr)
        return 1
    try:
        verdicts, payload, header, rows = HANDLERS[cfg.command](cfg)
        text = render_json(payload, cfg) if cfg.format == "json" else render_csv(header, rows)
        write_atomic(cfg.out, text)
    except UsageError as exc:
        print(f"ergosum: {exc}", file=sys.stderr)
        return 1
    except (ValueError, LookupError, MemoryError, OSError, ArithmeticError,
            lab.PreconditionError, lab.EvaluationError, orbit.ThreeGapViolation) as exc:
        print(f"ergosum {cfg.command}: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - the exit-code contract covers internal errors too
        print(f"ergosum {cfg.command}: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    code = exit_code(verdicts)
    if cfg.out != "-":
        print(f"{cfg.command}: {Verdict.all(verdicts).value} -> {cfg.out}")
    return code


def main(argv=None) -> int:
    return run(argv)


if __name__ == "__main__":
    sys.exit(main())
