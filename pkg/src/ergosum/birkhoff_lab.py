"""Certified Birkhoff sums ``sum_{k<Q} f(k theta + phi)`` and experiments built on them.

Functions are evaluated per point as a float plus a rigorous radius, so a sum of
``10^6`` terms costs milliseconds while staying an enclosure.  Summation order
is fixed (ascending ``k``, fixed chunks) and the result is bit-reproducible.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from gmpy2 import mpq

from ergosum.cf_engine import ThetaSpec, condition_oo1o_trace, quality_enclosure
from ergosum.enclosure import Enclosure, Verdict, interval_sum, parse_rational, pi_enclosure, to_mpq
from ergosum.fourier import (
    FourierSeries,
    PointFloats,
    SAFETY,
    U,
    float_enclosure,
    float_up,
    sum_floats,
)
from ergosum.kronecker_orbit import (
    PointBatch,
    approximate_points,
    discrepancy,
    frac_distance,
    level_for,
)

DEFAULT_SUM_BUDGET = 10**7
CHUNK = 1 << 16
CSV_HEADER = ["nu", "Q", "phi", "sum_lo", "sum_hi", "bound", "verdict"]


class PreconditionError(ValueError):
    """An experiment's hypothesis is false or could not be certified."""


class EvaluationError(RuntimeError):
    def __init__(self, k: int, cause: Exception):
        super().__init__(f"evaluation failed at k={k}: {cause}")
        self.k = k


# ---------------------------------------------------------------------------
# functions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModulusBound:
    """``omega(delta) <= c * delta`` (``kind='lipschitz'``) or ``omega = 0`` (``kind='zero'``)."""

    kind: str
    constant: Enclosure = field(default_factory=lambda: Enclosure.exact(0))

    @classmethod
    def lipschitz(cls, c) -> "ModulusBound":
        return cls("lipschitz", Enclosure.coerce(c))

    @classmethod
    def zero(cls) -> "ModulusBound":
        return cls("zero")

    def __call__(self, delta) -> Enclosure:
        d = Enclosure.coerce(delta)
        if self.kind == "zero":
            return Enclosure.exact(0)
        return Enclosure(self.constant.lo * max(d.lo, 0), self.constant.hi * max(d.hi, 0))


BatchEval = Callable[[PointBatch], "tuple[np.ndarray, np.ndarray]"]


@dataclass(frozen=True)
class PeriodicFunction:
    """A 1-periodic function with a rigorous batch evaluator.

    ``batch_eval`` returns float values and radii with each true value inside
    ``mid +- rad``; ``point_eval`` encloses a single value exactly.
    """

    name: str
    batch_eval: BatchEval
    point_eval: Callable[[Enclosure], Enclosure]
    variation: mpq | None = None
    modulus: ModulusBound | None = None
    even: bool = False
    mean: mpq = mpq(0)
    fourier: FourierSeries | None = None


def _reduce(x: Enclosure) -> Enclosure:
    """Shift an enclosure by an integer so that ``lo`` lies in ``[0, 1)``."""
    n = math.floor(x.lo)
    return Enclosure(x.lo - n, x.hi - n)


def from_fourier(name: str, series: FourierSeries) -> PeriodicFunction:
    c = series.lipschitz_bound()
    return PeriodicFunction(
        name=name,
        batch_eval=lambda b: series.eval_floats(PointFloats.from_batch(b)),
        point_eval=lambda x: series.eval_exact(x),
        variation=series.variation_bound(),
        modulus=ModulusBound.lipschitz(c) if series.terms else ModulusBound.zero(),
        even=series.is_even(),
        fourier=series,
    )


def zero_function() -> PeriodicFunction:
    def batch(b):
        z = np.zeros(len(b))
        return z, z
    return PeriodicFunction("zero", batch, lambda x: Enclosure.exact(0), mpq(0), ModulusBound.zero(), True,
                            fourier=FourierSeries(()))


def cos_harmonic(m: int) -> PeriodicFunction:
    return from_fourier(f"cosM:{m}" if m != 1 else "cos1", FourierSeries.from_rationals([(m, 1, 0)]))


def tent_function() -> PeriodicFunction:
    """``|2{x} - 1| - 1/2``: even, zero mean, variation 2, Lipschitz 2."""
    def point(x: Enclosure) -> Enclosure:
        x = _reduce(x)
        if x.hi > 1:  # crosses an integer: the value near 0/1 is 1/2
            lo_part = point(Enclosure(x.lo, mpq(1)))
            return Enclosure.hull(lo_part, point(Enclosure(mpq(0), x.hi - 1)))
        return abs(x * 2 - 1) - mpq(1, 2)

    def batch(b):
        p = PointFloats.from_batch(b)
        mid = np.abs(2 * p.x - 1) - 0.5
        return mid, (2 * p.r + 4 * U) * SAFETY

    return PeriodicFunction("sawtooth", batch, point, mpq(2), ModulusBound.lipschitz(2), True)


def _enclosures_to_floats(values) -> tuple[np.ndarray, np.ndarray]:
    mids = np.empty(len(values))
    rads = np.empty(len(values))
    for i, e in enumerate(values):
        m = float(e.mid())
        mids[i] = m
        rads[i] = float_up(e.rad() + abs(e.mid() - mpq(m)))
    return mids, rads


def t1_function(n_max: int = 6) -> PeriodicFunction:
    from ergosum.t1_construction import build_schedule, eval_f
    s = build_schedule(n_max)

    def point(x: Enclosure) -> Enclosure:
        x = _reduce(x)
        if x.hi > 1:
            return Enclosure.hull(eval_f(s, Enclosure(x.lo, mpq(1))), eval_f(s, Enclosure(mpq(0), x.hi - 1)))
        return eval_f(s, x)

    def batch(b):
        return _enclosures_to_floats([point(b.enclosure(i)) for i in range(len(b))])

    return PeriodicFunction("t1:f", batch, point, None, None, False)


def t2_function(spec: ThetaSpec) -> PeriodicFunction:
    """``g = f - mean(f)`` for the singular construction over ``theta``."""
    from ergosum.t2_construction import best_mean, build_level, deepest_level, eval_f_theta
    mean = best_mean(spec).enclosure
    deep = build_level(spec, deepest_level(spec))

    def point(x: Enclosure) -> Enclosure:
        x = _reduce(x)
        if x.hi > 1:
            v = Enclosure.hull(eval_f_theta(spec, Enclosure(x.lo, mpq(1))).value,
                               eval_f_theta(spec, Enclosure(mpq(0), x.hi - 1)).value)
        else:
            v = eval_f_theta(spec, x).value
        return v - mean

    def batch(b):
        out = []
        pos = deep._position()
        for i in range(len(b)):
            k = int(b.k[i])
            if b.phi == 0 and k in pos:
                out.append(Enclosure.exact(deep.values[pos[k]]) - mean)
            else:
                out.append(point(b.enclosure(i)))
        return _enclosures_to_floats(out)

    return PeriodicFunction("t2:g", batch, point, mpq(2), None, False)


def load_fourier_file(path) -> FourierSeries:
    """Coefficient file: one ``m a b`` line per harmonic (exact rationals), ``#`` comments."""
    coeffs = []
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ValueError(f"bad coefficient line: {line!r}")
        coeffs.append((int(parts[0]), parse_rational(parts[1]), parse_rational(parts[2])))
    return FourierSeries.from_rationals(coeffs)


def resolve_function(name: str, spec: ThetaSpec | None = None) -> PeriodicFunction:
    """Built-in registry: ``zero``, ``cos1``, ``cosM:k``, ``sawtooth``, ``t1:f``, ``t2:g``, ``fourier:PATH``."""
    if name == "zero":
        return zero_function()
    if name == "cos1":
        return cos_harmonic(1)
    if name.startswith("cosM:"):
        return cos_harmonic(int(name.split(":", 1)[1]))
    if name in ("sawtooth", "tent"):
        return tent_function()
    if name == "t1:f":
        return t1_function()
    if name == "t2:g":
        if spec is None:
            raise ValueError("t2:g needs a theta spec")
        return t2_function(spec)
    if name.startswith("fourier:"):
        return from_fourier(name, load_fourier_file(name.split(":", 1)[1]))
    raise KeyError(f"unknown function {name!r}")


# ---------------------------------------------------------------------------
# sums
# ---------------------------------------------------------------------------

@dataclass
class SumReport:
    Q: int
    phi: mpq
    sum: Enclosure
    elapsed: float
    stats: dict

    def to_dict(self, timestamp: bool = True) -> dict:
        d = {"Q": self.Q, "phi": f"{self.phi.numerator}/{self.phi.denominator}",
             "sum": self.sum.as_strings(), "stats": self.stats}
        if timestamp:
            d["elapsed"] = round(self.elapsed, 6)
        return d


def _batches(spec: ThetaSpec, phi, start: int, stop: int, level: int, chunk: int = CHUNK):
    for lo in range(start, stop, chunk):
        ks = np.arange(lo, min(stop, lo + chunk), dtype=np.int64)
        yield approximate_points(spec, ks, phi, level=level)


def point_values(f: PeriodicFunction, spec: ThetaSpec, phi, Q: int, start: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Per-point mids and radii for ``k = start .. Q-1``."""
    level = level_for(spec, (Q + 1) << 64)
    mids, rads = [], []
    for b in _batches(spec, phi, start, Q, level):
        try:
            m, r = f.batch_eval(b)
        except Exception as exc:  # noqa: BLE001 - reported with the chunk's first index
            raise EvaluationError(int(b.k[0]), exc) from exc
        mids.append(m)
        rads.append(r)
    if not mids:
        return np.zeros(0), np.zeros(0)
    return np.concatenate(mids), np.concatenate(rads)


def birkhoff_sum(f: PeriodicFunction, spec: ThetaSpec, phi, Q: int,
                 budget: int = DEFAULT_SUM_BUDGET, start: int = 0, threads: int = 1) -> SumReport:
    """Enclosure of ``sum_{start <= k < Q} f(k theta + phi)``."""
    phi = to_mpq(phi)
    if Q - start > budget:
        raise MemoryError(f"Q = {Q} exceeds the summation budget {budget}")
    t0 = time.perf_counter()
    level = level_for(spec, (Q + 1) << 64)

    def chunk_sum(b: PointBatch) -> Enclosure:
        try:
            m, r = f.batch_eval(b)
        except Exception as exc:  # noqa: BLE001
            raise EvaluationError(int(b.k[0]), exc) from exc
        return sum_floats(m, r)

    batches = _batches(spec, phi, start, Q, level)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(chunk_sum, batches))
    else:
        parts = [chunk_sum(b) for b in batches]
    # ascending chunk order, so the result does not depend on the pool size
    total = Enclosure.exact(0)
    for part in parts:
        total = total + part
    return SumReport(Q, phi, total, time.perf_counter() - t0, {"chunks": len(parts), "level": level})


def prefix_sums(f: PeriodicFunction, spec: ThetaSpec, cuts: list, phi=0) -> list:
    """``[sum_{k<c} f(k theta + phi) for c in cuts]`` from one pass over ``k``."""
    if not cuts:
        return []
    mids, rads = point_values(f, spec, phi, max(cuts))
    return [sum_floats(mids[:c], rads[:c]) for c in cuts]


# ---------------------------------------------------------------------------
# Koksma, window counts, trigonometric polynomials
# ---------------------------------------------------------------------------

def _jsonable(v):
    if isinstance(v, Enclosure):
        return v.as_strings()
    if isinstance(v, mpq):
        return f"{v.numerator}/{v.denominator}"
    return v


@dataclass
class Check:
    verdict: Verdict
    value: Enclosure | None
    bound: Enclosure | None
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"verdict": self.verdict.value,
                "value": self.value.as_strings() if self.value is not None else None,
                "bound": self.bound.as_strings() if self.bound is not None else None,
                **{k: _jsonable(v) for k, v in self.detail.items()}}


def koksma_check(f: PeriodicFunction, points) -> Check:
    """``|sum f(xi) - Q int f| <= Var[f] D(Xi)`` on a point batch or a list of enclosures/rationals."""
    if f.variation is None:
        raise PreconditionError(f"{f.name} has no variation bound")
    if isinstance(points, PointBatch):
        m, r = f.batch_eval(points)
        s = sum_floats(m, r)
        Q = len(points)
    else:
        encl = [Enclosure.coerce(p) for p in points]
        s = interval_sum(f.point_eval(p) for p in encl)
        Q = len(encl)
    D = discrepancy(points)
    lhs = abs(s - f.mean * Q)
    rhs = D * f.variation
    return Check(lhs.le(rhs), lhs, rhs, {"Q": Q, "discrepancy": D})


def window_count_bound(spec: ThetaSpec, l: int, interval, phi=0, budget: int = 10**6) -> Check:
    """At most two of ``{k theta + phi}``, ``k < Q_l``, lie in ``I`` when ``||Q_{l-1} theta|| > |I|/2``."""
    a, b = (to_mpq(v) for v in interval)
    if b < a:
        raise ValueError("interval must satisfy a <= b")
    length = b - a
    q_prev = quality_enclosure(spec, l - 1, 4) if l >= 2 else frac_distance(spec, int(spec.Q(l - 1)))
    hyp = q_prev.gt(length / 2)
    if hyp is not Verdict.HOLDS:
        raise PreconditionError(f"||Q_{l - 1} theta|| > |I|/2 is {hyp.value}")
    Q = int(spec.Q(l))
    if Q > budget:
        raise MemoryError(f"Q_{l} = {Q} exceeds the enumeration budget")
    batch = approximate_points(spec, np.arange(Q, dtype=np.int64), phi, target_product=(Q + 1) << 64)
    S = batch.scale
    lo = batch.centre - batch.halfwidth
    hi = batch.centre + batch.halfwidth
    A, B = a * S, b * S
    certain = possible = 0
    for shift in (-S, 0, S):  # I may wrap past 1
        for i in range(Q):
            plo, phi_ = int(lo[i]) + shift, int(hi[i]) + shift
            if plo >= A and phi_ <= B:
                certain += 1
            if phi_ >= A and plo <= B:
                possible += 1
    verdict = Verdict.HOLDS if possible <= 2 else (Verdict.FAILS if certain > 2 else Verdict.UNDECIDED)
    return Check(verdict, Enclosure(certain, possible), Enclosure.exact(2), {"Q": Q})


def trig_poly_sum_bound(p, spec: ThetaSpec, nu: int, Q: int, phi=0) -> Check:
    """``|sum_{k<Q} p(k theta + phi)| <= (pi/2) M[p] ||Q theta|| / ||Q_nu theta||`` for degree ``< Q_{nu+1}``."""
    series = p.to_fourier_series() if hasattr(p, "to_fourier_series") else p
    N = series.degree
    if not N < int(spec.Q(nu + 1)):
        raise PreconditionError(f"degree {N} is not below Q_{nu + 1}")
    f = from_fourier("poly", series)
    s = birkhoff_sum(f, spec, phi, Q).sum
    if not series.terms:
        return Check(Verdict.HOLDS, abs(s), Enclosure.exact(0), {"Q": Q})
    bound = pi_enclosure() * series.M_bound() * frac_distance(spec, Q) / frac_distance(spec, int(spec.Q(nu))) / 2
    return Check(abs(s).le(bound), abs(s), bound, {"Q": Q, "degree": N})


# ---------------------------------------------------------------------------
# subsequence experiments
# ---------------------------------------------------------------------------

def densest_window(values: list, width) -> list:
    """Indices of the densest window ``[v, v + width]`` over sorted values; ties go to smaller indices."""
    width = to_mpq(width)
    order = sorted(range(len(values)), key=lambda i: (values[i], i))
    best: list = []
    j = 0
    for i in range(len(order)):
        while values[order[i]] - values[order[j]] > width:
            j += 1
        window = sorted(order[j:i + 1])
        if len(window) > len(best) or (len(window) == len(best) and window < best):
            best = window
    return best


def _usable_levels(spec: ThetaSpec, nu_max: int, budget: int) -> list:
    return [nu for nu in range(0, nu_max + 1) if int(spec.Q(nu)) <= budget]


@dataclass
class ExperimentReport:
    name: str
    status: str  # "ok" or "inconclusive"
    checks: dict
    detail: dict

    @property
    def verdict(self) -> Verdict:
        if self.status != "ok":
            return Verdict.UNDECIDED
        return Verdict.all(c.verdict for c in self.checks.values())

    def to_dict(self) -> dict:
        return {"experiment": self.name, "status": self.status, "verdict": self.verdict.value,
                "checks": {k: c.to_dict() for k, c in self.checks.items()},
                **{k: _jsonable(v) for k, v in self.detail.items()}}


def prop1_experiment(f: PeriodicFunction, spec: ThetaSpec, nu_max: int, window=mpq(1, 10),
                     trace_threshold=mpq(1, 2), budget: int = 10**6) -> ExperimentReport:
    """Small sums along ``Q(m) = Q_{nu_n} - Q_{nu_m}`` when ``Q_nu omega(||Q_nu theta||)`` decays.

    Bound: ``|sum_{k<Q(m)} f| <= |S_n - S_m| + Q_m (omega(q_n) + omega(q_m))``
    where ``S_nu = sum_{k<Q_nu} f(k theta)``.
    """
    if f.modulus is None:
        raise PreconditionError(f"{f.name} has no modulus of continuity")
    levels = _usable_levels(spec, nu_max, budget)
    trace = condition_oo1o_trace(spec, f.modulus, levels)
    decays = trace[-1].lt(to_mpq(trace_threshold))
    detail = {"levels": levels, "trace": [t.as_strings() for t in trace]}
    if decays is not Verdict.HOLDS:
        return ExperimentReport("prop1", "inconclusive", {}, {**detail, "reason": "trace does not decay"})
    Qs = [int(spec.Q(nu)) for nu in levels]
    sums = prefix_sums(f, spec, Qs)
    cluster = densest_window([s.mid() for s in sums], window)
    best = None
    for a in range(len(cluster)):
        for b in range(a + 1, len(cluster)):
            i, j = cluster[a], cluster[b]
            if Qs[j] <= Qs[i]:
                continue
            qi = quality_enclosure(spec, levels[i], 4)
            qj = quality_enclosure(spec, levels[j], 4)
            bound = abs(sums[j] - sums[i]) + (f.modulus(qi) + f.modulus(qj)) * Qs[i]
            if best is None or bound.hi < best[2].hi:
                best = (i, j, bound)
    if best is None:
        return ExperimentReport("prop1", "inconclusive", {}, {**detail, "reason": "no qualifying pair"})
    i, j, bound = best
    Qm = Qs[j] - Qs[i]
    direct = birkhoff_sum(f, spec, 0, Qm).sum
    checks = {"bound": Check(abs(direct).le(bound), abs(direct), bound)}
    detail.update({"nu_m": levels[i], "nu_n": levels[j], "Q_m": Qm,
                   "gamma": float(sums[i].mid()), "sum": direct})
    return ExperimentReport("prop1", "ok", checks, detail)


def prop2_experiment(f: PeriodicFunction, spec: ThetaSpec, nu_max: int, epsilon=mpq(1, 20),
                     budget: int = 10**6) -> ExperimentReport:
    """Small sums for even ``f`` along ``Q(m) = Q_{nu_n} - Q_{nu_m}``.

    Uses ``T_nu = sum_{k=0}^{Q_nu} f(k theta)`` (upper limit included) and
    ``delta = epsilon / (c Q_m)`` from the Lipschitz constant ``c``.
    """
    if not f.even:
        raise PreconditionError(f"{f.name} is not even")
    if f.modulus is None:
        raise PreconditionError(f"{f.name} has no modulus of continuity")
    eps = to_mpq(epsilon)
    levels = [nu for nu in _usable_levels(spec, nu_max, budget - 1) if nu >= 1]
    Qs = [int(spec.Q(nu)) for nu in levels]
    T = prefix_sums(f, spec, [q + 1 for q in Qs])
    cluster = densest_window([t.mid() for t in T], eps)
    gamma = (T[cluster[0]].mid() + T[cluster[-1]].mid()) / 2 if cluster else mpq(0)
    detail = {"levels": levels, "gamma": float(gamma), "cluster": [levels[i] for i in cluster]}
    for a, i in enumerate(cluster):
        near_m = abs(T[i] - gamma).lt(eps)
        if near_m is not Verdict.HOLDS:
            continue
        Qm = Qs[i]
        c = f.modulus.constant.hi if f.modulus.kind == "lipschitz" else mpq(0)
        delta = eps / (c * Qm) if c > 0 else mpq(1)
        for j in cluster[a + 1:]:
            if Qs[j] <= Qm:
                continue
            qn = frac_distance(spec, Qs[j])
            shift_ok = qn.lt(delta)
            near_n = abs(T[j] - gamma).lt(eps)
            if shift_ok is not Verdict.HOLDS or near_n is not Verdict.HOLDS:
                continue
            shift_err = f.modulus(qn) * (Qm + 1)
            Qmn = Qs[j] - Qm
            direct = birkhoff_sum(f, spec, 0, Qmn).sum
            checks = {
                "start_near_gamma": Check(near_m, abs(T[i] - gamma), Enclosure.exact(eps)),
                "end_shift_small": Check(shift_ok, qn, Enclosure.exact(delta)),
                "end_near_gamma": Check(near_n, abs(T[j] - gamma), Enclosure.exact(eps)),
                "shift_error": Check(shift_err.le(2 * eps), shift_err, Enclosure.exact(2 * eps)),
                "final": Check(abs(direct).lt(4 * eps), abs(direct), Enclosure.exact(4 * eps)),
            }
            detail.update({"nu_m": levels[i], "nu_n": levels[j], "Q_m": Qmn, "sum": direct})
            return ExperimentReport("prop2", "ok", checks, detail)
    return ExperimentReport("prop2", "inconclusive", {}, {**detail, "reason": "no qualifying pair"})


@dataclass
class ScanRow:
    nu: int
    Q: int
    phi: mpq
    value: Enclosure
    grid_step: mpq

    def csv_row(self) -> list:
        lo, hi = self.value.as_strings()
        return [self.nu, self.Q, f"{self.phi.numerator}/{self.phi.denominator}", lo, hi, "lower-bound", "holds"]


def theorem_a_scan(series: FourierSeries, spec: ThetaSpec, nu_range, grid: int = 1024,
                   budget: int = 10**6) -> list:
    """Grid maxima of ``|sum_{k<Q_nu} f(k theta + phi)|`` over ``phi = j / grid``.

    Uses ``sum_k e^{2 pi i m (k theta + phi)} = e^{2 pi i m phi} G_m`` so each
    level costs one pass per harmonic.  A grid maximum is a lower bound of the
    supremum, never the supremum itself.
    """
    rows = []
    for nu in nu_range:
        Q = int(spec.Q(nu))
        if Q > budget:
            break
        total = np.zeros(grid)
        rad = np.zeros(grid)
        for m, a, b in series.terms:
            C = birkhoff_sum(from_fourier("c", FourierSeries.from_rationals([(m, 1, 0)])), spec, 0, Q).sum
            S = birkhoff_sum(from_fourier("s", FourierSeries.from_rationals([(m, 0, 1)])), spec, 0, Q).sum
            cf, sf = float(C.mid()), float(S.mid())
            ang = 2 * np.pi * ((m * np.arange(grid)) % grid) / grid
            ca, sa = np.cos(ang), np.sin(ang)
            af, bf = float(a.mid()), float(b.mid())
            # a cos(2 pi m (x + phi)) + b sin(...) summed over the orbit
            total += af * (cf * ca - sf * sa) + bf * (sf * ca + cf * sa)
            err_cs = float(C.rad()) + float(S.rad()) + (abs(cf) + abs(sf)) * 1e-14
            rad += (abs(af) + abs(bf)) * (err_cs + 1e-15) + float(a.rad() + b.rad()) * (abs(cf) + abs(sf))
        vals = np.abs(total)
        j = int(np.argmax(vals))
        rows.append(ScanRow(nu, Q, mpq(j, grid), float_enclosure(float(vals[j]), float(rad[j]) * SAFETY),
                            mpq(1, grid)))
    return rows
