"""The Kronecker sequence ``{k theta + phi}`` with certified positions.

A point is kept symbolically as ``(k, m)`` meaning ``k*theta + phi - m``.  Its
value is enclosed through a convergent ``P_N/Q_N``:

    |k theta - k P_N/Q_N| < k / (Q_N Q_{N+1})

so each point becomes an integer centre and half-width over a common integer
scale.  Orderings, gap classifications and discrepancies are then decided in
exact integer arithmetic (numpy ``int64`` while it cannot overflow, Python
integers otherwise).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np
from gmpy2 import mpq

from ergosum.cf_engine import (
    REFINEMENT_CAP,
    Certificate,
    ThetaSpec,
    quality_enclosure,
)
from ergosum.enclosure import Enclosure, UndecidedError, Verdict, to_mpq

INT64_SAFE = 2**62

DEFAULT_APPROX_BUDGET = 10**6
MATERIALIZE_BUDGET = 10**7


class ThreeGapViolation(AssertionError):
    """A gap matched neither three-distance length (indicates a bug)."""


def _int_array(values) -> np.ndarray:
    arr = np.asarray(values, dtype=object)
    if arr.size == 0:
        return np.zeros(0, dtype=np.int64)
    hi = max(abs(int(arr.max())), abs(int(arr.min())))
    if hi < INT64_SAFE:
        return arr.astype(np.int64)
    return arr


def _fits(*bounds: int) -> bool:
    return all(abs(int(b)) < INT64_SAFE for b in bounds)


def level_for(spec: ThetaSpec, target: int) -> int:
    """Smallest ``N`` with ``Q_N * Q_{N+1} >= target``."""
    n = 0
    while spec.Q(n) * spec.Q(n + 1) < target:
        n += 1
    return n


@dataclass(frozen=True)
class OrbitPoint:
    """The point ``k*theta + phi - m`` in ``[0, 1)`` with a value enclosure."""

    k: int
    m: int
    lo: mpq
    hi: mpq

    @property
    def enclosure(self) -> Enclosure:
        return Enclosure(self.lo, self.hi)

    def __float__(self) -> float:
        return float((self.lo + self.hi) / 2)


class PointBatch:
    """Certified integer representation of ``{k theta + phi}`` for many ``k``.

    Point ``i`` lies in ``[(centre[i] - halfwidth[i]) / scale,
    (centre[i] + halfwidth[i]) / scale]`` and equals ``k[i]*theta + phi - m[i]``.
    """

    def __init__(self, spec: ThetaSpec, ks, phi, level: int):
        phi = to_mpq(phi)
        if not 0 <= phi < 1:
            raise ValueError("phi must lie in [0, 1)")
        self.spec = spec
        self.phi = phi
        self.level = level
        ks = _int_array(ks)
        if ks.size and int(ks.min()) < 0:
            raise ValueError("orbit indices must be nonnegative")
        self.k = ks
        P, Q, Q1 = int(spec.P(level)), int(spec.Q(level)), int(spec.Q(level + 1))
        p, q = int(phi.numerator), int(phi.denominator)
        kmax = int(ks.max()) if ks.size else 0
        D = Q * q
        self.scale = D * Q1
        if _fits(kmax * P * q + p * Q, self.scale, 2 * self.scale):
            kk = ks.astype(np.int64)
        else:
            kk = ks.astype(object)
        num = kk * (P * q) + p * Q
        self.m = num // D
        r = num - self.m * D
        self.centre = r * Q1
        self.halfwidth = kk * q
        # floor(k theta + phi) is certified when the enclosure stays inside [0, 1]
        lo_ok = (self.centre - self.halfwidth) >= 0
        hi_ok = (self.centre + self.halfwidth) <= self.scale
        self.certified = bool(np.all(lo_ok & hi_ok))

    def __len__(self) -> int:
        return int(self.k.size)

    def enclosure(self, i: int) -> Enclosure:
        c, w = int(self.centre[i]), int(self.halfwidth[i])
        return Enclosure(mpq(c - w, self.scale), mpq(c + w, self.scale))

    def point(self, i: int) -> OrbitPoint:
        c, w = int(self.centre[i]), int(self.halfwidth[i])
        return OrbitPoint(int(self.k[i]), int(self.m[i]), mpq(c - w, self.scale), mpq(c + w, self.scale))

    def take(self, order) -> "PointBatch":
        out = object.__new__(PointBatch)
        out.__dict__.update(self.__dict__)
        out.k = self.k[order]
        out.m = self.m[order]
        out.centre = self.centre[order]
        out.halfwidth = self.halfwidth[order]
        return out

    def midpoints(self) -> np.ndarray:
        """Float approximations of the point values (for display only)."""
        return np.array([int(c) / self.scale for c in self.centre], dtype=float) if self.centre.dtype == object \
            else self.centre / float(self.scale)

    def max_width(self) -> mpq:
        if len(self) == 0:
            return mpq(0)
        return mpq(2 * int(self.halfwidth.max()), self.scale)


def approximate_points(spec: ThetaSpec, ks, phi=0, level: int | None = None,
                       target_product: int | None = None, cap: int = REFINEMENT_CAP) -> PointBatch:
    """Build a :class:`PointBatch` whose floors are certified.

    ``target_product`` chooses the starting convergent (``Q_N Q_{N+1}`` at least
    this); the level is raised until every point is certified.
    """
    ks = _int_array(ks)
    kmax = int(ks.max()) if ks.size else 0
    if level is None:
        if target_product is None:
            target_product = 8 * (kmax + 1) * (kmax + 2)
        level = level_for(spec, target_product)
    for extra in range(cap + 1):
        batch = PointBatch(spec, ks, phi, level + extra)
        if batch.certified:
            return batch
    raise UndecidedError(f"could not certify floor(k theta + phi) within {cap} extra quotients")


def orbit_stream(spec: ThetaSpec, phi, Q: int, chunk: int = 1 << 16) -> Iterator[OrbitPoint]:
    """Yield ``{k theta + phi}`` for ``k = 0 .. Q-1``; every enclosure is narrower than 2^-64."""
    if Q < 0:
        raise ValueError("Q must be >= 0")
    level = level_for(spec, (Q + 1) << 65)
    for start in range(0, Q, chunk):
        ks = np.arange(start, min(Q, start + chunk), dtype=np.int64)
        batch = approximate_points(spec, ks, phi, level=level)
        for i in range(len(batch)):
            yield batch.point(i)


def _certified_sorted(batch: PointBatch) -> tuple[PointBatch, bool]:
    order = np.argsort(batch.centre, kind="stable") if batch.centre.dtype != object else \
        np.array(sorted(range(len(batch)), key=lambda i: int(batch.centre[i])), dtype=np.int64)
    b = batch.take(order)
    if len(b) < 2:
        return b, True
    upper = b.centre[:-1] + b.halfwidth[:-1]
    lower = b.centre[1:] - b.halfwidth[1:]
    return b, bool(np.all(lower > upper))


def sort_points(spec: ThetaSpec, ks, phi=0, cap: int = REFINEMENT_CAP) -> PointBatch:
    """Sort orbit points by value, refining ``theta`` until the order is certified."""
    batch = approximate_points(spec, ks, phi)
    for _ in range(cap + 1):
        sorted_batch, ok = _certified_sorted(batch)
        if ok:
            return sorted_batch
        batch = approximate_points(spec, ks, phi, level=batch.level + 1)
    raise UndecidedError("orbit order could not be certified within the refinement cap")


@dataclass
class OrderedOrbit:
    """The level-``nu`` partition points ``0 = x_0 < ... < x_{Q_nu - 1}`` (sentinel 1)."""

    spec: ThetaSpec
    nu: int
    points: PointBatch

    @property
    def k(self) -> np.ndarray:
        return self.points.k

    @property
    def m(self) -> np.ndarray:
        return self.points.m

    def __len__(self) -> int:
        return len(self.points)

    def point(self, i: int) -> OrbitPoint:
        return self.points.point(i)

    def gap_pairs(self) -> tuple[np.ndarray, np.ndarray]:
        """Integer pairs ``(d, e)`` with gap ``i`` equal to ``d*theta - e`` exactly.

        Gap ``i`` runs from ``x_i`` to ``x_{i+1}``; the last gap ends at the
        sentinel ``1 = 0*theta - (-1)``.
        """
        k = self.k
        m = self.m
        k_next = np.concatenate([k[1:], np.zeros(1, dtype=k.dtype)])
        m_next = np.concatenate([m[1:], np.full(1, -1, dtype=m.dtype)])
        return k_next - k, m_next - m


def sorted_orbit(spec: ThetaSpec, nu: int, budget: int = MATERIALIZE_BUDGET) -> OrderedOrbit:
    """Certified sorted orbit ``{k theta}``, ``k < Q_nu``."""
    if nu < 0:
        raise ValueError("nu must be >= 0")
    Q = int(spec.Q(nu))
    if Q > budget:
        raise MemoryError(f"Q_{nu} = {Q} exceeds the materialisation budget {budget}")
    batch = sort_points(spec, np.arange(Q, dtype=np.int64), 0)
    if int(batch.k[0]) != 0:
        raise AssertionError("smallest orbit point must be 0")
    return OrderedOrbit(spec, nu, batch)


@dataclass(frozen=True)
class GapProfile:
    level: int
    count_short: int
    count_long: int
    short_len: Enclosure
    long_len: Enclosure

    def csv_row(self) -> list:
        return [self.level, self.count_short, self.count_long,
                *self.short_len.as_strings(), *self.long_len.as_strings()]


GAPS_CSV_HEADER = ["level", "count_short", "count_long", "short_lo", "short_hi", "long_lo", "long_hi"]
ORBIT_CSV_HEADER = ["k", "m", "value_lo", "value_hi"]


def _tight_quality(spec: ThetaSpec, nu: int, rel_bits: int) -> Enclosure:
    for depth in range(1, REFINEMENT_CAP + 1):
        e = quality_enclosure(spec, nu, depth)
        if e.width() * 2**rel_bits <= e.lo:
            return e
    return e


def gap_lengths(spec: ThetaSpec, nu: int, rel_bits: int = 64) -> tuple[Enclosure, Enclosure]:
    """Enclosures of the short and long level-``nu`` gap lengths, relative width ``2^-rel_bits``."""
    short = Enclosure.exact(1) if nu == 0 else _tight_quality(spec, nu - 1, rel_bits)
    return short, short + _tight_quality(spec, nu, rel_bits)


def classify_gaps(orbit: OrderedOrbit) -> np.ndarray:
    """Boolean array: True for long gaps.  Raises on any three-distance violation."""
    spec, nu = orbit.spec, orbit.nu
    qp, pp = int(spec.Q(nu - 1)), int(spec.P(nu - 1))
    qn, pn = int(spec.Q(nu)), int(spec.P(nu))
    d, e = orbit.gap_pairs()
    short = ((d == qp) & (e == pp)) | ((d == -qp) & (e == -pp))
    ld, le = qp - qn, pp - pn
    long_ = ((d == ld) & (e == le)) | ((d == -ld) & (e == -le))
    bad = ~(short | long_)
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise ThreeGapViolation(f"gap {i} at level {nu} is {int(d[i])}*theta - {int(e[i])}")
    return np.asarray(long_, dtype=bool)


def three_gap_profile(orbit: OrderedOrbit) -> GapProfile:
    """Count short/long gaps and check them against ``(Q_nu - Q_{nu-1}, Q_{nu-1})``."""
    spec, nu = orbit.spec, orbit.nu
    is_long = classify_gaps(orbit)
    n_long = int(is_long.sum())
    n_short = len(orbit) - n_long
    expected = (int(spec.Q(nu) - spec.Q(nu - 1)), int(spec.Q(nu - 1)))
    if (n_short, n_long) != expected:
        raise ThreeGapViolation(f"level {nu}: counts {(n_short, n_long)} != {expected}")
    short_len, long_len = gap_lengths(spec, nu)
    return GapProfile(nu, n_short, n_long, short_len, long_len)


# ---------------------------------------------------------------------------
# discrepancy
# ---------------------------------------------------------------------------

def _bounds_of(p) -> tuple[mpq, mpq]:
    if isinstance(p, OrbitPoint):
        return p.lo, p.hi
    if isinstance(p, Enclosure):
        return p.lo, p.hi
    q = to_mpq(p)
    return q, q


def discrepancy(points: Sequence) -> Enclosure:
    """Enclosure of ``sup_gamma |#{xi_j <= gamma} - Q gamma|``.

    Accepts orbit points, enclosures or exact rationals in ``[0, 1)``; uses
    ``max_i max(i - Q xi_(i), Q xi_(i) - (i - 1))`` over the sorted points.
    """
    if isinstance(points, PointBatch):
        return batch_discrepancy(points)
    bounds = sorted((_bounds_of(p) for p in points), key=lambda b: (b[0], b[1]))
    Q = len(bounds)
    if Q == 0:
        return Enclosure.exact(0)
    for (lo0, hi0), (lo1, hi1) in zip(bounds, bounds[1:]):
        if hi0 > lo1:
            raise UndecidedError("point enclosures overlap; order is not certified")
    d_lo = d_hi = None
    for i, (lo, hi) in enumerate(bounds, 1):
        a_lo = max(i - Q * hi, Q * lo - (i - 1))
        a_hi = max(i - Q * lo, Q * hi - (i - 1))
        d_lo = a_lo if d_lo is None else max(d_lo, a_lo)
        d_hi = a_hi if d_hi is None else max(d_hi, a_hi)
    return Enclosure(d_lo, d_hi)


def batch_discrepancy(batch: PointBatch, cap: int = REFINEMENT_CAP) -> Enclosure:
    """Discrepancy of a point batch in integer arithmetic, refining until ordered."""
    sb, ok = _certified_sorted(batch)
    tries = 0
    while not ok:
        tries += 1
        if tries > cap:
            raise UndecidedError("point order not certified within refinement cap")
        batch = approximate_points(batch.spec, batch.k, batch.phi, level=batch.level + 1)
        sb, ok = _certified_sorted(batch)
    Q = len(sb)
    if Q == 0:
        return Enclosure.exact(0)
    S = sb.scale
    if _fits(Q * S + Q * S, 2 * Q * S):
        i = np.arange(1, Q + 1, dtype=np.int64)
        c, w = sb.centre.astype(np.int64), sb.halfwidth.astype(np.int64)
    else:
        i = np.arange(1, Q + 1, dtype=np.int64).astype(object)
        c, w = sb.centre.astype(object), sb.halfwidth.astype(object)
    lo = c - w
    hi = c + w
    a_lo = np.maximum(i * S - Q * hi, Q * lo - (i - 1) * S)
    a_hi = np.maximum(i * S - Q * lo, Q * hi - (i - 1) * S)
    return Enclosure(mpq(int(a_lo.max()), S), mpq(int(a_hi.max()), S))


def orbit_discrepancy(spec: ThetaSpec, Q: int, phi=0) -> Enclosure:
    """Discrepancy enclosure of ``{k theta + phi}``, ``k < Q``."""
    return batch_discrepancy(approximate_points(spec, np.arange(Q, dtype=np.int64), phi))


def convergent_discrepancy_bound(spec: ThetaSpec, l: int) -> Certificate:
    """Certify ``D <= 2`` for the first ``Q_l`` points of ``{k theta + phi}``, any ``phi``.

    No enumeration: the points are the shifted lattice ``{j/Q_l + phi}``
    (discrepancy < 1), each moved one way by less than ``1/Q_l``, which changes
    any count by at most one.  The certificate checks the move bound
    ``(Q_l - 1) / (Q_l Q_{l+1}) < 1/Q_l`` exactly.
    """
    Ql, Ql1 = int(spec.Q(l)), int(spec.Q(l + 1))
    ok = l >= 0 and Ql >= 1 and (Ql - 1) < Ql1
    return Certificate(Verdict.HOLDS if ok else Verdict.UNDECIDED, Enclosure(0, 2), 0,
                       {"Q": Ql, "max_shift": mpq(Ql - 1, Ql * Ql1)})


# ---------------------------------------------------------------------------
# best approximations
# ---------------------------------------------------------------------------

def best_approx_check(spec: ThetaSpec, nu: int, budget: int = DEFAULT_APPROX_BUDGET,
                      cap: int = 16) -> Certificate:
    """Certify ``|Q_nu theta - P_nu| < ||q theta||`` for ``1 <= q < Q_{nu+1}``, ``q != Q_nu``.

    Returns HOLDS, FAILS (``detail['witness']`` is the offending q) or, when the
    range exceeds ``budget``, UNDECIDED with ``detail['skipped'] = True``.
    """
    Qn, Qn1 = int(spec.Q(nu)), int(spec.Q(nu + 1))
    if Qn1 - 1 > budget:
        return Certificate(Verdict.UNDECIDED, None, 0, {"skipped": True, "range": Qn1 - 1})
    qs = np.arange(1, Qn1, dtype=np.int64)
    qs = qs[qs != Qn]
    qual = quality_enclosure(spec, nu, 2)
    if qs.size == 0:
        return Certificate(Verdict.HOLDS, qual, 0, {"checked": 0})
    batch = approximate_points(spec, qs, 0, target_product=64 * Qn1 * Qn1)
    for depth in range(cap):
        S = batch.scale
        c, w = batch.centre, batch.halfwidth
        dist_lo = np.minimum(c - w, S - c - w)
        dist_hi = np.minimum(c + w, S - c + w)
        i_lo = int(np.argmin(dist_lo))
        min_lo = mpq(int(dist_lo[i_lo]), S)
        if min_lo > qual.hi:
            return Certificate(Verdict.HOLDS, qual, depth, {"checked": int(qs.size), "min_other": min_lo})
        i_hi = int(np.argmin(dist_hi))
        if mpq(int(dist_hi[i_hi]), S) < qual.lo:
            return Certificate(Verdict.FAILS, qual, depth, {"witness": int(qs[i_hi])})
        qual = quality_enclosure(spec, nu, 3 + depth)
        batch = approximate_points(spec, qs, 0, level=batch.level + 1)
    return Certificate(Verdict.UNDECIDED, qual, cap, {"checked": int(qs.size)})


# ---------------------------------------------------------------------------
# CSV emitters
# ---------------------------------------------------------------------------

def write_gaps_csv(profiles: Sequence[GapProfile], fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(GAPS_CSV_HEADER)
    for p in profiles:
        w.writerow(p.csv_row())


def write_orbit_csv(points: Sequence[OrbitPoint], fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(ORBIT_CSV_HEADER)
    for p in points:
        w.writerow([p.k, p.m, f"{p.lo.numerator}/{p.lo.denominator}", f"{p.hi.numerator}/{p.hi.denominator}"])


def frac_distance(spec: ThetaSpec, q: int, rel_bits: int = 64) -> Enclosure:
    """Enclosure of ``||q theta||``, the distance from ``q theta`` to the nearest integer."""
    if q == 0:
        return Enclosure.exact(0)
    q = abs(int(q))
    level = level_for(spec, (q + 1) << rel_bits)
    for extra in range(REFINEMENT_CAP):
        x = approximate_points(spec, [q], 0, level=level + extra).enclosure(0)
        d = Enclosure(min(x.lo, 1 - x.hi), min(x.hi, 1 - x.lo)) if x.hi <= mpq(1, 2) or x.lo >= mpq(1, 2) else None
        if d is not None and d.width() * 2**rel_bits <= d.lo:
            return d
    raise UndecidedError(f"||{q} theta|| not resolved")
