"""A continuous function of variation 2 whose convergent Birkhoff sums tend to 1/6.

``f`` is 1 at 0 and 1, vanishes at ``theta`` and is monotone on each side.  It
is defined on the orbit ``{k theta}`` level by level: the points
``{Q_{nu-1} theta} .. {(Q_nu - 1) theta}`` landing in a level-(nu-1) gap whose
endpoint values differ all receive one weighted average of those endpoints,
``(1/2, 1/2)`` right of ``theta`` and ``(1/3, 2/3)`` left of it.  Gaps with equal
endpoint values are flat.  ``g = f - mean(f)``.

All values are exact rationals with denominators ``2^a 3^b``; positions are the
symbolic ``(k, m)`` orbit points of :mod:`ergosum.kronecker_orbit`.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
from gmpy2 import mpq

from ergosum.cf_engine import ThetaSpec, alpha_enclosure, quality_enclosure, require_t2_compatible
from ergosum.enclosure import Enclosure, Verdict, interval_sum, rational_str, to_mpq
from ergosum.kronecker_orbit import (
    MATERIALIZE_BUDGET,
    OrbitPoint,
    OrderedOrbit,
    classify_gaps,
    gap_lengths,
    sorted_orbit,
)

BASE_LEVEL = 2
HALF = mpq(1, 2)
THIRD = mpq(1, 3)
TWO_THIRDS = mpq(2, 3)


def newcomer_value(fa: mpq, fb: mpq, left_side: bool) -> mpq:
    """Value given to every newcomer inside the gap with endpoint values ``fa``, ``fb``."""
    if fa == fb:
        return fa
    if left_side:
        return THIRD * fa + TWO_THIRDS * fb
    return HALF * (fa + fb)


@dataclass(frozen=True, eq=False)
class SegmentTree:
    """Level-``nu`` points with their exact ``f`` values.

    ``values[i]`` is ``f(x_i)`` for the sorted points, plus ``values[Q] = 1`` at
    the sentinel ``x_Q = 1``.  Segment ``j`` (0-based) is ``[x_j, x_{j+1}]``.
    """

    spec: ThetaSpec
    level: int
    orbit: OrderedOrbit
    values: tuple
    theta_index: int
    parent: "SegmentTree | None" = field(default=None, repr=False)

    @property
    def Q(self) -> int:
        return len(self.orbit)

    def is_jump(self) -> np.ndarray:
        v = self.values
        return np.array([v[j] != v[j + 1] for j in range(self.Q)], dtype=bool)

    def is_left(self) -> np.ndarray:
        """True for segments inside ``[0, theta]``."""
        return np.arange(self.Q) < self.theta_index

    def point_pair(self, i: int) -> dict:
        if i == self.Q:
            return {"k": 0, "m": -1}
        return {"k": int(self.orbit.k[i]), "m": int(self.orbit.m[i])}

    def segments(self) -> Iterable[dict]:
        jump = self.is_jump()
        left = self.is_left()
        for j in range(self.Q):
            yield {
                "level": self.level,
                "k": j + 1,
                "left_point": self.point_pair(j),
                "right_point": self.point_pair(j + 1),
                "f_left": rational_str(self.values[j]),
                "f_right": rational_str(self.values[j + 1]),
                "kind": "jump" if jump[j] else "constant",
                "side": "left" if left[j] else "right",
            }

    def value_of_index(self, k: int) -> mpq:
        """``f({k theta})`` for an orbit index ``k < Q``."""
        pos = self._position().get(int(k))
        if pos is None:
            raise KeyError(f"orbit index {k} is not a level-{self.level} point")
        return self.values[pos]

    def _position(self) -> dict:
        cache = self.__dict__.get("_pos")
        if cache is None:
            cache = {int(k): i for i, k in enumerate(self.orbit.k)}
            object.__setattr__(self, "_pos", cache)
        return cache


_TREES: dict = {}
_TREES_LOCK = threading.Lock()


def _base_tree(spec: ThetaSpec) -> SegmentTree:
    require_t2_compatible(spec)
    orbit = sorted_orbit(spec, BASE_LEVEL)
    return SegmentTree(spec, BASE_LEVEL, orbit, (mpq(1), mpq(0), mpq(1)), 1)


def _insert_level(prev: SegmentTree) -> SegmentTree:
    spec, nu = prev.spec, prev.level + 1
    orbit = sorted_orbit(spec, nu, budget=MATERIALIZE_BUDGET)
    q_prev = int(spec.Q(nu - 1))
    old = np.asarray(orbit.k < q_prev)
    rank = np.cumsum(old) - 1
    pv = prev.values
    seg_value = [newcomer_value(pv[j], pv[j + 1], j < prev.theta_index) for j in range(prev.Q)]
    values = [pv[int(rank[i])] if old[i] else seg_value[int(rank[i])] for i in range(len(orbit))]
    values.append(mpq(1))
    theta_index = int(np.flatnonzero(np.asarray(orbit.k == 1))[0])
    return SegmentTree(spec, nu, orbit, tuple(values), theta_index, prev)


def build_level(spec: ThetaSpec, nu: int, budget: int = MATERIALIZE_BUDGET) -> SegmentTree:
    """Level-``nu`` tree, built (and cached) from level 2 upward."""
    if nu < BASE_LEVEL:
        raise ValueError(f"levels start at {BASE_LEVEL}")
    if int(spec.Q(nu)) > budget:
        raise MemoryError(f"Q_{nu} = {int(spec.Q(nu))} exceeds the tree budget {budget}")
    with _TREES_LOCK:
        tree = _TREES.get((spec, nu))
        if tree is not None:
            return tree
        start = max((lv for (s, lv) in _TREES if s == spec and lv <= nu), default=None)
        tree = _TREES[(spec, start)] if start is not None else _base_tree(spec)
        _TREES[(spec, tree.level)] = tree
        while tree.level < nu:
            tree = _insert_level(tree)
            _TREES[(spec, tree.level)] = tree
        return tree


def deepest_level(spec: ThetaSpec, budget: int = MATERIALIZE_BUDGET) -> int:
    nu = BASE_LEVEL
    while int(spec.Q(nu + 1)) <= budget:
        nu += 1
    return nu


def f_values_at_level(tree: SegmentTree) -> list:
    """Exact ``f(x_{nu,k})`` for ``k = 0 .. Q_nu - 1`` (sorted order)."""
    return list(tree.values[: tree.Q])


def _is_3smooth(q: int) -> bool:
    for p in (2, 3):
        while q % p == 0:
            q //= p
    return q == 1


def tree_invariants(tree: SegmentTree) -> dict:
    """Exact structural checks; every entry should be True."""
    v = tree.values
    t = tree.theta_index
    out = {
        "count": tree.Q == int(tree.spec.Q(tree.level)),
        "denominators": all(_is_3smooth(int(x.denominator)) for x in v),
        "unit_range": all(0 <= x <= 1 for x in v),
        "monotone": all(v[i] >= v[i + 1] for i in range(t)) and all(v[i] <= v[i + 1] for i in range(t, tree.Q)),
        "theta_zero": v[t] == 0 and v[0] == 1 and v[tree.Q] == 1,
    }
    parent = tree.parent
    ok = True
    if parent is not None:
        q_prev = int(tree.spec.Q(tree.level - 1))
        old = np.asarray(tree.orbit.k < q_prev)
        rank = np.cumsum(old) - 1
        pv = parent.values
        for j in range(tree.Q):
            a = int(rank[j])
            same = old[j] and (j + 1 == tree.Q or old[j + 1])
            if same or pv[a] == pv[a + 1] or v[j] == v[j + 1]:
                continue
            if abs(v[j] - v[j + 1]) > TWO_THIRDS * abs(pv[a] - pv[a + 1]):
                ok = False
                break
    out["nested_contraction"] = ok
    return out


# ---------------------------------------------------------------------------
# integrals
# ---------------------------------------------------------------------------

def newcomer_chain(tree: SegmentTree, j: int) -> list:
    """Predicted orbit indices of the level-(nu+1) points inside segment ``j``.

    For even ``nu`` the chain starts at the left endpoint and steps right by
    ``||Q_nu theta||``; for odd ``nu`` it starts at the right endpoint and
    steps left.  Short gaps receive ``a_{nu+1} - 1`` points, long gaps ``a_{nu+1}``.
    """
    spec, nu = tree.spec, tree.level
    a = int(spec.quotient(nu + 1))
    r = a if _gap_classes(tree)[j] else a - 1
    Qn = int(spec.Q(nu))
    anchor = tree.point_pair(j if nu % 2 == 0 else j + 1)["k"]
    return [anchor + i * Qn for i in range(1, r + 1)]


def _gap_classes(tree: SegmentTree) -> np.ndarray:
    cache = tree.__dict__.get("_long")
    if cache is None:
        cache = classify_gaps(tree.orbit)
        object.__setattr__(tree, "_long", cache)
    return cache


@dataclass(frozen=True)
class SegmentIntegrals:
    """``int_{I_j} f`` for every segment as nonnegative combinations of four lengths.

    Columns: level-nu short, level-nu long, level-(nu+1) short, level-(nu+1) long.
    """

    lo: np.ndarray
    hi: np.ndarray
    lengths: tuple

    def enclosure(self, rows=None) -> Enclosure:
        lo = self.lo if rows is None else self.lo[rows]
        hi = self.hi if rows is None else self.hi[rows]
        clo = lo.sum(axis=0) if lo.ndim == 2 else lo
        chi = hi.sum(axis=0) if hi.ndim == 2 else hi
        return Enclosure(sum(clo[t] * self.lengths[t].lo for t in range(4)),
                         sum(chi[t] * self.lengths[t].hi for t in range(4)))

    def per_row(self) -> list:
        return [self.enclosure(i) for i in range(self.lo.shape[0])]

    def grouped(self, starts) -> "SegmentIntegrals":
        return SegmentIntegrals(np.add.reduceat(self.lo, starts, axis=0),
                                np.add.reduceat(self.hi, starts, axis=0), self.lengths)


def segment_integrals(tree: SegmentTree, refine: bool = True) -> SegmentIntegrals:
    """Enclose ``int f`` on each segment.

    Unrefined: flat segments are exact, jump segments are bracketed by their
    endpoint values.  Refined: each jump segment is split along its
    level-(nu+1) newcomer chain (all newcomers share one value ``w``), so only
    the two end pieces stay bracketed while the inner pieces are flat.
    """
    spec, nu, v = tree.spec, tree.level, tree.values
    short, long_ = gap_lengths(spec, nu)
    sub_short, sub_long = gap_lengths(spec, nu + 1) if refine else (Enclosure.exact(0), Enclosure.exact(0))
    is_long = _gap_classes(tree)
    a_next = int(spec.quotient(nu + 1)) if refine else 0
    n = tree.Q
    zero = mpq(0)
    lo = np.full((n, 4), zero, dtype=object)
    hi = np.full((n, 4), zero, dtype=object)
    left = tree.is_left()
    for j in range(n):
        fa, fb = v[j], v[j + 1]
        col = 1 if is_long[j] else 0
        if fa == fb:
            lo[j, col] = hi[j, col] = fa
            continue
        r = (a_next if is_long[j] else a_next - 1) if refine else 0
        if r <= 0:
            lo[j, col], hi[j, col] = min(fa, fb), max(fa, fb)
            continue
        w = newcomer_value(fa, fb, bool(left[j]))
        # pieces: [fa..w] and [w..fb] at the ends, (r - 1) flat short pieces between
        near_a, near_b = (2, 3) if nu % 2 == 0 else (3, 2)
        lo[j, near_a] += min(fa, w)
        hi[j, near_a] += max(fa, w)
        lo[j, near_b] += min(w, fb)
        hi[j, near_b] += max(w, fb)
        lo[j, 2] += (r - 1) * w
        hi[j, 2] += (r - 1) * w
    return SegmentIntegrals(lo, hi, (short, long_, sub_short, sub_long))


@dataclass(frozen=True)
class MeanEnclosure:
    enclosure: Enclosure
    level: int
    refined: bool

    @property
    def width(self) -> mpq:
        return self.enclosure.width()


def mean_enclosure(tree: SegmentTree, refine: bool = False) -> MeanEnclosure:
    """Enclosure of ``int_0^1 f`` from the level-``nu`` segments."""
    return MeanEnclosure(segment_integrals(tree, refine).enclosure(), tree.level, refine)


def best_mean(spec: ThetaSpec, budget: int = MATERIALIZE_BUDGET) -> MeanEnclosure:
    """Tightest mean available: deepest buildable level, refined one level further."""
    return mean_enclosure(build_level(spec, deepest_level(spec, budget), budget), refine=True)


def g_sum(tree: SegmentTree, mean: MeanEnclosure) -> Enclosure:
    """Enclosure of ``sum_{k < Q_nu} g({k theta})``."""
    return Enclosure.exact(sum(f_values_at_level(tree), mpq(0))) - mean.enclosure * tree.Q


# ---------------------------------------------------------------------------
# evaluation off the orbit
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FThetaValue:
    value: Enclosure
    level: int
    capped: bool


def _locate(tree: SegmentTree, lo: mpq, hi: mpq) -> tuple[int, int]:
    """Segment index range ``[s, e]`` that may meet ``[lo, hi]``."""
    pts = tree.orbit.points
    S = pts.scale
    left_edge = pts.centre - pts.halfwidth
    right_edge = pts.centre + pts.halfwidth
    # points certainly below lo and points possibly below hi
    s = int(np.searchsorted(right_edge, int((lo * S).__floor__()), side="left")) - 1
    e = int(np.searchsorted(left_edge, int((hi * S).__ceil__()), side="right")) - 1
    return max(s, 0), min(max(e, 0), tree.Q - 1)


def _values_hull(tree: SegmentTree, s: int, e: int) -> Enclosure:
    vals = tree.values[s: e + 2]
    return Enclosure(min(vals), max(vals))


def eval_f_theta(spec: ThetaSpec, x, tol=0, max_level: int | None = None,
                 budget: int = MATERIALIZE_BUDGET) -> FThetaValue:
    """Enclose ``f(x)``.

    ``x`` may be an exact rational, an :class:`Enclosure`, or an
    :class:`OrbitPoint` (symbolic; ``theta`` itself is ``k = 1``).  Levels are
    descended until the enclosure is no wider than ``tol``.
    """
    tol = to_mpq(tol)
    top = deepest_level(spec, budget) if max_level is None else max_level
    if isinstance(x, OrbitPoint) and x.k < int(spec.Q(top)):
        nu = BASE_LEVEL
        while int(spec.Q(nu)) <= x.k:
            nu += 1
        return FThetaValue(Enclosure.exact(build_level(spec, nu, budget).value_of_index(x.k)), nu, False)
    if isinstance(x, OrbitPoint):
        lo, hi = x.lo, x.hi
    elif isinstance(x, Enclosure):
        lo, hi = x.lo, x.hi
    else:
        lo = hi = to_mpq(x)
    if lo < 0 or hi > 1:
        raise ValueError("x must lie in [0, 1]")
    if hi == 0 or lo == 1:
        return FThetaValue(Enclosure.exact(1), BASE_LEVEL, False)
    best = None
    for nu in range(BASE_LEVEL, top + 1):
        tree = build_level(spec, nu, budget)
        s, e = _locate(tree, lo, hi)
        best = FThetaValue(_values_hull(tree, s, e), nu, False)
        if best.value.width() <= tol:
            return best
    return FThetaValue(best.value, best.level, True)


# ---------------------------------------------------------------------------
# the bound chain
# ---------------------------------------------------------------------------

def _check(name: str, value: Enclosure, bound, strict: bool = True) -> dict:
    bound = Enclosure.coerce(bound)
    verdict = value.lt(bound) if strict else value.le(bound)
    return {"name": name, "value": value.as_strings(), "bound": bound.as_strings(), "verdict": verdict.value}


@dataclass
class SumBoundReport:
    nu: int
    Q: int
    mean_level: int
    mean: Enclosure
    g_sum: Enclosure
    checks: list

    @property
    def verdict(self) -> Verdict:
        return Verdict.all(Verdict(c["verdict"]) for c in self.checks)

    @property
    def deviation(self) -> Enclosure:
        return abs(self.g_sum - mpq(1, 6))

    def to_dict(self) -> dict:
        return {
            "nu": self.nu,
            "Q": self.Q,
            "mean_level": self.mean_level,
            "mean": self.mean.as_strings(),
            "g_sum": self.g_sum.as_strings(),
            "deviation": self.deviation.as_strings(),
            "checks": self.checks,
            "verdict": self.verdict.value,
        }


def sum_bound_verify(spec: ThetaSpec, nu: int, budget: int = MATERIALIZE_BUDGET) -> SumBoundReport:
    """Certify ``|sum_{k<Q_nu} g_k - 1/6| < 4 Q_{nu-1} / alpha_{nu+1}`` and its supporting chain.

    Segment averages ``g~_k`` use integrals from the deepest buildable tree
    (refined one level), grouped into the level-``nu`` segments.
    """
    tree = build_level(spec, nu, budget)
    deep_level = deepest_level(spec, budget)
    deep = build_level(spec, deep_level, budget)
    deep_int = segment_integrals(deep, refine=True)
    mean = deep_int.enclosure()

    v = tree.values
    Q = tree.Q
    f_sum = sum(v[:Q], mpq(0))
    gsum = Enclosure.exact(f_sum) - mean * Q
    left = tree.is_left()
    jump = tree.is_jump()
    diffs = [v[j] - v[j + 1] for j in range(Q)]
    tele_left = sum((diffs[j] for j in range(Q) if left[j]), mpq(0))
    tele_right = sum((diffs[j] for j in range(Q) if not left[j]), mpq(0))
    variation = sum((abs(d) for d in diffs), mpq(0))

    # integrals over level-nu segments
    starts = np.flatnonzero(np.asarray(deep.orbit.k < Q))
    integrals = deep_int.grouped(starts).per_row()
    short, long_ = gap_lengths(spec, nu)
    is_long = _gap_classes(tree)
    avg_f = [integrals[j] / (long_ if is_long[j] else short) for j in range(Q)]
    # g~_k = g_k on flat segments: the deep integrals must agree, then use the exact value
    constant_ok = all(avg_f[j].contains(v[j]) for j in range(Q) if not jump[j])
    avg_f = [avg_f[j] if jump[j] else Enclosure.exact(v[j]) for j in range(Q)]
    # sum g - sum g~ = sum f - sum (int f / mu); the mean cancels
    f_minus_avg = Enclosure.exact(f_sum) - interval_sum(avg_f)
    g_tilde_sum = interval_sum(avg_f) - mean * Q

    ratio = quality_enclosure(spec, nu, 3) / quality_enclosure(spec, nu - 1, 3)
    alpha = alpha_enclosure(spec, nu, 2)
    final_bound = Enclosure.exact(4 * int(spec.Q(nu - 1))) / alpha
    checks = [
        {"name": "telescoping_left", "value": rational_str(tele_left), "bound": "1",
         "verdict": (Verdict.HOLDS if tele_left == 1 else Verdict.FAILS).value},
        {"name": "telescoping_right", "value": rational_str(tele_right), "bound": "-1",
         "verdict": (Verdict.HOLDS if tele_right == -1 else Verdict.FAILS).value},
        {"name": "variation", "value": rational_str(variation), "bound": "2",
         "verdict": (Verdict.HOLDS if variation <= 2 else Verdict.FAILS).value},
        {"name": "constant_segments", "value": str(constant_ok), "bound": "True",
         "verdict": (Verdict.HOLDS if constant_ok else Verdict.FAILS).value},
        _check("segment_average_sum", abs(g_tilde_sum), ratio * int(spec.Q(nu - 1)), strict=False),
        _check("average_shift", abs(f_minus_avg - mpq(1, 6)), ratio * mpq(8, 3)),
        _check("chain", abs(gsum - mpq(1, 6)), ratio * (int(spec.Q(nu - 1)) + mpq(8, 3))),
        _check("final", abs(gsum - mpq(1, 6)), final_bound),
    ]
    return SumBoundReport(nu, Q, deep_level, mean, gsum, checks)


def dump_tree_jsonl(tree: SegmentTree, fh) -> None:
    for seg in tree.segments():
        fh.write(json.dumps(seg, sort_keys=True) + "\n")
