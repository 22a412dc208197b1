"""A continuous zero-mean function of unbounded variation built from sine bumps.

``f = sum_j h_j`` with ``h_j(x) = (1/j) sin(2 pi (x - x_{j-1}) / eps_j)`` on
``[x_{j-1}, x_j]``, ``x_j = eps_1 + ... + eps_j``.  Each ``eps_{n+1}`` is chosen
from a Fejer mean ``p_n`` of ``f_n = h_1 + ... + h_n``: its degree ``N_n`` and a
bound ``Mbar_n`` for ``sum |m p_{n,m}|``.

Degree selection uses an analytic L1 certificate instead of quadrature.  For a
periodic function ``g`` of bounded variation and the Fejer kernel ``F_N``,

    int |g - sigma_N g| <= Var(g) * int |t| F_N(t) dt
                        <= Var(g) * (1/4 + ln(N+1)/2) / (N+1),

using ``F_N(t) <= min(N+1, 1/(4 (N+1) t^2))``.  ``g = f_n'`` has an exactly
known variation, so the bound holds at any degree, including ``N_6 ~ 10^100``.
"""

from __future__ import annotations

import json
import math
import threading
from bisect import bisect_right
from dataclasses import dataclass, field

from gmpy2 import mpq

from ergosum.cf_engine import ThetaSpec, quality_enclosure
from ergosum.enclosure import (
    Enclosure,
    Verdict,
    cos2pi,
    log_enclosure,
    pi_enclosure,
    rational_str,
    sin2pi,
    sqrt_enclosure,
    to_mpq,
)
from ergosum.fourier import FourierSeries
from ergosum.kronecker_orbit import convergent_discrepancy_bound

DEFAULT_N_MAX = 6
COEFF_CAP = 2**12  # largest degree whose coefficients are materialised


class ScheduleTooShallow(LookupError):
    """The bump schedule does not reach the level a computation needs."""


# ---------------------------------------------------------------------------
# schedule
# ---------------------------------------------------------------------------

@dataclass
class BumpSchedule:
    """``eps[j]``, ``x[j]`` for ``j = 0 .. depth`` (``eps[0]`` unused) and per-level p_n data."""

    eps: list = field(default_factory=lambda: [None, mpq(1, 2)])
    x: list = field(default_factory=lambda: [mpq(0), mpq(1, 2)])
    N: dict = field(default_factory=dict)
    Mbar: dict = field(default_factory=dict)
    l1_bound: dict = field(default_factory=dict)
    var_fprime: dict = field(default_factory=dict)

    @property
    def depth(self) -> int:
        """Number of bumps whose support is known."""
        return len(self.eps) - 1

    @property
    def n_max(self) -> int:
        """Largest ``n`` with ``p_n`` built."""
        return max(self.N, default=0)

    def mbar(self, n: int) -> mpq:
        if n <= 0:
            return mpq(1)
        return self.Mbar[n]

    def tail_bound(self) -> mpq:
        """``x* - x_depth <= eps_depth``: the unresolved part of ``[0, 1)``."""
        return self.eps[-1]

    def to_dict(self) -> dict:
        levels = []
        for n in range(1, self.depth + 1):
            row = {"n": n, "eps": rational_str(self.eps[n]), "x": rational_str(self.x[n])}
            if n in self.N:
                row["N"] = str(self.N[n])
                row["Mbar"] = rational_str(self.Mbar[n])
                row["l1_bound"] = rational_str(self.l1_bound[n])
            levels.append(row)
        return {"x0": "0", "levels": levels}

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def amplitude(s: BumpSchedule, j: int) -> mpq:
    """``|h_j'|`` peak divided by ``2 pi``: ``1 / (j eps_j)``."""
    return 1 / (j * s.eps[j])


def fprime_variation(s: BumpSchedule, n: int) -> Enclosure:
    """Exact circle variation of ``f_n'``.

    Each bump derivative is a full cosine period (variation ``4 * amp``); the
    derivative jumps by ``amp_1`` at 0, by ``|amp_{j+1} - amp_j|`` at ``x_j``
    and by ``amp_n`` at ``x_n``.
    """
    amps = [amplitude(s, j) for j in range(1, n + 1)]
    total = 4 * sum(amps) + amps[0] + amps[-1]
    total += sum(abs(b - a) for a, b in zip(amps, amps[1:]))
    return pi_enclosure() * (2 * total)


def fejer_l1_factor(N: int) -> mpq:
    """Upper bound of ``int |t| F_N(t) dt``."""
    ln = log_enclosure(mpq(N + 1)).hi
    return (mpq(1, 4) + ln / 2) / (N + 1)


def choose_degree(var_hi: mpq, tol: mpq) -> tuple[int, mpq]:
    """Smallest ``N >= 1`` with ``var_hi * fejer_l1_factor(N) <= tol``."""
    def ok(N: int) -> bool:
        return var_hi * fejer_l1_factor(N) <= tol

    hi = 1
    while not ok(hi):
        hi *= 2
    lo = hi // 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    if hi > 1 and ok(hi - 1):
        raise AssertionError("degree search is not monotone")
    return hi, var_hi * fejer_l1_factor(hi)


def fourier_coeff_bump(s: BumpSchedule, j: int, m: int) -> tuple[Enclosure, Enclosure]:
    """``int_0^1 h_j(x) e^{-2 pi i m x} dx`` as (real, imaginary) enclosures.

    With ``c = m eps_j`` the integral is
    ``(eps_j / j) e^{-2 pi i m x_{j-1}} (1 - e^{-2 pi i c}) / (2 pi (1 - c^2))``,
    and ``-+ i/2 (eps_j / j) e^{-2 pi i m x_{j-1}}`` at ``c = +-1``.
    """
    if j < 1 or j > s.depth:
        raise ScheduleTooShallow(f"bump {j} is not in the schedule")
    eps = s.eps[j]
    c = m * eps
    scale = eps / j
    # rotation e^{-2 pi i m x_{j-1}}
    t = m * s.x[j - 1]
    rot_re, rot_im = cos2pi(t), -sin2pi(t)
    if c == 0:
        return Enclosure.exact(0), Enclosure.exact(0)
    if c in (1, -1):
        w_re, w_im = Enclosure.exact(0), Enclosure.exact(mpq(-1, 2) if c == 1 else mpq(1, 2))
    else:
        num_re = 1 - cos2pi(c)
        num_im = sin2pi(c)
        den = pi_enclosure() * (2 * (1 - c * c))
        w_re, w_im = num_re / den, num_im / den
    re = (w_re * rot_re - w_im * rot_im) * scale
    im = (w_re * rot_im + w_im * rot_re) * scale
    return re, im


@dataclass(frozen=True)
class TrigPolynomial:
    """``sum_{0<|m|<=N} p_m e^{2 pi i m x}`` stored for ``m > 0`` (Hermitian)."""

    degree: int
    coeffs: dict  # m -> (re, im)

    def to_fourier_series(self) -> FourierSeries:
        # 2 Re(p_m e^{2 pi i m x}) = 2 re cos - 2 im sin
        return FourierSeries(tuple((m, re * 2, -(im * 2)) for m, (re, im) in sorted(self.coeffs.items())))

    def M_bound(self) -> mpq:
        total = mpq(0)
        for m, (re, im) in self.coeffs.items():
            total += 2 * m * sqrt_enclosure(re.mag() ** 2 + im.mag() ** 2).hi
        return total

    def constant_term(self) -> mpq:
        return mpq(0)


def fejer_polynomial(s: BumpSchedule, n: int, N: int | None = None, cap: int = COEFF_CAP) -> TrigPolynomial:
    """Fejer mean ``sigma_N f_n``; ``N`` defaults to the schedule's ``N_n``."""
    N = s.N[n] if N is None else N
    if N > cap:
        raise MemoryError(f"degree {N} exceeds the coefficient cap {cap}")
    coeffs = {}
    for m in range(1, N + 1):
        w = mpq(N + 1 - m, N + 1)
        re = Enclosure.exact(0)
        im = Enclosure.exact(0)
        for j in range(1, n + 1):
            r, i = fourier_coeff_bump(s, j, m)
            re, im = re + r, im + i
        coeffs[m] = (re * w, im * w)
    return TrigPolynomial(N, coeffs)


@dataclass(frozen=True)
class FejerMean:
    """Certificate for ``p_n``: degree, L1 derivative-error bound and ``M`` bound."""

    n: int
    degree: int
    l1_bound: mpq
    M_bound: mpq
    variation: Enclosure
    M_exact: bool


def analytic_M_bound(var_hi: mpq, N: int) -> mpq:
    """``sum_{0<|m|<=N} |m p_m| <= Var(f') H_N / (2 pi^2)``, ``H_N <= 1 + ln N``."""
    pi_lo = pi_enclosure().lo
    return var_hi * (1 + log_enclosure(mpq(N)).hi) / (2 * pi_lo * pi_lo)


def build_pn(s: BumpSchedule, n: int, tol=None, cap: int = COEFF_CAP) -> FejerMean:
    """Smallest-degree Fejer mean with certified ``int |f_n' - p_n'| <= tol`` (default ``1/n``)."""
    if n > s.depth:
        raise ScheduleTooShallow(f"p_{n} needs bumps up to {n}")
    tol = mpq(1, n) if tol is None else to_mpq(tol)
    var = fprime_variation(s, n)
    N, bound = choose_degree(var.hi, tol)
    M = analytic_M_bound(var.hi, N)
    exact = False
    if N <= cap:
        Me = fejer_polynomial(s, n, N, cap).M_bound()
        if Me < M:
            M, exact = Me, True
    return FejerMean(n, N, bound, M, var, exact)


def extend_schedule(s: BumpSchedule) -> BumpSchedule:
    """Build ``p_n`` for ``n = depth`` and append ``eps_{n+1}``, ``x_{n+1}``."""
    n = s.depth
    pn = build_pn(s, n)
    s.N[n] = pn.degree
    s.Mbar[n] = pn.M_bound
    s.l1_bound[n] = pn.l1_bound
    s.var_fprime[n] = pn.variation
    divisor = max(2 * pn.degree, math.ceil(n * s.mbar(n - 2)))
    eps = s.eps[n] / divisor
    s.eps.append(eps)
    s.x.append(s.x[n] + eps)
    return s


_SCHEDULES: dict = {}
_LOCK = threading.Lock()


def build_schedule(n_max: int = DEFAULT_N_MAX) -> BumpSchedule:
    """Schedule with ``p_1 .. p_{n_max}`` built (bumps known up to ``n_max + 1``)."""
    with _LOCK:
        s = _SCHEDULES.get("default")
        if s is None:
            s = _SCHEDULES["default"] = BumpSchedule()
        while s.n_max < n_max:
            extend_schedule(s)
        return s


def partial_variation(n: int) -> mpq:
    """``sum_{j<=n} Var[h_j] = sum 4/j``."""
    return sum((mpq(4, j) for j in range(1, n + 1)), mpq(0))


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def _bump_on(s: BumpSchedule, j: int, lo: mpq, hi: mpq) -> Enclosure:
    a, b = s.x[j - 1], s.x[j]
    clo, chi = max(lo, a), min(hi, b)
    if clo > chi:
        return Enclosure.exact(0)
    u = Enclosure(clo - a, chi - a) / s.eps[j] if clo != chi else Enclosure.exact((clo - a) / s.eps[j])
    val = sin2pi(u) * mpq(1, j)
    if lo < a or hi > b:
        val = Enclosure.hull(val, Enclosure.exact(0))
    return val


def bump_eval(s: BumpSchedule, n: int, x) -> Enclosure:
    """``h_n(x)``; zero outside ``[x_{n-1}, x_n]``."""
    if n < 1 or n > s.depth:
        raise ScheduleTooShallow(f"bump {n} is not in the schedule")
    xe = Enclosure.coerce(x)
    return _bump_on(s, n, xe.lo, xe.hi)


def eval_f(s: BumpSchedule, x, upto: int | None = None, start: int = 1) -> Enclosure:
    """``sum_{start <= j <= upto} h_j(x)`` for ``x`` in ``[0, 1]`` (default: all of ``f``).

    Bumps past the schedule are enclosed by ``+-1/(depth+1)`` on ``[x_depth, x*)``
    and vanish beyond ``x_depth + eps_depth >= x*``.
    """
    xe = Enclosure.coerce(x)
    lo, hi = xe.lo, xe.hi
    L = s.depth
    last = L if upto is None else min(upto, L)
    out = Enclosure.exact(0)
    # bump j covers [x_{j-1}, x_j]; supports have disjoint interiors, so take the hull
    touched = False
    j = max(start, bisect_right(s.x, lo))
    while j <= last and s.x[j - 1] <= hi:
        v = _bump_on(s, j, lo, hi)
        out = v if not touched else Enclosure.hull(out, v)
        touched = True
        j += 1
    if (upto is None or upto > L) and hi >= s.x[L] and lo < s.x[L] + s.eps[L]:
        r = mpq(1, L + 1)
        out = Enclosure.hull(out, Enclosure(-r, r))
    return out


def mean_bound(s: BumpSchedule) -> mpq:
    """``|int_0^1 f| <= sum_{j>depth} eps_j / j <= eps_depth``; in fact every bump integrates to 0."""
    return s.eps[-1]


# ---------------------------------------------------------------------------
# the four-part decomposition of a convergent sum
# ---------------------------------------------------------------------------

class Unresolvable(LookupError):
    """``n(nu)`` or ``l`` cannot be determined from the built schedule."""


def _quality(spec: ThetaSpec, nu: int) -> Enclosure:
    for depth in (2, 4, 8, 16):
        e = quality_enclosure(spec, nu, depth)
        if e.width() * 2**40 <= e.lo:
            return e
    return e


def level_of(s: BumpSchedule, spec: ThetaSpec, nu: int) -> int:
    """``n(nu)``: the ``n`` with ``eps_{n+2} < ||Q_nu theta|| <= eps_{n+1}``."""
    q = _quality(spec, nu)
    if q.lo > s.eps[1]:
        raise Unresolvable(f"||Q_{nu} theta|| exceeds eps_1")
    for n in range(0, s.depth - 1):
        upper, lower = s.eps[n + 1], s.eps[n + 2]
        if q.hi <= upper and q.lo > lower:
            return n
        if q.lo <= upper < q.hi or q.lo <= lower < q.hi:
            raise Unresolvable(f"||Q_{nu} theta|| straddles eps_{n + 1} or eps_{n + 2}")
    raise Unresolvable(f"||Q_{nu} theta|| is below eps_{s.depth}")


def minimal_l(s: BumpSchedule, spec: ThetaSpec, nu: int, target: mpq) -> int:
    """Minimal ``l`` with ``||Q_l theta|| <= target``."""
    l = nu
    while True:
        q = _quality(spec, l)
        if q.hi <= target:
            return l
        if q.lo <= target:
            raise Unresolvable(f"||Q_{l} theta|| straddles the threshold")
        l += 1


def resolvable_levels(s: BumpSchedule, spec: ThetaSpec, count: int = 2, limit: int = 200) -> list:
    """The ``count`` smallest ``nu`` whose bump level ``n(nu) >= 1`` is certified."""
    found = []
    for nu in range(1, limit):
        try:
            n = level_of(s, spec, nu)
        except Unresolvable:
            continue
        if n >= 1:
            found.append(nu)
            if len(found) == count:
                break
    return found


@dataclass
class DecompositionReport:
    nu: int
    n: int
    l: int
    parts: dict  # S1..S4 -> Enclosure
    bounds: dict  # name -> (value Enclosure, bound, Verdict)
    ratios: dict

    @property
    def verdict(self) -> Verdict:
        return Verdict.all(v for _, _, v in self.bounds.values())

    @property
    def total(self) -> Enclosure:
        out = Enclosure.exact(0)
        for k in ("S1", "S2", "S3", "S4"):
            out = out + self.parts[k]
        return out

    def to_dict(self) -> dict:
        d = {"nu": self.nu, "n": self.n, "l": self.l}
        for k, v in self.parts.items():
            d[k] = v.as_strings()
        d["total"] = self.total.as_strings()
        d["bounds"] = {k: {"value": v.as_strings(), "bound": Enclosure.coerce(b).as_strings(), "verdict": vd.value}
                       for k, (v, b, vd) in self.bounds.items()}
        d["ratios"] = {k: v.as_strings() for k, v in self.ratios.items()}
        d["verdict"] = self.verdict.value
        return d


def decomposition_verify(s: BumpSchedule, spec: ThetaSpec, nu: int, phi=0) -> DecompositionReport:
    """Certify the four-part bound ``|sum_{k<Q_l} f(k theta + phi)| <= 22/n``.

    Every part is bounded without enumerating the ``Q_l`` points (``Q_l`` is
    about ``10^20`` on the golden ratio):

    * ``S1 = sum (f_n - p_n)``: Koksma with ``D <= 2`` and ``Var = int|f_n' - p_n'|``.
    * ``S2 = sum p_n``: geometric-series bound, needs ``N_n < Q_{nu+1}``.
    * ``S3 = sum h_{n+1} + h_{n+2}``: Koksma with ``Var[h_j] = 4/j``.
    * ``S4 = sum_{j>=n+3} h_j``: at most two points land in ``[x_{n+2}, x*)``.

    ``phi`` enters no bound (all four are uniform in the shift); it is recorded.
    """
    to_mpq(phi)
    n = level_of(s, spec, nu)
    if n < 1:
        raise Unresolvable(f"n({nu}) = 0; the bounds need n >= 1")
    if n > s.n_max or n + 3 > s.depth:
        raise ScheduleTooShallow(f"n({nu}) = {n} needs eps_{n + 3} and p_{n}")
    eps = s.eps
    l = minimal_l(s, spec, nu, eps[n + 3])
    pi = pi_enclosure()
    q_nu = _quality(spec, nu)
    q_l = _quality(spec, l)
    q_lm1 = _quality(spec, l - 1)

    disc = convergent_discrepancy_bound(spec, l)
    D = disc.enclosure.hi
    B1 = Enclosure.exact(D * s.l1_bound[n])
    B2 = pi * s.Mbar[n] * q_l / q_nu / 2
    B3 = Enclosure.exact(D * (mpq(4, n + 1) + mpq(4, n + 2)))
    B4 = Enclosure.exact(mpq(2, n + 3))
    tail = Enclosure.exact(2 * eps[n + 3])
    total = B1 + B2 + B3 + B4

    def bnd(value: Enclosure, bound) -> tuple:
        return value, bound, value.le(Enclosure.coerce(bound))

    N_ok = Verdict.HOLDS if s.N[n] < int(spec.Q(nu + 1)) else Verdict.FAILS
    bounds = {
        "degree_below_next_q": (Enclosure.exact(s.N[n]), Enclosure.exact(int(spec.Q(nu + 1)) - 1), N_ok),
        "discrepancy_le_2": (disc.enclosure, Enclosure.exact(2), disc.verdict),
        "smoothing_error": bnd(B1, mpq(2, n)),
        "polynomial_part": bnd(B2, pi / (2 * (n + 2))),
        "middle_bumps": bnd(B3, mpq(16, n)),
        "tail_window_hypothesis": (tail, q_lm1 * 2, tail.lt(q_lm1 * 2)),
        "tail_bumps": bnd(B4, mpq(2, n + 3)),
        "total": bnd(total, mpq(22, n)),
    }
    parts = {"S1": Enclosure(-B1.hi, B1.hi), "S2": Enclosure(-B2.hi, B2.hi),
             "S3": Enclosure(-B3.hi, B3.hi), "S4": Enclosure(-B4.hi, B4.hi)}
    ratios = {"q_l/q_nu": q_l / q_nu, "eps_n+3/eps_n+2": Enclosure.exact(eps[n + 3] / eps[n + 2])}
    return DecompositionReport(nu, n, l, parts, bounds, ratios)


def direct_parts(s: BumpSchedule, spec: ThetaSpec, Q: int, phi, n: int) -> dict:
    """Enumerate ``S1..S4`` and the full sum over ``k < Q`` (small ``Q`` only).

    ``p_n`` is materialised, so ``N_n`` must be within :data:`COEFF_CAP`.
    """
    import numpy as np

    from ergosum.fourier import PointFloats, sum_floats
    from ergosum.kronecker_orbit import approximate_points

    batch = approximate_points(spec, np.arange(Q, dtype=np.int64), phi, target_product=(Q + 1) << 64)
    poly = fejer_polynomial(s, n).to_fourier_series()
    mid, rad = poly.eval_floats(PointFloats.from_batch(batch))
    S2 = sum_floats(mid, rad)
    f_n = Enclosure.exact(0)
    S3 = Enclosure.exact(0)
    S4 = Enclosure.exact(0)
    total = Enclosure.exact(0)
    for i in range(Q):
        x = batch.enclosure(i)
        f_n = f_n + eval_f(s, x, upto=n)
        S3 = S3 + eval_f(s, x, upto=n + 2, start=n + 1)
        S4 = S4 + _tail_eval(s, x, n + 3)
        total = total + eval_f(s, x)
    return {"S1": f_n - S2, "S2": S2, "S3": S3, "S4": S4, "total": total}


def _tail_eval(s: BumpSchedule, x: Enclosure, start: int) -> Enclosure:
    """``sum_{j >= start} h_j(x)`` including the unresolved tail."""
    if x.hi < s.x[start - 1]:
        return Enclosure.exact(0)
    return eval_f(s, x, start=start)
