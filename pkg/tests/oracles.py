"""Independent reference implementations for the test-suite.

Everything here works in mpmath at high precision with naive algorithms
(plain sorting, direct summation, brute-force sups).  Nothing imports the
enclosure machinery of the package; only the partial quotients are read off
a spec, and they are checked against hand-written recurrences separately.
"""

from __future__ import annotations

import bisect
from fractions import Fraction

import math

import mpmath

DPS = 220
mpmath.mp.dps = DPS


def theta_mp(spec, dps: int = DPS):
    """theta from the continued fraction, deep enough to carry ``dps`` digits."""
    with mpmath.workdps(dps + 20):
        p0, q0, p1, q1 = 1, 0, spec.a0, 1
        i = 1
        while True:
            a = spec.quotient(i)
            p0, q0, p1, q1 = p1, q1, a * p1 + p0, a * q1 + q0
            i += 1
            # |theta - p/q| < 1/q^2
            if q1 > 10 ** ((dps + 10) // 2 + 1):
                break
        return mpmath.mpf(p1) / q1


def golden_mp(dps: int = DPS):
    with mpmath.workdps(dps + 20):
        return (mpmath.sqrt(5) - 1) / 2


def frac(x):
    return x - mpmath.floor(x)


def orbit_values(theta, Q: int, phi=0):
    return [frac(k * theta + phi) for k in range(Q)]


def sorted_indices(theta, Q: int):
    vals = orbit_values(theta, Q)
    return sorted(range(Q), key=lambda k: vals[k])


def gap_counts(theta, Q: int, rel=mpmath.mpf(10) ** -60):
    """Naive three-gap census: sort, difference, bucket equal lengths."""
    vals = sorted(orbit_values(theta, Q)) + [mpmath.mpf(1)]
    gaps = [b - a for a, b in zip(vals, vals[1:])]
    buckets: list = []
    for g in gaps:
        for b in buckets:
            if abs(b[0] - g) < rel:
                b[1] += 1
                break
        else:
            buckets.append([g, 1])
    return sorted((b[0], b[1]) for b in buckets)


def discrepancy_grid(points, refine: int = 4096):
    """Brute-force ``sup_gamma |#{x <= gamma} - Q gamma|`` over a gamma grid
    refined by the points themselves and points ``10^-30`` to their left.

    The sup of ``Q gamma - #{x <= gamma}`` is approached from the left of a
    point and never attained, so this under-reads by at most ``Q * 10^-30``."""
    xs = sorted(Fraction(p) for p in points)
    Q = len(xs)
    gammas = {Fraction(j, refine) for j in range(refine + 1)}
    tiny = Fraction(1, 10**30)
    for x in xs:
        gammas.update({x, max(x - tiny, Fraction(0))})
    best = Fraction(0)
    for g in gammas:
        count = bisect.bisect_right(xs, g)
        best = max(best, abs(count - Q * g))
    return best


def direct_sum(fn, theta, Q: int, phi=0, start: int = 0):
    """``sum_{start <= k < Q} fn(frac(k theta + phi))`` term by term."""
    total = mpmath.mpf(0)
    for k in range(start, Q):
        total += fn(frac(k * theta + phi))
    return total


def cos_series(terms):
    """``x -> sum a cos(2 pi m x) + b sin(2 pi m x)`` for exact ``(m, a, b)``."""
    def fn(x):
        return mpmath.fsum(mpmath.mpf(a.numerator) / a.denominator * mpmath.cospi(2 * m * x)
                           + mpmath.mpf(b.numerator) / b.denominator * mpmath.sinpi(2 * m * x)
                           for m, a, b in terms)
    return fn


def best_approx_naive(theta, Qn: int, Qn1: int) -> bool:
    """``|Q_n theta - P_n| < ||q theta||`` for every other ``1 <= q < Q_{n+1}``."""
    def dist(q):
        x = frac(q * theta)
        return min(x, 1 - x)
    target = dist(Qn)
    return all(dist(q) > target for q in range(1, Qn1) if q != Qn)


class NaiveT2:
    """Level-by-level construction of the monotone-on-two-arcs function.

    Start with ``f(0) = f(1) = 1`` and ``f(theta) = 0`` on the two points
    ``{0, theta}``.  Every later orbit point gets the common value when it lands
    between two equal endpoint values; otherwise it gets ``(f_a + 2 f_b)/3`` to
    the left of theta and ``(f_a + f_b)/2`` to the right, where ``a`` and ``b``
    are the endpoints of the gap it falls in.
    """

    def __init__(self, spec, dps: int = 120):
        self.spec = spec
        self.dps = dps
        with mpmath.workdps(dps):
            # round once so frac(theta) and theta are the same number
            self.theta = +theta_mp(spec, dps)
        self.Qs = {nu: spec.Q(nu) for nu in range(0, 12)}
        self.levels: dict = {}
        self._run()

    def _snapshot(self, nu, xs, ks, vals):
        self.levels[nu] = {"k": list(ks), "values": list(vals) + [Fraction(1)],
                           "x": list(xs)}

    def _run(self, top: int = 4):
        with mpmath.workdps(self.dps):
            th = self.theta
            xs = [mpmath.mpf(0), frac(th)]
            ks = [0, 1]
            vals = [Fraction(1), Fraction(0)]
            self._snapshot(2, xs, ks, vals)
            for nu in range(2, top):
                q0, q1 = self.Qs[nu], self.Qs[nu + 1]
                old_x = xs + [mpmath.mpf(1)]
                old_v = vals + [Fraction(1)]
                new = []
                for k in range(q0, q1):
                    x = frac(k * th)
                    j = bisect.bisect_left(old_x, x)  # x lies in [old_x[j-1], old_x[j]]
                    fa, fb = old_v[j - 1], old_v[j]
                    if fa == fb:
                        v = fa
                    elif old_x[j] <= th:
                        v = Fraction(1, 3) * fa + Fraction(2, 3) * fb
                    elif old_x[j - 1] >= th:
                        v = Fraction(1, 2) * fa + Fraction(1, 2) * fb
                    else:
                        raise AssertionError("a jump gap straddles theta")
                    new.append((x, k, v))
                merged = sorted(list(zip(xs, ks, vals)) + new, key=lambda t: t[0])
                xs = [t[0] for t in merged]
                ks = [t[1] for t in merged]
                vals = [t[2] for t in merged]
                self._snapshot(nu + 1, xs, ks, vals)

    def segments(self, nu: int) -> list:
        lv = self.levels[nu]
        ks, vals = lv["k"], lv["values"]
        th = self.theta
        out = []
        for j in range(len(ks)):
            right_k = ks[j + 1] if j + 1 < len(ks) else None
            side = "left" if (j + 1 < len(ks) and lv["x"][j + 1] <= th) else "right"
            out.append((ks[j], right_k, vals[j], vals[j + 1],
                        "jump" if vals[j] != vals[j + 1] else "constant", side))
        return out


# ---------------------------------------------------------------------------
# sine bumps
# ---------------------------------------------------------------------------

def bump_coefficient_quad(eps, start, j: int, m: int, dps: int = 50):
    """``int h_j(x) e^{-2 pi i m x} dx`` by adaptive quadrature over the support."""
    with mpmath.workdps(dps):
        eps = mpmath.mpf(eps.numerator) / eps.denominator
        a = mpmath.mpf(start.numerator) / start.denominator
        # one piece per half turn of the phase over the support
        turns = int(abs(m) * eps) + 1
        pieces = mpmath.linspace(a, a + eps, 2 * turns + 1)

        def re(x):
            return mpmath.sinpi(2 * (x - a) / eps) * mpmath.cospi(2 * m * x) / j

        def im(x):
            return -mpmath.sinpi(2 * (x - a) / eps) * mpmath.sinpi(2 * m * x) / j

        return +mpmath.quad(re, pieces), +mpmath.quad(im, pieces)


def h1_coefficient(m: int):
    """Closed form of ``int_0^{1/2} sin(4 pi x) e^{-2 pi i m x} dx`` (complex)."""
    def geo(k):  # int_0^{1/2} e^{2 pi i k x} dx
        if k == 0:
            return mpmath.mpf(1) / 2
        return (mpmath.expjpi(k) - 1) / (2j * mpmath.pi * k)
    return (geo(2 - m) - geo(-2 - m)) / 2j


def l1_fejer_error_h1(N: int, dps: int = 30):
    """``int_0^1 |h_1' - (sigma_N h_1)'|`` for ``h_1 = sin(4 pi x)`` on ``[0, 1/2]``.

    Coefficients come from :func:`h1_coefficient`; the integrand is split at
    ``x = 1/2`` and at every sign change (located on a fine grid, refined with
    ``findroot``) and geometrically toward the kinks, so each Gauss-Legendre
    piece integrates a smooth, resolved function.
    Returns the value and the summed quadrature error estimates.
    """
    with mpmath.workdps(dps):
        c = [None] + [h1_coefficient(m) * (1 - mpmath.mpf(m) / (N + 1)) for m in range(1, N + 1)]
        two_pi = 2 * mpmath.pi

        def diff(x):
            z = mpmath.expjpi(2 * x)
            w = mpmath.mpc(1)
            acc = mpmath.mpc(0)
            for m in range(1, N + 1):
                w *= z
                acc += m * c[m] * w
            pprime = 2 * (1j * two_pi * acc).real
            fprime = 2 * two_pi * mpmath.cospi(4 * x) if x < 0.5 else mpmath.mpf(0)
            return fprime - pprime

        import numpy as np
        # float grid to bracket the sign changes
        grid = np.linspace(0, 1, 40 * (N + 2) + 1)
        ms = np.arange(1, N + 1)
        cf = np.array([complex(c[m]) for m in range(1, N + 1)])
        zz = np.exp(2j * np.pi * np.outer(grid, ms))
        pp = 2 * (1j * 2 * np.pi * (zz * (ms * cf)).sum(axis=1)).real
        ff = np.where(grid < 0.5, 4 * np.pi * np.cos(4 * np.pi * grid), 0.0)
        vals = ff - pp
        cuts = [mpmath.mpf(0), mpmath.mpf(1) / 2, mpmath.mpf(1)]
        # geometric cuts resolve the 1/N-wide peaks next to the kinks at 0, 1/2, 1
        for k in range(2, 4 + int(math.log2(N + 1)) + 4):
            d = mpmath.mpf(2) ** -k
            cuts += [d, mpmath.mpf(1) / 2 - d, mpmath.mpf(1) / 2 + d, 1 - d]
        for i in range(len(grid) - 1):
            if vals[i] == 0 or vals[i] * vals[i + 1] < 0:
                a, b = mpmath.mpf(grid[i]), mpmath.mpf(grid[i + 1])
                if a < 0.5 < b:
                    continue
                try:
                    r = mpmath.findroot(diff, (a, b), solver="anderson")
                except (ValueError, ZeroDivisionError):
                    continue
                if a <= r <= b:
                    cuts.append(r)
        cuts = sorted(set(cuts))
        total = mpmath.mpf(0)
        err = mpmath.mpf(0)
        for a, b in zip(cuts, cuts[1:]):
            v, e = mpmath.quad(diff, [a, b], method="gauss-legendre", error=True)
            total += abs(v)
            err += e
        return total, err
