"""Finite Fourier series with rigorous float evaluation.

``f(x) = sum_m a_m cos(2 pi m x) + b_m sin(2 pi m x)`` with exact rational (or
enclosed) coefficients.  Evaluation runs in float64 and carries a per-point
error radius.  The radius assumes numpy's ``sin``/``cos`` are within 4 ulp of
the true value; everything else is bounded explicitly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from gmpy2 import mpq

from ergosum.enclosure import Enclosure, pi_enclosure, sqrt_enclosure, to_mpq

TWO_PI = 2.0 * math.pi
U = 2.0**-53
TRIG_ERR = 2.0**-48
SAFETY = 1.0 + 2.0**-20


def float_up(q) -> float:
    """A float >= the rational ``q``."""
    q = to_mpq(q)
    f = float(q)
    if mpq(f) < q:
        f = math.nextafter(f, math.inf)
    return f


def float_down(q) -> float:
    q = to_mpq(q)
    f = float(q)
    if mpq(f) > q:
        f = math.nextafter(f, -math.inf)
    return f


def float_enclosure(mid: float, rad: float) -> Enclosure:
    """Exact rational enclosure of ``mid +- rad`` with one ulp of slack each way."""
    slack = math.ulp(abs(mid) + rad) if (mid or rad) else 0.0
    m, r = mpq(mid), mpq(rad) + mpq(slack)
    return Enclosure(m - r, m + r)


@dataclass(frozen=True)
class PointFloats:
    """Points as float64 approximations with rigorous radii."""

    x: np.ndarray
    r: np.ndarray

    @classmethod
    def from_batch(cls, batch) -> "PointFloats":
        S = batch.scale
        if batch.centre.dtype == object:
            x = np.array([int(c) / S for c in batch.centre], dtype=float)
            w = np.array([int(h) / S for h in batch.halfwidth], dtype=float)
        else:
            x = batch.centre.astype(float) / float(S)
            w = batch.halfwidth.astype(float) / float(S)
        return cls(x, w * SAFETY + 4 * U)

    @classmethod
    def from_rationals(cls, xs) -> "PointFloats":
        qs = [to_mpq(v) for v in xs]
        x = np.array([float(q) for q in qs], dtype=float)
        return cls(x, np.full(x.shape, 2 * U))


@dataclass(frozen=True)
class FourierSeries:
    """Real trigonometric polynomial without constant term."""

    terms: tuple  # (m, a: Enclosure, b: Enclosure) with m >= 1

    @classmethod
    def from_rationals(cls, coeffs) -> "FourierSeries":
        """``coeffs``: iterable of ``(m, a, b)`` exact rationals."""
        merged: dict = {}
        for m, a, b in coeffs:
            m = int(m)
            if m < 1:
                raise ValueError("harmonics must be >= 1")
            a0, b0 = merged.get(m, (Enclosure.exact(0), Enclosure.exact(0)))
            merged[m] = (a0 + Enclosure.coerce(a), b0 + Enclosure.coerce(b))
        return cls(tuple((m, a, b) for m, (a, b) in sorted(merged.items())))

    @property
    def degree(self) -> int:
        return max((m for m, _, _ in self.terms), default=0)

    def abs_coeff_sum(self) -> mpq:
        return sum((a.mag() + b.mag() for _, a, b in self.terms), mpq(0))

    def variation_bound(self) -> mpq:
        """``Var <= sum 4 m (|a_m| + |b_m|)``."""
        return sum((4 * m * (a.mag() + b.mag()) for m, a, b in self.terms), mpq(0))

    def lipschitz_bound(self) -> Enclosure:
        """Upper bound for ``sup |f'| <= 2 pi sum m (|a_m| + |b_m|)``."""
        s = sum((m * (a.mag() + b.mag()) for m, a, b in self.terms), mpq(0))
        return pi_enclosure() * (2 * s)

    def M_bound(self) -> mpq:
        """Upper bound for ``sum_{m != 0} |m p_m|`` in complex form (``|p_m| = sqrt(a^2+b^2)/2``)."""
        total = mpq(0)
        for m, a, b in self.terms:
            r2 = a.mag() ** 2 + b.mag() ** 2
            total += m * sqrt_enclosure(r2).hi
        return total

    def is_even(self) -> bool:
        return all(b.is_exact() and b.lo == 0 for _, _, b in self.terms)

    def eval_exact(self, x) -> Enclosure:
        """Slow rational-interval evaluation (oracle / single points)."""
        from ergosum.enclosure import cos2pi, sin2pi
        total = Enclosure.exact(0)
        xe = Enclosure.coerce(x)
        for m, a, b in self.terms:
            arg = xe * m
            total = total + a * cos2pi(arg) + b * sin2pi(arg)
        return total

    def eval_floats(self, pts: PointFloats) -> tuple[np.ndarray, np.ndarray]:
        """Per-point float values and rigorous error radii."""
        x, rx = pts.x, pts.r
        mid = np.zeros_like(x)
        rad = np.zeros_like(x)
        coeff_total = 0.0
        for m, a, b in self.terms:
            af, bf = float(a.mid()), float(b.mid())
            ca = float_up(abs(a.mid() - mpq(af)) + a.rad())
            cb = float_up(abs(b.mid() - mpq(bf)) + b.rad())
            y = m * x
            z = y - np.floor(y)
            ang = TWO_PI * z
            mid += af * np.cos(ang) + bf * np.sin(ang)
            # angle error: point radius, float product m*x, 2*pi rounding, the product
            dang = TWO_PI * m * (rx + 2 * U) + 8 * U
            amp = abs(af) + abs(bf)
            rad += amp * (dang + 2 * TRIG_ERR) + (ca + cb)
            coeff_total += amp
        # accumulation error of the running sum over harmonics
        rad += (2 * len(self.terms) + 2) * U * coeff_total
        return mid, rad * SAFETY


def sum_floats(mid: np.ndarray, rad: np.ndarray) -> Enclosure:
    """Rigorous enclosure of ``sum(values)`` given per-point ``mid +- rad``."""
    s = math.fsum(mid.tolist())
    r = math.fsum(rad.tolist()) * SAFETY
    return float_enclosure(s, r)
