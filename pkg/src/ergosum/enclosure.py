"""Exact-rational interval arithmetic.

Every real quantity in the package is carried as an :class:`Enclosure`, a
closed interval ``[lo, hi]`` with ``gmpy2.mpq`` endpoints that is certified to
contain the true value.  Arithmetic is exact on the endpoints, so results are
trivially outward-rounded; :meth:`Enclosure.round_out` trades width for
smaller denominators.

The elementary functions (``pi``, ``sin``/``cos`` of ``2*pi*t``, ``log``,
``sqrt``) are evaluated with explicit series remainders and are rigorous.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from numbers import Rational
from typing import Union

import gmpy2
from gmpy2 import mpq, mpz

DEFAULT_BITS = 96

Number = Union[int, Fraction, "mpq", "mpz"]


class Verdict(str, enum.Enum):
    """Three-valued outcome of a certified comparison."""

    HOLDS = "holds"
    FAILS = "fails"
    UNDECIDED = "undecided"

    def __and__(self, other: "Verdict") -> "Verdict":
        if self is Verdict.FAILS or other is Verdict.FAILS:
            return Verdict.FAILS
        if self is Verdict.UNDECIDED or other is Verdict.UNDECIDED:
            return Verdict.UNDECIDED
        return Verdict.HOLDS

    @classmethod
    def all(cls, verdicts) -> "Verdict":
        out = cls.HOLDS
        for v in verdicts:
            out = out & v
        return out


class UndecidedError(ArithmeticError):
    """A comparison could not be certified within the refinement cap."""


def to_mpq(x) -> mpq:
    """Convert an exact number (or a float, exactly) to ``mpq``."""
    if isinstance(x, mpq):
        return x
    if isinstance(x, str):
        return mpq(Fraction(x))
    if isinstance(x, (int, mpz, float)) or type(x).__name__ == "mpz":
        return mpq(x)
    if isinstance(x, Rational):
        return mpq(int(x.numerator), int(x.denominator))
    raise TypeError(f"cannot convert {type(x).__name__} to an exact rational")


def _floor_div_pow2(x: mpq, bits: int) -> mpq:
    return mpq(gmpy2.f_div(x.numerator << bits, x.denominator), mpz(1) << bits)


def _ceil_div_pow2(x: mpq, bits: int) -> mpq:
    return mpq(gmpy2.c_div(x.numerator << bits, x.denominator), mpz(1) << bits)


@dataclass(frozen=True)
class Enclosure:
    """Closed rational interval ``[lo, hi]`` certified to contain a real value."""

    lo: mpq
    hi: mpq

    def __post_init__(self):
        lo, hi = to_mpq(self.lo), to_mpq(self.hi)
        if lo > hi:
            raise ValueError(f"empty enclosure [{lo}, {hi}]")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def exact(cls, x) -> "Enclosure":
        q = to_mpq(x)
        return cls(q, q)

    @classmethod
    def coerce(cls, x) -> "Enclosure":
        return x if isinstance(x, Enclosure) else cls.exact(x)

    @classmethod
    def hull(cls, *items) -> "Enclosure":
        encs = [cls.coerce(e) for e in items]
        return cls(min(e.lo for e in encs), max(e.hi for e in encs))

    # -- inspection -----------------------------------------------------
    def width(self) -> mpq:
        return self.hi - self.lo

    def mid(self) -> mpq:
        return (self.lo + self.hi) / 2

    def rad(self) -> mpq:
        return (self.hi - self.lo) / 2

    def is_exact(self) -> bool:
        return self.lo == self.hi

    def contains(self, x) -> bool:
        if isinstance(x, Enclosure):
            return self.lo <= x.lo and x.hi <= self.hi
        q = to_mpq(x)
        return self.lo <= q <= self.hi

    def intersects(self, other) -> bool:
        o = Enclosure.coerce(other)
        return self.lo <= o.hi and o.lo <= self.hi

    def mag(self) -> mpq:
        """Upper bound of ``|x|``."""
        return max(abs(self.lo), abs(self.hi))

    def mig(self) -> mpq:
        """Lower bound of ``|x|``."""
        if self.lo > 0:
            return self.lo
        if self.hi < 0:
            return -self.hi
        return mpq(0)

    def __float__(self) -> float:
        return float(self.mid())

    def __repr__(self) -> str:
        return f"Enclosure[{float(self.lo):.17g}, {float(self.hi):.17g}]"

    def as_strings(self) -> list[str]:
        return [rational_str(self.lo), rational_str(self.hi)]

    # -- arithmetic -----------------------------------------------------
    def __neg__(self) -> "Enclosure":
        return Enclosure(-self.hi, -self.lo)

    def __abs__(self) -> "Enclosure":
        return Enclosure(self.mig(), self.mag())

    def __add__(self, other) -> "Enclosure":
        if isinstance(other, Enclosure):
            return Enclosure(self.lo + other.lo, self.hi + other.hi)
        q = to_mpq(other)
        return Enclosure(self.lo + q, self.hi + q)

    __radd__ = __add__

    def __sub__(self, other) -> "Enclosure":
        if isinstance(other, Enclosure):
            return Enclosure(self.lo - other.hi, self.hi - other.lo)
        q = to_mpq(other)
        return Enclosure(self.lo - q, self.hi - q)

    def __rsub__(self, other) -> "Enclosure":
        return (-self) + other

    def __mul__(self, other) -> "Enclosure":
        if isinstance(other, Enclosure):
            p = (self.lo * other.lo, self.lo * other.hi, self.hi * other.lo, self.hi * other.hi)
            return Enclosure(min(p), max(p))
        q = to_mpq(other)
        a, b = self.lo * q, self.hi * q
        return Enclosure(min(a, b), max(a, b))

    __rmul__ = __mul__

    def reciprocal(self) -> "Enclosure":
        if self.lo <= 0 <= self.hi:
            raise ZeroDivisionError(f"division by enclosure containing zero: {self!r}")
        return Enclosure(1 / self.hi, 1 / self.lo)

    def __truediv__(self, other) -> "Enclosure":
        if isinstance(other, Enclosure):
            return self * other.reciprocal()
        q = to_mpq(other)
        if q == 0:
            raise ZeroDivisionError("division by zero")
        return self * (1 / q)

    def __rtruediv__(self, other) -> "Enclosure":
        return Enclosure.exact(other) * self.reciprocal()

    def __pow__(self, n: int) -> "Enclosure":
        if n < 0:
            return (self ** (-n)).reciprocal()
        if n % 2 == 1 or self.lo >= 0:
            return Enclosure(self.lo**n, self.hi**n)
        if self.hi <= 0:
            return Enclosure(self.hi**n, self.lo**n)
        return Enclosure(mpq(0), self.mag() ** n)

    def round_out(self, bits: int = DEFAULT_BITS) -> "Enclosure":
        """Widen to dyadic endpoints with ``bits`` fractional bits."""
        return Enclosure(_floor_div_pow2(self.lo, bits), _ceil_div_pow2(self.hi, bits))

    # -- certified comparisons -----------------------------------------
    def le(self, other) -> Verdict:
        """Certify ``self <= other``."""
        o = Enclosure.coerce(other)
        if self.hi <= o.lo:
            return Verdict.HOLDS
        if self.lo > o.hi:
            return Verdict.FAILS
        return Verdict.UNDECIDED

    def lt(self, other) -> Verdict:
        """Certify ``self < other``."""
        o = Enclosure.coerce(other)
        if self.hi < o.lo:
            return Verdict.HOLDS
        if self.lo >= o.hi:
            return Verdict.FAILS
        return Verdict.UNDECIDED

    def ge(self, other) -> Verdict:
        return Enclosure.coerce(other).le(self)

    def gt(self, other) -> Verdict:
        return Enclosure.coerce(other).lt(self)


def rational_str(q) -> str:
    q = to_mpq(q)
    return f"{q.numerator}/{q.denominator}"


def parse_rational(text: str) -> mpq:
    """Parse ``"p/q"``, an integer, or a decimal literal into an exact rational."""
    return mpq(Fraction(text.strip()))


def interval_sum(items) -> Enclosure:
    lo = mpq(0)
    hi = mpq(0)
    for e in items:
        e = Enclosure.coerce(e)
        lo += e.lo
        hi += e.hi
    return Enclosure(lo, hi)


# ---------------------------------------------------------------------------
# elementary functions
# ---------------------------------------------------------------------------

def _atan_inv(n: int, bits: int) -> tuple[mpz, mpz]:
    """Fixed-point bounds ``(lo, hi)`` of ``atan(1/n) * 2**bits``."""
    one = mpz(1) << bits
    total = mpz(0)
    power = one // n  # floor(2^bits / n^(2k+1)), error < 1 per division chain
    n2 = n * n
    k = 0
    terms = 0
    while power:
        term = power // (2 * k + 1)
        total = total + term if k % 2 == 0 else total - term
        power //= n2
        k += 1
        terms += 1
    # each truncated term errs by < 3 units; the dropped tail is below 4 units
    slack = 4 * terms + 8
    return total - slack, total + slack


@lru_cache(maxsize=16)
def pi_enclosure(bits: int = DEFAULT_BITS) -> Enclosure:
    """Rigorous enclosure of pi via Machin's formula."""
    work = bits + 16
    a_lo, a_hi = _atan_inv(5, work)
    b_lo, b_hi = _atan_inv(239, work)
    lo = 16 * a_lo - 4 * b_hi
    hi = 16 * a_hi - 4 * b_lo
    den = mpz(1) << work
    return Enclosure(mpq(lo, den), mpq(hi, den)).round_out(bits)


def _alternating_series(y: mpq, first: mpq, ratio_den_fn, bits: int) -> tuple[mpq, mpq]:
    """Sum an alternating series with terms decreasing in magnitude.

    ``first`` is the leading term; term k+1 = -term_k * y^2 / ratio_den_fn(k).
    Returns bounds bracketing the limit.
    """
    eps = mpq(1, mpz(1) << (bits + 8))
    y2 = y * y
    term = first
    total = mpq(0)
    k = 0
    while True:
        total += term
        nxt = -term * y2 / ratio_den_fn(k)
        if abs(nxt) < eps:
            a, b = total, total + nxt
            return (min(a, b), max(a, b))
        term = nxt
        k += 1


def _sin_small(y: mpq, bits: int) -> tuple[mpq, mpq]:
    # valid for 0 <= y <= 1: terms decrease monotonically
    return _alternating_series(y, y, lambda k: (2 * k + 2) * (2 * k + 3), bits)


def _cos_small(y: mpq, bits: int) -> tuple[mpq, mpq]:
    return _alternating_series(y, mpq(1), lambda k: (2 * k + 1) * (2 * k + 2), bits)


def sin2pi(t, bits: int = DEFAULT_BITS) -> Enclosure:
    """Rigorous enclosure of ``sin(2*pi*t)`` for exact rational ``t``.

    An :class:`Enclosure` argument is handled by evaluating at its midpoint and
    widening by the Lipschitz constant ``2*pi``.
    """
    if isinstance(t, Enclosure):
        if t.is_exact():
            return sin2pi(t.lo, bits)
        centre = sin2pi(t.mid(), bits)
        slack = t.rad() * pi_enclosure(bits).hi * 2
        return _clip_unit(Enclosure(centre.lo - slack, centre.hi + slack))
    u = to_mpq(t)
    u = u - gmpy2.f_div(u.numerator, u.denominator)  # u in [0, 1)
    sign = 1
    if u >= mpq(1, 2):
        u -= mpq(1, 2)
        sign = -1
    if u > mpq(1, 4):
        u = mpq(1, 2) - u
    # now u in [0, 1/4]
    if u == 0:
        return Enclosure.exact(0)
    if u == mpq(1, 4):
        return Enclosure.exact(sign)
    pi = pi_enclosure(bits + 8)
    work = bits + 8
    if u <= mpq(1, 8):
        # sin increasing on [0, pi/4]
        x_lo = _floor_div_pow2(2 * pi.lo * u, work)
        x_hi = _ceil_div_pow2(2 * pi.hi * u, work)
        lo = _sin_small(x_lo, work)[0]
        hi = _sin_small(x_hi, work)[1]
    else:
        # sin(2 pi u) = cos(2 pi (1/4 - u)), cos decreasing on [0, pi/4]
        v = mpq(1, 4) - u
        x_lo = _floor_div_pow2(2 * pi.lo * v, work)
        x_hi = _ceil_div_pow2(2 * pi.hi * v, work)
        lo = _cos_small(x_hi, work)[0]
        hi = _cos_small(x_lo, work)[1]
    enc = _clip_unit(Enclosure(lo, hi).round_out(bits))
    return enc if sign > 0 else -enc


def cos2pi(t, bits: int = DEFAULT_BITS) -> Enclosure:
    """Rigorous enclosure of ``cos(2*pi*t)``."""
    if isinstance(t, Enclosure):
        return sin2pi(t + mpq(1, 4), bits)
    return sin2pi(to_mpq(t) + mpq(1, 4), bits)


def _clip_unit(e: Enclosure) -> Enclosure:
    return Enclosure(max(e.lo, mpq(-1)), min(e.hi, mpq(1)))


def _atanh_series(z: mpq, bits: int) -> tuple[mpq, mpq]:
    """Bounds of ``atanh(z)`` for ``0 <= z <= 1/2``."""
    eps = mpq(1, mpz(1) << (bits + 8))
    z2 = z * z
    power = z
    total = mpq(0)
    k = 0
    while True:
        total += power / (2 * k + 1)
        power *= z2
        k += 1
        tail = power / ((2 * k + 1) * (1 - z2))
        if tail < eps:
            return total, total + tail


@lru_cache(maxsize=8)
def ln2_enclosure(bits: int = DEFAULT_BITS) -> Enclosure:
    lo, hi = _atanh_series(mpq(1, 3), bits + 8)
    return Enclosure(2 * lo, 2 * hi).round_out(bits)


def log_enclosure(x, bits: int = DEFAULT_BITS) -> Enclosure:
    """Rigorous enclosure of the natural logarithm of a positive rational."""
    q = to_mpq(x)
    if q <= 0:
        raise ValueError("log of a non-positive number")
    e = int(q.numerator.bit_length()) - int(q.denominator.bit_length())
    y = q / (mpq(2) ** e) if e >= 0 else q * (mpq(2) ** (-e))
    while y >= 2:
        y /= 2
        e += 1
    while y < 1:
        y *= 2
        e -= 1
    z = (y - 1) / (y + 1)
    lo, hi = _atanh_series(z, bits + 8)
    return (Enclosure(2 * lo, 2 * hi) + ln2_enclosure(bits + 8) * e).round_out(bits)


def sqrt_enclosure(x, bits: int = DEFAULT_BITS) -> Enclosure:
    """Rigorous enclosure of the square root of a nonnegative rational or enclosure."""
    if isinstance(x, Enclosure):
        if x.lo < 0:
            raise ValueError("sqrt of an enclosure reaching below zero")
        return Enclosure(sqrt_enclosure(x.lo, bits).lo, sqrt_enclosure(x.hi, bits).hi)
    q = to_mpq(x)
    if q < 0:
        raise ValueError("sqrt of a negative number")
    scale = mpz(1) << (2 * bits)
    lo_int = gmpy2.isqrt(gmpy2.f_div(q.numerator * scale, q.denominator))
    hi_int = gmpy2.isqrt(gmpy2.c_div(q.numerator * scale, q.denominator))
    if hi_int * hi_int * q.denominator < q.numerator * scale:
        hi_int += 1
    den = mpz(1) << bits
    return Enclosure(mpq(lo_int, den), mpq(hi_int, den))
