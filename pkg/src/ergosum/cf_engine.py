"""Continued fractions with exact big-integer convergents.

A :class:`ThetaSpec` describes an irrational ``theta`` by its partial-quotient
stream.  Everything derived from it (convergents, the tails ``alpha``, the
best-approximation errors ``|Q theta - P|``) is exact or enclosed; ``theta``
itself is never materialised as a float.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

from gmpy2 import mpq, mpz

from ergosum.enclosure import Enclosure, UndecidedError, Verdict, to_mpq

REFINEMENT_CAP = 64


class InsufficientQuotientsError(LookupError):
    """The quotient stream of a spec ended before the requested index."""

    def __init__(self, index: int, label: str = ""):
        self.index = index
        super().__init__(f"insufficient quotients: a_{index} is not available for {label or 'spec'}")


# ---------------------------------------------------------------------------
# specs
# ---------------------------------------------------------------------------

def _formula_nuqprev(nu: int, q_prev: int, q_prevprev: int, params: dict) -> int:
    # a_{nu+1} = max(1, c * nu * Q_{nu-1}^p)
    c = int(params.get("c", 1))
    p = int(params.get("p", 1))
    return max(1, c * nu * q_prev**p)


FORMULAS: dict[str, Callable[[int, int, int, dict], int]] = {
    "nuQprev": _formula_nuqprev,
}


@dataclass(frozen=True)
class TailRule:
    """How partial quotients continue after the explicit head."""

    kind: str  # "constant" | "periodic" | "formula"
    values: tuple[int, ...] = ()
    name: str = ""
    params: tuple[tuple[str, int], ...] = ()

    def __post_init__(self):
        if self.kind not in ("constant", "periodic", "formula"):
            raise ValueError(f"unknown tail kind {self.kind!r}")
        if self.kind in ("constant", "periodic"):
            if not self.values or any(int(v) < 1 for v in self.values):
                raise ValueError("tail quotients must be positive integers")
            if self.kind == "constant" and len(self.values) != 1:
                raise ValueError("constant tail takes exactly one value")
        if self.kind == "formula" and self.name not in FORMULAS:
            raise ValueError(f"unknown formula {self.name!r}")

    @classmethod
    def constant(cls, c: int) -> "TailRule":
        return cls("constant", (int(c),))

    @classmethod
    def periodic(cls, values: Sequence[int]) -> "TailRule":
        return cls("periodic", tuple(int(v) for v in values))

    @classmethod
    def formula(cls, name: str, **params: int) -> "TailRule":
        return cls("formula", name=name, params=tuple(sorted((k, int(v)) for k, v in params.items())))


@dataclass(frozen=True)
class ThetaSpec:
    """A programmatic irrational ``theta = [a0; a_1, a_2, ...]``."""

    a0: int = 0
    head: tuple[int, ...] = ()
    tail: TailRule | None = None
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "head", tuple(int(a) for a in self.head))
        if any(a < 1 for a in self.head):
            raise ValueError("partial quotients a_1, a_2, ... must be positive")

    def expansion(self) -> "_Expansion":
        return _expansion_for(self)

    def quotient(self, i: int) -> int:
        """Partial quotient ``a_i`` (``a_0`` for ``i == 0``)."""
        return self.expansion().quotient(i)

    def P(self, nu: int) -> int:
        return self.expansion().P(nu)

    def Q(self, nu: int) -> int:
        return self.expansion().Q(nu)

    def __str__(self) -> str:
        return self.label or dumps(self).replace("\n", " ")


class _Expansion:
    """Memoised quotient/convergent tables for one spec; safe to share."""

    def __init__(self, spec: ThetaSpec):
        self.spec = spec
        self._lock = threading.Lock()
        self._a: list[int] = [mpz(spec.a0)]
        # index shifted by one: _P[nu + 1] = P_nu, seeds P_{-1}=1, Q_{-1}=0
        self._P: list[int] = [mpz(1), mpz(spec.a0)]
        self._Q: list[int] = [mpz(0), mpz(1)]

    def _next_quotient(self, i: int) -> int:
        spec = self.spec
        h = len(spec.head)
        if i <= h:
            return mpz(spec.head[i - 1])
        tail = spec.tail
        if tail is None:
            raise InsufficientQuotientsError(i, spec.label)
        if tail.kind == "constant":
            return mpz(tail.values[0])
        if tail.kind == "periodic":
            return mpz(tail.values[(i - h - 1) % len(tail.values)])
        nu = i - 1
        q_prev = self._Q[nu]  # Q_{nu-1}
        q_prevprev = self._Q[nu - 1] if nu >= 1 else mpz(0)
        value = mpz(FORMULAS[tail.name](nu, q_prev, q_prevprev, dict(tail.params)))
        if value < 1:
            raise ValueError(f"formula produced a_{i} = {value} < 1")
        return value

    def ensure(self, i: int) -> None:
        if i < len(self._a):
            return
        with self._lock:
            while len(self._a) <= i:
                j = len(self._a)
                a = self._next_quotient(j)
                self._a.append(a)
                self._P.append(a * self._P[-1] + self._P[-2])
                self._Q.append(a * self._Q[-1] + self._Q[-2])

    def quotient(self, i: int) -> int:
        if i < 0:
            raise IndexError("quotient index must be >= 0")
        self.ensure(i)
        return self._a[i]

    def P(self, nu: int) -> int:
        if nu < -1:
            raise IndexError("convergent index must be >= -1")
        self.ensure(nu)
        return self._P[nu + 1]

    def Q(self, nu: int) -> int:
        if nu < -1:
            raise IndexError("convergent index must be >= -1")
        self.ensure(nu)
        return self._Q[nu + 1]

    def available(self, i: int) -> bool:
        try:
            self.ensure(i)
            return True
        except InsufficientQuotientsError:
            return False


_EXPANSIONS: dict[ThetaSpec, _Expansion] = {}
_EXPANSIONS_LOCK = threading.Lock()


def _expansion_for(spec: ThetaSpec) -> _Expansion:
    exp = _EXPANSIONS.get(spec)
    if exp is None:
        with _EXPANSIONS_LOCK:
            exp = _EXPANSIONS.setdefault(spec, _Expansion(spec))
    return exp


GOLDEN = ThetaSpec(0, (), TailRule.constant(1), "GOLDEN")
SQRT2 = ThetaSpec(0, (), TailRule.constant(2), "SQRT2")
TICHY_SLOW = ThetaSpec(0, (1, 1), TailRule.formula("nuQprev", c=1, p=1), "TICHY-SLOW")
TICHY_FAST = ThetaSpec(0, (1, 1), TailRule.formula("nuQprev", c=1, p=2), "TICHY-FAST")

BUILTIN_SPECS: dict[str, ThetaSpec] = {s.label: s for s in (GOLDEN, SQRT2, TICHY_SLOW, TICHY_FAST)}


def require_t2_compatible(spec: ThetaSpec) -> None:
    """Reject specs that do not start ``[0; 1, 1, ...]``."""
    if spec.a0 != 0 or spec.quotient(1) != 1 or spec.quotient(2) != 1:
        raise ValueError(f"{spec}: the singular construction needs theta = [0; 1, 1, ...]")


# ---------------------------------------------------------------------------
# key=value serialisation
# ---------------------------------------------------------------------------

def dumps(spec: ThetaSpec) -> str:
    """Canonical text form; ``loads(dumps(s)) == s``."""
    lines = []
    if spec.label:
        lines.append(f"label={spec.label}")
    lines.append(f"a0={spec.a0}")
    lines.append("head=" + ",".join(str(a) for a in spec.head))
    tail = spec.tail
    if tail is None:
        lines.append("tail=none")
    elif tail.kind in ("constant", "periodic"):
        lines.append(f"tail={tail.kind}:" + ",".join(str(v) for v in tail.values))
    else:
        text = f"tail=formula:{tail.name}"
        if tail.params:
            text += ":" + ",".join(f"{k}={v}" for k, v in tail.params)
        lines.append(text)
    return "\n".join(lines) + "\n"


def _parse_tail(text: str) -> TailRule | None:
    if text == "none":
        return None
    kind, _, rest = text.partition(":")
    if kind in ("constant", "periodic"):
        values = [int(v) for v in rest.split(",") if v.strip()]
        return TailRule.constant(values[0]) if kind == "constant" and len(values) == 1 else TailRule(kind, tuple(values))
    if kind == "formula":
        name, _, params = rest.partition(":")
        kv = {}
        for item in params.split(","):
            if item.strip():
                k, _, v = item.partition("=")
                kv[k.strip()] = int(v)
        return TailRule.formula(name.strip(), **kv)
    raise ValueError(f"bad tail rule {text!r}")


def loads(text: str) -> ThetaSpec:
    """Parse the key=value spec format (``#`` starts a comment)."""
    fields: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or key not in ("label", "a0", "head", "tail"):
            raise ValueError(f"line {lineno}: expected label=, a0=, head= or tail=, got {raw!r}")
        if key in fields:
            raise ValueError(f"line {lineno}: duplicate key {key!r}")
        fields[key] = value.strip()
    head = tuple(int(v) for v in fields.get("head", "").split(",") if v.strip())
    tail = _parse_tail(fields["tail"]) if "tail" in fields else None
    return ThetaSpec(int(fields.get("a0", "0")), head, tail, fields.get("label", ""))


def resolve_spec(ref: str) -> ThetaSpec:
    """A built-in name (``GOLDEN``, ``TICHY-FAST``...) or a path to a spec file."""
    if ref in BUILTIN_SPECS:
        return BUILTIN_SPECS[ref]
    with open(ref, encoding="utf-8") as fh:
        return loads(fh.read())


# ---------------------------------------------------------------------------
# convergents and enclosures
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Convergent:
    nu: int
    P: int
    Q: int

    def fraction(self) -> mpq:
        return mpq(self.P, self.Q)


def convergents(spec: ThetaSpec, nu_max: int) -> list[Convergent]:
    """Convergents ``P_nu / Q_nu`` for ``nu = -1 .. nu_max``."""
    if nu_max < 0:
        raise ValueError("nu_max must be >= 0")
    exp = spec.expansion()
    exp.ensure(nu_max)
    return [Convergent(nu, exp.P(nu), exp.Q(nu)) for nu in range(-1, nu_max + 1)]


def convergent_sign(nu: int) -> int:
    """Sign of ``Q_nu * theta - P_nu``."""
    return 1 if nu % 2 == 0 else -1


def theta_bracket(spec: ThetaSpec, nu: int) -> Enclosure:
    """``theta`` between the consecutive convergents ``nu`` and ``nu + 1``."""
    exp = spec.expansion()
    a = mpq(exp.P(nu), exp.Q(nu))
    b = mpq(exp.P(nu + 1), exp.Q(nu + 1))
    return Enclosure(min(a, b), max(a, b))


def theta_enclosure(spec: ThetaSpec, width_bound) -> Enclosure:
    """Smallest consecutive-convergent bracket of ``theta`` with width <= bound."""
    bound = to_mpq(width_bound)
    if bound <= 0:
        raise ValueError("width_bound must be positive")
    exp = spec.expansion()
    nu = 0
    while True:
        if nu > 100_000:
            raise UndecidedError("theta enclosure did not reach the requested width")
        # width of [P_nu/Q_nu, P_{nu+1}/Q_{nu+1}] is 1/(Q_nu Q_{nu+1})
        if exp.Q(nu) * exp.Q(nu + 1) * bound >= 1:
            return theta_bracket(spec, nu)
        nu += 1


def _tail_cf_bounds(quotients: Sequence[int]) -> tuple[mpq, mpq]:
    """Bounds of ``[b_1; b_2, ..., b_d + t]`` over ``t`` in ``(0, 1)``."""
    h_prev, h = mpz(1), mpz(quotients[0])
    k_prev, k = mpz(0), mpz(1)
    for b in quotients[1:]:
        h_prev, h = h, b * h + h_prev
        k_prev, k = k, b * k + k_prev
    # the remaining tail x lies in (1, inf): value (h x + h_prev)/(k x + k_prev)
    at_inf = mpq(h, k)
    at_one = mpq(h + h_prev, k + k_prev)
    return (min(at_inf, at_one), max(at_inf, at_one))


def alpha_enclosure(spec: ThetaSpec, nu: int, depth: int = 1) -> Enclosure:
    """Enclosure of the tail ``alpha_{nu+1} = [a_{nu+1}; a_{nu+2}, ...]``.

    Uses ``depth`` quotients; width shrinks as depth grows.
    """
    if nu < -1 or depth < 1:
        raise ValueError("need nu >= -1 and depth >= 1")
    qs = [spec.quotient(i) for i in range(nu + 1, nu + 1 + depth)]
    lo, hi = _tail_cf_bounds(qs)
    return Enclosure(lo, hi)


def quality_enclosure(spec: ThetaSpec, nu: int, depth: int = 1) -> Enclosure:
    """Enclosure of ``|Q_nu theta - P_nu| = 1 / (alpha_{nu+1} Q_nu + Q_{nu-1})``.

    For ``nu >= 1`` (and for ``nu = 0`` when ``a_1 >= 2``) this is the distance
    ``||Q_nu theta||`` to the nearest integer.
    """
    if nu < 0:
        raise ValueError("nu must be >= 0")
    alpha = alpha_enclosure(spec, nu, depth)
    return (alpha * spec.Q(nu) + spec.Q(nu - 1)).reciprocal()


def gap_enclosure(spec: ThetaSpec, d: int, e: int, extra: int = 0) -> Enclosure:
    """Enclosure of ``d * theta - e`` for integers ``d, e``.

    ``extra`` descends that many further convergents for a tighter result.
    """
    if d == 0:
        return Enclosure.exact(-e)
    exp = spec.expansion()
    nu = 0
    while exp.Q(nu) * exp.Q(nu + 1) < 4 * abs(d) * abs(d) + 4:
        nu += 1
    return theta_bracket(spec, nu + extra) * d - e


@dataclass
class Certificate:
    """Outcome of a certified check together with its evidence."""

    verdict: Verdict
    enclosure: Enclosure | None = None
    depth: int = 0
    detail: dict = field(default_factory=dict)

    def __bool__(self) -> bool:
        return self.verdict is Verdict.HOLDS


def verify_q12(spec: ThetaSpec, nu: int, max_depth: int = 16) -> Certificate:
    """Certify ``Q_{nu+1} * |Q_nu theta - P_nu| > 1/2``."""
    if nu < 0:
        raise ValueError("nu must be >= 0")
    half = mpq(1, 2)
    enc = None
    for depth in range(1, max_depth + 1):
        enc = quality_enclosure(spec, nu, depth) * spec.Q(nu + 1)
        v = enc.gt(half)
        if v is not Verdict.UNDECIDED:
            return Certificate(v, enc, depth)
    return Certificate(Verdict.UNDECIDED, enc, max_depth)


def condition_oo1_trace(spec: ThetaSpec, nu_range: Iterable[int]) -> list[mpq]:
    """Exact ratios ``Q_{nu-1} / a_{nu+1}``; they tend to 0 for Liouville-type theta."""
    return [mpq(spec.Q(nu - 1), spec.quotient(nu + 1)) for nu in nu_range]


def condition_oo1o_trace(spec: ThetaSpec, modulus, nu_range: Iterable[int], depth: int = 2) -> list[Enclosure]:
    """Enclosures of ``Q_nu * omega(|Q_nu theta - P_nu|)`` for a modulus of continuity."""
    return [modulus(quality_enclosure(spec, nu, depth)) * spec.Q(nu) for nu in nu_range]


def determinant_ok(spec: ThetaSpec, nu: int) -> bool:
    """Exact check of ``P_nu Q_{nu-1} - P_{nu-1} Q_nu = (-1)^(nu-1)``."""
    lhs = spec.P(nu) * spec.Q(nu - 1) - spec.P(nu - 1) * spec.Q(nu)
    return lhs == (1 if (nu - 1) % 2 == 0 else -1)


def truncated_value(spec: ThetaSpec, depth: int) -> mpq:
    """Exact value of the convergent ``P_depth / Q_depth``."""
    return mpq(spec.P(depth), spec.Q(depth))


def max_nu_with_Q(spec: ThetaSpec, limit: int, start: int = 0) -> int:
    """Largest ``nu`` with ``Q_nu <= limit`` (at least ``start - 1``)."""
    nu = start
    while spec.Q(nu) <= limit:
        nu += 1
    return nu - 1


__all__ = [
    "BUILTIN_SPECS", "Certificate", "Convergent", "GOLDEN", "InsufficientQuotientsError",
    "REFINEMENT_CAP", "SQRT2", "TICHY_FAST", "TICHY_SLOW", "TailRule", "ThetaSpec",
    "alpha_enclosure", "condition_oo1_trace", "condition_oo1o_trace", "convergent_sign",
    "convergents", "determinant_ok", "dumps", "gap_enclosure", "loads", "max_nu_with_Q",
    "quality_enclosure", "require_t2_compatible", "resolve_spec", "theta_bracket",
    "theta_enclosure", "truncated_value", "verify_q12",
]
