import dataclasses

import mpmath
import numpy as np
import pytest
from gmpy2 import mpq

from ergosum.birkhoff_lab import (
    PreconditionError,
    birkhoff_sum,
    densest_window,
    koksma_check,
    prefix_sums,
    prop1_experiment,
    prop2_experiment,
    resolve_function,
    theorem_a_scan,
    trig_poly_sum_bound,
    window_count_bound,
)
from ergosum.cf_engine import GOLDEN, SQRT2, TICHY_FAST, TICHY_SLOW
from ergosum.enclosure import Enclosure, Verdict
from ergosum.fourier import FourierSeries
from ergosum.kronecker_orbit import approximate_points
from oracles import cos_series, direct_sum, theta_mp


def mp(q):
    return mpmath.mpf(int(q.numerator)) / int(q.denominator)


def inside(e: Enclosure, x) -> bool:
    return mp(e.lo) <= x <= mp(e.hi)


def tent(x):
    return abs(2 * x - 1) - mpmath.mpf(1) / 2


ORACLES = {
    "cos1": cos_series([(1, mpq(1), mpq(0))]),
    "cosM:3": cos_series([(3, mpq(1), mpq(0))]),
    "tent": tent,
    "zero": lambda x: mpmath.mpf(0),
}


def test_registry():
    for name in ("zero", "cos1", "cosM:3", "sawtooth", "tent"):
        assert resolve_function(name).name
    assert resolve_function("tent").even and resolve_function("cos1").even
    assert resolve_function("cos1").variation == 4
    with pytest.raises(KeyError):
        resolve_function("nope")
    with pytest.raises(ValueError):
        resolve_function("t2:g")


def test_fourier_file(tmp_path):
    path = tmp_path / "f.txt"
    path.write_text("# m a b\n1 1/2 0\n2 0 1/3\n")
    f = resolve_function(f"fourier:{path}")
    assert f.fourier.degree == 2 and not f.even
    # (1/2) cos(pi/2) + (1/3) sin(pi) = 0
    assert f.point_eval(Enclosure.exact(mpq(1, 4))).contains(0)


@pytest.mark.parametrize("name", sorted(ORACLES))
@pytest.mark.parametrize("spec", [GOLDEN, SQRT2, TICHY_SLOW], ids=lambda s: s.label)
def test_sum_contains_oracle(name, spec):
    f = resolve_function(name)
    with mpmath.workdps(60):
        ref = direct_sum(ORACLES[name], theta_mp(spec, 60), 700, mpmath.mpf(1) / 3, start=5)
    got = birkhoff_sum(f, spec, mpq(1, 3), 700, start=5).sum
    assert inside(got, ref)
    assert got.width() < mpq(1, 10**9)


def test_thread_count_does_not_change_the_sum():
    f = resolve_function("tent")
    one = birkhoff_sum(f, TICHY_FAST, mpq(1, 7), 200_000, threads=1)
    many = birkhoff_sum(f, TICHY_FAST, mpq(1, 7), 200_000, threads=4)
    assert one.stats["chunks"] > 1
    assert one.sum == many.sum


def test_sum_budget_and_prefixes():
    f = resolve_function("cos1")
    with pytest.raises(MemoryError):
        birkhoff_sum(f, GOLDEN, 0, 11, budget=10)
    pre = prefix_sums(f, GOLDEN, [3, 8, 21])
    for cut, e in zip([3, 8, 21], pre):
        assert e.intersects(birkhoff_sum(f, GOLDEN, 0, cut).sum)


def test_koksma_never_fails():
    f = resolve_function("tent")
    rational = [mpq(k, 17) for k in range(0, 17, 3)]
    assert koksma_check(f, rational).verdict is Verdict.HOLDS
    batch = approximate_points(SQRT2, np.arange(400, dtype=np.int64), mpq(1, 5), target_product=401 << 64)
    chk = koksma_check(resolve_function("cos1"), batch)
    assert chk.verdict is Verdict.HOLDS and chk.detail["Q"] == 400


def test_window_count():
    # ||Q_4 theta|| = 0.0901..., so windows up to length 0.18 qualify
    chk = window_count_bound(GOLDEN, 5, (mpq(3, 10), mpq(3, 10) + mpq(17, 100)))
    assert chk.verdict is Verdict.HOLDS and chk.detail["Q"] == 8
    # wraps past 1
    assert window_count_bound(GOLDEN, 5, (mpq(95, 100), mpq(110, 100))).verdict is Verdict.HOLDS
    with pytest.raises(PreconditionError):
        window_count_bound(GOLDEN, 5, (0, mpq(1, 5)))


def test_trig_poly_bound():
    chk = trig_poly_sum_bound(FourierSeries.from_rationals([(1, 1, 0), (2, 0, 1)]), GOLDEN, 3, 100)
    assert chk.verdict is Verdict.HOLDS
    assert trig_poly_sum_bound(FourierSeries(()), GOLDEN, 3, 10).verdict is Verdict.HOLDS
    with pytest.raises(PreconditionError):
        trig_poly_sum_bound(FourierSeries.from_rationals([(5, 1, 0)]), GOLDEN, 3, 100)


def test_densest_window():
    assert densest_window([mpq(0), mpq(5), mpq(1, 10), mpq(1, 20), mpq(9)], mpq(1, 10)) == [0, 2, 3]
    assert densest_window([mpq(1), mpq(3)], 0) == [0]
    assert densest_window([], 1) == []


def test_prop1_on_slow_tichy():
    rep = prop1_experiment(resolve_function("cos1"), TICHY_SLOW, 40)
    assert rep.status == "ok" and rep.verdict is Verdict.HOLDS
    assert (rep.detail["nu_m"], rep.detail["nu_n"], rep.detail["Q_m"]) == (5, 6, 103232 - 645)


def test_prop1_inconclusive_on_golden():
    rep = prop1_experiment(resolve_function("cos1"), GOLDEN, 25)
    assert rep.status == "inconclusive" and rep.verdict is Verdict.UNDECIDED


def test_prop2_on_golden_matches_oracle():
    rep = prop2_experiment(resolve_function("cos1"), GOLDEN, 40)
    assert rep.verdict is Verdict.HOLDS
    Qm = rep.detail["Q_m"]
    with mpmath.workdps(60):
        ref = direct_sum(ORACLES["cos1"], theta_mp(GOLDEN, 60), Qm)
    assert inside(rep.detail["sum"], ref)
    assert abs(ref) < 4 * mpmath.mpf(1) / 20


def test_prop2_requires_even():
    odd = dataclasses.replace(resolve_function("cos1"), even=False)
    with pytest.raises(PreconditionError):
        prop2_experiment(odd, GOLDEN, 10)


def test_theorem_a_scan_rows_contain_oracle():
    series = FourierSeries.from_rationals([(1, 1, 0), (2, mpq(1, 2), mpq(1, 3))])
    rows = theorem_a_scan(series, GOLDEN, range(3, 9), grid=64)
    assert [r.nu for r in rows] == list(range(3, 9))
    fn = cos_series([(1, mpq(1), mpq(0)), (2, mpq(1, 2), mpq(1, 3))])
    th = theta_mp(GOLDEN, 60)
    with mpmath.workdps(60):
        for r in rows:
            ref = abs(direct_sum(fn, th, r.Q, mp(r.phi)))
            assert inside(r.value, ref)
            # the grid maximum dominates every other grid phase
            other = abs(direct_sum(fn, th, r.Q, mpmath.mpf(5) / 64))
            assert other <= mp(r.value.hi)
    assert rows[0].csv_row()[5] == "lower-bound"
