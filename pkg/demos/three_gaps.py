"""Gap census of the rotation orbit at convergent denominators.

At Q = Q_nu the first Q points split the circle into Q_nu - Q_{nu-1} short
gaps and Q_{nu-1} long ones.  Run: python demos/three_gaps.py
"""

from ergosum.cf_engine import GOLDEN, TICHY_FAST
from ergosum.kronecker_orbit import orbit_discrepancy, sorted_orbit, three_gap_profile

for spec, top in ((GOLDEN, 20), (TICHY_FAST, 5)):
    print(spec.label)
    print(f"{'nu':>3} {'Q':>8} {'short':>7} {'long':>7} {'short len':>12} {'long len':>12} {'D':>7}")
    for nu in range(2, top + 1):
        Q = int(spec.Q(nu))
        p = three_gap_profile(sorted_orbit(spec, nu))
        d = orbit_discrepancy(spec, Q)
        print(f"{nu:>3} {Q:>8} {p.count_short:>7} {p.count_long:>7} "
              f"{float(p.short_len.mid()):>12.4e} {float(p.long_len.mid()):>12.4e} {float(d.hi):>7.4f}")
    print()
