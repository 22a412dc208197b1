"""Search for subsequence lengths with small Birkhoff sums of cos(2 pi x).

Golden theta uses the even-function route, the slow Liouville-type theta the
modulus-of-continuity route.  Run: python demos/small_subsums.py
"""

from ergosum.birkhoff_lab import prop1_experiment, prop2_experiment, resolve_function
from ergosum.cf_engine import GOLDEN, TICHY_SLOW

f = resolve_function("cos1")
for label, rep in (("golden, even route", prop2_experiment(f, GOLDEN, 40)),
                   ("slow Liouville, modulus route", prop1_experiment(f, TICHY_SLOW, 40))):
    d = rep.detail
    print(f"{label}: status {rep.status}, verdict {rep.verdict.value}")
    if rep.status == "ok":
        s = d["sum"]
        print(f"  Q = Q_{d['nu_n']} - Q_{d['nu_m']} = {d['Q_m']},  sum in [{float(s.lo):.6e}, {float(s.hi):.6e}]")
        for name, chk in rep.checks.items():
            print(f"  {name:<18} {chk.verdict.value}")
