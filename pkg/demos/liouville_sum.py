"""Birkhoff sums of the piecewise-linear construction on a fast-growing theta.

The certified deviation of the level-nu sum from 1/6 shrinks with nu, well
inside the 4 Q_{nu-1} / alpha_{nu+1} envelope.  Run: python demos/liouville_sum.py
"""

from ergosum.cf_engine import TICHY_FAST, alpha_enclosure
from ergosum.t2_construction import sum_bound_verify

for nu in (3, 4, 5):
    rep = sum_bound_verify(TICHY_FAST, nu)
    envelope = alpha_enclosure(TICHY_FAST, nu, 3).reciprocal() * (4 * int(TICHY_FAST.Q(nu - 1)))
    print(f"nu={nu}  Q={int(TICHY_FAST.Q(nu)):>6}  |S - 1/6| in [{float(rep.deviation.lo):.3e}, "
          f"{float(rep.deviation.hi):.3e}]  envelope {float(envelope.hi):.3e}  {rep.verdict.value}")
