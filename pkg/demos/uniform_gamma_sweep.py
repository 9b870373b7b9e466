"""Lower bounds on gamma(L, N) for two certified rates.

Every value printed is a certified lower bound from multi-start ascent,
sandwiched below an external upper bound.  For c(n) = n the grid is flat
at about 1/2.  For the staircase rate each row climbs from about 1/4 at
N = 1 to about 1/2, pushed up by the spectral gap dropping from 2 to 1.
Both stay inside a narrow band, which is what uniform boundedness looks like.
"""

from zrplab import linear, staircase
from zrplab.constants import sweep

Ls, Ns = range(2, 6), range(1, 7)
for c in (linear(), staircase(2)):
    rows = sweep(c, Ls, Ns, restarts=6, kinds=("mlsi",))
    table = {(r["L"], r["N"]): r["gamma_lo"] for r in rows}
    print(f"\nrate {c.name}: gamma lower bounds")
    print("  L\\N " + "".join(f"{n:>8}" for n in Ns))
    for L in Ls:
        print(f"{L:>5} " + "".join(f"{table[(L, n)]:8.4f}" for n in Ns))
    vals = list(table.values())
    print(f"  max/min = {max(vals) / min(vals):.3f}")
