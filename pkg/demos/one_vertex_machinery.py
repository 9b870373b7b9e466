"""Single-site reduction: convex potentials and birth-death constants.

Conditioning the canonical measure on one site leaves a law on {0..N}.  For
rates with growth certificates it can be written as exp(-V) times a
single-site weight with V convex.  The birth-death chain it defines has
nonincreasing birth rates, so its dissipation constant is at most 1/delta.
Here we build the potential, check convexity, and compare the estimated
one-vertex constants with that bound.
"""

import numpy as np

from zrplab import linear, staircase
from zrplab.onedim import one_vertex_constant, potential_chain

for c in (linear(), staircase(2)):
    print(f"\nrate {c.name}")
    for L, N in ((4, 4), (6, 12), (10, 20)):
        chain, pot, _ = potential_chain(c, L, N)
        d2 = pot.second_differences()
        delta = chain.certified_delta()
        est = one_vertex_constant(c, L, N, restarts=8)
        bound = "none" if delta is None else f"{1 / delta:.3f}"
        print(f"  L={L:>2} N={N:>2}  min V''={np.min(d2):.4f}  "
              f"one-vertex constant={est.value:.4f}  potential chain 1/delta={bound}")
