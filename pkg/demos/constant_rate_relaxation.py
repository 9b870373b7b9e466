"""Constant rates relax slowly when the system is crowded.

With c = 1 every occupied site fires at the same rate, however many
particles it holds.  The gap scales like L^2 / (N^2 + L^2), so at fixed L the
relaxation time grows quadratically in N once N exceeds L.  We show the
scaling twice: from exact gaps on small systems and from kinetic Monte
Carlo on 32 sites.
"""

from zrplab import StateSpace, build_generator, constant
from zrplab.constants import spectral_gap
from zrplab.kmc import relaxation_estimate, simulate

print("exact gaps, gap * (N^2 + L^2) / L^2")
for L in (4, 6):
    line = []
    for N in (2, 4, 8, 16):
        gap = spectral_gap(build_generator(StateSpace(L, N), constant())).value
        line.append(f"N={N}: {gap * (N * N + L * L) / (L * L):.3f}")
    print(f"  L={L}  " + "  ".join(line))

L = 32
print(f"\nKMC at L={L}: integrated autocorrelation time of eta_0")
for N in (8, 16, 32):
    traj = simulate(L, N, constant(), T=2.0e4, seed=1, sample_dt=0.2)
    est = relaxation_estimate(traj, "eta0")
    scale = (N * N + L * L) / (L * L)
    print(f"  N={N:>3}  tau={est['tau']:8.2f} +- {est['err']:6.2f}   "
          f"(N^2+L^2)/(L^2 tau)={scale / est['tau']:.3f}  {est['flag'] or ''}")
