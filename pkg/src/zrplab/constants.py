"""Spectral gap, log-Sobolev and entropy-dissipation constants.

``gamma`` is the best constant in ``Ent(f) <= gamma E(f, log f)`` and ``s``
the best constant in ``Ent(f) <= s E(sqrt f, sqrt f)``.  Both suprema are
nonconvex, so they are reported as ``(lower, upper)`` pairs:

* lower bounds come from explicit functions (multi-start ascent, seeded
  with semigroup trajectories and the gap eigenfunction, plus the
  near-constant limits ``1/(2 gap)`` and ``2/gap``);
* the upper bound on ``s`` is the classical comparison
  ``s <= (2 + log(1/min nu)) / gap`` for reversible chains, and
  ``gamma <= s/4`` follows from ``E(f, log f) >= 4 E(sqrt f, sqrt f)``.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .ascent import (ConstantEstimate, RatioProblem, default_starts, edge_gap,
                     linearization_candidate, maximize_ratio)
from .functionals import (conditional_identification, dissipation,
                          entropy, entropy_decomposition, random_positive_functions)
from .rates import RateFunction
from .statespace import SparseGenerator, StateSpace, build_generator, evolve, evolve_grid

__all__ = [
    "spectral_gap",
    "logsob_upper",
    "mlsi_constant",
    "logsob_constant",
    "decay_certificate",
    "recursion_probe",
    "sweep",
    "write_sweep_csv",
    "SWEEP_COLUMNS",
]

EXTERNAL_LS_BOUND = "external classical bound: s <= (2 + log(1/min nu)) / gap"
SWEEP_COLUMNS = ["L", "N", "rate", "gap", "s_lo", "s_up", "gamma_lo", "gamma_up", "seed", "restarts"]
DEFAULT_RESTARTS = 24
TRAJECTORY_SEEDS = 6


def _gap_problem(gen: SparseGenerator) -> RatioProblem:
    return RatioProblem.from_generator(gen, "mlsi")


def spectral_gap(gen: SparseGenerator, dense_limit: int = 4000) -> ConstantEstimate:
    """Smallest nonzero eigenvalue of ``-Q`` in ``L^2(nu)``."""
    if gen.size < 2:
        raise ValueError("gap needs at least two states")
    cached = gen._cache.get(("gap", dense_limit))
    if cached is not None:
        return cached
    p = _gap_problem(gen)
    lam, h = edge_gap(p.nu, p.src, p.dst, p.weight, dense_limit=dense_limit)
    # Rayleigh-quotient residual of the returned eigenfunction
    resid = float(np.max(np.abs(-gen.apply(h) - lam * h)))
    est = ConstantEstimate(kind="gap", value=lam, bound="point", witness=h,
                           provenance={"method": "dense" if gen.size <= dense_limit else "lanczos",
                                       "residual": resid, "size": gen.size})
    gen._cache[("gap", dense_limit)] = est
    return est


def logsob_upper(gen: SparseGenerator, gap: float | None = None) -> float:
    """``(2 + log(1/min nu)) / gap``."""
    gap = spectral_gap(gen).value if gap is None else gap
    return (2.0 + math.log(1.0 / float(gen.stationary.min()))) / gap


def _structured_starts(gen: SparseGenerator, problem: RatioProblem, seed: int, h):
    """Gap eigenfunction at finite amplitude and short semigroup trajectories
    started from spiky functions; independent of the restart budget."""
    out = [a * h for a in (0.5, 2.0, 6.0)]
    nu = gen.stationary
    for k in range(TRAJECTORY_SEEDS):
        rng = np.random.default_rng([seed, k, 99])
        if k % 2 == 0:
            state = int(rng.choice(gen.size, p=nu / nu.sum()))
        else:
            state = int(rng.integers(gen.size))
        f0 = np.full(gen.size, math.exp(-float(rng.uniform(4.0, 12.0))))
        f0[state] = 1.0
        t = float(rng.choice([0.05, 0.2, 0.6]))
        ft = evolve(gen, f0, t, tol=1e-13)
        out.append(np.log(np.maximum(ft, 1e-300)))
    return out


def _ratio_estimate(gen: SparseGenerator, kind: str, restarts: int, seed: int,
                    maxiter: int) -> tuple[float, np.ndarray, dict]:
    problem = RatioProblem.from_generator(gen, kind)
    gap = spectral_gap(gen)
    lin, lin_g = linearization_candidate(problem, gap.value, gap.witness)
    starts = _structured_starts(gen, problem, seed, gap.witness)
    starts += default_starts(problem, seed, restarts, coords=gen.space.states)
    best, best_g, info = maximize_ratio(problem, starts, maxiter=maxiter)
    source = "ascent"
    if best_g is None or lin > best:
        best, best_g, source = lin, lin_g, "linearization"
    prov = {"restarts": restarts, "starts": len(starts), "seed": seed,
            "iterations": info["iterations"], "source": source, "gap": gap.value,
            "witness_ratio": problem.ratio(best_g)}
    return float(best), np.exp(best_g - best_g.max()), prov


def logsob_constant(gen: SparseGenerator, restarts: int = DEFAULT_RESTARTS, seed: int = 0,
                    maxiter: int = 300) -> ConstantEstimate:
    """Log-Sobolev constant ``s``: ascent lower bound plus the comparison upper bound."""
    val, wit, prov = _ratio_estimate(gen, "logsob", restarts, seed, maxiter)
    up = logsob_upper(gen, prov["gap"])
    return ConstantEstimate(kind="logsob", value=val, bound="lower", witness=wit,
                            provenance=prov, upper=up, upper_source=EXTERNAL_LS_BOUND)


def mlsi_constant(gen: SparseGenerator, restarts: int = DEFAULT_RESTARTS, seed: int = 0,
                  maxiter: int = 300, certify_decay: bool = False) -> ConstantEstimate:
    """Entropy-dissipation constant ``gamma``; the upper bound is ``s_up / 4``."""
    val, wit, prov = _ratio_estimate(gen, "mlsi", restarts, seed, maxiter)
    up = logsob_upper(gen, prov["gap"]) / 4.0
    est = ConstantEstimate(kind="mlsi", value=val, bound="lower", witness=wit,
                           provenance=prov, upper=up,
                           upper_source=EXTERNAL_LS_BOUND + ", divided by 4")
    if certify_decay:
        est.provenance["decay"] = decay_certificate(gen, up, [wit], times=None)
    return est


def decay_certificate(gen: SparseGenerator, gamma_up: float, starts=None, n_traj: int = 50,
                      seed: int = 0, times=None) -> dict:
    """Check ``Ent(f_t) <= exp(-t / gamma_up) Ent(f_0)`` along trajectories.

    ``starts`` defaults to ``n_traj`` random positive functions; ``times``
    defaults to 20 points on ``(0, 3 gamma_up]``.  Reports the worst value
    of ``Ent(f_t) exp(t/gamma_up) / Ent(f_0)`` and the number of grid points
    where it exceeds ``1 + 1e-8``.
    """
    if starts is None:
        starts = random_positive_functions(gen, n_traj, seed=seed)
    if times is None:
        times = np.linspace(3.0 * gamma_up / 20, 3.0 * gamma_up, 20)
    nu = gen.stationary
    worst = 0.0
    violations = 0
    checked = 0
    for f0 in starts:
        e0 = entropy(f0, nu)
        if e0 <= 1e-14 * float(np.dot(nu, f0)):
            continue
        for t, ft in zip(times, evolve_grid(gen, f0, times, tol=1e-13)):
            r = entropy(np.maximum(ft, 0.0), nu) * math.exp(t / gamma_up) / e0
            worst = max(worst, r)
            violations += int(r > 1 + 1e-8)
            checked += 1
    return {"worst_ratio": worst, "violations": violations, "checked": checked,
            "gamma_up": gamma_up}


def recursion_probe(gen: SparseGenerator, fs, gamma_sub: float | None = None,
                    eps_grid=(0.05, 0.1, 0.25, 0.5, 1.0)) -> dict:
    """Martingale-recursion diagnostics on a batch of positive functions.

    * ``i4_residual``: the entropy decomposition over single sites, exact;
    * ``identification_tv``: distance between ``nu[. | eta_x = n]`` and the
      canonical measure on ``L-1`` sites (all ``n``, site 0);
    * ``recursion_slack``: min over the batch of
      ``gamma_sub (L-2)/(L-1) E(f, log f) + L^{-1} sum_x Ent(f_x) - Ent(f)``
      with ``gamma_sub`` a measured constant for ``L-1`` sites (negative
      slack means that constant is too small to close the recursion);
    * ``pareto``: for each ``eps`` the smallest ``C`` with
      ``sum_x Ent(f_x) <= eps Ent(f) + C E(f, log f)`` on the batch.
    """
    L = gen.space.L
    i4 = 0.0
    rows = []
    for f in fs:
        dec = entropy_decomposition(f, gen)
        i4 = max(i4, dec["residual"])
        diss = dissipation(f, gen)
        rows.append((dec["entropy"], L * dec["marginal"], diss))
    tv = max(conditional_identification(gen, 0, n) for n in range(gen.space.N + 1)) \
        if L >= 2 else 0.0
    out = {"i4_residual": i4, "identification_tv": tv}
    if gamma_sub is not None and L >= 3:
        slack = [gamma_sub * (L - 2) / (L - 1) * d + m / L - e for e, m, d in rows]
        out["recursion_slack"] = float(min(slack))
    pareto = []
    for eps in eps_grid:
        c = 0.0
        for e, m, d in rows:
            excess = m - eps * e
            if excess > 0:
                c = max(c, excess / d if d > 0 else np.inf)
        pareto.append((eps, c))
    out["pareto"] = pareto
    return out


def sweep(c: RateFunction, Ls, Ns, seed: int = 0, restarts: int = DEFAULT_RESTARTS,
          cap: int = 20_000, flavor: str = "complete", maxiter: int = 300,
          progress=None, kinds=("logsob", "mlsi")) -> list[dict]:
    """Gap, ``s`` and ``gamma`` bounds over a grid of ``(L, N)``.

    Instances with more than ``cap`` states are skipped.  Dropping
    ``"logsob"`` from ``kinds`` skips the ascent for ``s`` (``s_lo`` is then
    the linearization value ``2/gap``); the upper bounds are always filled.
    """
    rows = []
    for L in Ls:
        for N in Ns:
            if L < 2 or N < 1 or math.comb(N + L - 1, L - 1) > cap:
                continue
            gen = build_generator(StateSpace(L, N), c, flavor)
            gap = spectral_gap(gen).value
            s_up = logsob_upper(gen, gap)
            s_lo, g_lo = 2.0 / gap, 0.5 / gap
            if "logsob" in kinds:
                s_lo = logsob_constant(gen, restarts=restarts, seed=seed, maxiter=maxiter).value
            if "mlsi" in kinds:
                g_lo = mlsi_constant(gen, restarts=restarts, seed=seed, maxiter=maxiter).value
            rows.append({"L": L, "N": N, "rate": c.name, "gap": gap,
                         "s_lo": s_lo, "s_up": s_up,
                         "gamma_lo": g_lo, "gamma_up": s_up / 4.0,
                         "seed": seed, "restarts": restarts})
            if progress is not None:
                progress(rows[-1])
    return rows


def write_sweep_csv(rows, path) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for r in rows:
            w.writerow([r[k] if isinstance(r[k], (int, str)) else repr(float(r[k]))
                        for k in SWEEP_COLUMNS])
