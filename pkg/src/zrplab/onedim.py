"""Birth-death chains on ``{0..N}`` and their entropy-dissipation constants.

For a chain with reversible law ``pi``, death rates ``r_-`` and birth rates
``r_+`` we estimate the best constant ``C`` in

    sum_n pi(n) u(n) log u(n) <= C sum_n pi(n) r_-(n) [u(n)-u(n-1)] log(u(n)/u(n-1))

over ``u > 0`` with ``pi[u] = 1``.  When the death rates increase by at least
``delta_-`` per step and the birth rates decrease by at least ``delta_+``,
``1 / (delta_- + delta_+)`` is a rigorous upper bound for ``C``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .ascent import (ConstantEstimate, RatioProblem, default_starts,
                     linearization_candidate, maximize_ratio)
from .measures import MeasureVector, build_potential, canonical_marginal, log_weights
from .rates import RateFunction, certify, regularize

__all__ = [
    "BirthDeathChain",
    "bd_from_measure",
    "bd_dissipation_constant",
    "one_vertex_constant",
    "potential_chain",
    "comparison_factor",
]

BD_RESTARTS = 64


@dataclass(frozen=True, eq=False)
class BirthDeathChain:
    """Rates on ``0..N``: ``r_plus[N] = 0`` and ``r_minus[0] = 0`` by convention."""

    r_plus: np.ndarray
    r_minus: np.ndarray
    pi: np.ndarray

    def __post_init__(self):
        for name in ("r_plus", "r_minus", "pi"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if not (self.r_plus.size == self.r_minus.size == self.pi.size):
            raise ValueError("rate and measure vectors must have equal length N+1")
        if self.r_minus[0] != 0 or self.r_plus[-1] != 0:
            raise ValueError("need r_minus(0) = 0 and r_plus(N) = 0")
        if np.any(self.pi <= 0):
            raise ValueError("pi must be positive on 0..N")
        lhs = self.r_minus[1:] * self.pi[1:]
        rhs = self.r_plus[:-1] * self.pi[:-1]
        if np.any(np.abs(lhs - rhs) > 1e-12 * np.maximum(1.0, np.abs(lhs))):
            raise ValueError("detailed balance fails")

    @property
    def N(self) -> int:
        return self.pi.size - 1

    def increments(self) -> tuple[float, float]:
        """``(delta_-, delta_+)``: minima of ``r_-(n+1) - r_-(n)`` and
        ``r_+(n) - r_+(n+1)`` over ``n = 0..N-1``."""
        if self.N == 0:
            return 0.0, 0.0
        dm = float(np.min(np.diff(self.r_minus)))
        dp = float(np.min(-np.diff(self.r_plus)))
        # rates recovered through detailed balance carry rounding noise
        noise = 1e-10 * max(1.0, float(self.r_plus.max()), float(self.r_minus.max()))
        if -noise < dm < 0:
            dm = 0.0
        if -noise < dp < 0:
            dp = 0.0
        return dm, dp

    def certified_delta(self) -> float | None:
        dm, dp = self.increments()
        if dm < 0 or dp < 0 or dm + dp <= 0:
            return None
        return dm + dp

    def problem(self, kind: str = "mlsi") -> RatioProblem:
        n = np.arange(1, self.N + 1)
        return RatioProblem(self.pi, n - 1, n, self.pi[1:] * self.r_minus[1:], kind)

    def gap(self) -> tuple[float, np.ndarray]:
        """Spectral gap and its eigenfunction (tridiagonal solve)."""
        p = self.pi / self.pi.sum()
        diag = self.r_plus + self.r_minus
        off = np.sqrt(self.r_plus[:-1] * self.r_minus[1:])
        vals, vecs = eigh_tridiagonal(diag, -off)
        h = vecs[:, 1] / np.sqrt(p)
        h = h - np.dot(p, h)
        return float(vals[1]), h / np.sqrt(np.dot(p, h * h))


def bd_from_measure(pi, r_minus) -> BirthDeathChain:
    """Birth rates from detailed balance: ``r_+(n) = r_-(n+1) pi(n+1) / pi(n)``."""
    if isinstance(pi, MeasureVector):
        logp = pi.log_probs()
    else:
        with np.errstate(divide="ignore"):
            logp = np.log(np.asarray(pi, dtype=float))
    if not np.all(np.isfinite(logp)):
        raise ValueError("pi vanishes inside its support")
    r_minus = np.asarray(r_minus, dtype=float)[: logp.size].copy()
    if r_minus.size != logp.size:
        raise ValueError("need r_minus on 0..N")
    r_minus[0] = 0.0
    if np.any(r_minus[1:] <= 0):
        raise ValueError("death rates must be positive for n >= 1")
    r_plus = np.zeros_like(r_minus)
    r_plus[:-1] = r_minus[1:] * np.exp(logp[1:] - logp[:-1])
    # detailed balance holds by construction; rescale pi for the stored copy
    p = np.exp(logp - logp.max())
    return BirthDeathChain(r_plus=r_plus, r_minus=r_minus, pi=p / p.sum())


def _tilt_starts(N: int):
    n = np.arange(N + 1, dtype=float)
    return [s * n for s in (-4.0, -1.0, -0.3, 0.3, 1.0, 4.0, 10.0)]


def bd_dissipation_constant(chain: BirthDeathChain, restarts: int = BD_RESTARTS,
                            seed: int = 0, maxiter: int = 500) -> ConstantEstimate:
    """Best constant for the chain, estimated from below.

    The value is the largest ratio found by multi-start ascent, together with
    the near-constant limit ``1 / (2 gap)``.  A certified ``delta`` attaches
    ``1 / delta`` as an upper bound.
    """
    prob = chain.problem("mlsi")
    N = chain.N
    if N == 0:
        raise ValueError("chain has a single state")
    gap, h = chain.gap()
    lin, lin_g = linearization_candidate(prob, gap, h)
    starts = default_starts(prob, seed, restarts, coords=np.arange(N + 1)[:, None])
    starts += _tilt_starts(N)
    best, best_g, info = maximize_ratio(prob, starts, maxiter=maxiter)
    source = "ascent"
    if lin > best or best_g is None:
        best, best_g, source = lin, lin_g, "linearization"
    delta = chain.certified_delta()
    upper = None if delta is None else 1.0 / delta
    return ConstantEstimate(
        kind="bd", value=float(best), bound="lower", witness=np.exp(best_g),
        provenance={"restarts": len(starts), "seed": seed, "iterations": info["iterations"],
                    "source": source, "gap": gap, "delta": delta},
        upper=upper,
        upper_source=None if upper is None else "monotone-rate birth-death bound 1/delta",
    )


def one_vertex_constant(c: RateFunction, L: int, N: int, x: int = 0,
                        restarts: int = BD_RESTARTS, seed: int = 0) -> ConstantEstimate:
    """Best constant for the single-site marginal chain with death rates ``c``.

    All sites are exchangeable, so ``x`` only labels the result.
    """
    if L < 2 or N < 1:
        raise ValueError("need L >= 2 and N >= 1")
    nu_x = canonical_marginal(c, L, N)
    chain = bd_from_measure(nu_x, c.values(N))
    est = bd_dissipation_constant(chain, restarts=restarts, seed=seed)
    est.kind = "onevertex"
    est.provenance.update({"L": L, "N": N, "x": x, "rate": c.name})
    return est


def potential_chain(c: RateFunction, L: int, N: int, n0: int | None = None, **kw):
    """Chain ``(hat nu_x, r_- = c~)`` built from the convex potential.

    ``hat nu_x(n) ∝ mu~_x(n) exp(-V(n))`` with ``mu~`` the single-site law of
    the regularised rate.  Returns ``(chain, potential, c_tilde)``; then
    ``r_+(n) = exp(-grad V(n))`` is nonincreasing because ``V`` is convex.
    """
    if n0 is None:
        cert = certify(c)
        if cert.h1 is None:
            raise ValueError("rate has no growth certificate; cannot regularise")
        n0 = cert.n0
    ct = regularize(c, n0)
    pot = build_potential(c, L, N, **kw)
    logp = log_weights(ct, N) - pot.values
    chain = bd_from_measure(MeasureVector.from_logs(logp), ct.values(N))
    return chain, pot, ct


def comparison_factor(p, q) -> float:
    """Smallest ``C >= 1`` with ``1/C <= p/q <= C`` pointwise."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    r = np.log(p / p.sum()) - np.log(q / q.sum())
    return float(np.exp(np.max(np.abs(r))))
