"""Configuration spaces, sparse generators and the semigroup.

Configurations of ``N`` particles on ``L`` sites are the weak compositions
of ``N`` into ``L`` parts, listed in ascending lexicographic order and
ranked with the combinatorial number system.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.special import logsumexp
from scipy.stats import poisson

from .measures import log_weights
from .rates import RateFunction

__all__ = [
    "StateSpace",
    "SparseGenerator",
    "enumerate_space",
    "build_generator",
    "change_of_variable_check",
    "evolve",
    "evolve_grid",
]

DEFAULT_CAP = 5_000_000


class StateSpace:
    """All ``eta in N^L`` with ``sum(eta) = N``.

    ``states[i]`` is the configuration of rank ``i``; :meth:`rank` and
    :meth:`unrank` compute the bijection arithmetically.
    """

    def __init__(self, L: int, N: int, cap: int = DEFAULT_CAP):
        if L < 1 or N < 0:
            raise ValueError("need L >= 1 and N >= 0")
        size = math.comb(N + L - 1, L - 1)
        if size > cap:
            raise ValueError(f"state space C({N + L - 1},{L - 1}) = {size} exceeds cap {cap}")
        self.L = L
        self.N = N
        self.size = size
        # _count[R, p] = C(R + p, p): compositions of at most R into p + 1 parts
        self._count = np.array([[math.comb(R + p, p) for p in range(L)] for R in range(N + 1)],
                               dtype=np.int64)
        self.states = _compositions(L, N)
        self.states.setflags(write=False)
        self._jumps = {}

    def __len__(self):
        return self.size

    def __repr__(self):
        return f"StateSpace(L={self.L}, N={self.N}, size={self.size})"

    def rank(self, eta) -> np.ndarray:
        """Lexicographic rank of each row of ``eta`` (shape ``(..., L)``)."""
        eta = np.asarray(eta, dtype=np.int64)
        if np.any(eta.sum(axis=-1) != self.N) or np.any(eta < 0):
            raise ValueError("configurations must be nonnegative and sum to N")
        L = self.L
        remaining = self.N - np.concatenate(
            [np.zeros(eta.shape[:-1] + (1,), dtype=np.int64), np.cumsum(eta, axis=-1)[..., :-1]],
            axis=-1,
        )
        out = np.zeros(eta.shape[:-1], dtype=np.int64)
        for i in range(L - 1):
            p = L - 1 - i
            R = remaining[..., i]
            out += self._count[R, p] - self._count[R - eta[..., i], p]
        return out

    def unrank(self, idx) -> np.ndarray:
        """Inverse of :meth:`rank`."""
        idx = np.asarray(idx, dtype=np.int64)
        if np.any(idx < 0) or np.any(idx >= self.size):
            raise IndexError("rank out of range")
        L, N = self.L, self.N
        out = np.zeros(idx.shape + (L,), dtype=np.int64)
        r = idx.copy()
        R = np.full(idx.shape, N, dtype=np.int64)
        for i in range(L - 1):
            p = L - 1 - i
            full = self._count[R, p]
            v = np.zeros_like(r)
            # largest v with C(R+p,p) - C(R-v+p,p) <= r
            for trial in range(1, N + 1):
                ok = (trial <= R) & (full - self._count[np.maximum(R - trial, 0), p] <= r)
                v = np.where(ok, trial, v)
            r = r - (full - self._count[R - v, p])
            out[..., i] = v
            R = R - v
        out[..., L - 1] = R
        return out

    def jump_index(self, x: int, y: int) -> np.ndarray:
        """Rank of ``eta^{xy}`` (one particle moved ``x -> y``) for every state.

        States with ``eta_x = 0`` map to themselves.
        """
        key = (x, y)
        if key not in self._jumps:
            if x == y:
                idx = np.arange(self.size)
            else:
                moved = self.states.copy()
                can = moved[:, x] > 0
                moved[can, x] -= 1
                moved[can, y] += 1
                idx = self.rank(moved)
            idx.setflags(write=False)
            self._jumps[key] = idx
        return self._jumps[key]

    def occupation(self, x: int) -> np.ndarray:
        return self.states[:, x]


def _compositions(L: int, N: int) -> np.ndarray:
    memo = {}

    def build(parts, total):
        key = (parts, total)
        if key in memo:
            return memo[key]
        if parts == 1:
            out = np.array([[total]], dtype=np.int64)
        else:
            blocks = []
            for v in range(total + 1):
                rest = build(parts - 1, total - v)
                head = np.full((rest.shape[0], 1), v, dtype=np.int64)
                blocks.append(np.hstack([head, rest]))
            out = np.vstack(blocks)
        memo[key] = out
        return out

    return build(L, N)


def enumerate_space(L: int, N: int, cap: int = DEFAULT_CAP) -> StateSpace:
    return StateSpace(L, N, cap=cap)


@dataclass(eq=False)
class SparseGenerator:
    """Reversible generator ``Q = offdiag + diag(diag)`` on a :class:`StateSpace`.

    ``offdiag`` is CSR with nonnegative jump rates; ``diag`` holds minus the
    exit rates; ``stationary`` is the canonical measure on the space.
    """

    space: StateSpace
    rate: RateFunction
    flavor: str
    offdiag: sp.csr_matrix
    diag: np.ndarray
    stationary: np.ndarray
    log_stationary: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def size(self) -> int:
        return self.space.size

    @cached_property
    def matrix(self) -> sp.csr_matrix:
        return (self.offdiag + sp.diags(self.diag)).tocsr()

    @cached_property
    def edges(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Directed edges ``(src, dst, rate)``."""
        coo = self.offdiag.tocoo()
        return coo.row.astype(np.int64), coo.col.astype(np.int64), coo.data

    @property
    def exit_rates(self) -> np.ndarray:
        return -self.diag

    def apply(self, f: np.ndarray) -> np.ndarray:
        return self.offdiag @ f + self.diag * f

    def detailed_balance_residual(self) -> float:
        flux = sp.diags(self.stationary) @ self.offdiag
        diff = abs(flux - flux.T)
        scale = flux.max() if flux.nnz else 1.0
        return float(diff.max() / scale) if diff.nnz else 0.0

    def stationarity_residual(self) -> float:
        return float(np.max(np.abs(self.matrix.T @ self.stationary)))

    def write_coo(self, path) -> None:
        """Write off-diagonal and diagonal entries as ``i j rate`` lines."""
        src, dst, rate = self.edges
        lines = [f"{i} {j} {r!r}" for i, j, r in zip(src.tolist(), dst.tolist(), rate.tolist())]
        lines += [f"{i} {i} {d!r}" for i, d in enumerate(self.diag.tolist())]
        Path(path).write_text("\n".join(lines) + "\n")

    def write_stationary_csv(self, path) -> None:
        L = self.space.L
        header = ",".join(["index"] + [f"eta{x}" for x in range(L)] + ["nu"])
        rows = [header]
        for i, (eta, p) in enumerate(zip(self.space.states.tolist(), self.stationary.tolist())):
            rows.append(",".join([str(i)] + [str(v) for v in eta] + [repr(p)]))
        Path(path).write_text("\n".join(rows) + "\n")


def stationary_log_weights(space: StateSpace, c: RateFunction) -> np.ndarray:
    """Normalised ``log nu_{L,N}`` on ``space``."""
    lw = log_weights(c, space.N)
    logs = lw[space.states].sum(axis=1)
    return logs - logsumexp(logs)


def build_generator(space: StateSpace, c: RateFunction, flavor: str = "complete",
                    check: bool = True) -> SparseGenerator:
    """Assemble the zero-range generator on ``space``.

    ``complete``: a particle leaves ``x`` at total rate ``c(eta_x)`` and
    lands on a uniform vertex, i.e. rate ``c(eta_x)/L`` to each ``y``; the
    ``y = x`` no-op is dropped.

    ``local``: nearest-neighbour jumps on the segment ``0..L-1`` at rate
    ``c(eta_x)/2`` per direction, so that ``-nu[f Q g]`` equals
    ``(1/2) sum_x nu[c_x grad_{x,x+1} f grad_{x,x+1} g]``.

    With ``check=True`` detailed balance is verified to ``1e-12`` relative.
    """
    if flavor not in ("complete", "local"):
        raise ValueError(f"unknown flavor {flavor!r}")
    L, n = space.L, space.size
    cvals = c.values(max(space.N, 1))
    if flavor == "complete":
        pairs = [(x, y) for x in range(L) for y in range(L) if x != y]
        scale = 1.0 / L
    else:
        pairs = [(x, x + 1) for x in range(L - 1)] + [(x + 1, x) for x in range(L - 1)]
        scale = 0.5
    targets = {}
    for x, y in pairs:
        targets.setdefault(x, []).append(y)
    rows, cols, vals = [], [], []
    for x, ys in targets.items():
        occ = space.states[:, x]
        src_all = np.nonzero(occ > 0)[0]
        ys = np.asarray(ys)
        chunk = max(1, 20_000_000 // (len(ys) * L))
        for start in range(0, src_all.size, chunk):
            src = src_all[start:start + chunk]
            moved = np.repeat(space.states[src][:, None, :], len(ys), axis=1)
            moved[:, :, x] -= 1
            moved[:, np.arange(len(ys)), ys] += 1
            rows.append(np.repeat(src, len(ys)))
            cols.append(space.rank(moved).ravel())
            vals.append(np.repeat(cvals[occ[src]] * scale, len(ys)))
    if rows:
        rows, cols, vals = map(np.concatenate, (rows, cols, vals))
    else:
        rows = cols = np.zeros(0, dtype=np.int64)
        vals = np.zeros(0)
    offdiag = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    offdiag.sum_duplicates()
    diag = -np.asarray(offdiag.sum(axis=1)).ravel()
    logs = stationary_log_weights(space, c)
    gen = SparseGenerator(space=space, rate=c, flavor=flavor, offdiag=offdiag,
                          diag=diag, stationary=np.exp(logs), log_stationary=logs)
    if check:
        if np.any(offdiag.data < 0):
            raise AssertionError("negative off-diagonal rate")
        res = gen.detailed_balance_residual()
        if res > 1e-12:
            raise AssertionError(f"detailed balance violated: relative residual {res:.3e}")
    return gen


def change_of_variable_check(space: StateSpace, c: RateFunction, nu: np.ndarray,
                             fs) -> float:
    """Max over ``f`` in ``fs`` and ``x != y`` of ``|nu[c_x f] - nu[c_y f^{yx}]|``.

    Each residual is divided by ``max(1, sup|f|)``.
    """
    cvals = c.values(max(space.N, 1))
    worst = 0.0
    for f in fs:
        f = np.asarray(f, dtype=float)
        scale = max(1.0, float(np.max(np.abs(f))))
        for x in range(space.L):
            lhs = np.dot(nu, cvals[space.states[:, x]] * f)
            for y in range(space.L):
                if y == x:
                    continue
                shifted = f[space.jump_index(y, x)]
                rhs = np.dot(nu, cvals[space.states[:, y]] * shifted)
                worst = max(worst, abs(lhs - rhs) / scale)
    return worst


def _poisson_cutoff(mu: float, eps: float, max_terms: int) -> int:
    """Smallest ``k`` with ``P(Poisson(mu) > k) <= eps``.

    ``poisson.isf`` returns nan for tails below ~1e-17, so search on ``sf``.
    """
    hi = int(mu) + 8
    while poisson.sf(hi, mu) > eps:
        hi *= 2
        if hi > 2 * max_terms:
            raise RuntimeError(f"uniformization needs more than {max_terms} terms; split t")
    lo = 0
    while lo < hi:
        mid = (lo + hi) // 2
        if poisson.sf(mid, mu) > eps:
            lo = mid + 1
        else:
            hi = mid
    if hi > max_terms:
        raise RuntimeError(f"uniformization needs {hi} terms (> {max_terms}); split t")
    return hi


def evolve(gen: SparseGenerator, f0, t: float, tol: float = 1e-12,
           max_terms: int = 5_000_000) -> np.ndarray:
    """``exp(t Q) f0`` by uniformization.

    With ``Lam`` the largest exit rate and ``P = I + Q/Lam`` (stochastic),
    ``exp(tQ) f = sum_k Poisson(k; Lam t) P^k f``.  The series is cut where
    the Poisson tail drops below ``tol / sup|f0|``, which bounds the sup-norm
    error by ``tol``.
    """
    f = np.asarray(f0, dtype=float).copy()
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0:
        return f
    lam = float(np.max(gen.exit_rates)) if gen.size else 0.0
    if lam == 0:
        return f
    mu = lam * t
    fmax = float(np.max(np.abs(f)))
    if fmax == 0:
        return f
    eps = tol / fmax
    k_max = _poisson_cutoff(mu, eps, max_terms)
    ks = np.arange(k_max + 1)
    weights = poisson.pmf(ks, mu)
    start = int(np.argmax(weights > eps * 1e-3)) if np.any(weights > eps * 1e-3) else 0
    off = gen.offdiag
    inv = 1.0 / lam
    d = 1.0 + gen.diag * inv
    out = np.zeros_like(f)
    v = f
    for k in range(k_max + 1):
        if k >= start:
            out += weights[k] * v
        if k < k_max:
            v = (off @ v) * inv + d * v
    return out


def evolve_grid(gen: SparseGenerator, f0, times, tol: float = 1e-12) -> list[np.ndarray]:
    """``[exp(t Q) f0 for t in times]`` for sorted ``times``, stepping incrementally."""
    times = list(times)
    if any(b < a for a, b in zip(times, times[1:])):
        raise ValueError("times must be sorted")
    out = []
    f = np.asarray(f0, dtype=float)
    last = 0.0
    for t in times:
        f = evolve(gen, f, t - last, tol=tol / max(1, len(times)))
        out.append(f)
        last = t
    return out
