"""Multi-start maximisation of entropy / Dirichlet-form ratios.

Given a reversible chain through its stationary vector ``nu`` and its
undirected edge list ``(i, j, W)`` with ``W = nu_i q_ij``, we maximise

* ``kind="mlsi"``:   Ent(f) / E(f, log f)
* ``kind="logsob"``: Ent(f) / E(sqrt f, sqrt f)

over ``f = exp(g) > 0``.  Both ratios are invariant under ``f -> lambda f``,
so we work with ``w = f / nu[f]`` and ``d = log w`` which keeps every term
O(1) in magnitude.  The search is L-BFGS on ``log(ratio)`` from many starts.
Every number returned is the ratio of an explicit function, hence a
genuine lower bound on the supremum.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.linalg import eigh
from scipy.optimize import minimize
from scipy.sparse.linalg import LinearOperator, eigsh

__all__ = ["ConstantEstimate", "RatioProblem", "maximize_ratio", "default_starts",
           "edge_gap", "linearization_candidate"]

DENSE_LIMIT = 4000

START_KINDS = ("gauss", "smooth", "spike", "ball", "coord", "gauss_wide")


@dataclass
class ConstantEstimate:
    """A functional-inequality constant with an explicit bound direction.

    ``value`` is a lower bound (``bound="lower"``), an upper bound, or a
    point value.  ``upper`` optionally carries a companion upper bound and
    ``upper_source`` says where it comes from.
    """

    kind: str
    value: float
    bound: str
    witness: np.ndarray | None = None
    provenance: dict = field(default_factory=dict)
    upper: float | None = None
    upper_source: str | None = None

    def __post_init__(self):
        if self.bound not in ("lower", "upper", "point"):
            raise ValueError(f"bad bound kind {self.bound!r}")
        if not np.isfinite(self.value):
            raise ValueError("estimate value must be finite")

    @property
    def interval(self) -> tuple[float, float]:
        if self.bound == "point":
            return self.value, self.value
        if self.bound == "lower":
            return self.value, (np.inf if self.upper is None else self.upper)
        return -np.inf, self.value


class RatioProblem:
    """Ratio functional on a reversible chain, with analytic gradients."""

    def __init__(self, nu, src, dst, weight, kind="mlsi"):
        if kind not in ("mlsi", "logsob"):
            raise ValueError(f"unknown ratio kind {kind!r}")
        nu = np.asarray(nu, dtype=float)
        self.nu = nu / nu.sum()
        self.log_nu = np.log(self.nu)
        self.src = np.asarray(src, dtype=np.int64)
        self.dst = np.asarray(dst, dtype=np.int64)
        self.weight = np.asarray(weight, dtype=float)
        self.kind = kind
        self.n = self.nu.size

    @classmethod
    def from_generator(cls, gen, kind="mlsi"):
        src, dst, rate = gen.edges
        keep = src < dst
        return cls(gen.stationary, src[keep], dst[keep],
                   gen.stationary[src[keep]] * rate[keep], kind)

    def _normalise(self, g):
        # plain numpy: scipy's logsumexp costs more than the rest of the step
        a = g + self.log_nu
        m = a.max()
        d = g - (m + np.log(np.exp(a - m).sum()))
        return d, np.exp(d)

    def parts(self, g):
        """``(Ent, D)`` of ``f = exp(g)``, both divided by ``nu[f]``."""
        d, w = self._normalise(np.asarray(g, dtype=float))
        ent = float(np.dot(self.nu, d * w - np.expm1(d)))
        i, j, W = self.src, self.dst, self.weight
        if self.kind == "mlsi":
            den = float(np.dot(W, (w[j] - w[i]) * (d[j] - d[i])))
        else:
            h = np.exp(0.5 * d)
            den = float(np.dot(W, (h[j] - h[i]) ** 2))
        return ent, den

    def ratio(self, g) -> float:
        ent, den = self.parts(g)
        if den <= 0:
            return 0.0 if ent <= 0 else np.inf
        return ent / den

    def ratio_of(self, f) -> float:
        f = np.asarray(f, dtype=float)
        if np.any(f <= 0):
            raise ValueError("ratio needs f > 0")
        return self.ratio(np.log(f))

    def neg_log_ratio(self, g):
        d, w = self._normalise(g)
        nu = self.nu
        ent = float(np.dot(nu, d * w - np.expm1(d)))
        grad_ent = nu * w * d
        i, j, W = self.src, self.dst, self.weight
        if self.kind == "mlsi":
            dw = w[j] - w[i]
            dd = d[j] - d[i]
            den = float(np.dot(W, dw * dd))
            gj = W * (w[j] * dd + dw)
            gi = -W * (w[i] * dd + dw)
        else:
            h = np.exp(0.5 * d)
            dh = h[j] - h[i]
            den = float(np.dot(W, dh * dh))
            gj = W * dh * h[j]
            gi = -W * dh * h[i]
        grad_den = np.bincount(j, gj, minlength=self.n) + np.bincount(i, gi, minlength=self.n)
        if ent <= 0 or den <= 0:
            return 0.0, np.zeros_like(g)
        val = -(np.log(ent) - np.log(den))
        grad = -(grad_ent / ent - grad_den / den)
        return val, grad

    def spread(self, g) -> float:
        """nu-standard deviation of ``g``."""
        m = np.dot(self.nu, g)
        return float(np.sqrt(max(np.dot(self.nu, (g - m) ** 2), 0.0)))

    def smooth(self, g, steps=3):
        """Apply the lazy jump kernel ``steps`` times (edge-weight averaging)."""
        i, j, W = self.src, self.dst, self.weight
        rate_out = (np.bincount(i, W, minlength=self.n)
                    + np.bincount(j, W, minlength=self.n)) / self.nu
        lam = float(rate_out.max()) if rate_out.size else 1.0
        for _ in range(steps):
            flow = np.bincount(i, W * (g[j] - g[i]), minlength=self.n) \
                + np.bincount(j, W * (g[i] - g[j]), minlength=self.n)
            g = g + flow / (self.nu * lam)
        return g


def _pick_state(problem, rng):
    # half the time a typical state, otherwise a uniform one
    if rng.random() < 0.5:
        return int(rng.choice(problem.n, p=problem.nu))
    return int(rng.integers(problem.n))


def default_starts(problem: RatioProblem, seed: int, count: int, coords=None):
    """Deterministic start list; start ``k`` depends only on ``(seed, k)``."""
    out = []
    n = problem.n
    for k in range(count):
        rng = np.random.default_rng([seed, k])
        kind = START_KINDS[k % len(START_KINDS)]
        if kind == "gauss":
            g = rng.normal(scale=rng.choice([0.3, 1.0, 3.0]), size=n)
        elif kind == "gauss_wide":
            g = rng.normal(scale=8.0, size=n)
        elif kind == "smooth":
            g = problem.smooth(rng.normal(scale=4.0, size=n), steps=int(rng.integers(1, 6)))
        elif kind == "spike":
            g = np.full(n, -float(rng.uniform(3.0, 15.0)))
            g[_pick_state(problem, rng)] = 0.0
        elif kind == "ball":
            g = np.zeros(n)
            g[_pick_state(problem, rng)] = 1.0
            g = problem.smooth(g, steps=2)
            g = float(rng.uniform(3.0, 12.0)) * g / max(g.max(), 1e-300)
        else:  # coord
            if coords is None:
                g = rng.normal(scale=2.0, size=n)
            else:
                col = coords[:, rng.integers(coords.shape[1])]
                table = rng.normal(scale=2.0, size=int(col.max()) + 1)
                if rng.random() < 0.5:
                    table = float(rng.normal(scale=2.0)) * np.arange(table.size)
                g = table[col]
        out.append(np.asarray(g, dtype=float))
    return out


def maximize_ratio(problem: RatioProblem, starts, maxiter: int = 400,
                   min_entropy: float = 1e-8, tol: float = 1e-12):
    """Run L-BFGS from every start; return ``(best_ratio, best_g, details)``.

    Functions whose normalised entropy ``Ent(f)/nu[f]`` falls below
    ``min_entropy`` are treated as constant: there the ratio is a 0/0 limit
    that rounding cannot resolve (it is handled separately through the
    spectral gap).  A run drifting into that regime is stopped and its last
    admissible iterate kept.
    """
    best, best_g = 0.0, None
    per_start = []
    iters = 0

    def admissible(g):
        return problem.parts(g)[0] >= min_entropy

    for g0 in starts:
        g0 = np.asarray(g0, dtype=float)
        if not admissible(g0):
            per_start.append(np.nan)
            continue
        last = {"g": g0}

        def watch(intermediate_result):
            x = intermediate_result.x
            if not admissible(x):
                raise StopIteration
            last["g"] = x.copy()

        res = minimize(problem.neg_log_ratio, g0, jac=True, method="L-BFGS-B",
                       callback=watch,
                       options={"maxiter": maxiter, "gtol": tol, "ftol": tol})
        iters += int(res.nit)
        val = np.nan
        for g in (g0, last["g"], res.x):
            if not admissible(g):
                continue
            v = problem.ratio(g)
            if not np.isfinite(v):
                continue
            val = v if np.isnan(val) else max(val, v)
            if v > best:
                best, best_g = v, g
        per_start.append(val)
    return best, best_g, {"per_start": per_start, "iterations": iters}


def edge_gap(nu, src, dst, weight, dense_limit: int = DENSE_LIMIT, tol: float = 1e-10):
    """Spectral gap of the reversible chain with edge conductances ``weight``.

    Solves ``K h = lambda diag(nu) h`` where ``h^T K h = sum W (h_j - h_i)^2``,
    through the symmetric form ``A = D^{-1/2} K D^{-1/2}``.  Returns
    ``(gap, h)`` with ``h`` the eigenfunction, ``nu``-centred and of unit
    ``nu``-variance.  Dense ``eigh`` up to ``dense_limit`` states, Lanczos
    on ``A`` with the constant mode lifted out of the way above that.
    """
    nu = np.asarray(nu, dtype=float)
    nu = nu / nu.sum()
    n = nu.size
    src = np.asarray(src)
    dst = np.asarray(dst)
    W = np.asarray(weight, dtype=float)
    K = sp.coo_matrix((np.concatenate([-W, -W]), (np.concatenate([src, dst]),
                                                   np.concatenate([dst, src]))), shape=(n, n)).tocsr()
    K = K - sp.diags(np.asarray(K.sum(axis=1)).ravel())
    s = 1.0 / np.sqrt(nu)
    A = sp.diags(s) @ K @ sp.diags(s)
    root = np.sqrt(nu)
    if n <= dense_limit:
        vals, vecs = eigh(A.toarray())
        order = np.argsort(vals)
        # drop the eigenvector closest to sqrt(nu)
        overlaps = np.abs(vecs.T @ root)
        skip = int(np.argmax(overlaps))
        idx = [k for k in order if k != skip][0]
        lam, v = float(vals[idx]), vecs[:, idx]
    else:
        lift = 2.0 * float(abs(A.diagonal()).max()) + 1.0
        op = LinearOperator((n, n), matvec=lambda x: A @ x + lift * root * np.dot(root, x),
                            dtype=float)
        v0 = np.random.default_rng(0).normal(size=n)
        vals, vecs = eigsh(op, k=1, which="SA", tol=tol, v0=v0, maxiter=20 * n)
        lam, v = float(vals[0]), vecs[:, 0]
    h = v * s
    h = h - np.dot(nu, h)
    h = h / np.sqrt(max(np.dot(nu, h * h), 1e-300))
    return lam, h


def linearization_candidate(problem: RatioProblem, gap: float, h, eps: float = 1e-4):
    """Limit of the ratio along ``f = 1 + eps h`` as ``eps -> 0``.

    ``Ent ~ eps^2 Var(h) / 2`` while ``E(f, log f) ~ eps^2 E(h, h)`` and
    ``E(sqrt f, sqrt f) ~ eps^2 E(h, h) / 4``, so the limit is
    ``1 / (2 gap)`` (mlsi) or ``2 / gap`` (logsob) at the gap eigenfunction.
    Returns ``(limit, g_witness)`` with ``g_witness = log(1 + eps h / sup|h|)``.
    """
    limit = 1.0 / (2.0 * gap) if problem.kind == "mlsi" else 2.0 / gap
    h = np.asarray(h, dtype=float)
    g = np.log1p(eps * h / max(np.abs(h).max(), 1e-300))
    return limit, g
