"""Single-site, grand-canonical and canonical zero-range measures.

All products of rates are accumulated in log space; a
:class:`MeasureVector` stores plain probabilities unless some entry would
fall below ``exp(-300)``, in which case it keeps the logs instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .rates import RateFunction

__all__ = [
    "MeasureVector",
    "GrandCanonicalProfile",
    "Potential",
    "log_weights",
    "log_partition",
    "single_site",
    "grand_canonical",
    "solve_fugacity",
    "log_convolve_power",
    "convolve_counts",
    "canonical_marginal",
    "local_clt_probe",
    "variance_ratio_range",
    "exact_variance_bound_constant",
    "tilt_identity_residual",
    "boundary_regime_ratios",
    "build_potential",
]

LOG_FLOOR = -300.0
# cap on automatic truncation of grand-canonical sums
_TRUNC_CAP = 100_000


@dataclass(frozen=True, eq=False)
class MeasureVector:
    """Nonnegative weights on ``0..K``.

    ``weights`` holds logs when ``log_scale`` is true.  Use
    :meth:`log_probs` / :meth:`probs` to read it independently of storage.
    """

    weights: np.ndarray
    normalized: bool = True
    log_scale: bool = False

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "weights", w)
        if self.log_scale:
            if np.any(np.isnan(w)) or np.any(w == np.inf):
                raise ValueError("log weights must be finite or -inf")
        else:
            if not np.all(np.isfinite(w)) or np.any(w < 0):
                raise ValueError("weights must be finite and nonnegative")

    @classmethod
    def from_logs(cls, logw, normalized=True):
        logw = np.asarray(logw, dtype=float)
        if normalized:
            logw = logw - logsumexp(logw)
        finite = logw[np.isfinite(logw)]
        if finite.size and finite.min() < LOG_FLOOR:
            return cls(logw, normalized=normalized, log_scale=True)
        return cls(np.exp(logw), normalized=normalized, log_scale=False)

    def __len__(self):
        return self.weights.size

    def log_probs(self) -> np.ndarray:
        if self.log_scale:
            return self.weights
        with np.errstate(divide="ignore"):
            return np.log(self.weights)

    def probs(self) -> np.ndarray:
        return np.exp(self.weights) if self.log_scale else self.weights

    def total(self) -> float:
        return float(np.exp(logsumexp(self.log_probs())))

    def mean(self) -> float:
        p = self.probs()
        return float(np.dot(np.arange(p.size), p) / p.sum())

    def variance(self) -> float:
        p = self.probs() / self.probs().sum()
        n = np.arange(p.size)
        m = np.dot(n, p)
        return float(np.dot((n - m) ** 2, p))


@dataclass(frozen=True)
class GrandCanonicalProfile:
    """Fugacity data at density ``rho``.

    ``alpha_prime`` is ``d alpha / d rho = alpha / sigma2``; ``log_z`` is
    ``log Z_alpha`` on the truncated support ``0..n_max``.
    """

    rho: float
    alpha: float
    sigma2: float
    alpha_prime: float
    log_z: float
    n_max: int


@dataclass(frozen=True, eq=False)
class Potential:
    """Convex potential ``V(0..N)`` glued from the tilted and boundary pieces."""

    values: np.ndarray
    split_point: int
    K_tail: float
    m: int
    fitted_variance_constant: float

    def second_differences(self) -> np.ndarray:
        v = self.values
        return v[2:] + v[:-2] - 2.0 * v[1:-1]


def log_weights(c: RateFunction, n_max: int, alpha: float = 1.0) -> np.ndarray:
    """``log(alpha^n / prod_{k<=n} c(k))`` for ``n = 0..n_max`` (unnormalised)."""
    if alpha <= 0:
        raise ValueError("fugacity must be positive")
    vals = c.values(max(n_max, 1))[1 : n_max + 1]
    out = np.zeros(n_max + 1)
    out[1:] = np.cumsum(math.log(alpha) - np.log(vals))
    # a direct product is more accurate while it stays in range
    if n_max >= 1 and out.min() > LOG_FLOOR and out.max() < -LOG_FLOOR:
        out[1:] = np.log(np.cumprod(alpha / vals))
    return out


def _auto_truncation(c: RateFunction, alpha: float, tail_tol: float = 1e-14) -> int:
    """Smallest ``n`` whose neglected mass ``sum_{k > n}`` is below ``tail_tol``.

    The remainder past the scanned window is bounded by a geometric series
    with the last weight ratio, which is valid for nondecreasing rates.
    """
    n = 64
    while True:
        lw = log_weights(c, n, alpha)
        lz = logsumexp(lw)
        ratio = math.exp(lw[-1] - lw[-2])
        if ratio < 1:
            beyond = math.exp(lw[-1] - lz) * ratio / (1 - ratio)
            if beyond < 1e-3 * tail_tol:
                # cum[i] = log mass of {k >= i}
                cum = np.logaddexp.accumulate(lw[::-1])[::-1] - lz
                idx = np.nonzero(cum < math.log(tail_tol))[0]
                return max(int(idx[0]) - 1, 1)
        if n >= _TRUNC_CAP:
            raise ValueError(
                f"grand-canonical sum for {c.name!r} at alpha={alpha:g} does not "
                f"converge within n <= {_TRUNC_CAP}"
            )
        n *= 2


def log_partition(c: RateFunction, alpha: float = 1.0,
                  n_max: int | None = None) -> tuple[float, int]:
    """``log Z_alpha`` and the truncation used.

    With ``n_max=None`` the support is extended until the remaining mass is
    below ``1e-14``; divergent sums raise ``ValueError``.
    """
    if n_max is None:
        n_max = _auto_truncation(c, alpha)
    return float(logsumexp(log_weights(c, n_max, alpha))), n_max


def single_site(c: RateFunction, n_max: int) -> MeasureVector:
    """Single-site measure ``mu(n) ~ 1/prod_{k<=n} c(k)``, normalised on ``0..n_max``."""
    return MeasureVector.from_logs(log_weights(c, n_max))


def grand_canonical(c: RateFunction, alpha: float, n_max: int) -> MeasureVector:
    """Tilted measure ``mu_alpha(n) ~ alpha^n / prod_{k<=n} c(k)`` on ``0..n_max``."""
    return MeasureVector.from_logs(log_weights(c, n_max, alpha))


def _moments(lw):
    p = np.exp(lw - logsumexp(lw))
    n = np.arange(lw.size)
    m = float(np.dot(n, p))
    return m, float(np.dot((n - m) ** 2, p)), p


def _linear_slope(c: RateFunction) -> float | None:
    """``lam`` if ``c(n) = lam * n`` exactly (table and tail), else ``None``."""
    lam = c.tail_slope
    if not lam or lam <= 0:
        return None
    n = np.arange(c.table.size)
    return float(lam) if np.array_equal(c.table, lam * n) else None


def _check_truncation(p, n_max: int, rho: float) -> None:
    top = p[int(0.9 * n_max):].sum()
    if top > 1e-12:
        raise ValueError(
            f"truncation at n_max={n_max} too short for rho={rho}: top mass {top:.2e}"
        )


def solve_fugacity(c: RateFunction, rho: float, n_max: int | None = None,
                   max_expansions: int = 200) -> GrandCanonicalProfile:
    """Find ``alpha_rho`` with mean density ``rho``.

    Bracketed bisection on ``log alpha`` (the mean is strictly increasing in
    it) followed by Newton steps using ``d rho / d log alpha = sigma^2``.
    The default truncation is ``10 (rho + 1) + 200``; a ``ValueError`` is
    raised if more than ``1e-12`` of the mass sits in the top tenth of that
    support at the solution.
    """
    if rho <= 0:
        raise ValueError("density must be positive")
    if n_max is None:
        n_max = int(10 * (rho + 1) + 200)
    if rho >= n_max * 0.9:
        raise ValueError(f"density {rho} not reachable with truncation {n_max}")
    base = log_weights(c, n_max)
    grid = np.arange(n_max + 1)
    lam = _linear_slope(c)
    if lam is not None:
        # Poisson single-site law: alpha = lam * rho exactly
        alpha = lam * rho
        m, var, p = _moments(base + grid * math.log(alpha))
        _check_truncation(p, n_max, rho)
        return GrandCanonicalProfile(rho=rho, alpha=alpha, sigma2=var,
                                     alpha_prime=alpha / var,
                                     log_z=float(logsumexp(base + grid * math.log(alpha))),
                                     n_max=n_max)

    def mean_at(la):
        return _moments(base + grid * la)[0]

    lo, hi = -1.0, 1.0
    for _ in range(max_expansions):
        if mean_at(lo) < rho:
            break
        lo *= 2
    else:
        raise RuntimeError("fugacity bracket expansion failed (low side)")
    for _ in range(max_expansions):
        if mean_at(hi) > rho:
            break
        hi *= 2
    else:
        raise RuntimeError("fugacity bracket expansion failed (high side)")
    while hi - lo > 1e-12 * max(1.0, abs(lo)):
        mid = 0.5 * (lo + hi)
        if mean_at(mid) < rho:
            lo = mid
        else:
            hi = mid
    la = 0.5 * (lo + hi)
    for _ in range(3):
        m, var, _ = _moments(base + grid * la)
        step = (rho - m) / var
        la += step
        if abs(step) < 1e-15:
            break
    lw = base + grid * la
    m, var, p = _moments(lw)
    if abs(m - rho) > 1e-10 * max(1.0, rho):
        raise RuntimeError(f"fugacity solve did not converge: mean {m} vs {rho}")
    _check_truncation(p, n_max, rho)
    alpha = math.exp(la)
    return GrandCanonicalProfile(rho=rho, alpha=alpha, sigma2=var,
                                 alpha_prime=alpha / var,
                                 log_z=float(logsumexp(lw)), n_max=n_max)


def _log_convolve(a: np.ndarray, b: np.ndarray, n: int) -> np.ndarray:
    k = np.arange(n + 1)
    idx = k[:, None] - k[None, :]
    valid = idx >= 0
    terms = np.where(valid, a[None, :] + b[np.where(valid, idx, 0)], -np.inf)
    return logsumexp(terms, axis=1)


def log_convolve_power(loga: np.ndarray, power: int, n: int) -> np.ndarray:
    """Log of the ``power``-fold convolution of ``exp(loga)``, entries ``0..n``."""
    a = np.full(n + 1, -np.inf)
    m = min(n + 1, loga.size)
    a[:m] = loga[:m]
    result = np.full(n + 1, -np.inf)
    result[0] = 0.0
    while power:
        if power & 1:
            result = _log_convolve(result, a, n)
        power >>= 1
        if power:
            a = _log_convolve(a, a, n)
    return result


def convolve_counts(mu: MeasureVector, L: int, N: int) -> MeasureVector:
    """``mu_L(k) = P(eta_1 + ... + eta_L = k)`` for ``k = 0..N`` under ``mu^{x L}``.

    Entries beyond ``N`` are never needed and are dropped, so the result is
    exact up to rounding (and is not normalised).
    """
    if L < 1:
        raise ValueError("L must be >= 1")
    out = log_convolve_power(mu.log_probs(), L, N)
    return MeasureVector.from_logs(out, normalized=False)


def _log_mu_sums(c: RateFunction, max_sites: int, N: int) -> np.ndarray:
    """Rows ``log mu_l(k)`` (unnormalised single-site weights) for ``l = 0..max_sites``."""
    lw = log_weights(c, N)
    rows = np.full((max_sites + 1, N + 1), -np.inf)
    rows[0, 0] = 0.0
    for l in range(1, max_sites + 1):
        rows[l] = _log_convolve(rows[l - 1], lw, N)
    return rows


def canonical_marginal(c: RateFunction, L: int, N: int) -> MeasureVector:
    """Law of ``eta_x`` under the canonical measure on ``L`` sites with ``N`` particles.

    ``nu_x(n) = mu_x(n) mu_{L-1}(N - n) / mu_L(N)``; the single-site
    normalisation cancels, so only weights on ``0..N`` are used.
    """
    if L < 2 or N < 0:
        raise ValueError("need L >= 2 and N >= 0")
    lw = log_weights(c, N)
    rest = log_convolve_power(lw, L - 1, N)
    return MeasureVector.from_logs(lw + rest[::-1])


def local_clt_probe(c: RateFunction, grid) -> list[dict]:
    """Evaluate ``r(L, rho) = mu_{L,rho}(rho L) sqrt(sigma_rho^2 L)`` on a grid.

    ``grid`` is an iterable of ``(L, rho)`` with ``rho * L`` integral.  Each
    row also carries ``sigma2 / rho``.
    """
    rows = []
    for L, rho in grid:
        k = rho * L
        if abs(k - round(k)) > 1e-9:
            raise ValueError(f"rho*L must be an integer, got L={L}, rho={rho}")
        k = int(round(k))
        prof = solve_fugacity(c, rho)
        lw = log_weights(c, prof.n_max, prof.alpha) - prof.log_z
        lk = log_convolve_power(lw, L, k)[k]
        rows.append({
            "L": L, "rho": rho,
            "r": math.exp(lk) * math.sqrt(prof.sigma2 * L),
            "sigma2_over_rho": prof.sigma2 / rho,
        })
    return rows


def variance_ratio_range(c: RateFunction, rhos) -> tuple[float, float]:
    """``(min, max)`` of ``sigma_rho^2 / rho`` over ``rhos``."""
    vals = [solve_fugacity(c, float(r)).sigma2 / float(r) for r in rhos]
    return min(vals), max(vals)


exact_variance_bound_constant = variance_ratio_range


def tilt_identity_residual(c: RateFunction, L: int, N: int) -> float:
    """Max relative error of the tilt identity for ``mu_{L-1}(N - n)``, ``n < N``.

    Compares the direct convolution with
    ``alpha^(n-N) (Z_alpha / Z_1)^(L-1) mu_{L-1,rho_n}(N-n)`` at
    ``rho_n = (N - n) / (L - 1)``.
    """
    log_z1, _ = log_partition(c)
    direct = log_convolve_power(log_weights(c, N) - log_z1, L - 1, N)
    worst = 0.0
    for n in range(N):
        k = N - n
        prof = solve_fugacity(c, k / (L - 1))
        lw = log_weights(c, prof.n_max, prof.alpha) - prof.log_z
        tilted = log_convolve_power(lw, L - 1, k)[k]
        rhs = (n - N) * math.log(prof.alpha) + (L - 1) * (prof.log_z - log_z1) + tilted
        worst = max(worst, abs(math.expm1(direct[k] - rhs)))
    return worst


def boundary_regime_ratios(c: RateFunction, L: int, m: int) -> np.ndarray:
    """``mu_{L-1}(k) / (L^k mu_x(0)^L)`` for ``k = 0..m``."""
    log_z1, _ = log_partition(c)
    direct = log_convolve_power(log_weights(c, m) - log_z1, L - 1, m)
    k = np.arange(m + 1)
    return np.exp(direct - k * math.log(L) + L * log_z1)


def build_potential(c: RateFunction, L: int, N: int, K: float = 2.0,
                    m: int | None = None, K_cap: float = 2.0 ** 20,
                    tol: float = 1e-9) -> Potential:
    """Construct the convex potential ``V`` with ``mu_{L-1}(N - n) ~ exp(-V(n))``.

    For ``n <= N0 = N - m``::

        V(n) = (N-n) log alpha_n - (L-1) log(Z_{alpha_n} / Z_1) + log(N-n) / 2

    with ``alpha_n`` the fugacity at density ``(N - n)/(L - 1)``; above
    ``N0``::

        V(n) = (n - N) log L - L log mu_x(0) + K^(n - N0)

    ``m`` defaults to ``max(2, ceil(C/2) + 2)`` where ``C`` is the largest
    ``sigma_rho^2 / rho`` over the densities involved.  ``K`` is doubled
    until the two glue points are convex (up to ``K_cap``).  Raises
    ``RuntimeError`` if convexity fails in the interior ``n <= N0 - 2``.
    """
    if L < 2 or N < 2:
        raise ValueError("need L >= 2 and N >= 2")
    log_z1, _ = log_partition(c)
    profiles = [solve_fugacity(c, (N - n) / (L - 1)) for n in range(N)]
    fitted = max(p.sigma2 / p.rho for p in profiles)
    if m is None:
        m = max(2, math.ceil(fitted / 2) + 2)
    n0 = N - m
    head = np.array([
        (N - n) * math.log(p.alpha) - (L - 1) * (p.log_z - log_z1) + 0.5 * math.log(N - n)
        for n, p in enumerate(profiles[: max(n0 + 1, 0)])
    ])
    scale = max(1.0, float(np.max(np.abs(head)))) if head.size else 1.0
    if head.size >= 3:
        d2 = head[2:] + head[:-2] - 2.0 * head[1:-1]
        if np.any(d2 < -tol * scale):
            bad = int(np.argmin(d2))
            raise RuntimeError(
                f"interior convexity fails at n={bad} (second difference {d2[bad]:.3e}); "
                f"m={m} too small for this density range"
            )
    tail_n = np.arange(max(n0 + 1, 0), N + 1)
    base = (tail_n - N) * math.log(L) + L * log_z1
    while True:
        values = np.concatenate([head, base + K ** (tail_n - n0).astype(float)])
        d2 = values[2:] + values[:-2] - 2.0 * values[1:-1]
        if np.all(d2 >= -tol * scale):
            break
        if K >= K_cap:
            raise RuntimeError(f"boundary convexity not reached with K <= {K_cap:g}")
        K *= 2.0
    return Potential(values=values, split_point=n0, K_tail=K, m=m,
                     fitted_variance_constant=fitted)


def potential_equivalence_constant(c: RateFunction, L: int, N: int, pot: Potential) -> float:
    """Smallest ``C`` with ``mu_{L-1}(N-n) exp(V(n))`` in ``[1/C, C]`` for all ``n``."""
    log_z1, _ = log_partition(c)
    direct = log_convolve_power(log_weights(c, N) - log_z1, L - 1, N)
    logratio = direct[::-1] + pot.values
    return math.exp(float(np.max(np.abs(logratio))))
