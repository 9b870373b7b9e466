"""Event-driven simulation of zero-range dynamics.

Each occupied site fires at its total departure rate; the next event is
drawn with a Fenwick (binary indexed) tree over site rates, so an event
costs O(log L).  Randomness comes from a Philox stream keyed by
``(seed, replica)`` and is consumed from fixed-size blocks of uniforms,
three per event, which makes runs bit-for-bit reproducible.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numba
import numpy as np

from .measures import log_weights
from .rates import RateFunction

__all__ = [
    "Trajectory",
    "simulate",
    "simulate_replicas",
    "sample_canonical",
    "relaxation_estimate",
    "autocorrelation",
    "write_trace",
    "read_trace",
    "write_summary_csv",
    "TRACE_DTYPE",
]

TRACE_DTYPE = np.dtype([("time", "<f8"), ("src", "<u4"), ("dst", "<u4")])
OBSERVABLES = ("sum_c", "eta0", "sum_sq")
BLOCK = 1 << 16
REBUILD_EVERY = 1 << 14
FLAVORS = {"complete": 0, "local": 1}


def stream(seed: int, replica: int = 0) -> np.random.Generator:
    """Counter-based generator for one replica."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, replica])))


# --------------------------------------------------------------------------
# numba kernel


@numba.njit(cache=True)
def _site_rate(n, x, L, cvals, flavor):
    c = cvals[n]
    if flavor == 0:
        return c * (L - 1) / L
    k = 0
    if x > 0:
        k += 1
    if x < L - 1:
        k += 1
    return 0.5 * c * k


@numba.njit(cache=True)
def _tree_build(tree, rates):
    L = rates.size
    tree[:] = 0.0
    for i in range(L):
        j = i + 1
        while j <= L:
            tree[j] += rates[i]
            j += j & (-j)


@numba.njit(cache=True)
def _tree_add(tree, i, delta):
    L = tree.size - 1
    j = i + 1
    while j <= L:
        tree[j] += delta
        j += j & (-j)


@numba.njit(cache=True)
def _tree_find(tree, top, value):
    # smallest index whose prefix sum exceeds value
    L = tree.size - 1
    pos = 0
    step = top
    while step > 0:
        nxt = pos + step
        if nxt <= L and tree[nxt] <= value:
            pos = nxt
            value -= tree[nxt]
        step >>= 1
    return pos


@numba.njit(cache=True)
def _run_block(eta, cvals, flavor, rates, tree, top, u, t, t_end, state, samples,
               sample_dt, hist, last_change, trace, total_rate, rebuild_every):
    """Consume the uniforms in ``u``; returns ``(t, total_rate, status)``.

    ``state`` holds ``[sum_c, sum_sq, n_samples, events, trace_count, since_rebuild]``
    as floats; ``status`` is 0 when ``u`` ran out, 1 at ``t_end``, -1 on a
    conservation failure.
    """
    L = eta.size
    k = 0
    n_u = u.size
    max_samples = samples.shape[0]
    trace_cap = trace.shape[0]
    while k + 3 <= n_u:
        if total_rate <= 0.0:
            t_next = t_end
        else:
            t_next = t - math.log1p(-u[k]) / total_rate
        # sample the piecewise-constant path on the grid
        n_s = int(state[2])
        while n_s < max_samples and n_s * sample_dt <= min(t_next, t_end):
            samples[n_s, 0] = state[0]
            samples[n_s, 1] = eta[0]
            samples[n_s, 2] = state[1]
            n_s += 1
        state[2] = n_s
        if t_next >= t_end:
            return t_end, total_rate, 1
        t = t_next
        x = _tree_find(tree, top, u[k + 1] * total_rate)
        if x >= L:
            x = L - 1
        # rounding can land on a zero-rate site: walk to the nearest active one
        if rates[x] <= 0.0:
            y = x
            while y >= 0 and rates[y] <= 0.0:
                y -= 1
            if y < 0:
                y = x
                while y < L and rates[y] <= 0.0:
                    y += 1
            x = y
        if flavor == 0:
            y = int(u[k + 2] * (L - 1))
            if y >= L - 1:
                y = L - 2
            if y >= x:
                y += 1
        else:
            if x == 0:
                y = 1
            elif x == L - 1:
                y = L - 2
            elif u[k + 2] < 0.5:
                y = x - 1
            else:
                y = x + 1
        k += 3
        a = eta[x]
        b = eta[y]
        hist[a] += t - last_change[x]
        hist[b] += t - last_change[y]
        last_change[x] = t
        last_change[y] = t
        eta[x] = a - 1
        eta[y] = b + 1
        if eta[x] < 0:
            return t, total_rate, -1
        state[0] += cvals[a - 1] - cvals[a] + cvals[b + 1] - cvals[b]
        state[1] += (a - 1) * (a - 1) - a * a + (b + 1) * (b + 1) - b * b
        rx = _site_rate(a - 1, x, L, cvals, flavor)
        ry = _site_rate(b + 1, y, L, cvals, flavor)
        _tree_add(tree, x, rx - rates[x])
        _tree_add(tree, y, ry - rates[y])
        total_rate += rx - rates[x] + ry - rates[y]
        rates[x] = rx
        rates[y] = ry
        state[3] += 1
        tc = int(state[4])
        if tc < trace_cap:
            trace[tc]["time"] = t
            trace[tc]["src"] = x
            trace[tc]["dst"] = y
            state[4] = tc + 1
        state[5] += 1
        if state[5] >= rebuild_every:
            _tree_build(tree, rates)
            total_rate = 0.0
            for i in range(L):
                total_rate += rates[i]
            state[5] = 0
    return t, total_rate, 0


# --------------------------------------------------------------------------
# driver


@dataclass
class Trajectory:
    """Summary of one simulated path.

    ``samples[name]`` holds the observable on the grid ``times``;
    ``histogram[n]`` is the time fraction a site spends with ``n`` particles
    (averaged over sites); ``trace`` lists events when requested.
    """

    L: int
    N: int
    rate: str
    flavor: str
    seed: int
    replica: int
    T: float
    times: np.ndarray
    samples: dict
    histogram: np.ndarray
    final_eta: np.ndarray
    events: int
    trace: np.ndarray | None = None
    meta: dict = field(default_factory=dict)


def simulate(L: int, N: int, c: RateFunction, flavor: str = "complete", T: float = 100.0,
             seed: int = 0, replica: int = 0, eta0=None, sample_dt: float | None = None,
             trace_cap: int = 0, start: str = "stationary") -> Trajectory:
    """Simulate up to time ``T``.

    The initial configuration is ``eta0`` if given, otherwise an exact draw
    from the canonical measure (``start="stationary"``) or all particles on
    site 0 (``start="packed"``); the draw uses the same stream as the
    dynamics.  Observables ``sum_c``, ``eta0`` and ``sum_sq`` are sampled
    every ``sample_dt`` (default ``min(T/1e4, 0.05)``, but at most 10^6
    samples); the step should be well below the relaxation time.
    """
    if T <= 0:
        raise ValueError("T must be positive")
    if flavor not in FLAVORS:
        raise ValueError(f"unknown flavor {flavor!r}")
    if L < 2:
        raise ValueError("need L >= 2")
    rng = stream(seed, replica)
    if eta0 is not None:
        eta = np.array(eta0, dtype=np.int64)
        if eta.size != L or eta.sum() != N or np.any(eta < 0):
            raise ValueError("eta0 must be a nonnegative L-vector summing to N")
    elif start == "stationary":
        eta = sample_canonical(c, L, N, 1, rng=rng)[0].astype(np.int64)
    elif start == "packed":
        eta = np.zeros(L, dtype=np.int64)
        eta[0] = N
    else:
        raise ValueError(f"unknown start {start!r}")
    cvals = c.values(N + 1)
    fl = FLAVORS[flavor]
    if sample_dt is None:
        sample_dt = max(T / 1e6, min(T / 1e4, 0.05))
    sample_dt = float(sample_dt)
    n_samples = int(math.floor(T / sample_dt)) + 1
    samples = np.zeros((n_samples, 3))
    rates = np.array([_site_rate(eta[x], x, L, cvals, fl) for x in range(L)])
    tree = np.zeros(L + 1)
    _tree_build(tree, rates)
    top = 1 << (L.bit_length() - 1)
    total = float(rates.sum())
    state = np.array([float(cvals[eta].sum()), float((eta * eta).sum()), 0.0, 0.0, 0.0, 0.0])
    hist = np.zeros(N + 1)
    last_change = np.zeros(L)
    trace = np.zeros(max(trace_cap, 0), dtype=TRACE_DTYPE)
    t = 0.0
    eta_start = eta.copy()
    while True:
        u = rng.random(BLOCK)
        t, total, status = _run_block(eta, cvals, fl, rates, tree, top, u, t, T, state,
                                      samples, sample_dt, hist, last_change, trace, total,
                                      REBUILD_EVERY)
        if status < 0:
            raise RuntimeError("particle number went negative")
        if int(eta.sum()) != N:
            raise RuntimeError("particle number not conserved")
        if status == 1:
            break
    for x in range(L):
        hist[eta[x]] += T - last_change[x]
    n_s = int(state[2])
    times = np.arange(n_s) * sample_dt
    return Trajectory(
        L=L, N=N, rate=c.name, flavor=flavor, seed=seed, replica=replica, T=T,
        times=times,
        samples={name: samples[:n_s, i].copy() for i, name in enumerate(OBSERVABLES)},
        histogram=hist / (L * T), final_eta=eta, events=int(state[3]),
        trace=trace[: int(state[4])] if trace_cap > 0 else None,
        meta={"sample_dt": sample_dt, "initial_eta": eta_start},
    )


def simulate_replicas(L, N, c, replicas: int, **kw) -> list[Trajectory]:
    """Independent replicas ``0..replicas-1``; each owns its stream."""
    return [simulate(L, N, c, replica=r, **kw) for r in range(replicas)]


# --------------------------------------------------------------------------
# exact sampling from the canonical measure


def _log_sum_table(c: RateFunction, L: int, N: int) -> np.ndarray:
    # rows[l, k] = log of the total weight of l sites holding k particles
    lw = log_weights(c, N)
    rows = np.full((L + 1, N + 1), -np.inf)
    rows[0, 0] = 0.0
    for l in range(1, L + 1):
        prev = rows[l - 1]
        for k in range(N + 1):
            rows[l, k] = np.logaddexp.reduce(lw[: k + 1] + prev[k::-1])
    return rows


def sample_canonical(c: RateFunction, L: int, N: int, size: int, seed: int = 0,
                     rng: np.random.Generator | None = None) -> np.ndarray:
    """Exact draws from the canonical measure, one site at a time.

    Given ``k`` particles left for the last ``l`` sites, the current site
    holds ``n`` with probability ``mu(n) mu_{l-1}(k-n) / mu_l(k)``.
    """
    rng = stream(seed) if rng is None else rng
    rows = _log_sum_table(c, L, N)
    lw = log_weights(c, N)
    out = np.zeros((size, L), dtype=np.int64)
    left = np.full(size, N, dtype=np.int64)
    n = np.arange(N + 1)
    for x in range(L - 1):
        l = L - x
        # cdf[k, n] of the occupation of site x given k particles left
        logp = lw[None, :] + np.where(n[None, :] <= n[:, None],
                                      rows[l - 1][np.clip(n[:, None] - n[None, :], 0, N)],
                                      -np.inf) - rows[l][:, None]
        cdf = np.cumsum(np.exp(logp), axis=1)
        u = rng.random(size)
        row = cdf[left]
        pick = (row < u[:, None] * row[:, -1:]).sum(axis=1)
        pick = np.minimum(pick, left)
        out[:, x] = pick
        left -= pick
    out[:, L - 1] = left
    return out


# --------------------------------------------------------------------------
# relaxation diagnostics


def autocorrelation(x, max_lag: int) -> np.ndarray:
    """Normalised autocorrelation ``rho(0..max_lag)`` via FFT."""
    x = np.asarray(x, dtype=float)
    x = x - x.mean()
    n = x.size
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, size)
    acov = np.fft.irfft(f * np.conj(f), size)[: max_lag + 1] / n
    if acov[0] <= 0:
        return np.full(max_lag + 1, np.nan)
    return acov / acov[0]


def _tau_windowed(x, dt, c_window, max_lag):
    rho = autocorrelation(x, max_lag)
    if np.isnan(rho[0]):
        return np.nan, 0
    # trapezoid on the sampled correlation: dt (1/2 + sum_{k=1}^{W} rho_k)
    partial = 0.5 + np.cumsum(rho[1:])
    for W in range(1, max_lag + 1):
        if W >= c_window * partial[W - 1]:
            return dt * partial[W - 1], W
    return dt * partial[-1], max_lag


def relaxation_estimate(traj: Trajectory, observable: str = "sum_c", burn_in: float = 0.0,
                        c_window: float = 6.0, batches: int = 10) -> dict:
    """Integrated autocorrelation time ``int_0^inf rho(t) dt`` of an observable.

    The correlation is summed up to the self-consistent window
    ``W >= c_window * tau/dt``.  The error bar is the batch-means spread of
    the same estimator over ``batches`` contiguous blocks.  ``flag`` is set
    when the run is shorter than ~50 windows per batch or the observable
    does not fluctuate.
    """
    x = np.asarray(traj.samples[observable], dtype=float)
    dt = traj.meta["sample_dt"]
    x = x[int(burn_in / dt):]
    n = x.size
    if n < 100 or np.ptp(x) == 0:
        return {"tau": np.nan, "err": np.nan, "n_eff": 0.0, "flag": "constant or too short",
                "window": 0, "observable": observable}
    tau, W = _tau_windowed(x, dt, c_window, n // 4)
    per = []
    size = n // batches
    for b in range(batches):
        seg = x[b * size:(b + 1) * size]
        if np.ptp(seg) > 0:
            t_b, _ = _tau_windowed(seg, dt, c_window, max(1, size // 4))
            per.append(t_b)
    per = np.asarray(per)
    err = float(per.std(ddof=1) / math.sqrt(per.size)) if per.size > 1 else np.nan
    n_eff = n * dt / (2 * tau) if tau > 0 else 0.0
    flag = ""
    if size < 50 * W:
        flag = "insufficient effective samples"
    return {"tau": float(tau), "err": err, "n_eff": float(n_eff), "flag": flag,
            "window": int(W), "observable": observable, "batch_taus": per}


# --------------------------------------------------------------------------
# output


def write_trace(traj: Trajectory, path) -> None:
    """Fixed-width little-endian records ``(f64 time, u32 src, u32 dst)``."""
    if traj.trace is None:
        raise ValueError("trajectory was run without a trace")
    traj.trace.astype(TRACE_DTYPE).tofile(Path(path))


def read_trace(path) -> np.ndarray:
    return np.fromfile(Path(path), dtype=TRACE_DTYPE)


def write_summary_csv(traj: Trajectory, path) -> None:
    """Columns ``time, sum_c, eta0, sum_sq`` on the sampling grid."""
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time", *OBSERVABLES])
        for i, t in enumerate(traj.times):
            w.writerow([repr(float(t))] + [repr(float(traj.samples[k][i])) for k in OBSERVABLES])
