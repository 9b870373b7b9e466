"""Jump-rate functions for zero-range dynamics.

A rate function is tabulated on ``0..n_max`` and closed by an affine tail
``c(n) = c(n_max) + tail_slope * (n - n_max)``.  This module also
certifies the two conditions used throughout the package:

* growth (``h1``): there are ``delta > 0`` and ``n0 >= 1`` with ``c(m) - c(n) >= delta``
  whenever ``m >= n + n0``;
* Lipschitz: ``sup_n |c(n+1) - c(n)| <= lip``.

and implements the regularising transform that turns a rate satisfying
both into a uniformly increasing one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "RateFunction",
    "HypothesisCertificate",
    "linear",
    "constant",
    "staircase",
    "from_spec",
    "load",
    "certify",
    "regularize",
    "equivalence_ratio_onesite",
]


@dataclass(frozen=True, eq=False)
class RateFunction:
    """Tabulated rates ``c(0..n_max)`` with an affine tail.

    ``tail_slope=None`` means the function is only defined on the table;
    evaluating past it raises ``ValueError``.
    """

    table: np.ndarray
    tail_slope: float | None = 0.0
    name: str = "custom"

    def __post_init__(self):
        table = np.asarray(self.table, dtype=float).copy()
        table.setflags(write=False)
        object.__setattr__(self, "table", table)
        if table.ndim != 1 or table.size < 2:
            raise ValueError("rate table needs at least two entries c(0), c(1)")
        if not np.all(np.isfinite(table)):
            raise ValueError("rate table has non-finite entries")
        if np.any(table < 0):
            raise ValueError("rate table has negative entries")
        if table[0] != 0.0:
            raise ValueError("c(0) must be 0")
        if np.any(table[1:] <= 0):
            raise ValueError("c(k) must be positive for k >= 1")
        if self.tail_slope is not None and not self.tail_slope >= 0:
            raise ValueError("tail_slope must be nonnegative")

    @property
    def n_max(self) -> int:
        return self.table.size - 1

    def __call__(self, n):
        n = np.asarray(n)
        if np.any(n < 0):
            raise ValueError("rates are defined on nonnegative integers")
        inside = n <= self.n_max
        if np.all(inside):
            return self.table[n]
        if self.tail_slope is None:
            raise ValueError(
                f"rate {self.name!r} evaluated at n={int(n.max())} beyond its table "
                f"(n_max={self.n_max}) and has no tail rule"
            )
        out = self.table[-1] + self.tail_slope * (n - self.n_max).astype(float)
        return np.where(inside, self.table[np.minimum(n, self.n_max)], out)

    def values(self, n_max: int) -> np.ndarray:
        """Return ``c(0), ..., c(n_max)`` as a float array."""
        return np.asarray(self(np.arange(n_max + 1)), dtype=float)

    def __repr__(self):
        return f"RateFunction({self.name!r}, n_max={self.n_max}, tail_slope={self.tail_slope})"


@dataclass(frozen=True)
class HypothesisCertificate:
    """Result of :func:`certify`.

    ``h1`` is ``(delta, n0)`` or ``None``; ``lip`` is the Lipschitz bound.
    ``extends_to_infinity`` is set when the affine tail carries the growth
    certificate past the checked window.
    """

    h1: tuple[float, int] | None
    lip: float
    window: range
    extends_to_infinity: bool = False
    notes: dict = field(default_factory=dict)

    @property
    def delta(self) -> float | None:
        return None if self.h1 is None else self.h1[0]

    @property
    def n0(self) -> int | None:
        return None if self.h1 is None else self.h1[1]


def linear(slope: float = 1.0) -> RateFunction:
    return RateFunction(np.array([0.0, slope]), tail_slope=slope,
                        name="linear" if slope == 1.0 else f"linear:{slope:g}")


def constant(value: float = 1.0) -> RateFunction:
    return RateFunction(np.array([0.0, value]), tail_slope=0.0,
                        name="constant" if value == 1.0 else f"constant:{value:g}")


def staircase(p: int = 2, n_max: int = 2048) -> RateFunction:
    """``c(n) = p * ceil(n / p)``, i.e. ``(0, 2, 2, 4, 4, ...)`` for ``p = 2``.

    The table is long enough for every desk-scale use; past it the tail
    continues with the staircase's mean slope 1.
    """
    if p < 1:
        raise ValueError("staircase step must be >= 1")
    n = np.arange(n_max + 1)
    table = p * np.ceil(n / p)
    return RateFunction(table, tail_slope=1.0, name=f"staircase:{p}")


def from_spec(spec: str) -> RateFunction:
    """Build a rate from an identifier or a file path.

    Identifiers: ``linear``, ``constant``, ``staircase:<p>`` (plus
    ``linear:<slope>`` and ``constant:<value>``).  Anything else is read
    with :func:`load`.
    """
    head, _, arg = spec.partition(":")
    if head == "linear":
        return linear(float(arg) if arg else 1.0)
    if head == "constant":
        return constant(float(arg) if arg else 1.0)
    if head == "staircase":
        return staircase(int(arg) if arg else 2)
    path = Path(spec)
    if path.exists():
        return load(path)
    raise ValueError(f"unknown rate spec {spec!r}")


def load(path) -> RateFunction:
    """Read a rate file: a ``tail_slope <x>`` header then ``n c(n)`` lines.

    ``tail_slope none`` disables extrapolation.  Blank lines and ``#``
    comments are ignored.  Entries must cover ``0..n_max`` without gaps.
    """
    path = Path(path)
    tail = None
    have_header = False
    entries = {}
    for raw in path.read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] == "tail_slope":
            if len(parts) != 2:
                raise ValueError(f"{path}: malformed header {raw!r}")
            tail = None if parts[1].lower() == "none" else float(parts[1])
            have_header = True
            continue
        if len(parts) != 2:
            raise ValueError(f"{path}: expected 'n c(n)', got {raw!r}")
        n = int(parts[0])
        if n in entries:
            raise ValueError(f"{path}: duplicate entry for n={n}")
        entries[n] = float(parts[1])
    if not have_header:
        raise ValueError(f"{path}: missing 'tail_slope' header")
    n_max = max(entries) if entries else -1
    if sorted(entries) != list(range(n_max + 1)):
        raise ValueError(f"{path}: entries must cover 0..n_max without gaps")
    table = np.array([entries[n] for n in range(n_max + 1)])
    return RateFunction(table, tail_slope=tail, name=path.stem)


def dump(c: RateFunction, path) -> None:
    """Write ``c`` in the format read by :func:`load`."""
    tail = "none" if c.tail_slope is None else repr(float(c.tail_slope))
    lines = [f"tail_slope {tail}"]
    lines += [f"{n} {float(v)!r}" for n, v in enumerate(c.table)]
    Path(path).write_text("\n".join(lines) + "\n")


def _h1_delta(vals: np.ndarray, n0: int) -> float:
    # min over n and m >= n + n0 (inside the window) of vals[m] - vals[n]
    suffix_min = np.minimum.accumulate(vals[::-1])[::-1]
    return float(np.min(suffix_min[n0:] - vals[: vals.size - n0]))


def certify(c: RateFunction, window: int | None = None,
            n0: int | None = None) -> HypothesisCertificate:
    """Certify growth and Lipschitz bounds for ``c`` on ``0..window``.

    The growth search runs over ``n0 <= window // 2`` (so every ``n`` in the
    lower half of the window is tested) and returns the smallest ``n0``
    with a positive minimum increment, reporting that minimum as ``delta``
    (exact, no slack).  Passing ``n0`` fixes it instead of searching.

    The default window is ``max(100, 2 n_max)``.  When the window reaches
    ``n_max + n0`` and the tail slope is positive the certificate holds on
    all of N; ``delta`` is then also capped by ``tail_slope * n0``.
    """
    if window is None:
        window = max(100, 2 * c.n_max)
    if window < 2:
        raise ValueError("window must contain at least 0..2")
    vals = c.values(window)
    if n0 is not None:
        if not 1 <= n0 <= window:
            raise ValueError("n0 must lie in 1..window")
        candidates = [n0]
    else:
        candidates = range(1, window // 2 + 1)
    h1 = None
    for k in candidates:
        d = _h1_delta(vals, k)
        if d > 0:
            h1 = (d, k)
            break

    slope = c.tail_slope
    extends = (h1 is not None and slope is not None and slope > 0
               and window >= c.n_max + h1[1])
    if extends:
        h1 = (min(h1[0], slope * h1[1]), h1[1])
    lip = float(np.max(np.abs(np.diff(vals))))
    if slope is not None:
        lip = max(lip, float(slope))
    return HypothesisCertificate(h1=h1, lip=lip, window=range(0, window + 1),
                                 extends_to_infinity=extends)


def regularize(c: RateFunction, n0: int) -> RateFunction:
    """Smooth ``c`` by a triangular average of second differences.

    For ``k >= n0``::

        c~(k) = c(k) + (1/n0) sum_{j=1}^{n0-1} ((n0-j)/n0) [c(k+j) + c(k-j) - 2 c(k)]

    and ``c~(k) = c~(n0) k / n0`` below ``n0``.  On the affine tail all
    second differences vanish, so the output keeps the input's tail slope.
    Without a tail rule the output table stops where ``c`` runs out.
    """
    if n0 < 1:
        raise ValueError("n0 must be >= 1")
    if c.tail_slope is None:
        k_max = c.n_max - (n0 - 1)
        if k_max < n0:
            raise ValueError("rate table too short to regularize with this n0")
    else:
        k_max = c.n_max + n0 - 1
    vals = c.values(k_max + n0 - 1)
    ks = np.arange(n0, k_max + 1)
    out = np.zeros(k_max + 1)
    corr = np.zeros(ks.size)
    for j in range(1, n0):
        corr += (n0 - j) / n0 * (vals[ks + j] + vals[ks - j] - 2.0 * vals[ks])
    out[n0:] = vals[ks] + corr / n0
    out[:n0] = out[n0] * np.arange(n0) / n0
    return RateFunction(out, tail_slope=c.tail_slope, name=f"{c.name}~{n0}")


def equivalence_ratio_onesite(c: RateFunction, n0: int, n_max: int) -> tuple[float, float]:
    """Return ``(min, max)`` of ``mu~(n) / mu(n)`` over ``n <= n_max``.

    ``mu`` and ``mu~`` are the normalised single-site measures built from
    ``c`` and ``regularize(c, n0)``.
    """
    from .measures import log_partition, log_weights

    ct = regularize(c, n0)
    log_z, _ = log_partition(c)
    log_zt, _ = log_partition(ct)
    diff = (log_weights(ct, n_max) - log_zt) - (log_weights(c, n_max) - log_z)
    return math.exp(float(diff.min())), math.exp(float(diff.max()))
