"""Uniform partitions, grid functions and the backward/forward difference operators.

Index conventions follow the operators' natural domains: a grid function on a
partition with ``n`` steps has entries 0..n, the backward difference lives on
1..n, the forward difference on 0..n-1 and the centred second difference on
1..n-1.  Results are returned as :class:`IndexedSeq` so that the valid range
travels with the data.

Note the sign of the forward operator: ``delta_plus`` is ``(Q_p - Q_{p+1})/h``,
so ``-delta_plus`` is the usual forward Euler quotient.
"""

from __future__ import annotations

import csv
import enum
import io
import os
from dataclasses import dataclass
from typing import Iterator

import numpy as np

MIN_STEPS = 4


@dataclass(frozen=True)
class Partition:
    """Times ``t0 + p*h`` for ``p = 0..n``.  Times are derived, never stored."""

    t0: float
    h: float
    n: int

    def __post_init__(self):
        object.__setattr__(self, "t0", float(self.t0))
        object.__setattr__(self, "h", float(self.h))
        if isinstance(self.n, bool) or int(self.n) != self.n:
            raise ValueError(f"n must be an integer, got {self.n!r}")
        object.__setattr__(self, "n", int(self.n))
        if not (np.isfinite(self.h) and self.h > 0):
            raise ValueError(f"step h must be finite and > 0, got {self.h}")
        if not np.isfinite(self.t0):
            raise ValueError(f"t0 must be finite, got {self.t0}")
        if self.n < MIN_STEPS:
            raise ValueError(f"a partition needs n >= {MIN_STEPS} steps, got {self.n}")

    def time(self, p: int) -> float:
        return self.t0 + p * self.h

    @property
    def times(self) -> np.ndarray:
        return self.t0 + np.arange(self.n + 1) * self.h

    def shift(self) -> "Partition":
        return Partition(self.time(1), self.h, self.n)


def partition_cover(a: float, b: float, n: int) -> Partition:
    """Regular partition of [a, b] into ``n`` equal steps."""
    if not a < b:
        raise ValueError(f"empty interval [{a}, {b}]")
    if n < MIN_STEPS:
        raise ValueError(f"a partition needs n >= {MIN_STEPS} steps, got {n}")
    return Partition(a, (b - a) / n, n)


@dataclass(frozen=True, eq=False)
class IndexedSeq:
    """Real sequence indexed ``first .. first+len-1``."""

    first: int
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def last(self) -> int:
        return self.first + len(self.values) - 1

    @property
    def indices(self) -> range:
        return range(self.first, self.last + 1)

    def __len__(self) -> int:
        return len(self.values)

    def __getitem__(self, p: int) -> float:
        if not self.first <= p <= self.last:
            raise IndexError(f"index {p} outside {self.first}..{self.last}")
        return float(self.values[p - self.first])

    def __iter__(self) -> Iterator[float]:
        return iter(self.values.tolist())

    def items(self) -> Iterator[tuple[int, float]]:
        return zip(self.indices, self.values.tolist())

    def restrict(self, first: int, last: int) -> "IndexedSeq":
        if first < self.first or last > self.last:
            raise IndexError(f"range {first}..{last} outside {self.first}..{self.last}")
        return IndexedSeq(first, self.values[first - self.first : last - self.first + 1])

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)

    def __repr__(self) -> str:
        return f"IndexedSeq(first={self.first}, values={self.values.tolist()!r})"


@dataclass(frozen=True, eq=False)
class GridFn:
    """Values ``Q_0..Q_n`` aligned with a partition."""

    partition: Partition
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.partition.n + 1,):
            raise ValueError(f"expected {self.partition.n + 1} values, got shape {v.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, partition: Partition) -> "GridFn":
        return cls(partition, np.zeros(partition.n + 1))

    @property
    def n(self) -> int:
        return self.partition.n

    @property
    def h(self) -> float:
        return self.partition.h

    def __getitem__(self, p: int) -> float:
        if not 0 <= p <= self.n:
            raise IndexError(f"index {p} outside 0..{self.n}")
        return float(self.values[p])

    def with_values(self, values) -> "GridFn":
        return GridFn(self.partition, values)

    def _check_same(self, other: "GridFn"):
        if other.partition != self.partition:
            raise ValueError("grid functions live on different partitions")

    def __add__(self, other: "GridFn") -> "GridFn":
        self._check_same(other)
        return self.with_values(self.values + other.values)

    def __sub__(self, other: "GridFn") -> "GridFn":
        self._check_same(other)
        return self.with_values(self.values - other.values)

    def __mul__(self, c: float) -> "GridFn":
        return self.with_values(self.values * float(c))

    __rmul__ = __mul__

    def __neg__(self) -> "GridFn":
        return self.with_values(-self.values)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, GridFn)
            and other.partition == self.partition
            and np.array_equal(other.values, self.values)
        )

    __hash__ = None


class BoundaryClass(enum.Enum):
    Free = "free"
    Zero1 = "zero1"  # W_0 = W_n = 0
    Zero2 = "zero2"  # additionally W_1 = W_{n-1} = 0

    def contains(self, w: GridFn) -> bool:
        v, n = w.values, w.n
        if self is BoundaryClass.Free:
            return True
        ok = v[0] == 0.0 and v[n] == 0.0
        if self is BoundaryClass.Zero2:
            ok = ok and v[1] == 0.0 and v[n - 1] == 0.0
        return bool(ok)

    def project(self, w: GridFn) -> GridFn:
        """Zero the entries this class pins."""
        v = w.values.copy()
        n = w.n
        if self is not BoundaryClass.Free:
            v[[0, n]] = 0.0
        if self is BoundaryClass.Zero2:
            v[[1, n - 1]] = 0.0
        return w.with_values(v)


# Stencil quotients shared by every caller (grid operators, stencil arguments,
# vectorised evaluation) so that all paths round identically.


def backward_quotient(q: np.ndarray, h: float) -> np.ndarray:
    """(Q_p - Q_{p-1})/h for p = 1..n."""
    return (q[1:] - q[:-1]) / h


def centred_quotient(q: np.ndarray, h: float) -> np.ndarray:
    """(Q_{p+1} - 2Q_p + Q_{p-1})/(h*h) for p = 1..n-1."""
    return (q[2:] - 2.0 * q[1:-1] + q[:-2]) / (h * h)


def delta_minus(q: GridFn) -> IndexedSeq:
    return IndexedSeq(1, backward_quotient(q.values, q.h))


def delta_plus(q: GridFn) -> IndexedSeq:
    return IndexedSeq(0, (q.values[:-1] - q.values[1:]) / q.h)


def second_diff(q: GridFn) -> IndexedSeq:
    """Centred second difference, i.e. ``-delta_plus(delta_minus(q))`` on 1..n-1."""
    return IndexedSeq(1, centred_quotient(q.values, q.h))


def shift(obj: GridFn | Partition) -> GridFn | Partition:
    """Left shift: ``(Q_1, .., Q_n, 0)`` on the partition starting at ``t_1``."""
    if isinstance(obj, Partition):
        return obj.shift()
    if isinstance(obj, GridFn):
        return GridFn(obj.partition.shift(), np.append(obj.values[1:], 0.0))
    raise TypeError(f"cannot shift {type(obj).__name__}")


# --------------------------------------------------------------------------
# Product rules and summation by parts.  Each returns (lhs, rhs, scale), where
# scale is the sum of the magnitudes of the pieces entering either side, so
# |lhs - rhs| <= c * eps * scale is the expected rounding behaviour.


def leibniz_minus(q: GridFn, w: GridFn):
    """Dm(QW)_p = (Dm Q)_p W_p + Q_{p-1} (Dm W)_p, p = 1..n."""
    Q, W, h = q.values, w.values, q.h
    dq, dw = delta_minus(q).values, delta_minus(w).values
    lhs = backward_quotient(Q * W, h)
    rhs = dq * W[1:] + Q[:-1] * dw
    scale = (np.abs(Q * W)[1:] + np.abs(Q * W)[:-1]) / h + np.abs(dq * W[1:]) + np.abs(Q[:-1] * dw)
    return IndexedSeq(1, lhs), IndexedSeq(1, rhs), scale


def leibniz_plus(q: GridFn, w: GridFn):
    """Dp(QW)_p = (Dp Q)_p W_p + Q_{p+1} (Dp W)_p, p = 0..n-1."""
    Q, W = q.values, w.values
    dq, dw = delta_plus(q).values, delta_plus(w).values
    lhs = delta_plus(q.with_values(Q * W)).values
    rhs = dq * W[:-1] + Q[1:] * dw
    scale = (np.abs(Q * W)[1:] + np.abs(Q * W)[:-1]) / q.h + np.abs(dq * W[:-1]) + np.abs(Q[1:] * dw)
    return IndexedSeq(0, lhs), IndexedSeq(0, rhs), scale


def leibniz_second(q: GridFn, w: GridFn):
    """D2(QW) = D2Q W + Q D2W + (-Dp Q)(-Dp W) + (Dm Q)(Dm W), p = 1..n-1."""
    Q, W, h = q.values, w.values, q.h
    qw = Q * W
    lhs = centred_quotient(qw, h)
    dq, dw = backward_quotient(Q, h), backward_quotient(W, h)
    terms = np.stack(
        [
            centred_quotient(Q, h) * W[1:-1],
            Q[1:-1] * centred_quotient(W, h),
            dq[1:] * dw[1:],
            dq[:-1] * dw[:-1],
        ]
    )
    scale = (np.abs(qw[2:]) + 2 * np.abs(qw[1:-1]) + np.abs(qw[:-2])) / (h * h) + np.abs(terms).sum(axis=0)
    return IndexedSeq(1, lhs), IndexedSeq(1, terms.sum(axis=0)), scale


def _sum_pair(a: np.ndarray, b: np.ndarray):
    return float(a.sum()), float(b.sum()), float(np.abs(a).sum() + np.abs(b).sum())


def summation_by_parts_zero1(f: GridFn, g: GridFn):
    """For G in Zero1: the two identities moving Dm / Dp from G onto F."""
    if not BoundaryClass.Zero1.contains(g):
        raise ValueError("G must vanish at both endpoints")
    F, G = f.values, g.values
    dmg, dpg = delta_minus(g).values, delta_plus(g).values
    dpf, dmf = delta_plus(f).values, delta_minus(f).values
    return [
        _sum_pair(F[1:] * dmg, dpf[1:] * G[1:-1]),  # sum_1^n F Dm G = sum_1^{n-1} Dp F G
        _sum_pair(F[:-1] * dpg, dmf[:-1] * G[1:-1]),  # sum_0^{n-1} F Dp G = sum_1^{n-1} Dm F G
    ]


def summation_by_parts_zero2(q: GridFn, w: GridFn):
    """For W in Zero2: the three identities of the Frechet/adjoint calculus."""
    if not BoundaryClass.Zero2.contains(w):
        raise ValueError("W must vanish at indices 0, 1, n-1, n")
    Q, W = q.values, w.values
    n = q.n
    interior = slice(1, n)  # p = 1..n-1
    inner = slice(2, n - 1)  # p = 2..n-2
    dmw = delta_minus(w).values  # index p-1
    dpw = delta_plus(w).values  # index p
    d2w, d2q = second_diff(w).values, second_diff(q).values  # index p-1
    dpq, dmq = delta_plus(q).values, delta_minus(q).values
    return [
        _sum_pair(Q[interior] * dmw[: n - 1], dpq[inner] * W[inner]),
        _sum_pair(Q[interior] * dpw[1:n], dmq[1 : n - 2] * W[inner]),
        _sum_pair(Q[interior] * d2w, d2q[1:-1] * W[inner]),
    ]


# --------------------------------------------------------------------------
# CSV


def write_csv(q: GridFn, dest: str | os.PathLike | io.TextIOBase) -> None:
    """Write ``p,t,q`` rows.  A leading ``# t0=..,h=..`` comment pins the partition exactly."""
    own = not hasattr(dest, "write")
    f = open(dest, "w", newline="") if own else dest
    try:
        f.write(f"# t0={q.partition.t0!r},h={q.partition.h!r}\n")
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["p", "t", "q"])
        for p, (t, v) in enumerate(zip(q.partition.times.tolist(), q.values.tolist())):
            w.writerow([p, repr(t), repr(v)])
    finally:
        if own:
            f.close()


def read_csv(src: str | os.PathLike | io.TextIOBase) -> GridFn:
    own = not hasattr(src, "read")
    f = open(src, newline="") if own else src
    try:
        lines = f.read().splitlines()
    finally:
        if own:
            f.close()
    meta = {}
    body = []
    for line in lines:
        if line.startswith("#"):
            for part in line[1:].split(","):
                if "=" in part:
                    k, v = part.split("=", 1)
                    meta[k.strip()] = v.strip()
        elif line.strip():
            body.append(line)
    rows = list(csv.DictReader(body))
    if not rows or set(rows[0]) < {"p", "t", "q"}:
        raise ValueError("grid CSV needs a 'p,t,q' header and at least one row")
    ps = [int(r["p"]) for r in rows]
    if ps != list(range(len(rows))):
        raise ValueError("grid CSV rows must be indexed 0..n in order")
    ts = [float(r["t"]) for r in rows]
    qs = [float(r["q"]) for r in rows]
    if "t0" in meta and "h" in meta:
        part = Partition(float(meta["t0"]), float(meta["h"]), len(rows) - 1)
    else:
        part = Partition(ts[0], (ts[-1] - ts[0]) / (len(rows) - 1), len(rows) - 1)
    if not np.allclose(part.times, ts, rtol=1e-12, atol=1e-12 * part.h):
        raise ValueError("grid CSV times are not uniformly spaced")
    return GridFn(part, qs)
