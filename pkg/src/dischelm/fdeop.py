"""Second-order finite-difference operators and their linearisations.

An operator body ``P(x, vm, vp, w, t, xi)`` defines the scheme

    P(Q_p, (Q_p - Q_{p-1})/h, (Q_{p+1} - Q_p)/h, (Q_{p+1} - 2Q_p + Q_{p-1})/h^2, t_p, h) = 0

at every interior index ``p = 1..n-1``.  Batched evaluation goes through the
tape kernels; single-point evaluation through :mod:`dischelm.exprlang`.  Both
see the same stencil numbers, so they agree exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .exprlang import (
    CONTINUOUS_VARS,
    FDE_VARS,
    DomainError,
    Add,
    Const,
    Expr,
    Mul,
    Var,
    parse,
    substitute,
)
from .grid import GridFn, IndexedSeq, backward_quotient, centred_quotient

# index of each stencil slot in FDE_VARS
X, VM, VP, W, T, XI = range(6)


def _check_vocab(body: Expr, allowed: tuple[str, ...], what: str):
    extra = [v for v in body.free_vars if v not in allowed]
    if extra:
        raise ValueError(f"{what} may only use {allowed}; found {extra}")


@dataclass(frozen=True)
class SecondOrderOp:
    body: Expr
    label: str = ""

    def __post_init__(self):
        if isinstance(self.body, str):
            object.__setattr__(self, "body", parse(self.body, FDE_VARS))
        _check_vocab(self.body, FDE_VARS, "a finite-difference operator")
        if not self.label:
            object.__setattr__(self, "label", self.body.text)

    @classmethod
    def from_text(cls, text: str, label: str = "") -> "SecondOrderOp":
        return cls(parse(text, FDE_VARS), label)

    def __str__(self) -> str:
        return self.body.text


@dataclass(frozen=True)
class ContinuousOp:
    body: Expr

    def __post_init__(self):
        if isinstance(self.body, str):
            object.__setattr__(self, "body", parse(self.body, CONTINUOUS_VARS))
        _check_vocab(self.body, CONTINUOUS_VARS, "a continuous operator")

    def __str__(self) -> str:
        return self.body.text


@dataclass(frozen=True)
class StencilArgs:
    x: float
    vm: float
    vp: float
    w: float
    t: float
    xi: float

    def as_dict(self) -> dict[str, float]:
        return dict(zip(FDE_VARS, self.as_tuple()))

    def as_tuple(self) -> tuple[float, ...]:
        return (self.x, self.vm, self.vp, self.w, self.t, self.xi)


def stencil_arrays(q: GridFn) -> np.ndarray:
    """All stencil tuples at once: shape (6, n-1), column ``p-1`` for index ``p``."""
    v, h = q.values, q.h
    d = backward_quotient(v, h)
    out = np.empty((6, q.n - 1))
    out[X] = v[1:-1]
    out[VM] = d[:-1]
    out[VP] = d[1:]
    out[W] = centred_quotient(v, h)
    out[T] = q.partition.times[1:-1]
    out[XI] = h
    return out


def stencil_args(q: GridFn, p: int) -> StencilArgs:
    if not 1 <= p <= q.n - 1:
        raise IndexError(f"stencil index {p} outside 1..{q.n - 1}")
    # slice a 3-point window so the arithmetic matches stencil_arrays exactly
    v, h = q.values[p - 1 : p + 2], q.h
    d = backward_quotient(v, h)
    return StencilArgs(
        float(v[1]),
        float(d[0]),
        float(d[1]),
        float(centred_quotient(v, h)[0]),
        q.partition.time(p),
        h,
    )


_PARTIAL_SEED = np.zeros((6, 4, 1))
_PARTIAL_SEED[:4, :, 0] = np.eye(4)


def eval_batch(op: SecondOrderOp, args: np.ndarray, *, with_partials: bool = False, backend=None):
    """Evaluate ``op`` at stencil columns ``args`` (6, m).

    Returns the values, plus the partials (4, m) in x, vm, vp, w when asked.
    Domain errors carry the column index.
    """
    tape = op.body.tape(FDE_VARS)
    if with_partials:
        seed = np.broadcast_to(_PARTIAL_SEED, (6, 4, args.shape[1]))
        return kernels.run_tape(tape, args, seed, backend=backend)
    return kernels.run_tape(tape, args, backend=backend)[0]


def _at_grid(fn):
    """Re-raise domain errors with the grid index instead of the column."""

    def wrapped(op, q, *a, **kw):
        try:
            return fn(op, q, *a, **kw)
        except DomainError as exc:
            raise exc.at(exc.index + 1) if exc.index is not None else exc

    wrapped.__name__ = fn.__name__
    wrapped.__doc__ = fn.__doc__
    return wrapped


@_at_grid
def eval_fde(op: SecondOrderOp, q: GridFn, backend=None) -> IndexedSeq:
    """``P_p(Q)`` for p = 1..n-1."""
    return IndexedSeq(1, eval_batch(op, stencil_arrays(q), backend=backend))


@_at_grid
def stencil_partials(op: SecondOrderOp, q: GridFn, backend=None) -> tuple[np.ndarray, np.ndarray]:
    """Values and partials (4, n-1) in (x, vm, vp, w); column ``p-1`` is index ``p``."""
    return eval_batch(op, stencil_arrays(q), with_partials=True, backend=backend)


# --------------------------------------------------------------------------
# Frechet derivative and adjoints


def linear_parts(w: np.ndarray, h: float) -> np.ndarray:
    """(W_p, Dm W_p, -Dp W_p, second diff W_p) for p = 1..n-1, shape (4, n-1)."""
    d = backward_quotient(w, h)
    return np.stack([w[1:-1], d[:-1], d[1:], centred_quotient(w, h)])


def frechet(op: SecondOrderOp, q: GridFn, direction: GridFn) -> IndexedSeq:
    """Derivative of ``Q -> P(Q)`` along ``direction``, p = 1..n-1."""
    q._check_same(direction)
    _, parts = stencil_partials(op, q)
    lin = linear_parts(direction.values, q.h)
    return IndexedSeq(1, parts[0] * lin[0] + parts[1] * lin[1] + parts[2] * lin[2] + parts[3] * lin[3])


def frechet_row(op: SecondOrderOp, q: GridFn, p: int, direction: GridFn) -> float:
    if not 1 <= p <= q.n - 1:
        raise IndexError(f"row {p} outside 1..{q.n - 1}")
    return frechet(op, q, direction)[p]


def _adjoint_terms(parts: np.ndarray, z: np.ndarray, h: float) -> np.ndarray:
    """The four products of the explicit adjoint for p = 2..n-2, shape (4, n-3)."""
    c, a, b, d = parts  # columns j = p-1
    i = slice(1, -1)  # p
    ip = slice(2, None)  # p+1
    im = slice(None, -2)  # p-1
    coef_w = c[i] - (a[ip] - a[i]) / h - (b[i] - b[im]) / h + (d[ip] - 2.0 * d[i] + d[im]) / (h * h)
    coef_dm = (d[i] - d[im]) / h - b[im]
    coef_dp = (d[ip] - d[i]) / h - a[ip]
    lin = linear_parts(z, h)[:, 1:-1]
    return np.stack([coef_w * lin[0], coef_dm * lin[1], coef_dp * lin[2], d[i] * lin[3]])


def adjoint_explicit(op: SecondOrderOp, q: GridFn, z: GridFn) -> IndexedSeq:
    """Adjoint of the Frechet derivative applied to ``z`` from its closed form, p = 2..n-2."""
    q._check_same(z)
    _, parts = stencil_partials(op, q)
    return IndexedSeq(2, _adjoint_terms(parts, z.values, q.h).sum(axis=0))


def adjoint_row_explicit(op: SecondOrderOp, q: GridFn, p: int, z: GridFn) -> float:
    if not 2 <= p <= q.n - 2:
        raise IndexError(f"adjoint row {p} outside 2..{q.n - 2}")
    return adjoint_explicit(op, q, z)[p]


@_at_grid
def jacobian(op: SecondOrderOp, q: GridFn) -> np.ndarray:
    """Dense (n-1) x (n+1) matrix ``M[r-1, c] = dP_r/dQ_c``.

    Each row is obtained from one dual evaluation seeded on (Q_{r-1}, Q_r, Q_{r+1}).
    """
    h = q.h
    args = stencil_arrays(q)
    m = args.shape[1]
    seed = np.zeros((6, 3, m))
    seed[X, 1] = 1.0
    seed[VM, :2] = np.array([-1.0, 1.0])[:, None] / h
    seed[VP, 1:] = np.array([-1.0, 1.0])[:, None] / h
    seed[W] = np.array([1.0, -2.0, 1.0])[:, None] / (h * h)
    _, tan = kernels.run_tape(op.body.tape(FDE_VARS), args, seed)
    M = np.zeros((m, q.n + 1))
    rows = np.arange(m)
    for k in range(3):
        M[rows, rows + k] = tan[k]
    return M


def adjoint_oracle(op: SecondOrderOp, q: GridFn, z: GridFn) -> IndexedSeq:
    """Transpose action ``sum_r M[r][p] Z_r`` for p = 2..n-2."""
    q._check_same(z)
    M = jacobian(op, q)
    return IndexedSeq(2, (M.T @ z.values[1:-1])[2:-2])


def adjoint_row_oracle(op: SecondOrderOp, q: GridFn, p: int, z: GridFn) -> float:
    if not 2 <= p <= q.n - 2:
        raise IndexError(f"adjoint row {p} outside 2..{q.n - 2}")
    return adjoint_oracle(op, q, z)[p]


# --------------------------------------------------------------------------
# Direct discretisation


def direct_discretize(o: ContinuousOp, blend: float) -> SecondOrderOp:
    """Replace ``v`` by ``(1-blend)*vm + blend*vp`` in a continuous operator."""
    blend = float(blend)
    if not 0.0 <= blend <= 1.0:
        raise ValueError(f"blend must lie in [0, 1], got {blend}")
    if blend == 0.0:
        v = Var("vm")
    elif blend == 1.0:
        v = Var("vp")
    else:
        v = Add(Mul(Const(1.0 - blend), Var("vm")), Mul(Const(blend), Var("vp")))
    body = substitute(o.body, {"v": v})
    return SecondOrderOp(body, f"{o} [blend={blend:g}]")


@dataclass(frozen=True)
class CorpusEntry:
    name: str
    op: SecondOrderOp
    variational: bool = field(default=False)


def builtin_corpus() -> list[CorpusEntry]:
    """Reference operators: oscillators, a friction scheme and a nonlinear blend family."""
    sin_blend = ContinuousOp("x + sin(v)*w")
    entries = [
        CorpusEntry("oscillator", SecondOrderOp.from_text("x + w"), True),
        CorpusEntry("neg-accel", SecondOrderOp.from_text("-w"), True),
        CorpusEntry("forced-oscillator", SecondOrderOp.from_text("x + w + sin(t)"), True),
        CorpusEntry("friction", SecondOrderOp.from_text("x + (vm+vp)/2 + w"), False),
    ]
    for b in (0.0, 0.5, 1.0):
        entries.append(CorpusEntry(f"sin-velocity-blend-{b:g}", direct_discretize(sin_blend, b), False))
    entries.append(CorpusEntry("velocity-product", SecondOrderOp.from_text("x + vm*vp"), False))
    return entries
