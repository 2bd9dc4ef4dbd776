"""Discrete Lagrangian couples: action, Euler-Lagrange residual, synthesis, null couples.

A couple ``(L-, L+)`` of functions of ``(x, v, t, xi)`` defines the action

    S(Q) = h * sum_{p=1..n} L-(Q_p, Dm Q_p, t_p, h) + h * sum_{p=0..n-1} L+(Q_p, -Dp Q_p, t_p, h)

whose stationarity under variations vanishing at both ends is the discrete
Euler-Lagrange (EL) equation, one residual per interior index.

Evaluables share one interface: ``batch`` runs many points with forward
tangents through the tape kernels, ``scalar`` evaluates one point in any of
float / Dual / HyperDual arithmetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from .dual import HyperDual
from .exprlang import (
    LAGRANGIAN_VARS,
    BinOp,
    Const,
    Div,
    Expr,
    Sub,
    Var,
    evaluate,
    parse,
    substitute,
)
from .fdeop import SecondOrderOp, eval_fde
from .grid import BoundaryClass, GridFn, IndexedSeq, backward_quotient
from .helmholtz import ResidualFn, Report, SamplingConfig, Verdict, probe_vector, run_sampling

XV_SEED = np.zeros((4, 2, 1))
XV_SEED[0, 0, 0] = XV_SEED[1, 1, 0] = 1.0


class NullDecompositionError(ValueError):
    """The couple is not null within tolerance, so no (f, g) pair exists."""


# --------------------------------------------------------------------------
# Evaluables


class Evaluable:
    """A map ``(x, v, t, xi) -> R`` usable as one half of a couple."""

    def batch(self, args: np.ndarray, tangents: np.ndarray | None = None):
        """args: (4, m) rows x, v, t, xi; tangents: (4, ntan, m).  Returns (val, tan)."""
        raise NotImplementedError

    def scalar(self, x, v, t, xi):
        raise NotImplementedError

    def __call__(self, x: float, v: float, t: float, xi: float) -> float:
        return float(self.scalar(float(x), float(v), float(t), float(xi)))

    def with_partials(self, args: np.ndarray):
        """Values and (dL/dx, dL/dv) at each column of ``args``."""
        seed = np.broadcast_to(XV_SEED, (4, 2, args.shape[1]))
        val, tan = self.batch(args, seed)
        return val, tan[0], tan[1]

    def describe(self) -> str:
        return repr(self)


def _no_tangents(args: np.ndarray) -> np.ndarray:
    return np.zeros((4, 0, args.shape[1]))


@dataclass(frozen=True)
class ExprLagrangian(Evaluable):
    body: Expr

    def __post_init__(self):
        if isinstance(self.body, str):
            object.__setattr__(self, "body", parse(self.body, LAGRANGIAN_VARS))
        extra = [v for v in self.body.free_vars if v not in LAGRANGIAN_VARS]
        if extra:
            raise ValueError(f"a Lagrangian may only use {LAGRANGIAN_VARS}; found {extra}")

    def batch(self, args, tangents=None):
        tangents = _no_tangents(args) if tangents is None else tangents
        return kernels.run_tape(self.body.tape(LAGRANGIAN_VARS), args, tangents)

    def scalar(self, x, v, t, xi):
        return evaluate(self.body, {"x": x, "v": v, "t": t, "xi": xi})

    def describe(self) -> str:
        return self.body.text


@dataclass(frozen=True, eq=False)
class QuadratureLagrangian(Evaluable):
    """``x * sum_i w_i f(s_i x, s_i v, t, xi)`` with Gauss-Legendre nodes ``s_i`` on [0, 1]."""

    integrand: Expr
    nodes: np.ndarray
    weights: np.ndarray

    def batch(self, args, tangents=None):
        tangents = _no_tangents(args) if tangents is None else tangents
        k, m = len(self.nodes), args.shape[1]
        scale = np.ones((4, k, 1))
        scale[:2] = self.nodes[None, :, None]
        a = (args[:, None, :] * scale).reshape(4, k * m)
        tg = (tangents[:, :, None, :] * scale[:, None]).reshape(4, tangents.shape[1], k * m)
        fv, ft = kernels.run_tape(self.integrand.tape(LAGRANGIAN_VARS), a, tg)
        fv = fv.reshape(k, m)
        ft = ft.reshape(-1, k, m)
        # accumulate node by node, in the same order as ``scalar``
        acc, acc_t = np.zeros(m), np.zeros((ft.shape[0], m))
        for i, wt in enumerate(self.weights.tolist()):
            acc = acc + wt * fv[i]
            acc_t = acc_t + wt * ft[:, i]
        return args[0] * acc, tangents[0] * acc + args[0] * acc_t

    def scalar(self, x, v, t, xi):
        acc = 0.0
        for s, wt in zip(self.nodes.tolist(), self.weights.tolist()):
            acc = acc + wt * evaluate(self.integrand, {"x": s * x, "v": s * v, "t": t, "xi": xi})
        return x * acc

    def describe(self) -> str:
        return f"x * int_0^1 [{self.integrand.text}](s*x, s*v, t, xi) ds  ({len(self.nodes)} nodes)"


@dataclass(frozen=True, eq=False)
class LinearCombination(Evaluable):
    terms: tuple[tuple[float, Evaluable], ...]

    def batch(self, args, tangents=None):
        tangents = _no_tangents(args) if tangents is None else tangents
        val = np.zeros(args.shape[1])
        tan = np.zeros((tangents.shape[1], args.shape[1]))
        for c, e in self.terms:
            v, t = e.batch(args, tangents)
            val = val + c * v
            tan = tan + c * t
        return val, tan

    def scalar(self, x, v, t, xi):
        out = 0.0
        for c, e in self.terms:
            out = out + c * e.scalar(x, v, t, xi)
        return out

    def describe(self) -> str:
        return " ".join(f"{c:+g}*[{e.describe()}]" for c, e in self.terms)


ZERO = ExprLagrangian(Expr(Const(0.0)))


@dataclass(frozen=True)
class SynthesisInfo:
    source: SecondOrderOp
    quad_order: int
    anchors: tuple[float, float]


@dataclass(frozen=True, eq=False)
class LagrangianCouple:
    l_minus: Evaluable
    l_plus: Evaluable
    provenance: str = "expression"
    synthesis: SynthesisInfo | None = None

    @classmethod
    def from_text(cls, l_minus: str = "0", l_plus: str = "0") -> "LagrangianCouple":
        return cls(ExprLagrangian(l_minus), ExprLagrangian(l_plus))

    def __sub__(self, other: "LagrangianCouple") -> "LagrangianCouple":
        return LagrangianCouple(
            LinearCombination(((1.0, self.l_minus), (-1.0, other.l_minus))),
            LinearCombination(((1.0, self.l_plus), (-1.0, other.l_plus))),
            f"difference({self.provenance}, {other.provenance})",
        )

    def describe(self) -> dict:
        return {"l_minus": self.l_minus.describe(), "l_plus": self.l_plus.describe(), "provenance": self.provenance}


# --------------------------------------------------------------------------
# Action and Euler-Lagrange residual


def _half_args(q: GridFn) -> tuple[np.ndarray, np.ndarray]:
    """Arguments of L- at p = 1..n and of L+ at p = 0..n-1, each (4, n)."""
    v, h = q.values, q.h
    d = backward_quotient(v, h)  # Dm Q_p for p=1..n, equal to -Dp Q_{p-1}
    times = q.partition.times
    minus = np.stack([v[1:], d, times[1:], np.full(q.n, h)])
    plus = np.stack([v[:-1], d, times[:-1], np.full(q.n, h)])
    return minus, plus


def action(c: LagrangianCouple, q: GridFn) -> float:
    minus, plus = _half_args(q)
    lm, _ = c.l_minus.batch(minus)
    lp, _ = c.l_plus.batch(plus)
    return q.h * math.fsum(lm.tolist()) + q.h * math.fsum(lp.tolist())


def el_terms(c: LagrangianCouple, q: GridFn) -> np.ndarray:
    """The four EL contributions for p = 1..n-1, shape (4, n-1).

    Rows: dL-/dx(*_p), dL+/dx(**_p), [dL-/dv(*_p) - dL-/dv(*_{p+1})]/h,
    -[dL+/dv(**_p) - dL+/dv(**_{p-1})]/h.
    """
    minus, plus = _half_args(q)
    h = q.h
    _, mx, mv = c.l_minus.with_partials(minus)  # index p-1 <-> p
    _, px, pv = c.l_plus.with_partials(plus)  # index p <-> p
    return np.stack([mx[:-1], px[1:], (mv[:-1] - mv[1:]) / h, -((pv[1:] - pv[:-1]) / h)])


def el_residual(c: LagrangianCouple, q: GridFn) -> IndexedSeq:
    t = el_terms(c, q)
    return IndexedSeq(1, t[0] + t[1] + t[2] + t[3])


def directional_derivative(c: LagrangianCouple, q: GridFn, w: GridFn) -> float:
    """Exact derivative of the action at ``q`` along ``w`` (``w`` must vanish at both ends)."""
    q._check_same(w)
    if not BoundaryClass.Zero1.contains(w):
        raise ValueError("the variation must vanish at both endpoints")
    minus, plus = _half_args(q)
    dw = backward_quotient(w.values, q.h)
    tm = np.zeros((4, 1, q.n))
    tm[0, 0], tm[1, 0] = w.values[1:], dw
    tp = np.zeros((4, 1, q.n))
    tp[0, 0], tp[1, 0] = w.values[:-1], dw
    _, dm = c.l_minus.batch(minus, tm)
    _, dp = c.l_plus.batch(plus, tp)
    return q.h * math.fsum(dm[0].tolist()) + q.h * math.fsum(dp[0].tolist())


# --------------------------------------------------------------------------
# Linearisation of the EL operator (second derivatives through hyper-duals)


def _second_partials(e: Evaluable, arg: Sequence[float], outer: int, seeds: Sequence[tuple[float, float]]):
    """d/d(seed) of dL/d(outer) for each (dx, dv) seed direction."""
    out = []
    for sx, sv in seeds:
        x = HyperDual(arg[0], 1.0 if outer == 0 else 0.0, sx)
        v = HyperDual(arg[1], 1.0 if outer == 1 else 0.0, sv)
        r = e.scalar(x, v, arg[2], arg[3])
        out.append(r.e12 if isinstance(r, HyperDual) else 0.0)
    return out


def el_jacobian(c: LagrangianCouple, q: GridFn) -> np.ndarray:
    """Dense (n-1) x (n+1) Jacobian of ``Q -> el_residual(c, Q)``."""
    minus, plus = _half_args(q)
    h, n = q.h, q.n
    # seeds for (Q_{j-1}, Q_j) entering a half at column j: x = Q_j (or Q_{j-1}), v = (Q_j - Q_{j-1})/h
    seeds_m = [(0.0, -1.0 / h), (1.0, 1.0 / h)]  # L- at p: x = Q_p
    seeds_p = [(1.0, -1.0 / h), (0.0, 1.0 / h)]  # L+ at p: x = Q_p, v from (Q_p, Q_{p+1})
    M = np.zeros((n - 1, n + 1))
    for p in range(1, n):
        row = M[p - 1]
        # dL-/dx(*_p) depends on Q_{p-1}, Q_p
        for k, val in enumerate(_second_partials(c.l_minus, minus[:, p - 1], 0, seeds_m)):
            row[p - 1 + k] += val
        # dL+/dx(**_p) depends on Q_p, Q_{p+1}
        for k, val in enumerate(_second_partials(c.l_plus, plus[:, p], 0, seeds_p)):
            row[p + k] += val
        # +[dL-/dv(*_p) - dL-/dv(*_{p+1})]/h
        for k, val in enumerate(_second_partials(c.l_minus, minus[:, p - 1], 1, seeds_m)):
            row[p - 1 + k] += val / h
        for k, val in enumerate(_second_partials(c.l_minus, minus[:, p], 1, seeds_m)):
            row[p + k] -= val / h
        # -[dL+/dv(**_p) - dL+/dv(**_{p-1})]/h
        for k, val in enumerate(_second_partials(c.l_plus, plus[:, p], 1, seeds_p)):
            row[p + k] -= val / h
        for k, val in enumerate(_second_partials(c.l_plus, plus[:, p - 1], 1, seeds_p)):
            row[p - 1 + k] += val / h
    return M


def el_selfadjoint_terms(c: LagrangianCouple, q: GridFn) -> tuple[IndexedSeq, float]:
    """``|(M Z)_p - (M^T Z)_p|`` for p = 2..n-2 with the hash-derived probe ``Z``."""
    M = el_jacobian(c, q)
    z = probe_vector(q).values
    fr = (M @ z)[1:-1]
    adj = (M.T @ z[1:-1])[2:-2]
    scale = float((np.abs(M) * np.abs(z)).sum(axis=1).max(initial=0.0))
    return IndexedSeq(2, np.abs(fr - adj)), scale


def check_el_selfadjoint(c: LagrangianCouple, cfg: SamplingConfig | None = None) -> Report:
    return run_sampling(cfg or SamplingConfig(), lambda q: el_selfadjoint_terms(c, q))


# --------------------------------------------------------------------------
# Synthesis


def gauss_legendre_01(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights mapped to [0, 1]."""
    if order < 1:
        raise ValueError(f"quadrature order must be >= 1, got {order}")
    x, w = np.polynomial.legendre.leggauss(order)
    return (x + 1.0) / 2.0, w / 2.0


def reduced_map(op: SecondOrderOp, y, z) -> Expr:
    """``P(x, y, z, (z - y)/xi, t, xi)`` with ``y``/``z`` given as expression nodes."""
    w = Div(BinOp("-", z, y), Var("xi"))
    return substitute(op.body, {"vm": y, "vp": z, "w": w})


def split_parts(op: SecondOrderOp, anchors: tuple[float, float] = (0.0, 0.0)) -> tuple[Expr, Expr]:
    """(alpha, beta) over (x, v, t, xi) with alpha(x, v) + beta(x, v') = l(x, v, v') when separable."""
    y0, z0 = (Const(float(a)) for a in anchors)
    alpha = reduced_map(op, Var("v"), z0)
    beta = Expr(Sub(reduced_map(op, y0, Var("v")).root, reduced_map(op, y0, z0).root))
    return alpha, beta


def synthesize(op: SecondOrderOp, quad_order: int = 32, anchors: tuple[float, float] = (0.0, 0.0)) -> LagrangianCouple:
    """Couple whose EL equation reproduces ``op`` when ``op`` satisfies the Helmholtz condition."""
    nodes, weights = gauss_legendre_01(quad_order)
    alpha, beta = split_parts(op, anchors)
    return LagrangianCouple(
        QuadratureLagrangian(alpha, nodes, weights),
        QuadratureLagrangian(beta, nodes, weights),
        f"synthesized from {op.body.text}",
        SynthesisInfo(op, int(quad_order), (float(anchors[0]), float(anchors[1]))),
    )


def _synthesis_sample(op: SecondOrderOp, c: LagrangianCouple) -> ResidualFn:
    def f(q: GridFn):
        p = eval_fde(op, q).values
        terms = el_terms(c, q)
        res = np.abs(p - terms.sum(axis=0))
        scale = float((np.abs(terms).sum(axis=0) + np.abs(p)).max(initial=0.0))
        return IndexedSeq(1, res), scale

    return f


def verify_synthesis(op: SecondOrderOp, c: LagrangianCouple, cfg: SamplingConfig | None = None) -> Report:
    """Compare the scheme with the couple's EL residual on every index 1..n-1."""
    return run_sampling(cfg or SamplingConfig(), _synthesis_sample(op, c))


# --------------------------------------------------------------------------
# Null couples


def _null_sample(c: LagrangianCouple) -> ResidualFn:
    def f(q: GridFn):
        terms = el_terms(c, q)
        return IndexedSeq(1, np.abs(terms.sum(axis=0))), float(np.abs(terms).sum(axis=0).max(initial=0.0))

    return f


def null_check(c: LagrangianCouple, cfg: SamplingConfig | None = None) -> Report:
    return run_sampling(cfg or SamplingConfig(), _null_sample(c), Verdict.Null, Verdict.NotNull)


def _s(c: LagrangianCouple, x, y, t, xi):
    """s(x, y, t, xi) = L-(x, (x-y)/xi, t, xi) + L+(y, (x-y)/xi, t-xi, xi), scalar or batched."""
    if any(isinstance(a, np.ndarray) for a in (x, y, t)):
        x, y, t = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (x, y, t)))
        v = (x - y) / xi
        steps = np.full(x.shape, float(xi))
        lm, _ = c.l_minus.batch(np.stack([x, v, t, steps]))
        lp, _ = c.l_plus.batch(np.stack([y, v, t - xi, steps]))
        return lm + lp
    v = (x - y) / xi
    return c.l_minus.scalar(x, v, t, xi) + c.l_plus.scalar(y, v, t - xi, xi)


# probe sets for the runtime checks of the decomposition
GAMMA_PROBES = (-2.0, -1.0, 1.0, 2.0)
X_STAR = 1.0
CHECK_TIMES = (-1.0, -0.3, 0.0, 0.7, 1.5)
CHECK_STEPS = (0.05, 0.1, 0.5)
CHECK_XY = ((0.3, -0.8), (1.7, 0.4), (-1.2, -1.9))


@dataclass(frozen=True, eq=False)
class NullDecomposition:
    """``L-(*_p) + L+(**_{p-1}) = Dm f(Q, t, h)_p + g(t_p, h)`` for a null couple."""

    couple: LagrangianCouple
    residual_bound: float
    x_star: float = X_STAR
    f_extra: object = field(default=None)  # optional perturbation f += f_extra(x, t, xi), for controls

    def A(self, x, t, xi):
        return _s(self.couple, x, 0.0, t, xi) - _s(self.couple, 0.0, 0.0, t, xi)

    def B(self, y, t, xi):
        return _s(self.couple, 0.0, y, t, xi)

    def gamma(self, t, xi, x=None):
        x = self.x_star if x is None else x
        return self.A(x, t, xi) + self.B(x, t + xi, xi)

    def f(self, x, t, xi):
        out = xi * self.A(x, t, xi)
        if self.f_extra is not None:
            out = out + self.f_extra(x, t, xi)
        return out

    def g(self, t, xi):
        return self.gamma(t - xi, xi)

    def perturbed(self, extra) -> "NullDecomposition":
        return NullDecomposition(self.couple, self.residual_bound, self.x_star, extra)


def null_decompose(c: LagrangianCouple, tol_abs: float = 1e-9, tol_rel: float = 1e-9) -> NullDecomposition:
    """Extract (f, g) for a null couple, checking separability of ``s`` and x-independence of gamma."""
    worst = 0.0
    for t in CHECK_TIMES:
        for xi in CHECK_STEPS:
            for x, y in CHECK_XY:
                mixed = _s(c, HyperDual(x, 1.0, 0.0), HyperDual(y, 0.0, 1.0), t, xi)
                if not isinstance(mixed, HyperDual):
                    continue
                e12 = mixed.e12
                scale = (abs(mixed.e1) + abs(mixed.e2)) / xi
                if abs(e12) > tol_abs + tol_rel * scale:
                    raise NullDecompositionError(
                        f"s is not separable: d2s/dxdy = {e12:.3g} at x={x}, y={y}, t={t}, xi={xi}"
                    )
                worst = max(worst, abs(e12))
    d = NullDecomposition(c, 0.0)
    for t in CHECK_TIMES:
        for xi in CHECK_STEPS:
            vals = [d.gamma(t, xi, x) for x in GAMMA_PROBES]
            ref = d.gamma(t, xi)
            spread = max(abs(v - ref) for v in vals)
            scale = max(abs(v) for v in vals + [ref])
            if spread > tol_abs + tol_rel * scale:
                raise NullDecompositionError(f"gamma depends on x (spread {spread:.3g}) at t={t}, xi={xi}")
            worst = max(worst, spread)
    return NullDecomposition(c, worst)


def null_identity_terms(d: NullDecomposition, q: GridFn) -> tuple[np.ndarray, np.ndarray]:
    """Left side ``L-(*_p) + L+(**_{p-1})`` and right side ``Dm f_p + g(t_p)`` for p = 1..n."""
    minus, plus = _half_args(q)
    h = q.h
    lm, _ = d.couple.l_minus.batch(minus)
    lp, _ = d.couple.l_plus.batch(plus)
    times = q.partition.times
    f = np.asarray(d.f(q.values, times, h), dtype=float)
    g = np.asarray(d.g(times[1:], h), dtype=float)
    return lm + lp, backward_quotient(f, h) + g


def verify_null_decomposition(
    c: LagrangianCouple, d: NullDecomposition, cfg: SamplingConfig | None = None
) -> Report:
    if d.couple is not c:
        d = NullDecomposition(c, d.residual_bound, d.x_star, d.f_extra)

    def f(q: GridFn):
        lhs, rhs = null_identity_terms(d, q)
        return IndexedSeq(1, np.abs(lhs - rhs)), float(np.maximum(np.abs(lhs), np.abs(rhs)).max())

    return run_sampling(cfg or SamplingConfig(), f)


__all__ = [
    "Evaluable",
    "ExprLagrangian",
    "QuadratureLagrangian",
    "LinearCombination",
    "LagrangianCouple",
    "SynthesisInfo",
    "NullDecomposition",
    "NullDecompositionError",
    "action",
    "el_terms",
    "el_residual",
    "el_jacobian",
    "check_el_selfadjoint",
    "directional_derivative",
    "gauss_legendre_01",
    "split_parts",
    "synthesize",
    "verify_synthesis",
    "null_check",
    "null_decompose",
    "null_identity_terms",
    "verify_null_decomposition",
]
