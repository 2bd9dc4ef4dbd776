"""Sampled decision of the discrete Helmholtz condition and related diagnostics.

The condition is an identity over every partition and every grid function, so
it is checked on random samples.  Each check produces a residual per grid index
together with a magnitude scale; the verdict uses

    bound = tol_abs + tol_rel * scale
    pass       if max residual <= bound
    fail       if max residual >  1e3 * bound
    Inconclusive otherwise.

The same engine backs the synthesis and null-couple checks in
:mod:`dischelm.lagrange`.
"""

from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np

from .dual import HyperDual
from .exprlang import DomainError, evaluate
from .fdeop import (
    SecondOrderOp,
    StencilArgs,
    linear_parts,
    adjoint_oracle,
    frechet,
    jacobian,
    stencil_partials,
)
from .grid import GridFn, IndexedSeq, Partition

VIOLATION_FACTOR = 1e3


class Verdict(str, enum.Enum):
    Satisfied = "Satisfied"
    Violated = "Violated"
    Inconclusive = "Inconclusive"
    Null = "Null"
    NotNull = "NotNull"

    def __str__(self) -> str:
        return self.value

    @property
    def passed(self) -> bool:
        return self in (Verdict.Satisfied, Verdict.Null)


@dataclass(frozen=True)
class SamplingConfig:
    seed: int = 0
    grids: int = 50
    n_range: tuple[int, int] = (4, 32)
    h_set: tuple[float, ...] = (0.05, 0.1, 0.5)
    q_amplitude: float = 2.0
    t0_range: tuple[float, float] = (-1.0, 1.0)
    tol_abs: float = 1e-9
    tol_rel: float = 1e-9
    max_retries: int = 100

    def __post_init__(self):
        lo, hi = self.n_range
        if not 4 <= lo <= hi <= 64:
            raise ValueError(f"n_range must satisfy 4 <= lo <= hi <= 64, got {self.n_range}")
        if not self.h_set or any(not h > 0 for h in self.h_set):
            raise ValueError(f"h_set must be non-empty with all h > 0, got {self.h_set}")
        if not self.q_amplitude > 0:
            raise ValueError("q_amplitude must be > 0")
        if self.grids < 1:
            raise ValueError("grids must be >= 1")
        if self.t0_range[0] > self.t0_range[1]:
            raise ValueError(f"empty t0_range {self.t0_range}")
        if self.tol_abs < 0 or self.tol_rel < 0:
            raise ValueError("tolerances must be >= 0")
        object.__setattr__(self, "h_set", tuple(float(h) for h in self.h_set))

    def draws(self) -> Iterator[GridFn]:
        """Endless deterministic stream of random grid functions."""
        rng = np.random.default_rng(self.seed)
        lo, hi = self.n_range
        while True:
            n = int(rng.integers(lo, hi + 1))
            h = self.h_set[int(rng.integers(len(self.h_set)))]
            t0 = float(rng.uniform(*self.t0_range))
            q = rng.uniform(-self.q_amplitude, self.q_amplitude, n + 1)
            yield GridFn(Partition(t0, h, n), q)


@dataclass(frozen=True)
class Witness:
    t0: float
    h: float
    n: int
    q: tuple[float, ...]
    p: int

    @classmethod
    def of(cls, q: GridFn, p: int) -> "Witness":
        return cls(q.partition.t0, q.partition.h, q.n, tuple(q.values.tolist()), int(p))

    def grid(self) -> GridFn:
        return GridFn(Partition(self.t0, self.h, self.n), self.q)

    def to_dict(self) -> dict:
        return {"t0": self.t0, "h": self.h, "n": self.n, "q": list(self.q), "p": self.p}


@dataclass(frozen=True)
class Report:
    verdict: Verdict
    max_residual: float
    samples: int
    tolerance_abs: float
    tolerance_rel: float
    witness: Witness | None = None
    scale: float = 0.0
    domain_failures: int = field(default=0, compare=False)

    @property
    def bound(self) -> float:
        return self.tolerance_abs + self.tolerance_rel * self.scale

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict.value,
            "max_residual": self.max_residual,
            "samples": self.samples,
            "tolerance_abs": self.tolerance_abs,
            "tolerance_rel": self.tolerance_rel,
            "witness": None if self.witness is None else self.witness.to_dict(),
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def classify(max_residual: float, bound: float, passed: Verdict, failed: Verdict) -> Verdict:
    if max_residual <= bound:
        return passed
    if max_residual > VIOLATION_FACTOR * bound:
        return failed
    return Verdict.Inconclusive


# A residual function maps a sampled grid function to (|residual| per index, scale).
ResidualFn = Callable[[GridFn], tuple[IndexedSeq, float]]


def run_sampling(
    cfg: SamplingConfig,
    residual: ResidualFn,
    passed: Verdict = Verdict.Satisfied,
    failed: Verdict = Verdict.Violated,
) -> Report:
    """Evaluate ``residual`` on ``cfg.grids`` sampled grid functions and classify.

    Samples where evaluation leaves an expression's domain are redrawn, at most
    ``cfg.max_retries`` times in total; past that the verdict is Inconclusive.
    Ties for the maximum go to the lowest (sample, index) pair.
    """
    best, best_at, scale = -1.0, None, 0.0
    failures = 0
    done = 0
    draws = cfg.draws()
    while done < cfg.grids:
        q = next(draws)
        try:
            res, s = residual(q)
        except DomainError:
            failures += 1
            if failures > cfg.max_retries:
                break
            continue
        done += 1
        scale = max(scale, float(s))
        if len(res):
            k = int(np.argmax(res.values))
            if res.values[k] > best:
                best, best_at = float(res.values[k]), (q, res.first + k)
    best = max(best, 0.0)
    bound = cfg.tol_abs + cfg.tol_rel * scale
    verdict = classify(best, bound, passed, failed)
    if done < cfg.grids:
        verdict = Verdict.Inconclusive
    witness = None
    if verdict is not passed and best_at is not None:
        witness = Witness.of(*best_at)
    return Report(verdict, best, done, cfg.tol_abs, cfg.tol_rel, witness, scale, failures)


# --------------------------------------------------------------------------
# Helmholtz condition


def helmholtz_terms(op: SecondOrderOp, q: GridFn) -> tuple[IndexedSeq, np.ndarray]:
    """Residual for p = 2..n-1 and the per-index magnitude of its terms."""
    _, (_, a, b, d) = stencil_partials(op, q)
    h = q.h
    res = (d[1:] - d[:-1]) / h - a[1:] - b[:-1]
    mag = (np.abs(d[1:]) + np.abs(d[:-1])) / h + np.abs(a[1:]) + np.abs(b[:-1])
    return IndexedSeq(2, res), mag


def helmholtz_residual(op: SecondOrderOp, q: GridFn) -> IndexedSeq:
    """``Dm(dP/dw)_p - dP/dvm(p) - dP/dvp(p-1)`` for p = 2..n-1."""
    return helmholtz_terms(op, q)[0]


def _helmholtz_sample(op: SecondOrderOp) -> ResidualFn:
    def f(q: GridFn):
        res, mag = helmholtz_terms(op, q)
        return IndexedSeq(res.first, np.abs(res.values)), float(mag.max(initial=0.0))

    return f


def check_helmholtz(op: SecondOrderOp, cfg: SamplingConfig | None = None) -> Report:
    return run_sampling(cfg or SamplingConfig(), _helmholtz_sample(op))


# --------------------------------------------------------------------------
# Self-adjointness


def probe_vector(q: GridFn) -> GridFn:
    """Deterministic pseudo-random direction derived from the bytes of ``q``.

    Keeps witnesses reproducible: re-evaluating at a reported ``q`` regenerates
    the same probe.
    """
    digest = hashlib.sha256(np.ascontiguousarray(q.values, dtype="<f8").tobytes()).digest()
    rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
    return q.with_values(rng.uniform(-1.0, 1.0, q.n + 1))


def selfadjoint_terms(op: SecondOrderOp, q: GridFn, z: GridFn | None = None) -> tuple[IndexedSeq, np.ndarray]:
    """``|DP_p(Z) - DP_p^*(Z)|`` for p = 2..n-2, with the oracle adjoint, and term magnitudes."""
    z = probe_vector(q) if z is None else z
    _, parts = stencil_partials(op, q)
    lin = linear_parts(z.values, q.h)
    fr = frechet(op, q, z).values[1:-1]
    adj = adjoint_oracle(op, q, z).values
    M = jacobian(op, q)
    mag_f = np.abs(parts * lin).sum(axis=0)[1:-1]
    mag_a = (np.abs(M) * np.abs(z.values[1:-1])[:, None]).sum(axis=0)[2:-2]
    return IndexedSeq(2, np.abs(fr - adj)), mag_f + mag_a


def check_selfadjoint(op: SecondOrderOp, cfg: SamplingConfig | None = None) -> Report:
    def f(q: GridFn):
        res, mag = selfadjoint_terms(op, q)
        return res, float(mag.max(initial=0.0))

    return run_sampling(cfg or SamplingConfig(), f)


# --------------------------------------------------------------------------
# Separability


def separability_residual(op: SecondOrderOp, args: StencilArgs) -> float:
    """Mixed partial d2 l / dz dy of ``l(x, y, z) = P(x, y, z, (z - y)/xi, t, xi)``.

    ``args.w`` is ignored: the point is projected onto ``w = (vp - vm)/xi``.
    Equals P_vp,vm + (P_w,vm - P_vp,w)/xi - P_w,w/xi^2 on that manifold.
    """
    if not args.xi > 0:
        raise ValueError("xi must be > 0")
    y = HyperDual(args.vm, 1.0, 0.0)
    z = HyperDual(args.vp, 0.0, 1.0)
    env = {"x": args.x, "vm": y, "vp": z, "w": (z - y) / args.xi, "t": args.t, "xi": args.xi}
    out = evaluate(op.body, env)
    return out.e12 if isinstance(out, HyperDual) else 0.0
