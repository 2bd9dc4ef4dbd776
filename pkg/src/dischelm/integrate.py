"""Run a second-order finite-difference scheme as an implicit time stepper.

Given ``Q_{p-1}`` and ``Q_p`` the scheme ``P(star_p) = 0`` is solved for
``Q_{p+1}`` by Newton's method; the derivative of the residual with respect to
the unknown is ``dP/dvp / h + dP/dw / h^2``, obtained from one dual pass.
"""

from __future__ import annotations

import enum
import io
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .dual import Dual
from .exprlang import DomainError, evaluate
from .fdeop import SecondOrderOp, eval_fde
from .grid import GridFn, Partition


class StepError(ArithmeticError):
    kind = "StepError"


class DerivativeVanishes(StepError):
    """The scheme does not determine the next value (zero derivative in the unknown)."""

    kind = "DerivativeVanishes"


class MaxIterExceeded(StepError):
    kind = "MaxIterExceeded"


class NonFinite(StepError):
    kind = "NonFinite"


class InitialGuess(enum.Enum):
    LinearExtrapolation = "linear"
    PreviousValue = "previous"


@dataclass(frozen=True)
class StepConfig:
    newton_tol: float = 1e-12
    newton_max_iter: int = 50
    initial_guess: InitialGuess = InitialGuess.LinearExtrapolation

    def __post_init__(self):
        if not self.newton_tol > 0:
            raise ValueError("newton_tol must be > 0")
        if self.newton_max_iter < 1:
            raise ValueError("newton_max_iter must be >= 1")


def _phi(op: SecondOrderOp, q_prev: float, q_curr: float, q_next, t: float, h: float):
    # same arithmetic as the grid stencil, so eval_fde reproduces the residual exactly
    env = {
        "x": q_curr,
        "vm": (q_curr - q_prev) / h,
        "vp": (q_next - q_curr) / h,
        "w": (q_next - 2.0 * q_curr + q_prev) / (h * h),
        "t": t,
        "xi": h,
    }
    return evaluate(op.body, env)


def solve_step(
    op: SecondOrderOp, q_prev: float, q_curr: float, t: float, h: float, cfg: StepConfig | None = None
) -> tuple[float, int]:
    """Newton solve for ``Q_{p+1}``; returns the root and the number of Newton updates."""
    cfg = cfg or StepConfig()
    if not h > 0:
        raise ValueError(f"step h must be > 0, got {h}")
    q_prev, q_curr = float(q_prev), float(q_curr)
    if cfg.initial_guess is InitialGuess.LinearExtrapolation:
        q = 2.0 * q_curr - q_prev
    else:
        q = q_curr
    tol = cfg.newton_tol * (1.0 + abs(q_curr))
    tiny = 1e-14 * (1.0 + 1.0 / h + 1.0 / (h * h))
    iters = 0
    while True:
        try:
            r = _phi(op, q_prev, q_curr, Dual(q, (1.0,)), t, h)
        except DomainError as exc:
            raise NonFinite(f"scheme left its domain at q_next={q!r}: {exc}") from None
        phi, dphi = (r.value, float(r.partials[0])) if isinstance(r, Dual) else (float(r), 0.0)
        if abs(dphi) < tiny:
            raise DerivativeVanishes(f"d(residual)/d(q_next) = {dphi:.3g} at q_next={q!r}")
        if abs(phi) <= tol:
            return q, iters
        if iters >= cfg.newton_max_iter:
            raise MaxIterExceeded(f"no convergence after {iters} Newton updates (residual {phi:.3g})")
        q = q - phi / dphi
        iters += 1
        if not math.isfinite(q):
            raise NonFinite("Newton iterate is not finite")


def step(op: SecondOrderOp, q_prev: float, q_curr: float, t: float, h: float, cfg: StepConfig | None = None) -> float:
    return solve_step(op, q_prev, q_curr, t, h, cfg)[0]


@dataclass(frozen=True)
class Status:
    complete: bool
    step: int | None = None
    kind: str | None = None
    reason: str | None = None

    def __str__(self) -> str:
        if self.complete:
            return "Complete"
        return f"FailedAtStep(p={self.step}, {self.kind}: {self.reason})"


COMPLETE = Status(True)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Values ``Q_0..Q_n``; entries past a failed step are NaN.

    ``newton_iters[p]`` is the number of Newton updates used to produce
    ``Q_{p+1}`` (entries for p = 0 and unreached steps are 0).
    """

    partition: Partition
    values: GridFn
    newton_iters: np.ndarray
    status: Status = field(default=COMPLETE)

    @property
    def complete(self) -> bool:
        return self.status.complete


def run(
    op: SecondOrderOp, q0: float, q1: float, part: Partition, cfg: StepConfig | None = None
) -> Trajectory:
    cfg = cfg or StepConfig()
    n, h = part.n, part.h
    q = np.full(n + 1, np.nan)
    q[0], q[1] = float(q0), float(q1)
    iters = np.zeros(n + 1, dtype=int)
    status = COMPLETE
    for p in range(1, n):
        try:
            q[p + 1], iters[p] = solve_step(op, q[p - 1], q[p], part.time(p), h, cfg)
        except StepError as exc:
            status = Status(False, p, exc.kind, str(exc))
            break
    return Trajectory(part, GridFn(part, q), iters, status)


def max_interior_residual(op: SecondOrderOp, traj: Trajectory) -> float:
    """Largest ``|P_p(Q)|`` over the interior, for a complete trajectory."""
    return float(np.abs(eval_fde(op, traj.values).values).max())


@dataclass(frozen=True, eq=False)
class Comparison:
    max_deviation: float
    deviation: np.ndarray  # |Q^A_p - Q^B_p| for p = 0..last index both reached
    status_a: Status
    status_b: Status

    def to_dict(self) -> dict:
        return {
            "max_deviation": self.max_deviation,
            "deviation": self.deviation.tolist(),
            "status_a": str(self.status_a),
            "status_b": str(self.status_b),
        }


def compare(
    op_a: SecondOrderOp,
    op_b: SecondOrderOp,
    q0: float,
    q1: float,
    part: Partition,
    cfg: StepConfig | None = None,
) -> Comparison:
    ta = run(op_a, q0, q1, part, cfg)
    tb = run(op_b, q0, q1, part, cfg)
    both = np.isfinite(ta.values.values) & np.isfinite(tb.values.values)
    last = int(np.argmin(both)) if not both.all() else part.n + 1
    dev = np.abs(ta.values.values[:last] - tb.values.values[:last])
    return Comparison(float(dev.max(initial=0.0)), dev, ta.status, tb.status)


def write_trajectory_csv(traj: Trajectory, dest: str | os.PathLike | io.TextIOBase) -> None:
    own = not hasattr(dest, "write")
    f = open(dest, "w") if own else dest
    try:
        f.write("p,t,q,newton_iters\n")
        times = traj.partition.times.tolist()
        for p, (t, v) in enumerate(zip(times, traj.values.values.tolist())):
            if not math.isfinite(v):
                break
            f.write(f"{p},{t!r},{v!r},{int(traj.newton_iters[p - 1]) if p >= 2 else 0}\n")
        f.write(f"# status={traj.status}\n")
    finally:
        if own:
            f.close()
