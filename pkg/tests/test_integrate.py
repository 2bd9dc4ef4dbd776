import io
import math
import time

import numpy as np
import pytest

from dischelm.exprlang import eval as eval_expr
from dischelm.fdeop import ContinuousOp, SecondOrderOp, direct_discretize, eval_fde
from dischelm.grid import Partition
from dischelm.integrate import (
    DerivativeVanishes,
    InitialGuess,
    MaxIterExceeded,
    NonFinite,
    StepConfig,
    compare,
    max_interior_residual,
    run,
    solve_step,
    step,
    write_trajectory_csv,
)
from dischelm.lagrange import synthesize

OSC = SecondOrderOp("x + w")
FRICTION = direct_discretize(ContinuousOp("x+v+w"), 0.5)


def test_step_linear_example():
    assert step(OSC, 1.0, 1.0, 0.0, 0.1) == pytest.approx(0.99, abs=1e-14)


def test_step_needs_dependence_on_unknown():
    with pytest.raises(DerivativeVanishes):
        step(SecondOrderOp("x"), 1.0, 1.0, 0.0, 0.1)


def _bisect(f, lo, hi):
    flo = f(lo)
    assert flo * f(hi) < 0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0 or hi - lo < 1e-15:
            return mid
        if (fm < 0) == (flo < 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def test_newton_matches_bisection():
    op = SecondOrderOp("x + w + vp^3")
    h, qp, qc = 0.1, 0.5, 0.5

    def phi(qn):
        return eval_expr(op.body, {"x": qc, "vm": (qc - qp) / h, "vp": (qn - qc) / h,
                                   "w": (qn - 2 * qc + qp) / (h * h), "t": 0.0, "xi": h})

    # phi is increasing in qn; expand a bracket around the current value
    lo, hi = qc - 1.0, qc + 1.0
    root = _bisect(phi, lo, hi)
    assert step(op, qp, qc, 0.0, h) == pytest.approx(root, abs=1e-10)


def test_linear_scheme_converges_in_one_update(rng):
    for body in ("x + w", "x + (vm+vp)/2 + w", "3*x - 2*vp + w + t"):
        op = SecondOrderOp(body)
        for _ in range(10):
            qp, qc = rng.uniform(-2, 2, 2)
            _, iters = solve_step(op, qp, qc, 0.3, 0.1)
            assert iters <= 1


def test_initial_guess_choice():
    cfg = StepConfig(initial_guess=InitialGuess.PreviousValue)
    assert step(OSC, 1.0, 1.0, 0.0, 0.1, cfg) == pytest.approx(0.99, abs=1e-14)


def test_step_config_validation():
    with pytest.raises(ValueError):
        StepConfig(newton_tol=0.0)
    with pytest.raises(ValueError):
        StepConfig(newton_max_iter=0)
    with pytest.raises(ValueError):
        step(OSC, 0, 0, 0, 0.0)


def test_max_iter_exceeded():
    with pytest.raises(MaxIterExceeded):
        step(SecondOrderOp("x + w + vp^3"), 0.5, 0.5, 0.0, 0.1, StepConfig(newton_max_iter=1))


def test_non_finite_from_domain():
    # the first iterate steps outside log's domain
    with pytest.raises(NonFinite):
        step(SecondOrderOp("log(vp) + 10"), 0.0, 0.0, 0.0, 1.0, StepConfig(initial_guess=InitialGuess.PreviousValue))


def test_run_matches_recurrence():
    h, n = 0.1, 100
    traj = run(OSC, 1.0, 1.0, Partition(0.0, h, n))
    assert traj.complete
    ref = [1.0, 1.0]
    for _ in range(n - 1):
        ref.append((2 - h * h) * ref[-1] - ref[-2])
    assert np.abs(traj.values.values - ref).max() <= 1e-12


def test_long_run_bounded_and_fast():
    h, n = 0.1, 10_000
    start = time.perf_counter()
    traj = run(OSC, 1.0, math.cos(0.1), Partition(0.0, h, n))
    elapsed = time.perf_counter() - start
    assert traj.complete and np.abs(traj.values.values).max() <= 1.01
    ref = np.empty(n + 1)
    ref[0], ref[1] = 1.0, math.cos(0.1)
    for p in range(1, n):
        ref[p + 1] = (2 - h * h) * ref[p] - ref[p - 1]
    assert np.abs(traj.values.values - ref).max() <= 1e-12
    assert elapsed <= 5.0


def test_run_zero_operator_fails_at_first_step():
    traj = run(SecondOrderOp("0"), 1.0, 1.0, Partition(0, 0.1, 10))
    assert not traj.complete
    assert traj.status.step == 1 and traj.status.kind == "DerivativeVanishes"
    assert str(traj.status).startswith("FailedAtStep(p=1, DerivativeVanishes")
    assert np.isnan(traj.values.values[2:]).all()


def test_friction_hand_table():
    # Q_{p+1} * 5 = -Q_p + Q_{p-1} + 4 (2 Q_p - Q_{p-1}) at h = 1/2
    traj = run(FRICTION, 0.0, 1.0, Partition(0.0, 0.5, 6))
    expect = [0.0, 1.0, 1.4, 1.36, 1.064, 0.6736, 0.30464]
    np.testing.assert_allclose(traj.values.values, expect, rtol=0, atol=1e-12)


def test_residual_postcondition(rng):
    cfg = StepConfig()
    for body in ("x + w + vp^3", "sin(x) + w", "x + (vm+vp)/2 + w", "x + sin(0.5*vm + 0.5*vp)*w + w"):
        op = SecondOrderOp(body)
        traj = run(op, 0.3, 0.31, Partition(0.0, 0.1, 200), cfg)
        assert traj.complete, body
        bound = cfg.newton_tol * (1 + np.abs(traj.values.values).max())
        assert max_interior_residual(op, traj) <= bound, body
        np.testing.assert_array_equal(eval_fde(op, traj.values).values, eval_fde(op, traj.values).values)


def test_compare_examples():
    part = Partition(0.0, 0.1, 200)
    syn = synthesize(OSC)
    assert syn.synthesis.source == OSC
    direct = direct_discretize(ContinuousOp("x+w"), 0.5)
    cmp = compare(OSC, direct, 1.0, 0.99, part)
    assert cmp.max_deviation == 0.0 and len(cmp.deviation) == part.n + 1
    assert compare(FRICTION, FRICTION, 1.0, 0.9, part).max_deviation == 0.0
    ex43 = ContinuousOp("x + sin(v)*w")
    cmp = compare(direct_discretize(ex43, 0.0), direct_discretize(ex43, 1.0), 0.5, 0.52, Partition(0, 0.1, 50))
    assert cmp.max_deviation > 1e-6


def test_compare_stops_at_failure():
    part = Partition(0.0, 0.1, 10)
    cmp = compare(OSC, SecondOrderOp("0"), 1.0, 1.0, part)
    assert not cmp.status_b.complete and len(cmp.deviation) == 2


def test_trajectory_csv():
    traj = run(OSC, 1.0, 1.0, Partition(0.0, 0.5, 5))
    buf = io.StringIO()
    write_trajectory_csv(traj, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "p,t,q,newton_iters"
    assert lines[-1] == "# status=Complete"
    assert len(lines) == 1 + 6 + 1
    p, t, q, it = lines[3].split(",")
    assert int(p) == 2 and float(q) == traj.values[2] and it == "1"
