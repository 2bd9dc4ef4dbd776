import json

import numpy as np
import pytest

from dischelm.exprlang import eval_mixed2
from dischelm.fdeop import ContinuousOp, SecondOrderOp, StencilArgs, builtin_corpus, direct_discretize, stencil_arrays
from dischelm.helmholtz import (
    SamplingConfig,
    Verdict,
    check_helmholtz,
    check_selfadjoint,
    classify,
    helmholtz_residual,
    helmholtz_terms,
    probe_vector,
    run_sampling,
    selfadjoint_terms,
    separability_residual,
)
from dischelm.grid import IndexedSeq

from conftest import random_grid

EX43 = ContinuousOp("x + sin(v)*w")


def test_oscillator_residual_is_zero(rng):
    for _ in range(20):
        assert not np.any(helmholtz_residual(SecondOrderOp("x + w"), random_grid(rng)).values)


def test_friction_residual_is_minus_one(rng):
    q = random_grid(rng)
    res = helmholtz_residual(SecondOrderOp("x + (vm+vp)/2 + w"), q)
    assert res.first == 2 and res.last == q.n - 1
    assert np.all(res.values == -1.0)


def test_blended_scheme_residual_nonzero(rng):
    res = helmholtz_residual(direct_discretize(EX43, 0.5), random_grid(rng))
    assert np.abs(res.values).max() > 1e-3


def test_check_helmholtz_examples():
    rep = check_helmholtz(SecondOrderOp("x + w"))
    assert rep.verdict is Verdict.Satisfied and rep.max_residual <= 1e-12 and rep.witness is None
    rep = check_helmholtz(SecondOrderOp("x + sin((1/2)*vm + (1/2)*vp)*w"))
    assert rep.verdict is Verdict.Violated and rep.witness is not None
    assert check_helmholtz(SecondOrderOp("x + w + sin(t)")).verdict is Verdict.Satisfied


@pytest.mark.parametrize("blend", [0.0, 0.25, 0.5, 0.75, 1.0])
def test_blend_family_violated(blend):
    assert check_helmholtz(direct_discretize(EX43, blend)).verdict is Verdict.Violated


def test_witness_reproduces_max_residual():
    for op in (SecondOrderOp("x + (vm+vp)/2 + w"), direct_discretize(EX43, 0.5), SecondOrderOp("x + vm*vp")):
        rep = check_helmholtz(op)
        w = rep.witness
        again = abs(helmholtz_residual(op, w.grid())[w.p])
        assert abs(again - rep.max_residual) <= 1e-12 * max(1.0, rep.max_residual)
        rep = check_selfadjoint(op)
        again = selfadjoint_terms(op, rep.witness.grid())[0][rep.witness.p]
        assert abs(again - rep.max_residual) <= 1e-12 * max(1.0, rep.max_residual)


def test_selfadjoint_examples():
    assert check_selfadjoint(SecondOrderOp("x + w")).verdict is Verdict.Satisfied
    assert check_selfadjoint(SecondOrderOp("x + (vm+vp)/2 + w")).verdict is Verdict.Violated


def test_verdicts_agree_on_corpus():
    for entry in builtin_corpus():
        h, s = check_helmholtz(entry.op), check_selfadjoint(entry.op)
        assert h.verdict is s.verdict, entry.name
        expect = Verdict.Satisfied if entry.variational else Verdict.Violated
        assert h.verdict is expect, entry.name


def test_determinism():
    cfg = SamplingConfig(seed=7, grids=20)
    op = direct_discretize(EX43, 0.5)
    assert check_helmholtz(op, cfg).to_json() == check_helmholtz(op, cfg).to_json()
    assert check_selfadjoint(op, cfg) == check_selfadjoint(op, cfg)
    assert check_helmholtz(op, SamplingConfig(seed=8, grids=20)).witness != check_helmholtz(op, cfg).witness


def test_report_json_fields():
    d = json.loads(check_helmholtz(SecondOrderOp("x + vm*vp")).to_json())
    assert set(d) == {"verdict", "max_residual", "samples", "tolerance_abs", "tolerance_rel", "witness"}
    assert set(d["witness"]) == {"t0", "h", "n", "q", "p"}
    assert d["verdict"] == "Violated" and d["samples"] == 50


def test_classify_gray_zone():
    assert classify(1.0, 1.0, Verdict.Satisfied, Verdict.Violated) is Verdict.Satisfied
    assert classify(500.0, 1.0, Verdict.Satisfied, Verdict.Violated) is Verdict.Inconclusive
    assert classify(1000.0, 1.0, Verdict.Satisfied, Verdict.Violated) is Verdict.Inconclusive
    assert classify(1000.1, 1.0, Verdict.Satisfied, Verdict.Violated) is Verdict.Violated


def test_inconclusive_report_carries_witness():
    cfg = SamplingConfig(grids=3, tol_abs=1.0, tol_rel=0.0)
    rep = run_sampling(cfg, lambda q: (IndexedSeq(1, np.full(q.n - 1, 10.0)), 0.0))
    assert rep.verdict is Verdict.Inconclusive
    assert rep.witness is not None and rep.witness.p == 1  # ties go to the lowest index


def test_domain_failures_resample_then_give_up():
    op = SecondOrderOp("sqrt(x) + w")
    rep = check_helmholtz(op, SamplingConfig(grids=5, max_retries=3))
    assert rep.verdict is Verdict.Inconclusive and rep.samples < 5
    ok = check_helmholtz(op, SamplingConfig(grids=5, q_amplitude=2.0, max_retries=10**6, n_range=(4, 4)))
    assert ok.samples == 5 and ok.domain_failures > 0


def test_config_validation():
    with pytest.raises(ValueError):
        SamplingConfig(n_range=(3, 10))
    with pytest.raises(ValueError):
        SamplingConfig(h_set=(0.1, 0.0))
    with pytest.raises(ValueError):
        SamplingConfig(q_amplitude=0)


def test_probe_vector_is_reproducible(rng):
    q = random_grid(rng)
    assert probe_vector(q) == probe_vector(q.with_values(q.values.copy()))
    assert probe_vector(q) != probe_vector(q * 2.0)


def test_helmholtz_magnitude_scale(rng):
    q = random_grid(rng)
    _, mag = helmholtz_terms(SecondOrderOp("x + (vm+vp)/2 + w"), q)
    np.testing.assert_allclose(mag, 2 / q.h + 1.0)


def test_separability_examples():
    args = StencilArgs(0.3, -0.4, 1.1, 0.0, 0.2, 0.1)
    assert separability_residual(SecondOrderOp("x + w"), args) == 0.0
    assert separability_residual(SecondOrderOp("x + vm*vp"), args) == 1.0
    with pytest.raises(ValueError):
        separability_residual(SecondOrderOp("x"), StencilArgs(0, 0, 0, 0, 0, 0.0))


def test_separability_matches_partials_formula(rng):
    op = SecondOrderOp("x*vm*vp + sin(w)*vm + w^2*vp + cos(vm*w)")
    for _ in range(50):
        x, vm, vp, t = rng.uniform(-1, 1, 4)
        xi = float(rng.choice([0.1, 0.5]))
        env = {"x": x, "vm": vm, "vp": vp, "w": (vp - vm) / xi, "t": t, "xi": xi}
        m2 = lambda a, b: eval_mixed2(op.body, env, a, b)  # noqa: E731
        expect = m2("vp", "vm") + (m2("w", "vm") - m2("vp", "w")) / xi - m2("w", "w") / xi**2
        got = separability_residual(op, StencilArgs(x, vm, vp, 0.0, t, xi))
        assert got == pytest.approx(expect, rel=1e-12, abs=1e-12)


def test_satisfied_operators_are_separable(rng):
    for entry in builtin_corpus():
        if check_helmholtz(entry.op).verdict is not Verdict.Satisfied:
            continue
        cols = 0
        while cols < 1000:
            a = stencil_arrays(random_grid(rng))
            for col in a.T:
                assert abs(separability_residual(entry.op, StencilArgs(*col))) <= 1e-8
            cols += a.shape[1]
