import numpy as np
import pytest

from dischelm import exprlang as E
from dischelm import kernels
from dischelm.dual import Dual

from conftest import random_expr

VARS = ("x", "y", "z")


def _scalar(e, X, T, p):
    env = {n: Dual(X[i, p], T[i, :, p]) for i, n in enumerate(VARS)}
    r = E.evaluate(e, env)
    if isinstance(r, Dual):
        return r.value, r.partials
    return float(r), np.zeros(T.shape[1])


def test_fallback_always_available():
    assert "pytape" in kernels.available_backends()
    assert kernels.BACKEND in kernels.available_backends()


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.get_backend("nope")


@pytest.mark.parametrize(
    "text",
    [
        "x + sin(y)*z",
        "tan(x)*exp(y)/(2 + z)",
        "log(2 + x*y)*tanh(z) - cos(x)",
        "sqrt(3 + sin(z))^3 - x^5 + y^0 + z^1",
        "-(x - y)/(1.5 + cos(z*x))",
    ],
)
def test_batch_equals_scalar_dual_bitwise(text):
    rng = np.random.default_rng(3)
    e = E.parse(text)
    X = rng.uniform(-1, 1, (3, 200))
    T = rng.normal(size=(3, 3, 200))
    for name in kernels.available_backends():
        val, tan = kernels.run_tape(e.tape(VARS), X, T, backend=name)
        for p in range(200):
            v, g = _scalar(e, X, T, p)
            assert val[p] == v
            assert np.array_equal(tan[:, p], g)


def test_backends_agree_bitwise_on_random_expressions():
    if len(kernels.available_backends()) < 2:
        pytest.skip("compiled backend not built")
    rng = np.random.default_rng(4)
    for _ in range(200):
        e = random_expr(rng, VARS, depth=5)
        X = rng.uniform(-1, 1, (3, 64))
        T = rng.normal(size=(3, 2, 64))
        a = kernels.run_tape(e.tape(VARS), X, T, backend="ctape")
        b = kernels.run_tape(e.tape(VARS), X, T, backend="pytape")
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1]), e.text


@pytest.mark.parametrize("backend", kernels.available_backends())
@pytest.mark.parametrize(
    "text, values, reason, bad",
    [
        ("1/x", [1.0, 0.0, 2.0], "division by zero", 1),
        ("log(x)", [1.0, 2.0, -1.0], "log", 2),
        ("sqrt(x)", [1.0, -4.0, 2.0], "sqrt of negative", 1),
        ("exp(x)", [1.0, 2.0, 1000.0], "non-finite", 2),
    ],
)
def test_domain_errors_carry_point_index(backend, text, values, reason, bad):
    e = E.parse(text)
    with pytest.raises(E.DomainError, match=reason) as exc:
        kernels.run_tape(e.tape(("x",)), [values], backend=backend)
    assert exc.value.index == bad


@pytest.mark.parametrize("backend", kernels.available_backends())
def test_sqrt_zero_only_fails_with_tangents(backend):
    tape = E.parse("sqrt(x)").tape(("x",))
    val, _ = kernels.run_tape(tape, [[0.0, 4.0]], backend=backend)
    assert val.tolist() == [0.0, 2.0]
    with pytest.raises(E.DomainError, match="not differentiable"):
        kernels.run_tape(tape, [[0.0, 4.0]], np.ones((1, 1, 2)), backend=backend)


def test_scalar_rows_broadcast():
    tape = E.parse("x*y").tape(("x", "y"))
    val, tan = kernels.run_tape(tape, [[1.0, 2.0, 3.0], 2.0])
    assert val.tolist() == [2.0, 4.0, 6.0]
    assert tan.shape == (0, 3)
