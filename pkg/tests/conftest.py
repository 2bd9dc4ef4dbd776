import numpy as np
import pytest

from dischelm.exprlang import Add, BinOp, Call, Const, Expr, Mul, Neg, Pow, Var
from dischelm.grid import GridFn, Partition

SAFE_UNARY = ("sin", "cos", "tanh")


def random_node(rng: np.random.Generator, names, depth: int):
    """Random expression tree that stays finite and differentiable on [-1, 1]^k."""
    if depth == 0 or rng.random() < 0.25:
        if rng.random() < 0.7:
            return Var(str(rng.choice(names)))
        return Const(float(np.round(rng.uniform(-2, 2), 3)))
    kind = rng.integers(7)
    a = random_node(rng, names, depth - 1)
    if kind == 0:
        return Add(a, random_node(rng, names, depth - 1))
    if kind == 1:
        return BinOp("-", a, random_node(rng, names, depth - 1))
    if kind == 2:
        return Mul(a, random_node(rng, names, depth - 1))
    if kind == 3:
        # denominator bounded away from zero
        return BinOp("/", a, Add(Const(2.5), Call("cos", random_node(rng, names, depth - 1))))
    if kind == 4:
        return Call(str(rng.choice(SAFE_UNARY)), a)
    if kind == 5:
        return Pow(a, int(rng.integers(0, 4)))
    return Neg(a)


def random_expr(rng, names, depth=4) -> Expr:
    return Expr(random_node(rng, names, depth))


def random_grid(rng, n=None, h=None, amp=2.0) -> GridFn:
    n = int(rng.integers(4, 33)) if n is None else n
    h = float(rng.choice([0.05, 0.1, 0.5])) if h is None else h
    return GridFn(Partition(float(rng.uniform(-1, 1)), h, n), rng.uniform(-amp, amp, n + 1))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# Building blocks for random Lagrangian couples: smooth in (x, v), mixed with t and xi.
LAGRANGIAN_TERMS = (
    "x",
    "v",
    "x^2",
    "v^2",
    "x*v",
    "x^3",
    "x*v^2",
    "sin(x)",
    "cos(v)",
    "sin(x*v)",
    "x*sin(t)",
    "xi*v^2",
    "x*v/xi",
    "t*v",
    "exp(x/4)",
    "v/(2 + cos(x))",
)


def random_lagrangian_text(rng, max_terms=4) -> str:
    k = int(rng.integers(1, max_terms + 1))
    picks = rng.choice(len(LAGRANGIAN_TERMS), size=k, replace=False)
    coefs = np.round(rng.uniform(-2, 2, k), 3).tolist()
    return " + ".join(f"({c!r})*({LAGRANGIAN_TERMS[i]})" for c, i in zip(coefs, picks))


def random_couple(rng):
    from dischelm.lagrange import LagrangianCouple

    return LagrangianCouple.from_text(random_lagrangian_text(rng), random_lagrangian_text(rng))


# Filled by tests/test_acceptance.py: criterion -> (title, passed, detail)
ACCEPTANCE_RESULTS: dict[int, tuple[str, bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_RESULTS):
        title, ok, detail = ACCEPTANCE_RESULTS[k]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {k}. {title}: {detail}")
