import math

import numpy as np
import pytest

from dischelm.dual import FUNCTIONS, Dual, HyperDual, real_part


def test_dual_product_and_quotient_rules():
    x = Dual.variable(3.0, 0, 2)
    y = Dual.variable(2.0, 1, 2)
    assert (x * y).partials.tolist() == [2.0, 3.0]
    q = x / y
    assert q.value == 1.5
    assert q.partials == pytest.approx([0.5, -0.75])
    assert (1.0 / y).partials == pytest.approx([0.0, -0.25])
    assert (5.0 - x).partials.tolist() == [-1.0, 0.0]


def test_dual_powi():
    x = Dual.variable(2.0, 0, 1)
    assert x.powi(3).value == 8.0 and x.powi(3).partials.tolist() == [12.0]
    assert x.powi(0).partials.tolist() == [0.0]


@pytest.mark.parametrize("name", sorted(FUNCTIONS))
def test_function_table_derivatives(name):
    f, d1, d2 = FUNCTIONS[name]
    a, s = 0.7, 1e-5
    assert d1(a) == pytest.approx((f(a + s) - f(a - s)) / (2 * s), rel=1e-8)
    assert d2(a) == pytest.approx((d1(a + s) - d1(a - s)) / (2 * s), rel=1e-7)


def test_hyperdual_mixed_partial_of_product():
    x = HyperDual(1.5, 1.0, 0.0)
    y = HyperDual(-2.0, 0.0, 1.0)
    r = x * x * y
    assert r.e12 == pytest.approx(2 * 1.5)
    r = (x * y).chain(*FUNCTIONS["sin"])
    assert r.e12 == pytest.approx(math.cos(-3.0) - (-3.0) * math.sin(-3.0))


def test_hyperdual_division():
    x = HyperDual(2.0, 1.0, 0.0)
    y = HyperDual(4.0, 0.0, 1.0)
    assert (x / y).e12 == pytest.approx(-1 / 16)
    assert (1.0 / x).e1 == pytest.approx(-0.25)


def test_real_part():
    assert real_part(Dual(2.0, np.ones(1))) == 2.0
    assert real_part(HyperDual(3.0)) == 3.0
    assert real_part(4) == 4.0
