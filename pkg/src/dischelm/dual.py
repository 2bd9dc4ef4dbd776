"""Forward-mode number types.

``Dual`` carries a value plus a vector of first partials (one slot per seeded
direction).  ``HyperDual`` carries two first-order slots and the mixed
second-order slot, which is enough to extract exact mixed partials
d^2 f / da db in one pass.

Both types interoperate with plain floats on either side of an operator.
Elementary functions are applied through :meth:`chain`, which takes the
function together with its first and second derivatives.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence, Union

import numpy as np

Real = Union[int, float]


class Dual:
    """Value with a vector of first-order partials."""

    __slots__ = ("value", "partials")

    def __init__(self, value: float, partials: Sequence[float] | np.ndarray):
        self.value = float(value)
        self.partials = np.asarray(partials, dtype=float)

    @classmethod
    def variable(cls, value: float, index: int, size: int) -> "Dual":
        seed = np.zeros(size)
        seed[index] = 1.0
        return cls(value, seed)

    def _lift(self, other) -> "Dual":
        if isinstance(other, Dual):
            return other
        return Dual(other, np.zeros_like(self.partials))

    def __add__(self, other):
        if isinstance(other, Dual):
            return Dual(self.value + other.value, self.partials + other.partials)
        return Dual(self.value + other, self.partials)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Dual):
            return Dual(self.value - other.value, self.partials - other.partials)
        return Dual(self.value - other, self.partials)

    def __rsub__(self, other):
        return Dual(other - self.value, -self.partials)

    def __mul__(self, other):
        if isinstance(other, Dual):
            return Dual(
                self.value * other.value,
                self.value * other.partials + other.value * self.partials,
            )
        return Dual(self.value * other, self.partials * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = self._lift(other)
        q = self.value / other.value
        return Dual(q, (self.partials - q * other.partials) / other.value)

    def __rtruediv__(self, other):
        return self._lift(other) / self

    def __neg__(self):
        return Dual(-self.value, -self.partials)

    def powi(self, k: int) -> "Dual":
        if k == 0:
            return Dual(1.0, np.zeros_like(self.partials))
        if k == 1:
            return self
        return Dual(self.value**k, (k * self.value ** (k - 1)) * self.partials)

    def chain(self, f: Callable, df: Callable, d2f: Callable | None = None) -> "Dual":
        return Dual(f(self.value), df(self.value) * self.partials)

    def __repr__(self) -> str:
        return f"Dual({self.value!r}, {self.partials.tolist()!r})"


class HyperDual:
    """a + b e1 + c e2 + d e1e2 with e1^2 = e2^2 = 0."""

    __slots__ = ("value", "e1", "e2", "e12")

    def __init__(self, value: float, e1: float = 0.0, e2: float = 0.0, e12: float = 0.0):
        self.value = float(value)
        self.e1 = float(e1)
        self.e2 = float(e2)
        self.e12 = float(e12)

    def _lift(self, other) -> "HyperDual":
        if isinstance(other, HyperDual):
            return other
        return HyperDual(other)

    def __add__(self, other):
        o = self._lift(other)
        return HyperDual(self.value + o.value, self.e1 + o.e1, self.e2 + o.e2, self.e12 + o.e12)

    __radd__ = __add__

    def __sub__(self, other):
        o = self._lift(other)
        return HyperDual(self.value - o.value, self.e1 - o.e1, self.e2 - o.e2, self.e12 - o.e12)

    def __rsub__(self, other):
        return self._lift(other) - self

    def __mul__(self, other):
        o = self._lift(other)
        # cross term grouped so that swapping e1/e2 roles is exact
        return HyperDual(
            self.value * o.value,
            self.value * o.e1 + self.e1 * o.value,
            self.value * o.e2 + self.e2 * o.value,
            self.value * o.e12 + (self.e1 * o.e2 + self.e2 * o.e1) + self.e12 * o.value,
        )

    __rmul__ = __mul__

    def reciprocal(self) -> "HyperDual":
        return self.chain(lambda u: 1.0 / u, lambda u: -1.0 / (u * u), lambda u: 2.0 / (u * u * u))

    def __truediv__(self, other):
        return self * self._lift(other).reciprocal()

    def __rtruediv__(self, other):
        return self._lift(other) * self.reciprocal()

    def __neg__(self):
        return HyperDual(-self.value, -self.e1, -self.e2, -self.e12)

    def powi(self, k: int) -> "HyperDual":
        if k == 0:
            return HyperDual(1.0)
        if k == 1:
            return self
        return self.chain(
            lambda u: u**k,
            lambda u: k * u ** (k - 1),
            lambda u: k * (k - 1) * u ** (k - 2),
        )

    def chain(self, f: Callable, df: Callable, d2f: Callable) -> "HyperDual":
        a = self.value
        d1 = df(a)
        return HyperDual(
            f(a),
            d1 * self.e1,
            d1 * self.e2,
            d1 * self.e12 + d2f(a) * (self.e1 * self.e2),
        )

    def __repr__(self) -> str:
        return f"HyperDual({self.value!r}, {self.e1!r}, {self.e2!r}, {self.e12!r})"


def real_part(v) -> float:
    """Underlying real value of a float, Dual or HyperDual."""
    if isinstance(v, (Dual, HyperDual)):
        return v.value
    return float(v)


def is_differentiating(v) -> bool:
    return isinstance(v, (Dual, HyperDual))


# f, f', f'' for every supported elementary function.
FUNCTIONS: dict[str, tuple[Callable, Callable, Callable]] = {
    "sin": (math.sin, math.cos, lambda a: -math.sin(a)),
    "cos": (math.cos, lambda a: -math.sin(a), lambda a: -math.cos(a)),
    "tan": (
        math.tan,
        lambda a: 1.0 / (math.cos(a) * math.cos(a)),
        lambda a: 2.0 * math.tan(a) / (math.cos(a) * math.cos(a)),
    ),
    "exp": (math.exp, math.exp, math.exp),
    "log": (math.log, lambda a: 1.0 / a, lambda a: -1.0 / (a * a)),
    "sqrt": (
        math.sqrt,
        lambda a: 0.5 / math.sqrt(a),
        lambda a: -0.25 / (a * math.sqrt(a)),
    ),
    "tanh": (
        math.tanh,
        lambda a: 1.0 - math.tanh(a) * math.tanh(a),
        lambda a: -2.0 * math.tanh(a) * (1.0 - math.tanh(a) * math.tanh(a)),
    ),
}
