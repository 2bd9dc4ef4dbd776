"""Pure-Python tape interpreter (numpy for arithmetic, libm via ``math`` otherwise).

Transcendental functions and integer powers go through the ``math`` module
element by element: numpy's vectorised versions are not bit-identical to libm
on every platform, and batch results must match scalar evaluation exactly.
"""

from __future__ import annotations

import math

import numpy as np

from ..exprlang import (
    OP_ADD,
    OP_CONST,
    OP_COS,
    OP_DIV,
    OP_EXP,
    OP_LOG,
    OP_MUL,
    OP_NEG,
    OP_POWI,
    OP_SIN,
    OP_SQRT,
    OP_SUB,
    OP_TAN,
    OP_TANH,
    OP_VAR,
)
from ._errors import KernelDomainError


def _libm(f, arr: np.ndarray, instr: int) -> np.ndarray:
    out = np.empty_like(arr)
    for p, a in enumerate(arr.tolist()):
        try:
            out[p] = f(a)
        except (OverflowError, ValueError):
            raise KernelDomainError(instr, p, "non-finite result") from None
    return out


def _first(mask: np.ndarray) -> int:
    return int(np.flatnonzero(mask)[0])


def run_tape(code, consts, values, tangents):
    """Evaluate ``code`` at ``npts`` points.

    values: (nvars, npts); tangents: (nvars, ntan, npts).
    Returns (value (npts,), tangent (ntan, npts)).
    """
    npts = values.shape[1]
    ntan = tangents.shape[1]
    V: list[np.ndarray] = []
    T: list[np.ndarray] = []
    for i, (op, a, b) in enumerate(code.tolist()):
        if op == OP_CONST:
            v = np.full(npts, consts[a])
            t = np.zeros((ntan, npts))
        elif op == OP_VAR:
            v = values[a].copy()
            t = tangents[a].copy()
        elif op == OP_ADD:
            v = V[a] + V[b]
            t = T[a] + T[b]
        elif op == OP_SUB:
            v = V[a] - V[b]
            t = T[a] - T[b]
        elif op == OP_MUL:
            v = V[a] * V[b]
            t = V[a] * T[b] + V[b] * T[a]
        elif op == OP_DIV:
            zero = V[b] == 0.0
            if zero.any():
                raise KernelDomainError(i, _first(zero), "division by zero")
            v = V[a] / V[b]
            t = (T[a] - v * T[b]) / V[b]
        elif op == OP_NEG:
            v = -V[a]
            t = -T[a]
        elif op == OP_POWI:
            if b == 0:
                v = np.ones(npts)
                t = np.zeros((ntan, npts))
            elif b == 1:
                v = V[a].copy()
                t = T[a].copy()
            else:
                k = float(b)
                v = _libm(lambda u: u**k, V[a], i)
                d1 = b * _libm(lambda u: u ** (k - 1.0), V[a], i)
                t = d1 * T[a]
        else:
            va = V[a]
            if op == OP_SIN:
                v = _libm(math.sin, va, i)
                d1 = _libm(math.cos, va, i)
            elif op == OP_COS:
                v = _libm(math.cos, va, i)
                d1 = -_libm(math.sin, va, i)
            elif op == OP_TAN:
                v = _libm(math.tan, va, i)
                c = _libm(math.cos, va, i)
                d1 = 1.0 / (c * c)
            elif op == OP_EXP:
                v = _libm(math.exp, va, i)
                d1 = v
            elif op == OP_LOG:
                bad = va <= 0.0
                if bad.any():
                    raise KernelDomainError(i, _first(bad), "log of non-positive value")
                v = _libm(math.log, va, i)
                d1 = 1.0 / va
            elif op == OP_SQRT:
                bad = va < 0.0
                if bad.any():
                    raise KernelDomainError(i, _first(bad), "sqrt of negative value")
                if ntan > 0 and (va == 0.0).any():
                    raise KernelDomainError(i, _first(va == 0.0), "sqrt not differentiable at 0")
                v = _libm(math.sqrt, va, i)
                d1 = 0.5 / v if ntan > 0 else np.zeros(npts)
            elif op == OP_TANH:
                v = _libm(math.tanh, va, i)
                d1 = 1.0 - v * v
            else:
                raise ValueError(f"unknown opcode {op}")
            t = d1 * T[a]
        bad = ~np.isfinite(v)
        if bad.any():
            raise KernelDomainError(i, _first(bad), "non-finite result")
        V.append(v)
        T.append(t)
    return V[-1].copy(), T[-1].copy()
