# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled tape interpreter: values and forward tangents over a batch of points."""

import numpy as np

from libc.math cimport sin, cos, tan, exp, log, sqrt, tanh, pow, isfinite

from ._errors import KernelDomainError

cdef enum:
    OP_CONST = 0
    OP_VAR = 1
    OP_ADD = 2
    OP_SUB = 3
    OP_MUL = 4
    OP_DIV = 5
    OP_NEG = 6
    OP_POWI = 7
    OP_SIN = 8
    OP_COS = 9
    OP_TAN = 10
    OP_EXP = 11
    OP_LOG = 12
    OP_SQRT = 13
    OP_TANH = 14


cdef enum:
    ERR_NONE = 0
    ERR_DIV = 1
    ERR_LOG = 2
    ERR_SQRT_NEG = 3
    ERR_SQRT_ZERO = 4
    ERR_NONFINITE = 5


_REASONS = {
    ERR_DIV: "division by zero",
    ERR_LOG: "log of non-positive value",
    ERR_SQRT_NEG: "sqrt of negative value",
    ERR_SQRT_ZERO: "sqrt not differentiable at 0",
    ERR_NONFINITE: "non-finite result",
}


cdef int _run(const int[:, ::1] code, const double[::1] consts,
              const double[:, ::1] values, const double[:, :, ::1] tangents,
              double[:, ::1] V, double[:, :, ::1] T,
              Py_ssize_t* err_i, Py_ssize_t* err_p) noexcept nogil:
    cdef Py_ssize_t ninstr = code.shape[0]
    cdef Py_ssize_t npts = values.shape[1]
    cdef Py_ssize_t ntan = tangents.shape[1]
    cdef Py_ssize_t i, p, k
    cdef int op, a, b
    cdef double va, v, d1

    for i in range(ninstr):
        op = code[i, 0]
        a = code[i, 1]
        b = code[i, 2]
        if op == OP_CONST:
            for p in range(npts):
                V[i, p] = consts[a]
            for k in range(ntan):
                for p in range(npts):
                    T[i, k, p] = 0.0
        elif op == OP_VAR:
            for p in range(npts):
                V[i, p] = values[a, p]
            for k in range(ntan):
                for p in range(npts):
                    T[i, k, p] = tangents[a, k, p]
        elif op == OP_ADD:
            for p in range(npts):
                V[i, p] = V[a, p] + V[b, p]
            for k in range(ntan):
                for p in range(npts):
                    T[i, k, p] = T[a, k, p] + T[b, k, p]
        elif op == OP_SUB:
            for p in range(npts):
                V[i, p] = V[a, p] - V[b, p]
            for k in range(ntan):
                for p in range(npts):
                    T[i, k, p] = T[a, k, p] - T[b, k, p]
        elif op == OP_MUL:
            for p in range(npts):
                V[i, p] = V[a, p] * V[b, p]
            for k in range(ntan):
                for p in range(npts):
                    T[i, k, p] = V[a, p] * T[b, k, p] + V[b, p] * T[a, k, p]
        elif op == OP_DIV:
            for p in range(npts):
                if V[b, p] == 0.0:
                    err_i[0] = i
                    err_p[0] = p
                    return ERR_DIV
                V[i, p] = V[a, p] / V[b, p]
            for k in range(ntan):
                for p in range(npts):
                    T[i, k, p] = (T[a, k, p] - V[i, p] * T[b, k, p]) / V[b, p]
        elif op == OP_NEG:
            for p in range(npts):
                V[i, p] = -V[a, p]
            for k in range(ntan):
                for p in range(npts):
                    T[i, k, p] = -T[a, k, p]
        elif op == OP_POWI:
            if b == 0:
                for p in range(npts):
                    V[i, p] = 1.0
                for k in range(ntan):
                    for p in range(npts):
                        T[i, k, p] = 0.0
            elif b == 1:
                for p in range(npts):
                    V[i, p] = V[a, p]
                for k in range(ntan):
                    for p in range(npts):
                        T[i, k, p] = T[a, k, p]
            else:
                for p in range(npts):
                    V[i, p] = pow(V[a, p], <double>b)
                for p in range(npts):
                    d1 = b * pow(V[a, p], <double>(b - 1))
                    for k in range(ntan):
                        T[i, k, p] = d1 * T[a, k, p]
        else:
            # elementary functions: value then derivative factor
            for p in range(npts):
                va = V[a, p]
                if op == OP_SIN:
                    v = sin(va)
                    d1 = cos(va)
                elif op == OP_COS:
                    v = cos(va)
                    d1 = -sin(va)
                elif op == OP_TAN:
                    v = tan(va)
                    d1 = 1.0 / (cos(va) * cos(va))
                elif op == OP_EXP:
                    v = exp(va)
                    d1 = v
                elif op == OP_LOG:
                    if va <= 0.0:
                        err_i[0] = i
                        err_p[0] = p
                        return ERR_LOG
                    v = log(va)
                    d1 = 1.0 / va
                elif op == OP_SQRT:
                    if va < 0.0:
                        err_i[0] = i
                        err_p[0] = p
                        return ERR_SQRT_NEG
                    if va == 0.0 and ntan > 0:
                        err_i[0] = i
                        err_p[0] = p
                        return ERR_SQRT_ZERO
                    v = sqrt(va)
                    d1 = 0.5 / v if ntan > 0 else 0.0
                else:  # OP_TANH
                    v = tanh(va)
                    d1 = 1.0 - v * v
                V[i, p] = v
                for k in range(ntan):
                    T[i, k, p] = d1 * T[a, k, p]
        for p in range(npts):
            if not isfinite(V[i, p]):
                err_i[0] = i
                err_p[0] = p
                return ERR_NONFINITE
    return ERR_NONE


def run_tape(code, consts, values, tangents):
    """Evaluate ``code`` at ``npts`` points.

    values: (nvars, npts); tangents: (nvars, ntan, npts).
    Returns (value (npts,), tangent (ntan, npts)).
    """
    cdef const int[:, ::1] c = code
    cdef const double[::1] k = consts
    cdef const double[:, ::1] x = values
    cdef const double[:, :, ::1] dx = tangents
    cdef Py_ssize_t ninstr = c.shape[0]
    cdef Py_ssize_t npts = x.shape[1]
    cdef Py_ssize_t ntan = dx.shape[1]
    V_arr = np.empty((ninstr, npts))
    T_arr = np.empty((ninstr, ntan, npts))
    cdef double[:, ::1] V = V_arr
    cdef double[:, :, ::1] T = T_arr
    cdef Py_ssize_t err_i = 0, err_p = 0
    cdef int status
    with nogil:
        status = _run(c, k, x, dx, V, T, &err_i, &err_p)
    if status != ERR_NONE:
        raise KernelDomainError(err_i, err_p, _REASONS[status])
    return V_arr[ninstr - 1].copy(), T_arr[ninstr - 1].copy()
