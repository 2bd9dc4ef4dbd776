"""Batched tape evaluation: values plus forward tangents over many points.

Two interchangeable backends run the same instruction tape:

``ctape``
    Cython extension (``_ctape.pyx``), built when a C compiler and Cython
    are available at install time.
``pytape``
    numpy/``math`` fallback, always available.

The compiled backend is selected at import when it loads; setting
``DISCHELM_PURE_PYTHON=1`` forces the fallback.  Both backends produce
bit-identical results and match scalar evaluation in :mod:`dischelm.exprlang`.
"""

from __future__ import annotations

import os
from typing import Callable

import numpy as np

from ..exprlang import DomainError, Tape
from . import _pytape
from ._errors import KernelDomainError

_BACKENDS: dict[str, Callable] = {"pytape": _pytape.run_tape}

try:
    from . import _ctape
except ImportError:  # extension not built
    _ctape = None
else:
    _BACKENDS["ctape"] = _ctape.run_tape

if _ctape is not None and not os.environ.get("DISCHELM_PURE_PYTHON"):
    BACKEND = "ctape"
else:
    BACKEND = "pytape"


def available_backends() -> tuple[str, ...]:
    return tuple(sorted(_BACKENDS))


def get_backend(name: str | None = None) -> Callable:
    name = name or BACKEND
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ValueError(f"backend {name!r} not available (have {available_backends()})") from None


def run_tape(tape: Tape, values, tangents=None, backend: str | None = None):
    """Evaluate ``tape`` at a batch of points.

    values: (nvars, npts), rows ordered like ``tape.variables``; scalars or
    length-1 rows broadcast.  tangents: (nvars, ntan, npts) seed directions,
    or None for values only.  Returns (value (npts,), tangent (ntan, npts)).
    Domain failures raise :class:`DomainError` with ``index`` set to the point.
    """
    nvars = len(tape.variables)
    rows = [np.atleast_1d(np.asarray(v, dtype=float)) for v in values]
    if len(rows) != nvars:
        raise ValueError(f"expected {nvars} value rows, got {len(rows)}")
    npts = max((r.shape[0] for r in rows), default=1)
    vals = np.empty((nvars, npts))
    for i, r in enumerate(rows):
        vals[i] = np.broadcast_to(r, (npts,))
    if tangents is None:
        tans = np.zeros((nvars, 0, npts))
    else:
        tans = np.ascontiguousarray(np.broadcast_to(np.asarray(tangents, dtype=float), (nvars, np.shape(tangents)[1], npts)))
    try:
        return get_backend(backend)(tape.code, tape.consts, vals, tans)
    except KernelDomainError as exc:
        raise DomainError(tape.nodes[exc.instr], exc.reason, index=exc.point) from None


__all__ = ["BACKEND", "available_backends", "get_backend", "run_tape", "KernelDomainError"]
