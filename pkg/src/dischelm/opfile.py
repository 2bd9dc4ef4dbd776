"""Operator and couple files: one ``key=value`` per line, ``#`` starts a comment.

Roles::

    role=fde                 expr=<P(x, vm, vp, w, t, xi)>   [label=...]
    role=continuous          expr=<O(x, v, w, t)>            [blend=<0..1>]
    role=lagrangian          expr=<L(x, v, t, xi)>
    role=lagrangian_couple   l_minus=<expr> l_plus=<expr>
    role=lagrangian_couple   source=<P expr> anchors=<y0>,<z0> quad_order=<k>

The last form describes a synthesized couple; it is rebuilt on load rather
than tabulated.
"""

from __future__ import annotations

import os

from .exprlang import CONTINUOUS_VARS, FDE_VARS, LAGRANGIAN_VARS, parse
from .fdeop import ContinuousOp, SecondOrderOp, direct_discretize
from .lagrange import ExprLagrangian, LagrangianCouple, synthesize

ROLES = ("fde", "continuous", "lagrangian", "lagrangian_couple")


class OpFileError(ValueError):
    pass


def parse_fields(text: str) -> dict[str, str]:
    fields: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise OpFileError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in fields:
            raise OpFileError(f"line {lineno}: duplicate key {key!r}")
        fields[key] = value
    if fields.get("role") not in ROLES:
        raise OpFileError(f"role must be one of {ROLES}, got {fields.get('role')!r}")
    return fields


def _need(fields: dict[str, str], *keys: str) -> list[str]:
    missing = [k for k in keys if k not in fields]
    if missing:
        raise OpFileError(f"role={fields['role']} needs {', '.join(missing)}")
    return [fields[k] for k in keys]


def loads(text: str):
    """Build the object a file describes.

    ``role=continuous`` with a ``blend`` yields its direct discretisation.
    """
    f = parse_fields(text)
    role = f["role"]
    if role == "fde":
        (expr,) = _need(f, "expr")
        return SecondOrderOp(parse(expr, FDE_VARS), f.get("label", ""))
    if role == "continuous":
        (expr,) = _need(f, "expr")
        o = ContinuousOp(parse(expr, CONTINUOUS_VARS))
        return direct_discretize(o, float(f["blend"])) if "blend" in f else o
    if role == "lagrangian":
        (expr,) = _need(f, "expr")
        return ExprLagrangian(parse(expr, LAGRANGIAN_VARS))
    if "source" in f:
        src = SecondOrderOp(parse(f["source"], FDE_VARS))
        anchors = tuple(float(a) for a in f.get("anchors", "0,0").split(","))
        if len(anchors) != 2:
            raise OpFileError("anchors must be two comma-separated numbers")
        return synthesize(src, int(f.get("quad_order", "32")), anchors)
    lm, lp = _need(f, "l_minus", "l_plus")
    return LagrangianCouple(ExprLagrangian(parse(lm, LAGRANGIAN_VARS)), ExprLagrangian(parse(lp, LAGRANGIAN_VARS)))


def load(path: str | os.PathLike):
    with open(path) as fh:
        return loads(fh.read())


def dumps(obj) -> str:
    if isinstance(obj, SecondOrderOp):
        lines = ["role=fde", f"expr={obj.body.text}"]
        if obj.label and obj.label != obj.body.text:
            lines.append(f"label={obj.label}")
    elif isinstance(obj, ContinuousOp):
        lines = ["role=continuous", f"expr={obj.body.text}"]
    elif isinstance(obj, ExprLagrangian):
        lines = ["role=lagrangian", f"expr={obj.body.text}"]
    elif isinstance(obj, LagrangianCouple):
        if obj.synthesis is not None:
            s = obj.synthesis
            lines = [
                "role=lagrangian_couple",
                f"source={s.source.body.text}",
                f"anchors={s.anchors[0]!r},{s.anchors[1]!r}",
                f"quad_order={s.quad_order}",
            ]
        elif isinstance(obj.l_minus, ExprLagrangian) and isinstance(obj.l_plus, ExprLagrangian):
            lines = ["role=lagrangian_couple", f"l_minus={obj.l_minus.body.text}", f"l_plus={obj.l_plus.body.text}"]
        else:
            raise OpFileError("only expression-backed or synthesized couples can be written")
    else:
        raise OpFileError(f"cannot serialise {type(obj).__name__}")
    return "\n".join(lines) + "\n"


def save(obj, path: str | os.PathLike) -> None:
    with open(path, "w") as fh:
        fh.write(dumps(obj))
