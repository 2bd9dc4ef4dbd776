"""Scalar expression language.

Grammar::

    expr   := term (("+" | "-") term)*
    term   := factor (("*" | "/") factor)*
    factor := ("-")? power
    power  := atom ("^" integer)?
    atom   := number | ident | ident "(" expr ")" | "(" expr ")"

Expressions are parsed into an immutable tree of dataclass nodes and can be
evaluated with floats, :class:`~dischelm.dual.Dual` or
:class:`~dischelm.dual.HyperDual` bindings.  For batched evaluation over many
points the tree is flattened into a :class:`Tape` (see :mod:`dischelm.kernels`).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence, Union

import numpy as np

from .dual import FUNCTIONS, Dual, HyperDual, is_differentiating, real_part

# Variable vocabularies per role.
FDE_VARS = ("x", "vm", "vp", "w", "t", "xi")
CONTINUOUS_VARS = ("x", "v", "w", "t")
LAGRANGIAN_VARS = ("x", "v", "t", "xi")

ROLES = {
    "fde": FDE_VARS,
    "continuous": CONTINUOUS_VARS,
    "lagrangian": LAGRANGIAN_VARS,
}


class ExprError(ValueError):
    """Base class for expression errors."""


class ParseError(ExprError):
    def __init__(self, message: str, position: int, token_index: int, expected: Sequence[str] = ()):
        self.position = position
        self.token_index = token_index
        self.expected = tuple(expected)
        super().__init__(message)


class UnknownVariableError(ParseError):
    pass


class UnknownFunctionError(ParseError):
    pass


class MissingBindingError(ExprError):
    pass


class DomainError(ExprError):
    """Evaluation left the domain of an operation.

    ``node`` is the offending subexpression; ``index`` is filled in by
    callers evaluating over a grid (point or grid index).
    """

    def __init__(self, node: "Node", reason: str, index: int | None = None):
        self.node = node
        self.reason = reason
        self.index = index
        super().__init__(self._message())

    def _message(self) -> str:
        where = f" at index {self.index}" if self.index is not None else ""
        return f"{self.reason} in '{to_text(self.node)}'{where}"

    def at(self, index: int) -> "DomainError":
        return DomainError(self.node, self.reason, index)


# --------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * /
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Pow:
    base: "Node"
    exponent: int


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Node"


Node = Union[Const, Var, Neg, BinOp, Pow, Call]


def Add(a: Node, b: Node) -> BinOp:
    return BinOp("+", a, b)


def Sub(a: Node, b: Node) -> BinOp:
    return BinOp("-", a, b)


def Mul(a: Node, b: Node) -> BinOp:
    return BinOp("*", a, b)


def Div(a: Node, b: Node) -> BinOp:
    return BinOp("/", a, b)


def _walk(node: Node):
    yield node
    match node:
        case Neg(arg) | Pow(arg, _) | Call(_, arg):
            yield from _walk(arg)
        case BinOp(_, left, right):
            yield from _walk(left)
            yield from _walk(right)


def _free_vars(node: Node) -> tuple[str, ...]:
    seen: dict[str, None] = {}
    for n in _walk(node):
        if isinstance(n, Var):
            seen.setdefault(n.name)
    return tuple(seen)


@dataclass(frozen=True)
class Expr:
    """Parsed expression: the tree plus its variables in order of appearance."""

    root: Node
    free_vars: tuple[str, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "free_vars", _free_vars(self.root))

    def __str__(self) -> str:
        return to_text(self.root)

    @property
    def text(self) -> str:
        return to_text(self.root)

    def depends_on(self, name: str) -> bool:
        return name in self.free_vars

    @cached_property
    def _tapes(self) -> dict:
        return {}

    def tape(self, variables: Sequence[str]) -> "Tape":
        key = tuple(variables)
        if key not in self._tapes:
            self._tapes[key] = compile_tape(self, key)
        return self._tapes[key]


# --------------------------------------------------------------------------
# Tokenizer / parser

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[a-z][a-z0-9_]*)
  | (?P<op>[-+*/^()])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Token:
    kind: str  # number | ident | op | end
    text: str
    pos: int
    index: int  # 1-based

    def describe(self) -> str:
        return "end of input" if self.kind == "end" else repr(self.text)


def _tokenize(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(
                f"syntax error at position {pos}: unexpected character {text[pos]!r}",
                pos,
                len(tokens) + 1,
            )
        kind = m.lastgroup
        if kind != "ws":
            tokens.append(_Token(kind, m.group(), pos, len(tokens) + 1))
        pos = m.end()
    tokens.append(_Token("end", "", len(text), len(tokens) + 1))
    return tokens


_ATOM_START = ("number", "identifier", "'('")


class _Parser:
    def __init__(self, text: str, variables: Iterable[str] | None):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0
        self.variables = None if variables is None else frozenset(variables)

    @property
    def tok(self) -> _Token:
        return self.tokens[self.i]

    def _advance(self) -> _Token:
        t = self.tokens[self.i]
        self.i += 1
        return t

    def _fail(self, expected: Sequence[str]):
        t = self.tok
        raise ParseError(
            f"syntax error at token {t.index} ({t.describe()}, position {t.pos}): "
            f"expected {' or '.join(expected)}",
            t.pos,
            t.index,
            expected,
        )

    def _is_op(self, *ops: str) -> bool:
        return self.tok.kind == "op" and self.tok.text in ops

    def parse(self) -> Node:
        node = self.expr()
        if self.tok.kind != "end":
            self._fail(["operator", "end of input"])
        return node

    def expr(self) -> Node:
        node = self.term()
        while self._is_op("+", "-"):
            op = self._advance().text
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.factor()
        while self._is_op("*", "/"):
            op = self._advance().text
            node = BinOp(op, node, self.factor())
        return node

    def factor(self) -> Node:
        if self._is_op("-"):
            self._advance()
            return Neg(self.power())
        return self.power(allow_minus=True)

    def power(self, allow_minus: bool = False) -> Node:
        base = self.atom(allow_minus)
        if self._is_op("^"):
            self._advance()
            t = self.tok
            if t.kind != "number" or not t.text.isdigit():
                self._fail(["non-negative integer exponent"])
            self._advance()
            return Pow(base, int(t.text))
        return base

    def atom(self, allow_minus: bool = False) -> Node:
        t = self.tok
        if t.kind == "number":
            self._advance()
            value = float(t.text)
            if not math.isfinite(value):
                raise ParseError(f"number {t.text!r} overflows", t.pos, t.index)
            return Const(value)
        if t.kind == "ident":
            self._advance()
            if self._is_op("("):
                if t.text not in FUNCTIONS:
                    hint = " (non-differentiable, not supported)" if t.text == "abs" else ""
                    raise UnknownFunctionError(
                        f"unknown function {t.text!r}{hint} at position {t.pos}",
                        t.pos,
                        t.index,
                    )
                self._advance()
                arg = self.expr()
                if not self._is_op(")"):
                    self._fail(["')'"])
                self._advance()
                return Call(t.text, arg)
            if t.text in FUNCTIONS:
                raise ParseError(
                    f"function {t.text!r} used without argument at position {t.pos}",
                    t.pos,
                    t.index,
                    ["'('"],
                )
            if self.variables is not None and t.text not in self.variables:
                allowed = ", ".join(sorted(self.variables))
                raise UnknownVariableError(
                    f"unknown variable {t.text!r} at position {t.pos} (allowed: {allowed})",
                    t.pos,
                    t.index,
                )
            return Var(t.text)
        if self._is_op("("):
            self._advance()
            node = self.expr()
            if not self._is_op(")"):
                self._fail(["')'"])
            self._advance()
            return node
        self._fail((["'-'"] if allow_minus else []) + list(_ATOM_START))


def parse(text: str, variables: Iterable[str] | str | None = None) -> Expr:
    """Parse ``text`` into an :class:`Expr`.

    ``variables`` restricts the identifiers that may appear; it is either an
    iterable of names or a role name from :data:`ROLES`.  ``None`` accepts
    any identifier as a variable.
    """
    if isinstance(variables, str):
        variables = ROLES[variables]
    return Expr(_Parser(text, variables).parse())


# --------------------------------------------------------------------------
# Printer

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def _prec(node: Node) -> int:
    match node:
        case BinOp(op, _, _):
            return _PREC[op]
        case Neg():
            return 3
        case Pow():
            return 4
        case _:
            return 5


def _fmt_number(v: float) -> str:
    s = repr(float(v))
    if s.endswith(".0"):
        s = s[:-2]
    return s


def to_text(node: Node | Expr) -> str:
    """Render with the minimum parentheses needed to reparse the same tree."""
    if isinstance(node, Expr):
        node = node.root
    match node:
        case Const(value):
            s = _fmt_number(value)
            return f"({s})" if value < 0 or s.startswith("-") else s
        case Var(name):
            return name
        case Neg(arg):
            inner = to_text(arg)
            return f"-({inner})" if _prec(arg) < 4 else f"-{inner}"
        case Pow(base, k):
            inner = to_text(base)
            return f"({inner})^{k}" if _prec(base) < 5 else f"{inner}^{k}"
        case Call(func, arg):
            return f"{func}({to_text(arg)})"
        case BinOp(op, left, right):
            p = _PREC[op]
            ls = to_text(left)
            rs = to_text(right)
            if _prec(left) < p:
                ls = f"({ls})"
            if _prec(right) <= p:
                rs = f"({rs})"
            sep = " " if p == 1 else ""
            return f"{ls}{sep}{op}{sep}{rs}"
    raise TypeError(f"not an expression node: {node!r}")


# --------------------------------------------------------------------------
# Substitution


def substitute(expr: Expr | Node, mapping: Mapping[str, Node | float]) -> Expr:
    """Replace variables by subtrees (or constants)."""
    repl = {k: (Const(float(v)) if isinstance(v, (int, float)) else v) for k, v in mapping.items()}

    def go(node: Node) -> Node:
        match node:
            case Var(name):
                return repl.get(name, node)
            case Const():
                return node
            case Neg(arg):
                return Neg(go(arg))
            case Pow(base, k):
                return Pow(go(base), k)
            case Call(func, arg):
                return Call(func, go(arg))
            case BinOp(op, left, right):
                return BinOp(op, go(left), go(right))
        raise TypeError(node)

    root = expr.root if isinstance(expr, Expr) else expr
    return Expr(go(root))


# --------------------------------------------------------------------------
# Scalar evaluation (float / Dual / HyperDual)


def _apply_function(node: Call, a):
    f, d1, d2 = FUNCTIONS[node.func]
    av = real_part(a)
    if node.func == "log" and av <= 0.0:
        raise DomainError(node, "log of non-positive value")
    if node.func == "sqrt" and (av < 0.0 or (av == 0.0 and is_differentiating(a))):
        raise DomainError(node, "sqrt of negative value" if av < 0 else "sqrt not differentiable at 0")
    try:
        if is_differentiating(a):
            return a.chain(f, d1, d2)
        return f(a)
    except (OverflowError, ValueError) as exc:
        raise DomainError(node, f"{node.func} failed ({exc})") from None


def _evaluate(node: Node, env: Mapping[str, object]):
    match node:
        case Const(value):
            out = value
        case Var(name):
            try:
                return env[name]
            except KeyError:
                raise MissingBindingError(f"no binding for variable {name!r}") from None
        case Neg(arg):
            out = -_evaluate(arg, env)
        case BinOp(op, left, right):
            a = _evaluate(left, env)
            b = _evaluate(right, env)
            if op == "+":
                out = a + b
            elif op == "-":
                out = a - b
            elif op == "*":
                out = a * b
            else:
                if real_part(b) == 0.0:
                    raise DomainError(node, "division by zero")
                out = a / b
        case Pow(base, k):
            a = _evaluate(base, env)
            try:
                out = a.powi(k) if is_differentiating(a) else float(a) ** k
            except OverflowError:
                raise DomainError(node, "overflow in power") from None
        case Call():
            out = _apply_function(node, _evaluate(node.arg, env))
        case _:
            raise TypeError(f"not an expression node: {node!r}")
    if not math.isfinite(real_part(out)):
        raise DomainError(node, "non-finite result")
    return out


def evaluate(e: Expr, bindings: Mapping[str, object]):
    """Evaluate with arbitrary number-like bindings (float, Dual, HyperDual)."""
    missing = [v for v in e.free_vars if v not in bindings]
    if missing:
        raise MissingBindingError(f"no binding for variable(s) {', '.join(missing)}")
    return _evaluate(e.root, bindings)


def eval(e: Expr, bindings: Mapping[str, float]) -> float:  # noqa: A001 - mirrors the operation name
    """IEEE double value of ``e`` at ``bindings``."""
    return float(evaluate(e, {k: float(v) for k, v in bindings.items()}))


def eval_grad(e: Expr, bindings: Mapping[str, float], wrt: Sequence[str]) -> tuple[float, np.ndarray]:
    """Value and exact first partials with respect to ``wrt``."""
    unknown = [n for n in wrt if n not in e.free_vars]
    if unknown:
        raise ValueError(f"cannot differentiate with respect to {unknown}: not free in '{e}'")
    env: dict[str, object] = {k: float(v) for k, v in bindings.items()}
    missing = [v for v in e.free_vars if v not in env]
    if missing:
        raise MissingBindingError(f"no binding for variable(s) {', '.join(missing)}")
    for i, name in enumerate(wrt):
        env[name] = Dual.variable(env[name], i, len(wrt))
    out = evaluate(e, env)
    if isinstance(out, Dual):
        return out.value, out.partials.copy()
    return float(out), np.zeros(len(wrt))


def eval_mixed2(e: Expr, bindings: Mapping[str, float], a: str, b: str) -> float:
    """Mixed second partial d^2 e / da db via hyper-dual arithmetic.

    Variables not free in ``e`` contribute zero.  The seeding order is
    canonical, so ``eval_mixed2(e, ., a, b) == eval_mixed2(e, ., b, a)``
    bit for bit.
    """
    a, b = sorted((a, b))
    env: dict[str, object] = {k: float(v) for k, v in bindings.items()}
    if a not in e.free_vars or b not in e.free_vars:
        evaluate(e, env)  # still surface missing bindings / domain errors
        return 0.0
    if a == b:
        env[a] = HyperDual(env[a], 1.0, 1.0, 0.0)
    else:
        env[a] = HyperDual(env[a], 1.0, 0.0, 0.0)
        env[b] = HyperDual(env[b], 0.0, 1.0, 0.0)
    out = evaluate(e, env)
    return out.e12 if isinstance(out, HyperDual) else 0.0


# --------------------------------------------------------------------------
# Tape compilation

OP_CONST, OP_VAR, OP_ADD, OP_SUB, OP_MUL, OP_DIV, OP_NEG, OP_POWI = range(8)
OP_SIN, OP_COS, OP_TAN, OP_EXP, OP_LOG, OP_SQRT, OP_TANH = range(8, 15)

_BINARY = {"+": OP_ADD, "-": OP_SUB, "*": OP_MUL, "/": OP_DIV}
_UNARY = {
    "sin": OP_SIN,
    "cos": OP_COS,
    "tan": OP_TAN,
    "exp": OP_EXP,
    "log": OP_LOG,
    "sqrt": OP_SQRT,
    "tanh": OP_TANH,
}


@dataclass(frozen=True, eq=False)
class Tape:
    """Post-order instruction list; instruction ``i`` writes slot ``i``.

    ``code[i] = (opcode, a, b)`` where ``a``/``b`` are slot indices for
    operators, the constant index for CONST, the variable index for VAR and
    the exponent (in ``b``) for POWI.
    """

    code: np.ndarray  # int32 (ninstr, 3)
    consts: np.ndarray  # float64
    variables: tuple[str, ...]
    nodes: tuple[Node, ...]

    def __len__(self) -> int:
        return len(self.code)


def compile_tape(e: Expr, variables: Sequence[str]) -> Tape:
    index = {name: i for i, name in enumerate(variables)}
    missing = [v for v in e.free_vars if v not in index]
    if missing:
        raise MissingBindingError(f"variables {missing} not in tape variable list {tuple(variables)}")
    code: list[tuple[int, int, int]] = []
    consts: list[float] = []
    nodes: list[Node] = []

    def emit(op: int, a: int, b: int, node: Node) -> int:
        code.append((op, a, b))
        nodes.append(node)
        return len(code) - 1

    def go(node: Node) -> int:
        match node:
            case Const(value):
                consts.append(value)
                return emit(OP_CONST, len(consts) - 1, 0, node)
            case Var(name):
                return emit(OP_VAR, index[name], 0, node)
            case Neg(arg):
                return emit(OP_NEG, go(arg), 0, node)
            case Pow(base, k):
                return emit(OP_POWI, go(base), k, node)
            case Call(func, arg):
                return emit(_UNARY[func], go(arg), 0, node)
            case BinOp(op, left, right):
                a = go(left)
                b = go(right)
                return emit(_BINARY[op], a, b, node)
        raise TypeError(node)

    go(e.root)
    return Tape(
        np.asarray(code, dtype=np.int32).reshape(-1, 3),
        np.asarray(consts, dtype=float),
        tuple(variables),
        tuple(nodes),
    )
