"""Command-line interface.

Every subcommand prints one JSON document (stdout, or ``--out`` where noted)
and exits with 0 on Satisfied / Null / Complete, 1 on any other verdict and
2 on usage or input errors.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import opfile
from .exprlang import CONTINUOUS_VARS, FDE_VARS, LAGRANGIAN_VARS, ExprError, parse
from .fdeop import ContinuousOp, SecondOrderOp, builtin_corpus, direct_discretize, eval_fde
from .grid import GridFn, Partition, read_csv
from .helmholtz import SamplingConfig, Verdict, check_helmholtz, check_selfadjoint
from .integrate import StepConfig, compare, max_interior_residual, run, write_trajectory_csv
from .lagrange import (
    ExprLagrangian,
    LagrangianCouple,
    NullDecompositionError,
    el_residual,
    null_check,
    null_decompose,
    synthesize,
    verify_null_decomposition,
    verify_synthesis,
)

SUBCOMMANDS = (
    "check-helmholtz",
    "check-selfadjoint",
    "synthesize",
    "el-residual",
    "null-check",
    "null-decompose",
    "integrate",
    "compare",
    "demo",
)

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


@dataclass
class Command:
    subcommand: str
    op: SecondOrderOp | None = None
    op_b: SecondOrderOp | None = None
    couple: LagrangianCouple | None = None
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    step: StepConfig = field(default_factory=StepConfig)
    quad_order: int = 32
    q0: float | None = None
    q1: float | None = None
    t0: float = 0.0
    h: float | None = None
    steps: int | None = None
    grid: str | None = None
    out: str | None = None


# --------------------------------------------------------------------------
# argument parsing


def _add_op(p: argparse.ArgumentParser, suffix: str = "", what: str = "operator"):
    g = p.add_argument_group(f"{what} source")
    g.add_argument(f"--op{suffix}", help=f"{what} P(x, vm, vp, w, t, xi) as an expression")
    g.add_argument(f"--op{suffix}-file", help=f"{what} file (role=fde, or role=continuous with blend)")
    g.add_argument(f"--continuous{suffix}", help="continuous operator O(x, v, w, t), discretised with --blend")
    g.add_argument(f"--blend{suffix}", type=float, help="velocity blend in [0, 1] for --continuous")


def _add_couple(p: argparse.ArgumentParser):
    g = p.add_argument_group("couple source")
    g.add_argument("--l-minus", help="L-(x, v, t, xi)")
    g.add_argument("--l-plus", help="L+(x, v, t, xi)")
    g.add_argument("--couple-file", help="couple file (role=lagrangian_couple)")


def _add_sampling(p: argparse.ArgumentParser):
    g = p.add_argument_group("sampling")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--grids", type=int, default=50, help="number of random grid functions")
    g.add_argument("--n-min", type=int, default=4)
    g.add_argument("--n-max", type=int, default=32)
    g.add_argument("--h", type=float, nargs="+", default=[0.05, 0.1, 0.5], help="step sizes to sample from")
    g.add_argument("--amp", type=float, default=2.0, help="grid values drawn from [-amp, amp]")
    g.add_argument("--tol-abs", type=float, default=1e-9)
    g.add_argument("--tol-rel", type=float, default=1e-9)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dischelm", description="Discrete Helmholtz analysis of finite-difference schemes.")
    sub = parser.add_subparsers(dest="subcommand", metavar="SUBCOMMAND", parser_class=_Parser)

    for name, help_ in (
        ("check-helmholtz", "sample the discrete Helmholtz condition"),
        ("check-selfadjoint", "sample self-adjointness of the Frechet derivative"),
    ):
        p = sub.add_parser(name, help=help_)
        _add_op(p)
        _add_sampling(p)
        p.add_argument("--out", help="write the JSON report here instead of stdout")

    p = sub.add_parser("synthesize", help="build a Lagrangian couple for an operator and verify it")
    _add_op(p)
    _add_sampling(p)
    p.add_argument("--quad-order", type=int, default=32)
    p.add_argument("--out", help="write the couple file here")

    p = sub.add_parser("el-residual", help="Euler-Lagrange residual of a couple on a grid")
    _add_couple(p)
    _add_op(p)
    _add_sampling(p)
    p.add_argument("--grid", help="grid CSV (p,t,q); default: first sampled grid")
    p.add_argument("--out")

    for name, help_ in (
        ("null-check", "test whether every grid function solves the couple's EL equation"),
        ("null-decompose", "write a null couple as a discrete total difference plus a time term"),
    ):
        p = sub.add_parser(name, help=help_)
        _add_couple(p)
        _add_sampling(p)
        p.add_argument("--out")

    p = sub.add_parser("integrate", help="run the scheme as an implicit stepper")
    _add_op(p)
    _add_stepping(p)
    p.add_argument("--out", help="trajectory CSV (p,t,q,newton_iters)")

    p = sub.add_parser("compare", help="run two schemes from the same data and report deviations")
    _add_op(p, what="first operator")
    _add_op(p, "-b", what="second operator")
    _add_stepping(p)
    p.add_argument("--out")

    p = sub.add_parser("demo", help="run the built-in worked examples end to end")
    _add_sampling(p)
    p.add_argument("--out")
    return parser


def _add_stepping(p: argparse.ArgumentParser):
    g = p.add_argument_group("stepping")
    g.add_argument("--q0", type=float)
    g.add_argument("--q1", type=float)
    g.add_argument("--t0", type=float, default=0.0)
    g.add_argument("--h", type=float, default=0.1)
    g.add_argument("--steps", type=int, default=100, help="number of steps n")
    g.add_argument("--newton-tol", type=float, default=1e-12)
    g.add_argument("--max-iter", type=int, default=50)


def _resolve_op(ns, suffix: str = "") -> SecondOrderOp | None:
    key = suffix.replace("-", "_")
    text = getattr(ns, f"op{key}", None)
    path = getattr(ns, f"op{key}_file", None)
    cont = getattr(ns, f"continuous{key}", None)
    blend = getattr(ns, f"blend{key}", None)
    given = [n for n, v in ((f"--op{suffix}", text), (f"--op{suffix}-file", path), (f"--continuous{suffix}", cont)) if v]
    if len(given) > 1:
        raise UsageError(f"conflicting operator sources: {', '.join(given)}")
    if blend is not None and not cont and not path:
        raise UsageError(f"--blend{suffix} needs --continuous{suffix}")
    if text:
        return SecondOrderOp(parse(text, FDE_VARS))
    if cont:
        if blend is None:
            raise UsageError(f"--continuous{suffix} needs --blend{suffix}")
        return direct_discretize(ContinuousOp(parse(cont, CONTINUOUS_VARS)), blend)
    if path:
        obj = opfile.load(path)
        if isinstance(obj, ContinuousOp):
            if blend is None:
                raise UsageError(f"{path} holds a continuous operator; pass --blend{suffix}")
            obj = direct_discretize(obj, blend)
        if not isinstance(obj, SecondOrderOp):
            raise UsageError(f"{path} does not describe a finite-difference operator")
        return obj
    return None


def _resolve_couple(ns) -> LagrangianCouple | None:
    inline = ns.l_minus is not None or ns.l_plus is not None
    if inline and ns.couple_file:
        raise UsageError("conflicting couple sources: --l-minus/--l-plus and --couple-file")
    if inline:
        return LagrangianCouple(
            ExprLagrangian(parse(ns.l_minus or "0", LAGRANGIAN_VARS)),
            ExprLagrangian(parse(ns.l_plus or "0", LAGRANGIAN_VARS)),
        )
    if ns.couple_file:
        obj = opfile.load(ns.couple_file)
        if not isinstance(obj, LagrangianCouple):
            raise UsageError(f"{ns.couple_file} does not describe a Lagrangian couple")
        return obj
    return None


def parse_args(argv: Sequence[str]) -> Command:
    """Validate ``argv`` into a :class:`Command`; raises UsageError (or ExprError for bad expressions)."""
    ns = build_parser().parse_args(list(argv))
    if ns.subcommand is None:
        raise UsageError("missing subcommand; choose from " + ", ".join(SUBCOMMANDS))
    cmd = Command(ns.subcommand, out=getattr(ns, "out", None))
    if hasattr(ns, "seed"):
        try:
            cmd.sampling = SamplingConfig(
                seed=ns.seed,
                grids=ns.grids,
                n_range=(ns.n_min, ns.n_max),
                h_set=tuple(ns.h),
                q_amplitude=ns.amp,
                tol_abs=ns.tol_abs,
                tol_rel=ns.tol_rel,
            )
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    if hasattr(ns, "op"):
        cmd.op = _resolve_op(ns)
    if hasattr(ns, "op_b"):
        cmd.op_b = _resolve_op(ns, "-b")
    if hasattr(ns, "l_minus"):
        cmd.couple = _resolve_couple(ns)
    if hasattr(ns, "quad_order"):
        if ns.quad_order < 1:
            raise UsageError("--quad-order must be >= 1")
        cmd.quad_order = ns.quad_order
    if hasattr(ns, "grid"):
        cmd.grid = ns.grid
    if hasattr(ns, "q0"):
        try:
            cmd.step = StepConfig(ns.newton_tol, ns.max_iter)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        cmd.q0, cmd.q1, cmd.t0, cmd.h, cmd.steps = ns.q0, ns.q1, ns.t0, ns.h, ns.steps

    missing = []
    needs_op = cmd.subcommand in ("check-helmholtz", "check-selfadjoint", "synthesize", "integrate", "compare")
    if needs_op and cmd.op is None:
        missing.append("--op")
    if cmd.subcommand == "compare" and cmd.op_b is None:
        missing.append("--op-b")
    if cmd.subcommand in ("el-residual", "null-check", "null-decompose") and cmd.couple is None:
        missing.append("--l-minus/--l-plus or --couple-file")
    if cmd.subcommand in ("integrate", "compare"):
        missing += [f for f, v in (("--q0", cmd.q0), ("--q1", cmd.q1)) if v is None]
    if missing:
        raise UsageError(f"{cmd.subcommand}: missing {', '.join(missing)}")
    if cmd.subcommand in ("integrate", "compare"):
        try:
            Partition(cmd.t0, cmd.h, cmd.steps)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    return cmd


# --------------------------------------------------------------------------
# execution


def _emit(doc: dict, out: str | None):
    text = json.dumps(doc, indent=2) + "\n"
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _code(verdict: Verdict) -> int:
    return EXIT_OK if verdict.passed else EXIT_FAIL


def _first_grid(cfg: SamplingConfig) -> GridFn:
    return next(cfg.draws())


def _grid_doc(q: GridFn) -> dict:
    return {"t0": q.partition.t0, "h": q.h, "n": q.n, "q": q.values.tolist()}


def _run_check(cmd: Command):
    fn = check_helmholtz if cmd.subcommand == "check-helmholtz" else check_selfadjoint
    r = fn(cmd.op, cmd.sampling)
    _emit(r.to_dict(), cmd.out)
    return _code(r.verdict)


def _run_synthesize(cmd: Command):
    c = synthesize(cmd.op, cmd.quad_order)
    r = verify_synthesis(cmd.op, c, cmd.sampling)
    if cmd.out:
        opfile.save(c, cmd.out)
    doc = {"operator": cmd.op.body.text, "quad_order": cmd.quad_order, "anchors": [0.0, 0.0]}
    doc["verification"] = r.to_dict()
    _emit(doc, None)
    return _code(r.verdict)


def _run_el_residual(cmd: Command):
    q = read_csv(cmd.grid) if cmd.grid else _first_grid(cmd.sampling)
    res = el_residual(cmd.couple, q)
    doc = {"grid": _grid_doc(q), "first_index": res.first, "residual": res.values.tolist()}
    code = EXIT_OK
    if cmd.op is not None:
        doc["scheme"] = eval_fde(cmd.op, q).values.tolist()
        r = verify_synthesis(cmd.op, cmd.couple, cmd.sampling)
        doc["verification"] = r.to_dict()
        code = _code(r.verdict)
    _emit(doc, cmd.out)
    return code


def _run_null_check(cmd: Command):
    r = null_check(cmd.couple, cmd.sampling)
    _emit(r.to_dict(), cmd.out)
    return _code(r.verdict)


def _run_null_decompose(cmd: Command):
    try:
        d = null_decompose(cmd.couple, cmd.sampling.tol_abs, cmd.sampling.tol_rel)
    except NullDecompositionError as exc:
        _emit({"verdict": Verdict.NotNull.value, "error": str(exc)}, cmd.out)
        return EXIT_FAIL
    r = verify_null_decomposition(cmd.couple, d, cmd.sampling)
    table_f = [
        {"x": x, "t": t, "xi": xi, "f": float(d.f(x, t, xi))} for x in (-1.0, 0.0, 1.0, 2.0) for t, xi in ((0.0, 0.1), (1.0, 0.5))
    ]
    table_g = [{"t": t, "xi": xi, "g": float(d.g(t, xi))} for t, xi in ((0.0, 0.1), (1.0, 0.1), (1.0, 0.5))]
    doc = {"residual_bound": d.residual_bound, "f": table_f, "g": table_g, "verification": r.to_dict()}
    _emit(doc, cmd.out)
    return _code(r.verdict)


def _run_integrate(cmd: Command):
    part = Partition(cmd.t0, cmd.h, cmd.steps)
    tr = run(cmd.op, cmd.q0, cmd.q1, part, cmd.step)
    if cmd.out:
        write_trajectory_csv(tr, cmd.out)
    reached = tr.values.values[np.isfinite(tr.values.values)]
    doc = {
        "status": str(tr.status),
        "steps": part.n,
        "final_q": float(reached[-1]),
        "max_abs_q": float(np.abs(reached).max()),
        "newton_iters_total": int(tr.newton_iters.sum()),
        "max_residual": max_interior_residual(cmd.op, tr) if tr.complete else None,
    }
    _emit(doc, None)
    return EXIT_OK if tr.complete else EXIT_FAIL


def _run_compare(cmd: Command):
    part = Partition(cmd.t0, cmd.h, cmd.steps)
    c = compare(cmd.op, cmd.op_b, cmd.q0, cmd.q1, part, cmd.step)
    doc = {"operator_a": cmd.op.body.text, "operator_b": cmd.op_b.body.text, **c.to_dict()}
    _emit(doc, cmd.out)
    return EXIT_OK if c.status_a.complete and c.status_b.complete else EXIT_FAIL


def _run_demo(cmd: Command):
    cfg = cmd.sampling
    checks = []

    def record(name, got, expected):
        checks.append({"example": name, "result": got, "expected": expected, "ok": got == expected})

    corpus = {e.name: e for e in builtin_corpus()}
    for e in corpus.values():
        want = "Satisfied" if e.variational else "Violated"
        record(f"helmholtz {e.name}: {e.op.body.text}", check_helmholtz(e.op, cfg).verdict.value, want)

    # friction scheme and the continuous operator it comes from
    fr = direct_discretize(ContinuousOp(parse("x+v+w", CONTINUOUS_VARS)), 0.5)
    record("friction scheme from x+v+w at blend 1/2", check_helmholtz(fr, cfg).verdict.value, "Violated")

    # the kinetic-minus-potential couple generates the oscillator scheme
    osc = corpus["oscillator"].op
    kin = LagrangianCouple.from_text("(x^2 - v^2)/2", "0")
    record("EL of (x^2-v^2)/2 reproduces x + w", verify_synthesis(osc, kin, cfg).verdict.value, "Satisfied")
    syn = synthesize(osc)
    record("synthesized couple for x + w", verify_synthesis(osc, syn, cfg).verdict.value, "Satisfied")
    record("difference of the two couples is null", null_check(kin - syn, cfg).verdict.value, "Null")

    part = Partition(0.0, 0.1, 50)
    direct = direct_discretize(ContinuousOp(parse("x+w", CONTINUOUS_VARS)), 0.5)
    dev = compare(osc, direct, 1.0, math.cos(0.1), part).max_deviation
    record("variational scheme equals direct discretisation of x+w", dev, 0.0)

    doc = {"checks": checks, "all_ok": all(c["ok"] for c in checks)}
    _emit(doc, cmd.out)
    return EXIT_OK if doc["all_ok"] else EXIT_FAIL


_HANDLERS = {
    "check-helmholtz": _run_check,
    "check-selfadjoint": _run_check,
    "synthesize": _run_synthesize,
    "el-residual": _run_el_residual,
    "null-check": _run_null_check,
    "null-decompose": _run_null_decompose,
    "integrate": _run_integrate,
    "compare": _run_compare,
    "demo": _run_demo,
}


def execute(cmd: Command) -> int:
    try:
        return _HANDLERS[cmd.subcommand](cmd)
    except (ExprError, ValueError, OSError) as exc:
        print(f"dischelm {cmd.subcommand}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main(argv: Sequence[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        cmd = parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ExprError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    return execute(cmd)


if __name__ == "__main__":
    sys.exit(main())
