import json
import subprocess
import sys

import pytest

from dischelm.cli import SUBCOMMANDS, UsageError, main, parse_args


def run_cli(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_parse_defaults():
    cmd = parse_args(["check-helmholtz", "--op", "x + w"])
    assert cmd.subcommand == "check-helmholtz" and cmd.op.body.text == "x + w"
    assert cmd.sampling.seed == 0 and cmd.sampling.grids == 50


def test_parse_overrides():
    cmd = parse_args(["synthesize", "--op", "x + w", "--quad-order", "16", "--out", "c.lag"])
    assert cmd.quad_order == 16 and cmd.out == "c.lag"


def test_parse_missing_sources():
    with pytest.raises(UsageError, match="missing --op, --q0, --q1"):
        parse_args(["integrate"])
    with pytest.raises(UsageError):
        parse_args(["null-check"])
    with pytest.raises(UsageError):
        parse_args([])


def test_parse_conflicting_sources(tmp_path):
    f = tmp_path / "op.txt"
    f.write_text("role=fde\nexpr=x+w\n")
    with pytest.raises(UsageError):
        parse_args(["check-helmholtz", "--op", "x+w", "--op-file", str(f)])
    with pytest.raises(UsageError):
        parse_args(["null-check", "--l-minus", "v", "--couple-file", str(f)])


def test_every_subcommand_has_help(capsys):
    for name in SUBCOMMANDS:
        assert main([name, "--help"]) == 0
        assert "usage" in capsys.readouterr().out


def test_check_helmholtz_exit_codes(capsys):
    code, out, _ = run_cli(capsys, "check-helmholtz", "--op", "x + w")
    assert code == 0 and json.loads(out)["verdict"] == "Satisfied"
    code, out, _ = run_cli(capsys, "check-helmholtz", "--continuous", "x + sin(v)*w", "--blend", "0.5")
    assert code == 1 and json.loads(out)["verdict"] == "Violated"
    code, out, _ = run_cli(capsys, "check-selfadjoint", "--op", "x + (vm+vp)/2 + w")
    assert code == 1 and json.loads(out)["witness"] is not None


def test_null_commands(capsys):
    code, out, _ = run_cli(capsys, "null-check", "--l-minus", "v", "--l-plus", "0")
    assert code == 0 and json.loads(out)["verdict"] == "Null"
    code, out, _ = run_cli(capsys, "null-check", "--l-minus", "(x^2-v^2)/2")
    assert code == 1 and json.loads(out)["verdict"] == "NotNull"
    code, out, _ = run_cli(capsys, "null-decompose", "--l-minus", "v + 1")
    doc = json.loads(out)
    assert code == 0 and doc["verification"]["verdict"] == "Satisfied"
    assert all(row["g"] == pytest.approx(1.0) for row in doc["g"])
    code, out, _ = run_cli(capsys, "null-decompose", "--l-minus", "(x^2-v^2)/2")
    assert code == 1


def test_synthesize_and_el_residual(capsys, tmp_path):
    couple = tmp_path / "c.lag"
    code, out, _ = run_cli(capsys, "synthesize", "--op", "x + w", "--quad-order", "16", "--out", str(couple))
    assert code == 0 and json.loads(out)["verification"]["verdict"] == "Satisfied"
    assert "role=lagrangian_couple" in couple.read_text()
    code, out, _ = run_cli(capsys, "el-residual", "--couple-file", str(couple), "--op", "x + w")
    doc = json.loads(out)
    assert code == 0 and doc["first_index"] == 1
    assert len(doc["residual"]) == doc["grid"]["n"] - 1


def test_el_residual_on_grid_file(capsys, tmp_path):
    grid = tmp_path / "q.csv"
    grid.write_text("p,t,q\n0,0,0\n1,1,1\n2,2,0\n3,3,-1\n4,4,0\n")
    code, out, _ = run_cli(capsys, "el-residual", "--l-minus", "(x^2-v^2)/2", "--grid", str(grid))
    assert code == 0 and json.loads(out)["residual"] == [-1.0, 0.0, 1.0]


def test_integrate(capsys, tmp_path):
    csv = tmp_path / "traj.csv"
    code, out, _ = run_cli(capsys, "integrate", "--op", "x + w", "--q0", "1", "--q1", "1", "--steps", "20", "--out", str(csv))
    doc = json.loads(out)
    assert code == 0 and doc["status"] == "Complete"
    lines = csv.read_text().splitlines()
    assert lines[0] == "p,t,q,newton_iters" and lines[-1] == "# status=Complete"
    code, out, _ = run_cli(capsys, "integrate", "--op", "x", "--q0", "1", "--q1", "1")
    assert code == 1 and json.loads(out)["status"].startswith("FailedAtStep(p=1, DerivativeVanishes")


def test_compare(capsys):
    code, out, _ = run_cli(
        capsys, "compare", "--op", "x + w", "--continuous-b", "x + w", "--blend-b", "0.5", "--q0", "1", "--q1", "0.99"
    )
    assert code == 0 and json.loads(out)["max_deviation"] == 0.0


def test_usage_errors_exit_2(capsys):
    assert run_cli(capsys, "check-helmholtz", "--op", "x + + w")[0] == 2
    assert run_cli(capsys, "check-helmholtz", "--op", "x + v")[0] == 2
    assert run_cli(capsys, "check-helmholtz", "--op", "x", "--n-min", "2")[0] == 2
    assert run_cli(capsys, "check-helmholtz", "--bogus")[0] == 2
    assert run_cli(capsys, "integrate", "--op", "x+w", "--q0", "1", "--q1", "1", "--h", "-1")[0] == 2
    assert run_cli(capsys, "el-residual", "--l-minus", "v", "--grid", "/nonexistent.csv")[0] == 2
    code, _, err = run_cli(capsys, "integrate")
    assert code == 2 and "missing --op, --q0, --q1" in err


def test_demo(capsys):
    code, out, _ = run_cli(capsys, "demo", "--grids", "10")
    doc = json.loads(out)
    assert code == 0 and doc["all_ok"], [c for c in doc["checks"] if not c["ok"]]


@pytest.mark.parametrize(
    "argv",
    [
        ["check-helmholtz", "--continuous", "x + sin(v)*w", "--blend", "0.5", "--seed", "11"],
        ["check-selfadjoint", "--op", "x + vm*vp", "--seed", "3"],
        ["null-check", "--l-minus", "(x^2-v^2)/2", "--seed", "5"],
    ],
)
def test_fixed_seed_is_byte_identical(argv):
    runs = [
        subprocess.run([sys.executable, "-m", "dischelm", *argv], capture_output=True, check=False).stdout
        for _ in range(2)
    ]
    assert runs[0] == runs[1] and runs[0]
