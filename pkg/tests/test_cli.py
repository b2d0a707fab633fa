"""Tests for the command-line front end: modes, exit codes, trace CSV."""

import pytest

from polybnb.cli import (
    EXIT_INFEASIBLE,
    EXIT_OK,
    EXIT_PARSE,
    EXIT_SOLVER,
    main,
)

from conftest import FIXTURES

LINEAR1D = str(FIXTURES / "linear1d.gpo")
NEGSQUARE = str(FIXTURES / "negsquare.gpo")


def _run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


# ---------------------------------------------------------------------------
# solve
# ---------------------------------------------------------------------------


def test_solve_linear_fixture(capsys):
    """solve on f = x over [0,1] drives both lambda* and x to zero."""
    code, out, err = _run(
        capsys, "solve", LINEAR1D, "--k", "2", "--eta", "0.01", "--loops", "12"
    )
    assert code == EXIT_OK
    fields = dict(
        line.split(":", 1) for line in out.strip().splitlines() if ":" in line
    )
    assert abs(float(fields["lambda_star"])) <= 1e-6
    assert abs(float(fields["x"])) <= 0.01
    assert int(fields["loops"]) == 12


def test_solve_defaults_loops_to_formula(capsys):
    """Without --loops the eta-resolution formula is used and reported."""
    code, out, err = _run(capsys, "solve", LINEAR1D, "--k", "2", "--eta", "0.25")
    assert code == EXIT_OK
    assert "loops not given" in err
    assert "loops: 3" in out  # 1 * log2(1/0.25) = 2, strict bound -> 3


def test_solve_writes_trace_csv(tmp_path, capsys):
    path = tmp_path / "trace.csv"
    code, out, _ = _run(
        capsys,
        "solve", LINEAR1D, "--k", "2", "--eta", "0.01", "--loops", "7",
        "--trace", str(path),
    )
    assert code == EXIT_OK
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == (
        "m,branch_id,lambda_m,lambda_star,longest_edge,volume,"
        "center_1,f_center,ineq_violation_sum,eq_violation_sum,gap"
    )
    assert len(lines) == 1 + 7
    assert [row.split(",")[0] for row in lines[1:]] == [str(m) for m in range(1, 8)]


def test_solve_trace_reruns_are_byte_identical(tmp_path, capsys):
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    for path in (p1, p2):
        code, _, _ = _run(
            capsys,
            "solve", LINEAR1D, "--k", "2", "--eta", "0.01", "--loops", "9",
            "--trace", str(path),
        )
        assert code == EXIT_OK
    assert p1.read_bytes() == p2.read_bytes()


def test_solve_infeasible_problem_exits_3(tmp_path, capsys):
    bad = tmp_path / "empty.gpo"
    bad.write_text("vars x\nminimize x\nst 1 - x^2 >= 0\nbox 2 3\n")
    code, out, err = _run(capsys, "solve", str(bad), "--k", "2", "--loops", "3")
    assert code == EXIT_INFEASIBLE
    assert "infeasible" in err


# ---------------------------------------------------------------------------
# glb
# ---------------------------------------------------------------------------


def test_glb_reports_bound(capsys):
    """glb on f = -x^2 over [-1,1] prints the exact bound -1."""
    code, out, _ = _run(capsys, "glb", NEGSQUARE, "--k", "2")
    assert code == EXIT_OK
    fields = dict(
        line.split(":", 1) for line in out.strip().splitlines() if ":" in line
    )
    assert fields["status"].strip() == "Bound"
    assert float(fields["bound"]) == pytest.approx(-1.0, abs=1e-6)
    assert float(fields["moment_bound"]) == pytest.approx(-1.0, abs=1e-5)


def test_glb_certified_empty_box_exits_3(tmp_path, capsys):
    bad = tmp_path / "empty.gpo"
    bad.write_text("vars x\nminimize x\nst 1 - x^2 >= 0\nbox 2 3\n")
    code, out, err = _run(capsys, "glb", str(bad), "--k", "2")
    assert code == EXIT_INFEASIBLE
    assert "BoxInfeasible" in out
    assert "no feasible point" in err


def test_glb_iteration_cap_exits_2(capsys):
    """An unreachable iteration cap surfaces as a solver failure."""
    code, _, err = _run(capsys, "glb", NEGSQUARE, "--k", "2", "--max-iter", "1")
    assert code == EXIT_SOLVER
    assert "solver failure" in err


# ---------------------------------------------------------------------------
# oracle and check
# ---------------------------------------------------------------------------


def test_oracle_mode(capsys):
    code, out, _ = _run(capsys, "oracle", NEGSQUARE, "--grid", "201")
    assert code == EXIT_OK
    fields = dict(
        line.split(":", 1) for line in out.strip().splitlines() if ":" in line
    )
    assert float(fields["best_objective"]) == pytest.approx(-1.0)
    assert int(fields["feasible_points"]) == 201


def test_oracle_mode_empty(tmp_path, capsys):
    bad = tmp_path / "empty.gpo"
    bad.write_text("vars x\nminimize x\nst x - 2 >= 0\nbox 0 1\n")
    code, out, _ = _run(capsys, "oracle", str(bad), "--grid", "11")
    assert code == EXIT_OK
    assert "no feasible grid point" in out


def test_check_mode_pass(capsys):
    code, out, _ = _run(
        capsys, "check", LINEAR1D, "--point", "0.25", "--delta", "1e-6"
    )
    assert code == EXIT_OK
    assert "result: pass" in out
    assert "f: 0.25" in out


def test_check_mode_fail_reports_violations(capsys):
    code, out, err = _run(
        capsys, "check", LINEAR1D, "--point", "1.5", "--delta", "1e-6"
    )
    assert code == EXIT_OK
    assert "result: fail" in out
    assert "violated" in err


# ---------------------------------------------------------------------------
# exit codes for bad input
# ---------------------------------------------------------------------------


def test_missing_file_exits_1(capsys):
    code, _, err = _run(capsys, "glb", "no-such-file.gpo", "--k", "2")
    assert code == EXIT_PARSE
    assert "error" in err


def test_malformed_problem_exits_1(tmp_path, capsys):
    bad = tmp_path / "bad.gpo"
    bad.write_text("vars x\nminimize x +* 2\nbox 0 1\n")
    code, _, err = _run(capsys, "glb", str(bad), "--k", "2")
    assert code == EXIT_PARSE
    assert "line 2" in err


def test_unknown_flag_exits_1(capsys):
    code, _, err = _run(capsys, "glb", NEGSQUARE, "--k", "2", "--frobnicate")
    assert code == EXIT_PARSE


def test_missing_required_flag_exits_1(capsys):
    code, _, _ = _run(capsys, "glb", NEGSQUARE)
    assert code == EXIT_PARSE


def test_bad_point_syntax_exits_1(capsys):
    code, _, err = _run(capsys, "check", LINEAR1D, "--point", "a,b")
    assert code == EXIT_PARSE
    assert "comma-separated" in err


def test_missing_box_without_radius_exits_1(tmp_path, capsys):
    nobox = tmp_path / "nobox.gpo"
    nobox.write_text("vars x\nminimize x\n")
    code, _, err = _run(capsys, "glb", str(nobox), "--k", "2")
    assert code == EXIT_PARSE
    code, out, _ = _run(capsys, "glb", str(nobox), "--k", "2", "--radius", "1.0")
    assert code == EXIT_OK
    fields = dict(
        line.split(":", 1) for line in out.strip().splitlines() if ":" in line
    )
    assert float(fields["bound"]) == pytest.approx(-1.0, abs=1e-6)
