from __future__ import annotations

import json
from io import StringIO

import pytest
from hypothesis import given, settings

from helpers import CORPUS, programs
from ownlab.cli import EXIT_DIAGNOSTICS, EXIT_LIMIT, EXIT_OK, EXIT_UB, EXIT_USAGE, main, parse_marks
from ownlab.lang import InstrId, pretty_print


def cli(*argv: str) -> tuple[int, str, str]:
    out, err = StringIO(), StringIO()
    code = main([str(a) for a in argv], out=out, err=err)
    return code, out.getvalue(), err.getvalue()


def records(text: str) -> list[dict]:
    return [json.loads(line) for line in text.splitlines() if line.strip()]


def test_check_reports_both_groups():
    code, out, _ = cli("check", CORPUS["loan_conflict"])
    assert code == EXIT_DIAGNOSTICS
    assert "polonius: 1 error" in out and "perms: 1 error" in out
    assert "error[BorrowConflict/WriteInvalid] main[2]" in out
    assert "error[permission/W] main[2]" in out


def test_check_accepts_a_clean_program():
    code, out, _ = cli("check", CORPUS["copy_only"])
    assert code == EXIT_OK
    assert out.count(": ok") == 2


def test_check_single_model():
    code, out, _ = cli("check", "--model", "polonius", CORPUS["id_missing_outlives"])
    assert code == EXIT_DIAGNOSTICS
    assert "LifetimeConflict" in out and "perms" not in out


def test_run_refuses_a_rejected_program_with_a_hint():
    code, out, err = cli("run", CORPUS["use_after_free"])
    assert code == EXIT_DIAGNOSTICS
    assert "--ignore-borrowck" in err
    assert "MoveConflict" in out


def test_run_counterfactually_reports_ub():
    code, out, _ = cli("run", "--ignore-borrowck", CORPUS["use_after_free"])
    assert code == EXIT_UB
    assert "UseAfterFree" in out


def test_run_prints_the_value():
    code, out, _ = cli("run", CORPUS["trivial"])
    assert code == EXIT_OK
    assert "terminated with" in out


def test_step_limit_exit_status():
    code, out, _ = cli("run", "--max-steps", "3", CORPUS["loop_once"])
    assert code == EXIT_LIMIT
    assert "step limit exceeded" in out


@pytest.mark.parametrize("argv", [
    ["check", "--ignore-borrowck", "x.own"],
    ["run", "--max-steps", "-1", "x.own"],
    ["check", "--model", "nope", "x.own"],
    ["frobnicate"],
    [],
])
def test_usage_errors(argv):
    code, _, _ = cli(*argv)
    assert code == EXIT_USAGE


def test_bad_trace_mark_is_a_usage_error():
    code, _, err = cli("trace", CORPUS["trivial"], "--marks", "0,zz")
    assert code == EXIT_USAGE and "bad mark" in err


def test_parse_marks():
    assert parse_marks("1, f[2]", "main") == [InstrId("main", 1), InstrId("f", 2)]
    assert parse_marks(None, "main") == []


def test_parse_and_type_errors(tmp_path):
    bad = tmp_path / "bad.own"
    bad.write_text("fn main( {", encoding="utf-8")
    code, _, err = cli("check", bad)
    assert code == EXIT_DIAGNOSTICS and "parse error" in err
    ill = tmp_path / "ill.own"
    ill.write_text("fn main() { let x: u32; 0: x = true; 1: return x; }", encoding="utf-8")
    code, _, err = cli("check", ill)
    assert code == EXIT_DIAGNOSTICS and "type error" in err


def test_missing_file(tmp_path):
    code, _, err = cli("check", tmp_path / "nothing.own")
    assert code == EXIT_DIAGNOSTICS and "cannot read" in err


def test_records_carry_the_schema():
    code, out, _ = cli("check", "--format", "records", CORPUS["move_conflict"])
    assert code == EXIT_DIAGNOSTICS
    recs = records(out)
    assert {r["model"] for r in recs} == {"polonius", "perms"}
    assert all(r["schema"] == 1 for r in recs)


def test_run_records_end_with_the_outcome():
    code, out, _ = cli("run", "--format", "records", CORPUS["trivial"])
    recs = records(out)
    assert code == EXIT_OK
    assert recs[-1]["kind"] == "outcome" and recs[-1]["outcome"] == "Terminated"
    assert all(r["schema"] == 1 for r in recs)


def test_no_color_when_not_a_tty(monkeypatch):
    monkeypatch.delenv("NO_COLOR", raising=False)
    _, out, _ = cli("trace", "--ignore-borrowck", CORPUS["use_after_free"])
    assert "\x1b[" not in out


def test_no_color_env_wins_over_a_tty(monkeypatch):
    class Tty(StringIO):
        def isatty(self) -> bool:
            return True

    monkeypatch.delenv("NO_COLOR", raising=False)
    out = Tty()
    main(["perms", str(CORPUS["loan_conflict"])], out=out, err=StringIO())
    assert "\x1b[" in out.getvalue()
    monkeypatch.setenv("NO_COLOR", "1")
    out = Tty()
    main(["perms", str(CORPUS["loan_conflict"])], out=out, err=StringIO())
    assert "\x1b[" not in out.getvalue()


def test_trace_of_use_after_free():
    code, out, _ = cli("trace", "--ignore-borrowck", CORPUS["use_after_free"])
    assert code == EXIT_UB
    assert "κ0" in out and "UseAfterFree" in out


def test_trace_records():
    code, out, _ = cli("trace", "--format", "records", "--marks", "1", CORPUS["box_borrow"])
    recs = records(out)
    assert code == EXIT_OK
    assert [r["kind"] for r in recs] == ["snapshot", "outcome"]


def test_perms_table_and_listing():
    code, out, _ = cli("perms", CORPUS["box_borrow"])
    assert code == EXIT_OK
    assert "main" in out and "0:" in out


def test_perms_records_and_function_filter():
    code, out, _ = cli("perms", "--format", "records", "--function", "bump", CORPUS["unique_reborrow"])
    recs = records(out)
    assert code == EXIT_OK and recs
    assert all(r.get("function", "bump") == "bump" for r in recs if "function" in r)
    code, _, err = cli("perms", "--function", "nope", CORPUS["trivial"])
    assert code == EXIT_USAGE and "no function named nope" in err


def test_render_writes_every_format(tmp_path):
    code, out, _ = cli("render", "--out-dir", tmp_path, CORPUS["use_after_free"])
    assert code == EXIT_OK
    names = sorted(p.name for p in tmp_path.iterdir())
    for kind in ("memory", "perms", "listing"):
        for ext in ("txt", "svg", "html"):
            assert f"use_after_free.{kind}.{ext}" in names
    assert out.count("wrote ") == 9


def test_render_to_stdout_with_one_diagram():
    code, out, _ = cli("render", "--diagram", "listing", CORPUS["loan_conflict"])
    assert code == EXIT_OK
    assert "x.0 = 1" in out


def test_render_out_dir_must_exist(tmp_path):
    code, _, _ = cli("render", "--out-dir", tmp_path / "missing", CORPUS["trivial"])
    assert code == EXIT_USAGE


def test_fuzz_writes_a_report(tmp_path):
    code, out, _ = cli("fuzz", "--count", "20", "--seed", "3", "--out-dir", tmp_path)
    assert code == EXIT_OK
    recs = records((tmp_path / "report.jsonl").read_text(encoding="utf-8"))
    assert recs and all(r["schema"] == 1 for r in recs)
    assert "20" in out


def test_fuzz_records_and_soundness():
    code, out, _ = cli("fuzz", "--count", "10", "--property", "Soundness", "--format", "records")
    assert code == EXIT_OK
    assert all(r["schema"] == 1 for r in records(out))


def test_fuzz_invalid_config_is_a_usage_error():
    code, _, err = cli("fuzz", "--count", "1", "--max-instructions", "1")
    assert code == EXIT_USAGE and "error" in err


@settings(max_examples=25)
@given(programs)
def test_access_errors_always_come_with_a_perms_diagnostic(tmp_path_factory, tp):
    path = tmp_path_factory.mktemp("gen") / "p.own"
    path.write_text(pretty_print(tp.program), encoding="utf-8")
    _, out, _ = cli("check", "--format", "records", path)
    recs = records(out)
    models = {r["model"] for r in recs}
    if "polonius" in {r["model"] for r in recs if r["kind"] == "access-error"}:
        assert "perms" in models
