from __future__ import annotations

import json
import random

import pytest
from hypothesis import given

from helpers import CORPUS, GOLDEN, load_corpus, programs
from ownlab.diffcheck.check import theorem_gaps, verdicts
from ownlab.facts import build_facts
from ownlab.lang import InstrId, Path, load
from ownlab.lang import syntax as s
from ownlab.perms import (
    ALL_RULES, RWO, CauseKind, Icon, MarkStyle, Permission, Rule, expectations, missing_at, missing_relation,
    needs_at, permission_errors, records_jsonl, steps,
)

M = lambda i: InstrId("main", i)  # noqa: E731
R, W, O, F = Permission.R, Permission.W, Permission.O, Permission.F


def _states(tp, rules=ALL_RULES):
    fb = build_facts(tp)
    return fb, missing_at(fb, rules)


def test_needs_for_loan_conflict():
    needs = needs_at(build_facts(load_corpus("loan_conflict")))
    assert (Path("x", (0,)), W, M(2)) in needs
    assert (Path("y", (s.DEREF,)), R, M(3)) in needs


def test_drop_needs_own():
    assert (Path("x"), O, M(1)) in needs_at(build_facts(load_corpus("use_after_free")))


def test_id_body_needs_flow():
    needs = needs_at(build_facts(load_corpus("id_missing_outlives")))
    assert (Path("y"), F, InstrId("id", 1)) in needs


def test_borrowed_tuple_loses_write_and_own():
    fb, st = _states(load_corpus("loan_conflict"))
    at = st[M(2)]
    for p in (Path("x"), Path("x", (0,))):
        for c in (W, O):
            cause = at.missing[p][c]
            assert cause.kind is CauseKind.BORROWED and cause.loan.instruction == M(1)
    assert R in at.has[Path("y", (s.DEREF,))]


def test_moved_box_loses_everything():
    _, st = _states(load_corpus("move_conflict"))
    at = st[M(2)]
    assert at.has[Path("x")] == frozenset()
    assert {c: at.missing[Path("x")][c].kind for c in RWO} == {c: CauseKind.MOVED for c in RWO}


def test_non_mut_local_cannot_be_written_after_initialization():
    _, st = _states(load("fn main() { let x: u32; let y: u32; 0: x = 1; 1: x = 2; 2: y = x; 3: return y; }"))
    assert W not in st[M(1)].has[Path("x")]
    assert st[M(1)].missing[Path("x")][W].kind is CauseKind.NOT_DECLARED_MUT
    # the first assignment is what initializes it
    assert st[M(0)].blocked(Path("x"), W) is None


def test_uninitialized_local_cannot_be_read():
    fb, st = _states(load("fn main() { let r: u32; 0: return r; }"))
    assert st[M(0)].missing[Path("r")][R].kind is CauseKind.UNINITIALIZED
    (e,) = permission_errors(fb, st)
    assert e.cause.kind is CauseKind.UNINITIALIZED


def test_unique_borrow_of_an_uninitialized_local_is_an_error():
    # the interpreter cannot take the address of a place that holds nothing yet
    fb, st = _states(load("fn main() { let mut x: u32; let y: &unique u32;"
                          " 0: y = &unique x; 1: x = 3; 2: return x; }"))
    (e,) = permission_errors(fb, st)
    assert (e.instruction, str(e.path), e.permission, e.cause.kind) == (M(0), "x", W, CauseKind.UNINITIALIZED)


def test_loan_conflict_permission_error():
    fb, st = _states(load_corpus("loan_conflict"))
    (e,) = permission_errors(fb, st)
    assert (e.instruction, str(e.path), e.permission, e.cause.kind) == (M(2), "x.0", W, CauseKind.BORROWED)


def test_move_conflict_permission_error():
    fb, st = _states(load_corpus("move_conflict"))
    (e,) = permission_errors(fb, st)
    assert (e.instruction, str(e.path), e.permission, e.cause.kind) == (M(2), "*x", R, CauseKind.MOVED)


def test_id_permission_errors():
    fb, st = _states(load_corpus("id_missing_outlives"))
    (e,) = permission_errors(fb, st)
    assert e.permission is F and e.cause.kind is CauseKind.MISSING_OUTLIVES
    assert e.cause.lifetimes == ("a", "b")
    assert permission_errors(*_states(load_corpus("id_with_outlives"))) == []


def test_straight_line_program_has_no_permission_errors():
    assert permission_errors(*_states(load_corpus("copy_only"))) == []


def test_dead_is_shown_but_never_blocks():
    _, st = _states(load_corpus("loan_conflict"))
    at = st[M(2)]
    assert at.missing[Path("x")][R].kind is CauseKind.DEAD
    assert at.blocked(Path("x"), R) is None


def test_cause_priority_moved_over_borrowed():
    # x is moved at 2 while a loan on it is live, so at 3 both rules fire on x
    _, st = _states(load("fn main() { let x: box u32; let y: &shared box u32; let z: box u32; let w: u32;"
                         " 0: x = box 1; 1: y = &shared x; 2: z = x; 3: w = **y; 4: return w; }"))
    causes = st[M(3)].causes[(Path("x"), W)]
    kinds = [c.kind for c in causes]
    assert CauseKind.MOVED in kinds and CauseKind.BORROWED in kinds
    assert kinds.index(CauseKind.MOVED) < kinds.index(CauseKind.BORROWED)


# -- steps ---------------------------------------------------------------------------


def test_box_borrow_steps_match_golden():
    _, st = _states(load_corpus("box_borrow"))
    got = records_jsonl(step.to_record() for step in steps(st))
    assert got == (GOLDEN / "box_borrow_steps.jsonl").read_text(encoding="utf-8")


def test_box_borrow_narrative_pattern():
    _, st = _states(load_corpus("box_borrow"))
    s1, s2, s3, _ = steps(st)
    x, y, dy = Path("x"), Path("y"), Path("y", (s.DEREF,))
    assert s1.change(x).gains == {R, W, O} and set(dict(s1.change(x).icons).values()) == {Icon.BIRTH}
    assert s2.change(x).losses == {W, O} and s2.change(x).icon_for(W) is Icon.BORROW_START
    assert s2.change(y).gains == {R, O} and s2.change(dy).gains == {R}
    assert s3.change(y).losses == {R, O} and s3.change(y).icon_for(R) is Icon.DEATH
    assert s3.change(x).gains == {W, O} and s3.change(x).icon_for(O) is Icon.REGAIN


def test_moved_out_icon():
    _, st = _states(load_corpus("move_conflict"))
    step = steps(st)[1]
    assert step.change(Path("x")).icon_for(R) is Icon.MOVED_OUT


def test_program_without_borrows_or_moves_only_births_and_deaths():
    _, st = _states(load_corpus("copy_only"))
    icons = {icon for step in steps(st) for _, ch in step.changes for _, icon in ch.icons}
    assert Icon.BIRTH in icons
    assert icons <= {Icon.BIRTH, Icon.DEATH}


def test_regain_on_a_branch_edge():
    tp = load("fn main() { let mut x: u32; let y: &shared u32; let c: bool; let z: u32;"
              " 0: x = 0; 1: y = &shared x; 2: c = true; 3: if c then 4 else 5; 4: z = *y; 5: return x; }")
    _, st = _states(tp)
    by_label = {step.label: step for step in steps(st)}
    edge = by_label["edge main[3] -> main[5]"]
    assert edge.edge and edge.change(Path("x")).icon_for(W) is Icon.REGAIN
    assert by_label["edge main[3] -> main[4]"].change(Path("x")) is None


def test_custom_boundaries():
    _, st = _states(load_corpus("box_borrow"))
    (whole,) = steps(st, [(0, 4)])
    assert whole.boundary == (M(0), M(4))
    assert whole.apply(st[M(0)].has) == st[M(4)].has


@pytest.mark.parametrize("bad", [
    [(2, 1)], [(1, 1)], [(0, 9)], [(0, 2), (1, 3)], [(InstrId("other", 0), M(1))],
])
def test_invalid_boundaries_are_rejected(bad):
    _, st = _states(load_corpus("box_borrow"))
    with pytest.raises(ValueError):
        steps(st, bad)


def test_steps_for_a_named_function():
    _, st = _states(load_corpus("unique_reborrow"))
    assert {step.boundary[0].function for step in steps(st, function="bump")} == {"bump"}


def test_expectation_marks():
    fb, st = _states(load_corpus("loan_conflict"))
    marks = {(m.instruction, str(m.path)): m for m in expectations(fb, st)}
    borrow = marks[(M(1), "x")]
    assert borrow.expected == (R,) and borrow.all_satisfied
    write = marks[(M(2), "x.0")]
    assert write.expected == (W,) and not write.is_satisfied(W)
    assert write.style is None


def test_expectation_style_override():
    fb, st = _states(load_corpus("loan_conflict"))
    marks = expectations(fb, st, {(M(1), Path("x")): MarkStyle.CIRCLE}, default=MarkStyle.LETTER)
    styles = {(m.instruction, str(m.path)): m.style for m in marks}
    assert styles[(M(1), "x")] is MarkStyle.CIRCLE and styles[(M(2), "x.0")] is MarkStyle.LETTER


def test_instruction_without_paths_gets_no_marks():
    fb, st = _states(load_corpus("copy_only"))
    # 0: x = 5 writes x but reads nothing; it gets exactly one mark
    assert [str(m.path) for m in expectations(fb, st) if m.instruction == M(0)] == ["x"]


def test_state_records_are_sorted():
    _, st = _states(load_corpus("loan_conflict"))
    rec = st[M(2)].to_record()
    assert [r["path"] for r in rec["paths"]] == ["x", "x.0", "y", "*y", "z"]
    line = json.loads(records_jsonl([rec]))
    assert line["schema"] == 1 and line["kind"] == "perm-state"


# -- invariants ----------------------------------------------------------------------


@given(programs)
def test_theorem_and_per_rule_correspondence(tp):
    v = verdicts(tp)
    if v.access_errors:
        assert v.permission_errors
    assert theorem_gaps(v) == []


@given(programs)
def test_has_and_missing_partition_rwo(tp):
    _, st = _states(tp)
    for state in st:
        for p, has in state.has.items():
            assert F not in has
            for c in RWO:
                assert (c in has) != (c in state.missing.get(p, {}))


@given(programs)
def test_steps_telescope(tp):
    _, st = _states(tp)
    for f in tp.program.functions:
        a = st.facts.analyses[f.name]
        # every edge step maps its source state onto its target state
        for step in steps(st, function=f.name):
            x, y = step.boundary
            assert step.apply(st[x].has) == st[y].has
            for _, ch in step.changes:
                assert not (ch.gains & ch.losses)
        # folding along a walk from entry reconstructs every visited state
        rng = random.Random(len(f.body))
        by_edge = {step.boundary: step for step in steps(st, function=f.name)}
        i, has = 0, dict(st[InstrId(f.name, 0)].has)
        for _ in range(3 * a.n):
            succ = list(s.successors(f.body, i))
            if not succ:
                break
            j = rng.choice(succ)
            has = by_edge[(InstrId(f.name, i), InstrId(f.name, j))].apply(has)
            assert has == st[InstrId(f.name, j)].has
            i = j


@given(programs)
def test_expectations_mirror_missing(tp):
    fb, st = _states(tp)
    blocking = missing_relation(st)
    marks = expectations(fb, st)
    assert {(m.path, c, m.instruction) for m in marks for c in m.expected} == needs_at(fb)
    for m in marks:
        for c in m.expected:
            assert m.is_satisfied(c) == ((m.path, c, m.instruction) not in blocking)
            if c is not F and c not in st[m.instruction].missing.get(m.path, {}):
                assert m.is_satisfied(c)


@given(programs)
def test_permission_errors_are_needs_meeting_blocking_missing(tp):
    fb, st = _states(tp)
    errs = {(e.path, e.permission, e.instruction) for e in permission_errors(fb, st)}
    assert errs == needs_at(fb) & missing_relation(st)


def test_every_rule_can_be_switched_off():
    tp = load_corpus("loan_conflict")
    fb = build_facts(tp)
    assert permission_errors(fb, missing_at(fb, ALL_RULES - {Rule.MISSING_WO})) == []


@pytest.mark.parametrize("name", ["disjoint_field", "branch_disjoint"])
def test_incompleteness_witnesses_are_rejected(name):
    assert name in CORPUS
    fb, st = _states(load_corpus(name))
    assert permission_errors(fb, st)
