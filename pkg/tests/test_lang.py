from __future__ import annotations

import pytest
from hypothesis import given

from helpers import CORPUS, load_corpus, programs
from ownlab.lang import (
    BoolT, BoxT, ParseError, Path, Qualifier, RefT, TypeCheckError, U32T, load, parse_program, pretty_print,
    type_check, well_formed,
)
from ownlab.lang import syntax as s


def test_parse_three_instruction_program():
    p = parse_program("fn main() { let x: box u32; 0: x = box 0; 1: drop x; 2: return x; }")
    assert len(p.functions) == 1
    assert len(p.functions[0].body) == 3
    assert isinstance(p.functions[0].body[1], s.Drop)


def test_use_after_free_program_has_four_instructions():
    tp = load_corpus("use_after_free")
    body = tp.function("main").body
    assert len(body) == 4
    assert isinstance(body[-1], s.Return)


def test_undeclared_identifier_is_reported():
    with pytest.raises(ParseError) as info:
        load("fn main() { 0: return x; }")
    assert "unknown identifier x" in str(info.value)


def test_parse_error_carries_position():
    with pytest.raises(ParseError) as info:
        parse_program("fn main() { let r: u32; 0: r = ; 1: return r; }")
    d = info.value.diagnostics[0]
    assert d.line == 1 and d.col is not None


def test_branch_target_out_of_range():
    p = parse_program("fn main() { let c: bool; 0: c = true; 1: if c then 99 else 2; 2: return c; }")
    msgs = [d.message for d in well_formed(p)]
    assert "branch target out of range" in msgs
    assert any(d.index == 1 for d in well_formed(p))


def test_missing_return():
    p = parse_program("fn main() { let r: u32; 0: r = 0; }")
    assert [d.message for d in well_formed(p)] == ["missing return"]


def test_loop_that_cannot_return_is_rejected():
    p = parse_program("fn main() { let c: bool; 0: c = true; 1: if c then 1 else 1; 2: return c; }")
    assert well_formed(p)


@pytest.mark.parametrize("name", sorted(CORPUS))
def test_corpus_is_well_formed(name):
    assert well_formed(load_corpus(name).program) == []


def test_recursion_is_rejected():
    src = """
    fn f(a: u32) -> u32 { let r: u32; 0: r = call f(a); 1: return r; }
    fn main() { let a: u32; let r: u32; 0: a = 1; 1: r = call f(a); 2: return r; }
    """
    assert well_formed(parse_program(src))


def test_projection_and_deref_types():
    tp = load("fn main() { let x: (u32, bool); let b: box u32; let r: u32;"
              " 0: x = (1, true); 1: b = box 2; 2: r = *b; 3: return r; }")
    assert tp.type_of("main", Path("x", (1,))) == BoolT()
    assert tp.type_of("main", Path("b", (s.DEREF,))) == U32T()


def test_id_signature_types():
    tp = load_corpus("id_missing_outlives")
    f = tp.function("id")
    assert f.lifetimes == ("a", "b")
    assert f.params[0].ty == RefT(s.Lifetime("a", True), Qualifier.UNIQUE, U32T())
    assert f.ret == RefT(s.Lifetime("b", True), Qualifier.UNIQUE, U32T())
    assert load_corpus("id_with_outlives").function("id").outlives == (("a", "b"),)


@pytest.mark.parametrize("src, fragment", [
    ("fn main() { let r: u32; 0: r = true; 1: return r; }", "mismatch"),
    ("fn main() { let r: u32; let x: u32; 0: x = 1; 1: r = *x; 2: return r; }", "dereference"),
    ("fn main() { let r: u32; let x: (u32, u32); 0: x = (1, 2); 1: r = x.2; 2: return r; }", "field"),
    ("fn main() { let r: u32; 0: r = 1; 1: if r then 2 else 2; 2: return r; }", "bool"),
])
def test_type_errors(src, fragment):
    with pytest.raises(TypeCheckError) as info:
        load(src)
    assert fragment in str(info.value).lower()


def test_call_arity_is_checked():
    src = """
    fn f(a: u32) -> u32 { 0: return a; }
    fn main() { let a: u32; let r: u32; 0: a = 1; 1: r = call f(a, a); 2: return r; }
    """
    with pytest.raises(TypeCheckError):
        load(src)


def test_same_instruction_double_move_is_rejected():
    src = ("fn main() { let b: box u32; let t: (box u32, box u32);"
           " 0: b = box 1; 1: t = (b, b); 2: drop t; 3: return b; }")
    with pytest.raises(TypeCheckError):
        load(src)


def test_loan_sites_get_distinct_lifetimes():
    tp = load("fn main() { let x: u32; let a: &shared u32; let b: &shared u32;"
              " 0: x = 1; 1: a = &shared x; 2: b = &shared x; 3: return x; }")
    f = tp.function("main")
    loans = [i for i in f.body if isinstance(i, s.Assign) and isinstance(i.rv, s.Loan)]
    assert len(loans) >= 2
    lts = {tp.loan_lifetimes[("main", k)] for k, i in enumerate(f.body)
           if isinstance(i, s.Assign) and isinstance(i.rv, s.Loan)}
    assert len(lts) == len(loans)


def test_typing_is_deterministic(corpus):
    for name in CORPUS:
        a, b = corpus(name), corpus(name)
        assert a.types == b.types


def test_move_copy_classification():
    assert not s.is_movable(U32T()) and not s.is_movable(BoolT())
    assert not s.is_movable(RefT(None, Qualifier.SHARED, U32T()))
    assert s.is_movable(RefT(None, Qualifier.UNIQUE, U32T()))
    assert s.is_movable(BoxT(U32T()))
    assert s.is_movable(s.TupleT((U32T(), BoxT(U32T()))))
    assert not s.is_movable(s.TupleT((U32T(), BoolT())))


@pytest.mark.parametrize("name", sorted(CORPUS))
def test_corpus_round_trip(name):
    p = load_corpus(name).program
    assert parse_program(pretty_print(p)) == p


def test_canonical_print_is_stable_after_one_pass():
    src = "fn main() { let r: u32; 0: r = 0; 1: return r; }"
    once = pretty_print(parse_program(src), canonical=True)
    assert pretty_print(parse_program(once), canonical=True) == once


def test_canonical_print_sorts_declarations():
    p = parse_program("fn main() { let z: u32; let a: u32; 0: z = 0; 1: a = z; 2: return a; }")
    text = pretty_print(p, canonical=True)
    assert text.index("let a") < text.index("let z")


@given(programs)
def test_round_trip_on_generated_programs(tp):
    assert parse_program(pretty_print(tp.program)) == tp.program


@given(programs)
def test_generated_programs_are_well_typed(tp):
    assert well_formed(tp.program) == []
    assert type_check(tp.program).types == tp.types


def test_path_display_and_overlap():
    p = Path("x", (s.DEREF, 0))
    assert str(p) == "(*x).0"
    assert Path("x").overlaps(p) and p.overlaps(Path("x"))
    assert not Path("x", (0,)).overlaps(Path("x", (1,)))
