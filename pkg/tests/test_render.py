from __future__ import annotations

import os
import re
import xml.etree.ElementTree as ET

import pytest

from helpers import CORPUS, GOLDEN, load_corpus
from ownlab.facts import build_facts
from ownlab.interp import run, trace
from ownlab.lang import parse_program, type_check
from ownlab.perms import Icon, MarkStyle, expectations, missing_at, steps
from ownlab.render import (
    RENDERER_VERSION, DiagramKind, Format, Level, RenderOptions, dangling_arrows, doc_facts, expected_facts,
    provenance, render_annotated_listing, render_memory_trace, render_perm_table,
)
from ownlab.render.document import parse_svg
from ownlab.render.facts import same_content

UPDATE = os.environ.get("OWNLAB_UPDATE_GOLDEN") == "1"
LEVELS = (Level.ABSTRACTED, Level.EXPANDED)
STYLES = (MarkStyle.LETTER, MarkStyle.CIRCLE)


def _models(name: str):
    tp = load_corpus(name)
    fb = build_facts(tp)
    st = missing_at(fb)
    return tp, trace(tp, max_steps=2000), steps(st), expectations(fb, st)


def _render_all(name: str, opts: RenderOptions):
    tp, snaps, stp, marks = _models(name)
    return [
        (DiagramKind.MEMORY_TRACE, snaps, render_memory_trace(snaps, opts, tp.program)),
        (DiagramKind.PERM_TABLE, stp, render_perm_table(stp, opts, tp.program)),
        (DiagramKind.LISTING, (tp.program, marks), render_annotated_listing(tp.program, marks, opts)),
    ]


def _check_golden(doc, stem: str):
    path = GOLDEN / (stem + doc.format.suffix)
    if UPDATE or not path.exists():
        assert UPDATE, f"golden file {path.name} is missing; rerun with OWNLAB_UPDATE_GOLDEN=1"
        path.write_bytes(doc.content)
    assert doc.content == path.read_bytes()


# -- goldens -------------------------------------------------------------------------


@pytest.mark.parametrize("fmt", [Format.TEXT, Format.SVG])
def test_use_after_free_trace_golden(fmt):
    tp, snaps, _, _ = _models("use_after_free")
    _check_golden(render_memory_trace(snaps, RenderOptions(format=fmt), tp.program), "use_after_free_trace")


@pytest.mark.parametrize("fmt", [Format.TEXT, Format.SVG])
def test_box_borrow_table_golden(fmt):
    tp, _, stp, _ = _models("box_borrow")
    _check_golden(render_perm_table(stp, RenderOptions(format=fmt), tp.program), "box_borrow_table")


@pytest.mark.parametrize("style", STYLES)
def test_loan_conflict_listing_golden(style):
    tp, _, _, marks = _models("loan_conflict")
    doc = render_annotated_listing(tp.program, marks, RenderOptions(style=style))
    _check_golden(doc, f"loan_conflict_listing_{style.value}")


# -- corpus-wide invariants ------------------------------------------------------------


@pytest.mark.parametrize("name", sorted(CORPUS))
def test_rendering_is_deterministic(name):
    for fmt in Format:
        for level in LEVELS:
            opts = RenderOptions(format=fmt, level=level)
            first = [doc.content for _, _, doc in _render_all(name, opts)]
            second = [doc.content for _, _, doc in _render_all(name, opts)]
            assert first == second


@pytest.mark.parametrize("name", sorted(CORPUS))
def test_text_and_svg_show_the_same_facts(name):
    for level in LEVELS:
        for style in STYLES:
            docs = {}
            for fmt in (Format.TEXT, Format.SVG):
                for kind, model, doc in _render_all(name, RenderOptions(format=fmt, level=level, style=style)):
                    docs.setdefault(kind, (model, []))[1].append(doc)
            for kind, (model, pair) in docs.items():
                opts = RenderOptions(level=level, style=style)
                assert same_content(pair, expected_facts(kind, model, opts), opts) == []
                assert doc_facts(pair[0], opts) == doc_facts(pair[1], opts)


@pytest.mark.parametrize("name", sorted(CORPUS))
def test_no_dangling_arrows(name):
    _, snaps, _, _ = _models(name)
    for sn in snaps:
        assert dangling_arrows(sn.model()) == []
    # and as drawn: every arrow in the SVG ends on a cell or tombstone of its own state
    for level in LEVELS:
        facts = doc_facts(render_memory_trace(snaps, RenderOptions(format=Format.SVG, level=level)))
        cells = {(f[1], f[3], f[2]) for f in facts if f[0] == "var"}
        cells |= {(f[1], f[2], None) for f in facts if f[0] in ("heap", "tomb")}

        def drawn(k, target):
            # an expanded tuple has no row of its own, so arrows to it land on its fields;
            # an abstracted tuple is one cell, so arrows to its fields land on it
            name, _, depth = target.partition("@")
            depth = int(depth) if depth else None
            return any(c[0] == k and c[2] == depth
                       and (c[1] == name or c[1].startswith(name + ".") or name.startswith(c[1] + "."))
                       for c in cells)

        for _, k, _, target in (f for f in facts if f[0] == "arrow"):
            assert drawn(k, target), target


# -- memory trace ----------------------------------------------------------------------


def test_use_after_free_trace_content():
    _, snaps, _, _ = _models("use_after_free")
    text = render_memory_trace(snaps).text
    assert "memory trace (4 states, abstracted)" in text
    assert text.count("\nstate ") == 4
    assert "undefined behavior: UseAfterFree" in text
    # after the drop x still points at the freed cell, drawn as a tombstone
    state3 = text.split("state 3")[1].split("state 4")[0]
    assert "†κ0 freed" in state3 and "x@0 → †κ0" in state3


def test_ub_banner_in_svg():
    _, snaps, _, _ = _models("use_after_free")
    root = parse_svg(render_memory_trace(snaps, RenderOptions(format=Format.SVG)).content)
    ub = [g for g in root.iter("g") if g.get("class") == "ub"]
    assert len(ub) == 1
    assert "undefined behavior" in "".join(ub[0].itertext())


def test_single_snapshot_without_heap():
    tp = load_corpus("trivial")
    snaps = trace(tp, marks=[0])
    doc = render_memory_trace(snaps, program=tp.program)
    assert doc.text.startswith("memory trace (1 states, abstracted)")
    assert "\n  arrows" not in doc.text and "\n  heap\n    (empty)" in doc.text
    facts = doc_facts(doc)
    assert not any(f[0] == "arrow" for f in facts)


def test_empty_snapshot_list_is_an_error():
    with pytest.raises(ValueError):
        render_memory_trace([])


def test_changed_heap_cell_is_highlighted():
    _, snaps, _, _ = _models("use_after_free")
    # the second state differs from the first by one heap cell
    heap = {f for f in expected_facts(DiagramKind.MEMORY_TRACE, snaps[:2]) if f[0] == "heap"}
    assert heap == {("heap", 2, "κ0", "0", True)}
    root = parse_svg(render_memory_trace(snaps[:2], RenderOptions(format=Format.SVG)).content)
    cells = [g for g in root.iter("g") if g.get("class") == "heap"]
    assert [g.get("data-changed") for g in cells] == ["true"]
    text = render_memory_trace(snaps[:2]).text
    assert "   * κ0 = 0" in text


def test_expanded_level_gives_each_field_a_row():
    tp = load_corpus("loan_conflict")
    snaps = trace(tp)
    abstracted = render_memory_trace(snaps, RenderOptions(level=Level.ABSTRACTED)).text
    expanded = render_memory_trace(snaps, RenderOptions(level=Level.EXPANDED)).text
    assert "x = (0, 0)" in abstracted
    assert re.search(r"x\.0 = 0", expanded) and re.search(r"x\.1 = 0", expanded)


def test_moved_variable_is_struck_through():
    _, snaps, _, _ = _models("move_conflict")
    text = render_memory_trace(snaps).text
    assert "x̶" in text


# -- permission tables -----------------------------------------------------------------


def test_box_borrow_table_narrative():
    _, _, stp, _ = _models("box_borrow")
    text = render_perm_table(stp).text
    blocks = text.split("\n\n")[1:]
    assert re.search(r"^  x +\+R↑ \+W↑ \+O↑$", blocks[0], re.M)
    assert re.search(r"^  x +−W→ −O→$", blocks[1], re.M)
    assert re.search(r"^  y +\+R↑ \+O↑$", blocks[1], re.M)
    assert re.search(r"^  \*y +\+R↑$", blocks[1], re.M)
    assert re.search(r"^  y +−R↓ −O↓$", blocks[2], re.M)
    assert re.search(r"^  x +\+W⟲ \+O⟲$", blocks[2], re.M)


def test_empty_step_list_renders_a_header():
    doc = render_perm_table([])
    assert doc.text.startswith("permission steps (none)\nlegend:")
    assert doc_facts(doc) == set()
    root = parse_svg(render_perm_table([], RenderOptions(format=Format.SVG)).content)
    assert root.tag == "svg"


def test_branch_edge_table_is_labelled_with_the_edge():
    tp = parse_program("fn main() { let mut x: u32; let y: &shared u32; let c: bool; let z: u32;"
                       " 0: x = 0; 1: y = &shared x; 2: c = true; 3: if c then 4 else 5; 4: z = *y; 5: return x; }")
    stp = steps(missing_at(build_facts(type_check(tp))))
    text = render_perm_table(stp).text
    assert "edge main[3] -> main[5]" in text
    svg = render_perm_table(stp, RenderOptions(format=Format.SVG)).content.decode()
    assert 'data-edge="true"' in svg and "stroke-dasharray=\"5 3\"" in svg


def test_custom_icon_glyphs():
    icons = tuple((i, g) for i, g in zip(Icon, "bsdrm"))
    opts = RenderOptions(icons=icons)
    _, _, stp, _ = _models("box_borrow")
    doc = render_perm_table(stp, opts)
    assert "+Rb" in doc.text and "−Ws" in doc.text
    assert doc_facts(doc, opts) == expected_facts(DiagramKind.PERM_TABLE, stp, opts)


@pytest.mark.parametrize("icons", [
    (), tuple((i, "x") for i in Icon), tuple((i, "ab") for i in Icon),
])
def test_bad_icon_sets_are_rejected(icons):
    with pytest.raises(ValueError):
        RenderOptions(icons=icons)


def test_multi_function_steps_are_rejected():
    tp = load_corpus("unique_reborrow")
    st = missing_at(build_facts(tp))
    mixed = steps(st, function="main") + steps(st, function="bump")
    with pytest.raises(ValueError):
        render_perm_table(mixed)


# -- listings --------------------------------------------------------------------------


def test_listing_marks_sit_before_their_operands():
    tp, _, _, marks = _models("loan_conflict")
    text = render_annotated_listing(tp.program, marks).text
    assert "1: [W] y = &shared [R] x;" in text
    assert "2: [!W] x.0 = 1;" in text


def test_listing_circles_are_filled_or_hollow():
    tp, _, _, marks = _models("loan_conflict")
    svg = render_annotated_listing(tp.program, marks, RenderOptions(format=Format.SVG, style=MarkStyle.CIRCLE))
    root = parse_svg(svg.content)
    fills = {}
    for g in root.iter("g"):
        if g.get("class") == "line" and g.get("data-index") is not None:
            for mg in g.findall("g[@class='mark']"):
                fills[(int(g.get("data-index")), mg.get("data-path"))] = mg.find("circle").get("fill")
    assert fills[(1, "x")] != "none"
    assert fills[(2, "x.0")] == "none"


def test_hollow_letter_for_a_missing_permission():
    tp, _, _, marks = _models("loan_conflict")
    root = parse_svg(render_annotated_listing(tp.program, marks, RenderOptions(format=Format.SVG)).content)
    letters = [(t.text, t.get("fill")) for t in root.iter("text") if t.get("class") == "perm"]
    assert ("W", "none") in letters
    assert any(c == "R" and fill != "none" for c, fill in letters)


def test_listing_without_marks_is_the_plain_program():
    tp = load_corpus("loan_conflict")
    text = render_annotated_listing(tp.program).text
    assert "[" not in text.split("\n\n", 1)[1]


def test_mark_on_unknown_instruction_is_rejected():
    bump_marks = [m for m in _models("unique_reborrow")[3] if m.instruction.function == "bump"]
    with pytest.raises(ValueError):
        render_annotated_listing(load_corpus("loan_conflict").program, bump_marks)


# -- documents -------------------------------------------------------------------------


def test_svg_is_self_contained_and_carries_provenance():
    tp, snaps, _, _ = _models("use_after_free")
    doc = render_memory_trace(snaps, RenderOptions(format=Format.SVG), tp.program)
    root = ET.fromstring(doc.content)
    assert root.tag.endswith("svg")
    body = doc.content.decode()
    assert "href" not in body and "<image" not in body
    assert doc.provenance == provenance(tp.program)
    assert doc.provenance.endswith(RENDERER_VERSION) and doc.provenance in body


def test_html_embeds_svg_and_listing():
    tp, snaps, _, _ = _models("use_after_free")
    doc = render_memory_trace(snaps, RenderOptions(format=Format.HTML), tp.program)
    body = doc.content.decode()
    assert body.startswith("<!DOCTYPE html>")
    assert "<svg" in body and '<pre class="listing">' in body and "drop x;" in body
    with pytest.raises(ValueError):
        doc_facts(doc)


def test_color_only_adds_escapes():
    _, _, stp, _ = _models("box_borrow")
    plain = render_perm_table(stp).text
    colored = render_perm_table(stp, RenderOptions(color=True)).text
    assert "\x1b[" in colored and "\x1b[" not in plain
    assert re.sub(r"\x1b\[[0-9;]*m", "", colored) == plain


def test_write_uses_the_format_suffix(tmp_path):
    _, _, stp, _ = _models("box_borrow")
    doc = render_perm_table(stp, RenderOptions(format=Format.SVG))
    out = doc.write(tmp_path, "table")
    assert out.name == "table.svg" and out.read_bytes() == doc.content


def test_rendering_a_run_that_hits_the_step_limit():
    tp = parse_program("fn main() { let c: bool; let r: u32; 0: c = true; 1: r = 0; 2: if c then 1 else 3;"
                       " 3: return r; }")
    ttp = type_check(tp)
    assert run(ttp, max_steps=20).steps == 20
    doc = render_memory_trace(trace(ttp, max_steps=20))
    assert doc.text.count("\nstate ") == 20
