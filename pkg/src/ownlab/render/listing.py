"""Program listings annotated with the permissions each operation expects."""

from __future__ import annotations

import re
import xml.etree.ElementTree as ET
from typing import Sequence

from ownlab.lang import syntax as s
from ownlab.lang.printer import format_declaration, format_signature
from ownlab.perms import ExpectationMark, MarkStyle
from ownlab.render.document import (
    DiagramDoc, DiagramKind, Format, RenderOptions, paint, palette, parse_svg, provenance, strip_ansi, sub,
    svg_bytes, svg_root, text_width,
)

Fact = tuple


def _mark_facts(m: ExpectationMark, style: MarkStyle) -> set[Fact]:
    fn, idx = m.instruction
    if style is MarkStyle.CIRCLE:
        return {("circle", fn, idx, str(m.path), "".join(c.value for c in m.expected), m.all_satisfied)}
    return {("mark", fn, idx, str(m.path), c.value, ok) for c, ok in m.satisfied}


def listing_facts(p: s.Program, marks: Sequence[ExpectationMark], opts: RenderOptions = RenderOptions()) -> set[Fact]:
    facts: set[Fact] = {("line", f.name, i) for f in p.functions for i in range(len(f.body))}
    for m in marks:
        facts |= _mark_facts(m, _style(m, opts))
    return facts


class _Layout:
    """Lays out one instruction as a list of segments (code text or a mark).

    Follows the pretty printer, with each mark spliced in before its path.
    """

    def __init__(self, pending: dict[s.Path, ExpectationMark]):
        self.pending = pending
        self.out: list = []

    def code(self, text: str) -> None:
        self.out.append(text)

    def path(self, p: s.Path) -> None:
        m = self.pending.pop(p, None)
        if m is not None:
            self.out.append(m)
        self.out.append(str(p))

    def operand(self, op: s.Operand) -> None:
        if isinstance(op, s.Path):
            self.path(op)
        else:
            self.code(str(op))

    def rvalue(self, rv: s.Rvalue) -> None:
        if isinstance(rv, s.Const):
            self.code(str(rv.value))
        elif isinstance(rv, s.Use):
            self.path(rv.path)
        elif isinstance(rv, s.Loan):
            self.code(f"&{rv.qualifier.value} ")
            self.path(rv.path)
        elif isinstance(rv, s.Box):
            self.code("box ")
            self.operand(rv.operand)
        else:
            self.code("(")
            for k, op in enumerate(rv.items):
                if k:
                    self.code(", ")
                self.operand(op)
            self.code(",)" if len(rv.items) == 1 else ")")

    def instruction(self, instr: s.Instruction) -> None:
        if isinstance(instr, s.Assign):
            self.path(instr.dest)
            self.code(" = ")
            self.rvalue(instr.rv)
        elif isinstance(instr, s.If):
            self.code("if ")
            self.operand(instr.cond)
            self.code(f" then {instr.then_target} else {instr.else_target}")
        elif isinstance(instr, s.Call):
            self.path(instr.dest)
            self.code(f" = call {instr.callee}(")
            for k, a in enumerate(instr.args):
                if k:
                    self.code(", ")
                self.operand(a)
            self.code(")")
        elif isinstance(instr, s.Return):
            self.code("return ")
            self.operand(instr.operand)
        else:
            self.code("drop ")
            self.operand(instr.operand)


def _lines(p: s.Program, marks: Sequence[ExpectationMark]) -> list[list]:
    by_instr: dict[s.InstrId, dict[s.Path, ExpectationMark]] = {}
    for m in marks:
        by_instr.setdefault(m.instruction, {})[m.path] = m
    lines: list[list] = []
    for f in p.functions:
        if lines:
            lines.append([""])
        lines.append([format_signature(f) + " {"])
        lines += [["    " + format_declaration(b)] for b in f.locals]
        for i, instr in enumerate(f.body):
            lay = _Layout(dict(by_instr.get(s.InstrId(f.name, i), {})))
            lay.code(f"    {i}: ")
            lay.instruction(instr)
            lay.code(";")
            # marks on paths that are not spelled out in the instruction trail it
            for path, m in sorted(lay.pending.items(), key=lambda kv: kv[0].sort_key()):
                lay.code("  // also ")
                lay.out.append(m)
                lay.code(str(path))
            lines.append(lay.out)
        lines.append(["}"])
    return lines


def _style(m: ExpectationMark, opts: RenderOptions) -> MarkStyle:
    return m.style if m.style is not None else opts.style


# -- text ----------------------------------------------------------------------------

LEGEND = {
    MarkStyle.LETTER: "legend: [R W] lists the permissions an operation expects on the path after it; "
                      "!X marks one the path lacks",
    MarkStyle.CIRCLE: "legend: [●] the path has every permission the operation expects; [○] it lacks one",
}


def _text_mark(m: ExpectationMark, opts: RenderOptions) -> str:
    if _style(m, opts) is MarkStyle.CIRCLE:
        body = "●" if m.all_satisfied else "○"
    else:
        body = " ".join(c.value if ok else "!" + c.value for c, ok in m.satisfied)
    return paint(f"[{body}]", "green" if m.all_satisfied else "red", opts) + " "


def _text(p: s.Program, marks: Sequence[ExpectationMark], opts: RenderOptions) -> str:
    styles = sorted({_style(m, opts) for m in marks} or {opts.style}, key=lambda x: x.value)
    head = ["annotated listing"] + [LEGEND[st] for st in styles]
    body = ["".join(seg if isinstance(seg, str) else _text_mark(seg, opts) for seg in line)
            for line in _lines(p, marks)]
    return "\n".join(head + [""] + body) + "\n"


_FN = re.compile(r"^fn (\w+)")
_INSTR = re.compile(r"^    (\d+): ")
_MARK = re.compile(r"\[([^\]]*)\] ([\w.*()]+)")


def _balanced(path: str) -> str:
    while path.count(")") > path.count("("):
        path = path[:-1]
    return path


def _mark_parts(body: str, fn: str, idx: int, path: str) -> set[Fact]:
    if body in ("●", "○"):
        # the circle alone does not say which permissions were expected
        return {("circle", fn, idx, path, None, body == "●")}
    out = set()
    for tok in body.split():
        out.add(("mark", fn, idx, path, tok.lstrip("!"), not tok.startswith("!")))
    return out


def text_facts(text: str) -> set[Fact]:
    facts: set[Fact] = set()
    fn = None
    for line in strip_ansi(text).splitlines():
        if m := _FN.match(line):
            fn = m[1]
        elif fn and (m := _INSTR.match(line)):
            idx = int(m[1])
            facts.add(("line", fn, idx))
            for body, path in _MARK.findall(line):
                facts |= _mark_parts(body, fn, idx, _balanced(path))
    return facts


# -- svg -----------------------------------------------------------------------------

LETTER_H = 10
PAD = 10


def _line_height(line: list, opts: RenderOptions) -> int:
    tall = [len(seg.expected) for seg in line
            if isinstance(seg, ExpectationMark) and _style(seg, opts) is MarkStyle.LETTER]
    return max([18] + [LETTER_H * n + 6 for n in tall])


def _svg(p: s.Program, marks: Sequence[ExpectationMark], opts: RenderOptions, prov: str) -> ET.Element:
    pal = palette(opts)
    lines = _lines(p, marks)
    widths = []
    for line in lines:
        w = sum(text_width(seg) if isinstance(seg, str) else 16 for seg in line)
        widths.append(w)
    width = max(widths + [200]) + 2 * PAD
    heights = [_line_height(line, opts) for line in lines]
    height = sum(heights) + 2 * PAD
    root = svg_root(width, height, "annotated listing", prov)
    y = PAD
    fn = None
    for line, h in zip(lines, heights):
        head = line[0] if isinstance(line[0], str) else ""
        if m := _FN.match(head):
            fn = m[1]
        im = _INSTR.match(head)
        g = sub(root, "g", class_="line")
        if fn and im:
            g.set("data-function", fn)
            g.set("data-index", im[1])
        x = PAD
        base = y + h - 5
        for k, seg in enumerate(line):
            if isinstance(seg, str):
                if seg:
                    sub(g, "text", seg, x=x, y=base, style="white-space:pre")
                x += text_width(seg)
                continue
            path = next(str(nxt) for nxt in line[k + 1:] if isinstance(nxt, str) and nxt.strip())
            mg = sub(g, "g", class_="mark", data_path=path.strip())
            sub(mg, "title", " ".join(f"{c.value} {'present' if ok else 'missing'}" for c, ok in seg.satisfied))
            if _style(seg, opts) is MarkStyle.CIRCLE:
                sub(mg, "circle", class_="circle", cx=x + 6, cy=base - 4, r=5, stroke=pal["ink"],
                    fill=pal["ink"] if seg.all_satisfied else "none")
            else:
                for j, (c, ok) in enumerate(seg.satisfied):
                    ly = base - (len(seg.satisfied) - 1 - j) * LETTER_H
                    sub(mg, "text", c.value, class_="perm", x=x + 2, y=ly, font_size="9px", font_weight="bold",
                        stroke=pal["ink"], stroke_width="0.6", fill=pal["ink"] if ok else "none")
            x += 16
        y += h
    return root


def svg_facts(content: bytes) -> set[Fact]:
    root = parse_svg(content)
    facts: set[Fact] = set()
    for g in root.iter("g"):
        if g.get("class") != "line" or g.get("data-index") is None:
            continue
        fn, idx = g.get("data-function"), int(g.get("data-index"))
        facts.add(("line", fn, idx))
        for mg in g.findall("g[@class='mark']"):
            path = mg.get("data-path")
            circle = mg.find("circle")
            if circle is not None:
                facts.add(("circle", fn, idx, path, None, circle.get("fill") != "none"))
            for t in mg.findall("text[@class='perm']"):
                facts.add(("mark", fn, idx, path, t.text, t.get("fill") != "none"))
    return facts


def visible_facts(facts: set[Fact]) -> set[Fact]:
    """Drop what a circle mark does not show (its expected letters) before comparing renderings."""
    return {f[:4] + (None,) + f[5:] if f[0] == "circle" else f for f in facts}


def render_annotated_listing(p: s.Program, marks: Sequence[ExpectationMark] = (),
                             opts: RenderOptions = RenderOptions()) -> DiagramDoc:
    """The program text with one permission mark in front of each operand that needs permissions."""
    known = {s.InstrId(f.name, i) for f in p.functions for i in range(len(f.body))}
    for m in marks:
        if m.instruction not in known:
            raise ValueError(f"mark refers to {m.instruction}, which is not an instruction of the program")
    prov = provenance(p)
    if opts.format is Format.TEXT:
        content = _text(p, marks, opts).encode("utf-8")
    else:
        content = svg_bytes(_svg(p, marks, opts, prov))
        if opts.format is Format.HTML:
            from ownlab.render.html import html_page

            content = html_page("annotated listing", [content], p, prov)
    return DiagramDoc(DiagramKind.LISTING, opts.format, content, prov)
