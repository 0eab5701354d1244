"""Permission-step tables: one small table per step, one row per path that changed."""

from __future__ import annotations

import re
import xml.etree.ElementTree as ET
from typing import Any, Sequence

from ownlab.perms import Icon, Permission, PermStep
from ownlab.render.document import (
    DiagramDoc, DiagramKind, Format, RenderOptions, paint, palette, parse_svg, provenance, strip_ansi, sub,
    svg_bytes, svg_root, text_width,
)

Fact = tuple
_ORDER = {c: k for k, c in enumerate(Permission)}
MINUS = "−"


def _cells(step: PermStep) -> list[tuple[str, list[tuple[str, Permission, Icon]]]]:
    rows = []
    for p, ch in step.changes:
        deltas = [("+" if c in ch.gains else MINUS, c, ch.icon_for(c))
                  for c in sorted(ch.gains | ch.losses, key=_ORDER.get)]
        rows.append((str(p), deltas))
    return rows


def step_facts(steps: Sequence[PermStep]) -> set[Fact]:
    facts: set[Fact] = set()
    for k, st in enumerate(steps, start=1):
        facts.add(("step", k, st.label))
        for path, deltas in _cells(st):
            facts |= {("perm", k, path, sign, c.value, icon.value) for sign, c, icon in deltas}
    return facts


def _function(steps: Sequence[PermStep]) -> str | None:
    fns = {st.boundary[0].function for st in steps}
    if len(fns) > 1:
        raise ValueError("a permission table covers steps of a single function")
    return next(iter(fns), None)


def _title(steps: Sequence[PermStep]) -> str:
    fn = _function(steps)
    return f"permission steps for {fn} ({len(steps)} steps)" if fn else "permission steps (none)"


def _legend(opts: RenderOptions) -> str:
    icons = ", ".join(f"{opts.glyph(i)} {i.value}" for i in Icon)
    return f"legend: +X gained, {MINUS}X lost; {icons}"


# -- text ----------------------------------------------------------------------------


def _text(steps: Sequence[PermStep], opts: RenderOptions) -> str:
    lines = [_title(steps), _legend(opts)]
    for st in steps:
        lines += ["", paint(st.label, "bold", opts)]
        rows = _cells(st)
        if not rows:
            lines.append("  (no changes)")
        width = max([0] + [len(path) for path, _ in rows])
        for path, deltas in rows:
            cells = [paint(f"{sign}{c.value}{opts.glyph(icon)}", "green" if sign == "+" else "red", opts)
                     for sign, c, icon in deltas]
            lines.append(f"  {path.ljust(width)}  " + " ".join(cells))
    return "\n".join(lines) + "\n"


_STEP = re.compile(r"^(after \S+|edge \S+ -> \S+)$")
_ROW = re.compile(r"^  (\S+)\s+((?:[+−][RWOF]\S ?)+)$")
_DELTA = re.compile(r"([+−])([RWOF])(\S)")


def text_facts(text: str, opts: RenderOptions = RenderOptions()) -> set[Fact]:
    facts: set[Fact] = set()
    k = 0
    for line in strip_ansi(text).splitlines():
        if m := _STEP.match(line):
            k += 1
            facts.add(("step", k, m[1]))
        elif k and (m := _ROW.match(line)):
            for sign, c, glyph in _DELTA.findall(m[2]):
                facts.add(("perm", k, m[1], sign, c, opts.icon_of(glyph).value))
    return facts


# -- svg -----------------------------------------------------------------------------

ROW_H = 20
PAD = 10
CELL_W = 38


def _svg(steps: Sequence[PermStep], opts: RenderOptions, prov: str) -> ET.Element:
    pal = palette(opts)
    tables = [(st, _cells(st)) for st in steps]
    path_w = max([60] + [text_width(path) + PAD for _, rows in tables for path, _ in rows])
    ncells = max([4] + [len(d) for _, rows in tables for _, d in rows])
    title, legend = _title(steps), _legend(opts)
    width = max(PAD * 2 + path_w + ncells * CELL_W, text_width(legend) + 2 * PAD,
                max([0] + [text_width(st.label) + 3 * PAD for st in steps]))
    height = 2 * ROW_H + PAD + sum((2 + max(1, len(rows))) * ROW_H for _, rows in tables) + PAD
    root = svg_root(width, height, title, prov)
    sub(root, "text", title, class_="title", x=PAD, y=PAD + 12, font_weight="bold")
    sub(root, "text", legend, class_="legend", x=PAD, y=PAD + 12 + ROW_H, fill="#666666")
    y = PAD + 2 * ROW_H
    for k, (st, rows) in enumerate(tables, start=1):
        g = sub(root, "g", class_="step", data_index=k, data_edge=str(st.edge).lower())
        box_h = (1 + max(1, len(rows))) * ROW_H
        sub(g, "rect", x=PAD, y=y, width=width - 2 * PAD, height=box_h, fill="none", stroke=pal["ink"],
            stroke_dasharray="5 3" if st.edge else "none")
        sub(g, "text", st.label, class_="step-label", x=2 * PAD, y=y + 14, font_weight="bold")
        ry = y + ROW_H
        if not rows:
            sub(g, "text", "(no changes)", x=2 * PAD, y=ry + 14, fill="#888888")
        for path, deltas in rows:
            rg = sub(g, "g", class_="row")
            sub(rg, "text", path, class_="path", x=2 * PAD, y=ry + 14)
            for j, (sign, c, icon) in enumerate(deltas):
                cx = PAD + path_w + PAD + j * CELL_W
                cg = sub(rg, "g", class_="delta", data_icon=icon.value)
                sub(cg, "title", icon.value)
                sub(cg, "text", f"{sign}{c.value}", class_="perm", x=cx, y=ry + 14,
                    fill=pal["gain"] if sign == "+" else pal["loss"])
                sub(cg, "text", opts.glyph(icon), class_="icon", x=cx + 17, y=ry + 14)
            ry += ROW_H
        y += box_h + ROW_H
    return root


def svg_facts(content: bytes, opts: RenderOptions = RenderOptions()) -> set[Fact]:
    root = parse_svg(content)
    facts: set[Fact] = set()
    for g in root.iter("g"):
        if g.get("class") != "step":
            continue
        k = int(g.get("data-index"))
        facts.add(("step", k, g.find("text[@class='step-label']").text))
        for row in g.findall("g[@class='row']"):
            path = row.find("text[@class='path']").text
            for d in row.findall("g[@class='delta']"):
                perm = d.find("text[@class='perm']").text
                glyph = d.find("text[@class='icon']").text
                facts.add(("perm", k, path, perm[0], perm[1:], opts.icon_of(glyph).value))
    return facts


def render_perm_table(steps: Sequence[PermStep], opts: RenderOptions = RenderOptions(),
                      program: Any = None) -> DiagramDoc:
    """Tables of permission gains and losses, in step order."""
    prov = provenance(program if program is not None else [st.to_record() for st in steps])
    if opts.format is Format.TEXT:
        content = _text(steps, opts).encode("utf-8")
    else:
        content = svg_bytes(_svg(steps, opts, prov))
        if opts.format is Format.HTML:
            from ownlab.render.html import html_page

            content = html_page(_title(steps), [content], program, prov)
    return DiagramDoc(DiagramKind.PERM_TABLE, opts.format, content, prov)
