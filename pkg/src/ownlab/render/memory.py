"""Memory-trace diagrams: one panel per snapshot, stack on the left, heap on the right."""

from __future__ import annotations

import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from typing import Any, Sequence

from ownlab.interp import Snapshot
from ownlab.render.document import (
    STRIKE, DiagramDoc, DiagramKind, Format, Level, RenderOptions, paint, palette, parse_svg, provenance,
    strike, strip_ansi, sub, svg_bytes, svg_root, text_width,
)

Fact = tuple


@dataclass(frozen=True)
class Row:
    name: str
    value: str
    moved: bool = False
    changed: bool = False


@dataclass(frozen=True)
class FramePanel:
    function: str
    depth: int
    rows: tuple[Row, ...]


@dataclass(frozen=True)
class StatePanel:
    index: int
    label: str
    ub: str | None
    frames: tuple[FramePanel, ...]
    heap: tuple[Row, ...]
    tombs: tuple[tuple[str, str], ...]
    arrows: tuple[tuple[str, str], ...]


# -- from the snapshot model to panels ------------------------------------------------


def cell_label(cell_id: str) -> str:
    """Display label of a model cell id: ``x@0``, ``t.1@0``, ``κ2``, ``†κ2``, ``†y@1``."""
    tomb = cell_id.startswith("tomb:")
    rest = cell_id[5:] if tomb else cell_id
    kind, _, tail = rest.partition(":")
    if kind == "heap":
        text = f"κ{tail}"
    else:
        depth, _, name = tail.partition(":")
        text = f"{name}@{depth}"
    return ("†" if tomb else "") + text


def format_value(v: dict[str, Any]) -> str:
    if "const" in v:
        return v["const"]
    if "addr" in v:
        return "●"
    items = [format_value(x) for x in v["tuple"]]
    return f"({items[0]},)" if len(items) == 1 else "(" + ", ".join(items) + ")"


def _rows(name: str, v: dict[str, Any], level: Level) -> list[tuple[str, str]]:
    if level is Level.EXPANDED and "tuple" in v:
        out = []
        for i, x in enumerate(v["tuple"]):
            out += _rows(f"{name}.{i}", x, level)
        return out
    return [(name, format_value(v))]


def panels(snaps: Sequence[Snapshot], level: Level = Level.ABSTRACTED) -> list[StatePanel]:
    out: list[StatePanel] = []
    prev: dict[str, str] | None = None
    for idx, snap in enumerate(snaps, start=1):
        m = snap.model()
        seen: dict[str, str] = {}
        arrows = tuple((cell_label(a["from"]), cell_label(a["to"])) for a in m["arrows"])

        def mark(key: str, value: str) -> bool:
            # a row also changes when a pointer it holds is retargeted (for instance to a tombstone)
            name, at, depth = key.partition("@")
            targets = sorted(b for a, b in arrows
                             if a == key or (a.startswith(name + ".") and a.endswith(at + depth)))
            sig = value + "|" + " ".join(targets)
            seen[key] = sig
            return prev is not None and prev.get(key) != sig

        frames = []
        for fr in m["frames"]:
            rows = []
            for var in fr["vars"]:
                for name, value in _rows(var["name"], var["value"], level):
                    changed = mark(f"{name}@{fr['depth']}", value)
                    rows.append(Row(name, value, var["moved"], changed))
            frames.append(FramePanel(fr["function"], fr["depth"], tuple(rows)))
        heap = []
        for cell in m["heap"]:
            for name, value in _rows(f"κ{cell['loc']}", cell["value"], level):
                heap.append(Row(name, value, False, mark(name, value)))
        tombs = tuple((cell_label(t["id"]), t["kind"]) for t in m["tombstones"])
        ub = str(snap.ub) if snap.ub is not None else None
        out.append(StatePanel(idx, m["label"], ub, tuple(frames), tuple(heap), tombs, arrows))
        prev = seen
    return out


def dangling_arrows(model: dict[str, Any]) -> list[tuple[str, str]]:
    """Arrows whose target is neither a cell nor a tombstone of the same snapshot."""
    cells = {f"heap:{c['loc']}" for c in model["heap"]}
    cells |= {f"frame:{fr['depth']}:{v['name']}" for fr in model["frames"] for v in fr["vars"]}
    tombs = {t["id"] for t in model["tombstones"]}
    bad = []
    for a in model["arrows"]:
        target = a["to"]
        if target in tombs:
            continue
        base = re.sub(r"(\.\d+)+$", "", target)
        if base not in cells:
            bad.append((a["from"], target))
    return bad


def panel_facts(states: Sequence[StatePanel]) -> set[Fact]:
    facts: set[Fact] = set()
    for st in states:
        i = st.index
        facts.add(("state", i, st.label))
        if st.ub:
            facts.add(("ub", i, st.ub))
        for fr in st.frames:
            facts.add(("frame", i, fr.depth, fr.function))
            facts |= {("var", i, fr.depth, r.name, r.value, r.moved, r.changed) for r in fr.rows}
        facts |= {("heap", i, r.name, r.value, r.changed) for r in st.heap}
        facts |= {("tomb", i, label, kind) for label, kind in st.tombs}
        facts |= {("arrow", i, a, b) for a, b in st.arrows}
    return facts


# -- text ----------------------------------------------------------------------------

LEGEND = ("legend: * marks a cell that changed since the previous state; "
          "a struck-through name was moved out; ● is an address, see arrows; † is a tombstone")


def _text(states: Sequence[StatePanel], opts: RenderOptions) -> str:
    lines = [f"memory trace ({len(states)} states, {opts.level.value})", LEGEND]
    for st in states:
        lines += ["", paint(f"state {st.index} at {st.label}", "bold", opts)]
        if st.ub:
            lines.append("  " + paint(f"!! {st.ub} !!", "red", opts))
        lines.append("  stack")
        for fr in st.frames:
            lines.append(f"    {fr.function}@{fr.depth}")
            if not fr.rows:
                lines.append("      (no variables)")
            for r in fr.rows:
                name = strike(r.name) if r.moved else r.name
                flag = paint("*", "yellow", opts) if r.changed else " "
                lines.append(f"     {flag} {name} = {r.value}")
        lines.append("  heap")
        if not st.heap:
            lines.append("    (empty)")
        for r in st.heap:
            flag = paint("*", "yellow", opts) if r.changed else " "
            lines.append(f"   {flag} {r.name} = {r.value}")
        if st.tombs:
            lines.append("  tombstones")
            lines += [f"    {label} {kind}" for label, kind in st.tombs]
        if st.arrows:
            lines.append("  arrows")
            lines += [f"    {a} → {b}" for a, b in st.arrows]
    return "\n".join(lines) + "\n"


_STATE = re.compile(r"^state (\d+) at (\S+)$")
_UB = re.compile(r"^  !! (.*) !!$")
_FRAME = re.compile(r"^    (\S+)@(\d+)$")
_VAR = re.compile(r"^     ([ *]) (\S+) = (.*)$")
_HEAP = re.compile(r"^   ([ *]) (κ\S*) = (.*)$")
_TOMB = re.compile(r"^    (†\S+) (\S+)$")
_ARROW = re.compile(r"^    (\S+) → (\S+)$")


def text_facts(text: str) -> set[Fact]:
    """Recover the logical content of a text memory trace from its visible lines."""
    facts: set[Fact] = set()
    state = depth = None
    section = ""
    for line in strip_ansi(text).splitlines():
        if m := _STATE.match(line):
            state = int(m[1])
            facts.add(("state", state, m[2]))
            continue
        if line in ("  stack", "  heap", "  tombstones", "  arrows"):
            section = line.strip()
            continue
        if m := _UB.match(line):
            facts.add(("ub", state, m[1]))
        elif section == "stack" and (m := _FRAME.match(line)):
            depth = int(m[2])
            facts.add(("frame", state, depth, m[1]))
        elif section == "stack" and (m := _VAR.match(line)):
            moved = STRIKE in m[2]
            facts.add(("var", state, depth, m[2].replace(STRIKE, ""), m[3], moved, m[1] == "*"))
        elif section == "heap" and (m := _HEAP.match(line)):
            facts.add(("heap", state, m[2], m[3], m[1] == "*"))
        elif section == "tombstones" and (m := _TOMB.match(line)):
            facts.add(("tomb", state, m[1], m[2]))
        elif section == "arrows" and (m := _ARROW.match(line)):
            facts.add(("arrow", state, m[1], m[2]))
    return facts


# -- svg -----------------------------------------------------------------------------

ROW_H = 20
PAD = 10


def _anchor(label: str, positions: dict[str, tuple[float, float, float]]) -> tuple[float, float, float] | None:
    """Position of the row drawing ``label``.

    Falls back to the enclosing cell (abstracted tuples) or to the first
    field row (a pointer to a whole tuple in the expanded view).
    """
    name, at, depth = label.partition("@")
    children = [key for key in positions if key.startswith(name + ".") and key.endswith(at + depth)]
    if label not in positions and children:
        return positions[children[0]]
    while True:
        key = f"{name}{at}{depth}"
        if key in positions:
            return positions[key]
        if not re.search(r"\.\d+$", name):
            return None
        name = re.sub(r"\.\d+$", "", name)


def _svg(states: Sequence[StatePanel], opts: RenderOptions, prov: str) -> ET.Element:
    pal = palette(opts)
    texts = [f"{r.name} = {r.value}" for st in states for fr in st.frames for r in fr.rows]
    stack_w = max([120] + [text_width(t) + 2 * PAD for t in texts])
    htexts = [f"{r.name} = {r.value}" for st in states for r in st.heap]
    htexts += [f"{label} {kind}" for st in states for label, kind in st.tombs]
    heap_w = max([100] + [text_width(t) + 2 * PAD for t in htexts])
    banner_w = max([0] + [text_width(st.ub) + 2 * PAD for st in states if st.ub])
    col_w = max(stack_w + heap_w + 60, banner_w)
    heights = []
    for st in states:
        left = sum(1 + max(1, len(fr.rows)) for fr in st.frames) + 1
        right = 1 + max(1, len(st.heap)) + len(st.tombs)
        heights.append((3 if st.ub else 2) * ROW_H + max(left, right) * ROW_H + PAD)
    width = PAD + len(states) * (col_w + PAD)
    height = max([60] + heights) + PAD
    root = svg_root(width, height, f"memory trace ({len(states)} states)", prov)
    defs = sub(root, "defs")
    marker = sub(defs, "marker", id="head", markerWidth=8, markerHeight=8, refX=7, refY=4, orient="auto")
    sub(marker, "path", d="M0,0 L8,4 L0,8 z", fill=pal["arrow"])
    for k, st in enumerate(states):
        x0 = PAD + k * (col_w + PAD)
        g = sub(root, "g", class_="state", data_index=st.index, data_label=st.label)
        sub(g, "rect", x=x0, y=PAD, width=col_w, height=height - 2 * PAD, fill="none", stroke=pal["ink"])
        sub(g, "text", f"state {st.index} at {st.label}", class_="state-label", x=x0 + PAD, y=PAD + 15,
            font_weight="bold")
        y = PAD + ROW_H + 5
        if st.ub:
            ub = sub(g, "g", class_="ub")
            sub(ub, "rect", x=x0 + 2, y=y, width=col_w - 4, height=ROW_H, fill=pal["ub"])
            sub(ub, "text", st.ub, x=x0 + PAD, y=y + 14, fill="#ffffff")
            y += ROW_H
        positions: dict[str, tuple[float, float, float]] = {}
        sy = y + ROW_H
        sub(g, "text", "stack", class_="section", x=x0 + PAD, y=y + 14, font_style="italic")
        for fr in st.frames:
            fg = sub(g, "g", class_="frame", data_depth=fr.depth, data_function=fr.function)
            sub(fg, "text", f"{fr.function}@{fr.depth}", class_="frame-label", x=x0 + PAD, y=sy + 14)
            sy += ROW_H
            if not fr.rows:
                sub(fg, "text", "(no variables)", x=x0 + 2 * PAD, y=sy + 14, fill="#888888")
                sy += ROW_H
            for r in fr.rows:
                rg = sub(fg, "g", class_="var", data_changed=str(r.changed).lower())
                fill = pal["changed"] if r.changed else pal["frame"]
                sub(rg, "rect", x=x0 + PAD, y=sy + 2, width=stack_w - PAD, height=ROW_H - 4, fill=fill,
                    stroke=pal["ink"], stroke_width="0.5")
                attrs = {"text_decoration": "line-through"} if r.moved else {}
                sub(rg, "text", r.name, class_="name", x=x0 + 2 * PAD, y=sy + 14, **attrs)
                sub(rg, "text", r.value, class_="value", x=x0 + 2 * PAD + text_width(r.name + " = "), y=sy + 14)
                positions[f"{r.name}@{fr.depth}"] = (x0 + PAD + stack_w - PAD, sy + ROW_H / 2, x0 + PAD)
                sy += ROW_H
        hx = x0 + stack_w + 50
        hy = y + ROW_H
        sub(g, "text", "heap", class_="section", x=hx, y=y + 14, font_style="italic")
        if not st.heap and not st.tombs:
            sub(g, "text", "(empty)", x=hx, y=hy + 14, fill="#888888")
        for r in st.heap:
            rg = sub(g, "g", class_="heap", data_changed=str(r.changed).lower())
            fill = pal["changed"] if r.changed else pal["heap"]
            sub(rg, "rect", x=hx, y=hy + 2, width=heap_w - PAD, height=ROW_H - 4, fill=fill, stroke=pal["ink"],
                stroke_width="0.5")
            sub(rg, "text", r.name, class_="name", x=hx + PAD, y=hy + 14)
            sub(rg, "text", r.value, class_="value", x=hx + PAD + text_width(r.name + " = "), y=hy + 14)
            positions[r.name] = (hx + heap_w - PAD, hy + ROW_H / 2, hx)
            hy += ROW_H
        for label, kind in st.tombs:
            tg = sub(g, "g", class_="tomb")
            sub(tg, "rect", x=hx, y=hy + 2, width=heap_w - PAD, height=ROW_H - 4, fill=pal["tomb"],
                stroke=pal["loss"], stroke_dasharray="4 2")
            sub(tg, "text", label, class_="name", x=hx + PAD, y=hy + 14)
            sub(tg, "text", kind, class_="kind", x=hx + PAD + text_width(label + " "), y=hy + 14)
            positions[label] = (hx + heap_w - PAD, hy + ROW_H / 2, hx)
            hy += ROW_H
        for a, b in st.arrows:
            src, dst = _anchor(a, positions), _anchor(b, positions)
            if src is None or dst is None:
                raise ValueError(f"arrow {a} -> {b} has no drawn endpoint")
            sx, sy_, _ = src
            tx, ty, tleft = dst
            if tleft > sx:
                d = f"M{sx},{sy_} C{sx + 30},{sy_} {tleft - 30},{ty} {tleft},{ty}"
            else:
                # a pointer into the stack loops around the right edge of the column
                d = f"M{sx},{sy_} C{sx + 35},{sy_} {tx + 35},{ty} {tx},{ty}"
            sub(g, "path", class_="arrow", d=d, fill="none", stroke=pal["arrow"], marker_end="url(#head)",
                data_from=a, data_to=b)
    return root


def svg_facts(content: bytes) -> set[Fact]:
    """Recover the logical content of an SVG memory trace from its element tree."""
    root = parse_svg(content)
    facts: set[Fact] = set()
    for st in root.iter("g"):
        if st.get("class") != "state":
            continue
        i = int(st.get("data-index"))
        label = next(t for t in st.iter("text") if t.get("class") == "state-label").text
        facts.add(("state", i, label.split(" at ", 1)[1]))
        for g in st.iter("g"):
            cls = g.get("class")
            texts = {t.get("class"): t for t in g.findall("text")}
            if cls == "ub":
                facts.add(("ub", i, g.find("text").text))
            elif cls == "frame":
                depth = int(g.get("data-depth"))
                fn, _, _ = texts["frame-label"].text.rpartition("@")
                facts.add(("frame", i, depth, fn))
                for r in g.findall("g"):
                    name = r.find("text[@class='name']")
                    value = r.find("text[@class='value']")
                    facts.add(("var", i, depth, name.text, value.text,
                               name.get("text-decoration") == "line-through", r.get("data-changed") == "true"))
            elif cls == "heap":
                facts.add(("heap", i, texts["name"].text, texts["value"].text, g.get("data-changed") == "true"))
            elif cls == "tomb":
                facts.add(("tomb", i, texts["name"].text, texts["kind"].text))
        for p in st.iter("path"):
            if p.get("class") == "arrow":
                facts.add(("arrow", i, p.get("data-from"), p.get("data-to")))
    return facts


def render_memory_trace(snaps: Sequence[Snapshot], opts: RenderOptions = RenderOptions(),
                        program: Any = None) -> DiagramDoc:
    """Draw snapshots in time order, left to right.

    ``program``, when given, is hashed into the provenance and embedded in
    the HTML page as a listing.
    """
    if not snaps:
        raise ValueError("a memory trace needs at least one snapshot")
    states = panels(snaps, opts.level)
    prov = provenance(program if program is not None else [sn.model() for sn in snaps])
    if opts.format is Format.TEXT:
        content = _text(states, opts).encode("utf-8")
    else:
        svg = svg_bytes(_svg(states, opts, prov))
        if opts.format is Format.HTML:
            from ownlab.render.html import html_page

            svg = html_page(f"memory trace ({len(states)} states)", [svg], program, prov)
        content = svg
    return DiagramDoc(DiagramKind.MEMORY_TRACE, opts.format, content, prov)
