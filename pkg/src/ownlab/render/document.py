"""Document and option types shared by every renderer."""

from __future__ import annotations

import hashlib
import json
import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from enum import Enum
from pathlib import Path as FsPath
from typing import Mapping

from ownlab.lang import syntax as s
from ownlab.lang.printer import pretty_print
from ownlab.perms import Icon, MarkStyle

RENDERER_VERSION = "ownlab-render/1"


class Format(str, Enum):
    TEXT = "text"
    SVG = "svg"
    HTML = "html"

    @property
    def suffix(self) -> str:
        return {"text": ".txt", "svg": ".svg", "html": ".html"}[self.value]


class Level(str, Enum):
    """How much of a compound value a memory diagram spells out.

    ``ABSTRACTED`` shows a tuple as one cell holding ``(a, b)``;
    ``EXPANDED`` gives every field its own row.
    """

    ABSTRACTED = "abstracted"
    EXPANDED = "expanded"


class DiagramKind(str, Enum):
    MEMORY_TRACE = "memory-trace"
    PERM_TABLE = "perm-table"
    LISTING = "listing"


UNICODE_ICONS: Mapping[Icon, str] = {
    Icon.BIRTH: "↑",
    Icon.BORROW_START: "→",
    Icon.DEATH: "↓",
    Icon.REGAIN: "⟲",
    Icon.MOVED_OUT: "⇥",
}


@dataclass(frozen=True)
class RenderOptions:
    format: Format = Format.TEXT
    level: Level = Level.ABSTRACTED
    icons: tuple[tuple[Icon, str], ...] = tuple(UNICODE_ICONS.items())
    style: MarkStyle = MarkStyle.LETTER
    color: bool = False

    def __post_init__(self) -> None:
        glyphs = [g for _, g in self.icons]
        if {i for i, _ in self.icons} != set(Icon):
            raise ValueError("icon set must cover every icon kind")
        if len(set(glyphs)) != len(glyphs) or any(len(g) != 1 or g.isspace() for g in glyphs):
            raise ValueError("icon glyphs must be distinct single visible characters")

    def glyph(self, icon: Icon) -> str:
        return dict(self.icons)[icon]

    def icon_of(self, glyph: str) -> Icon:
        return {g: i for i, g in self.icons}[glyph]


@dataclass(frozen=True)
class DiagramDoc:
    kind: DiagramKind
    format: Format
    content: bytes
    provenance: str

    @property
    def text(self) -> str:
        return self.content.decode("utf-8")

    def write(self, directory: str | FsPath, stem: str) -> FsPath:
        out = FsPath(directory) / f"{stem}{self.format.suffix}"
        out.write_bytes(self.content)
        return out


def provenance(subject: s.Program | object) -> str:
    """Program hash plus renderer version, e.g. ``sha256:1a2b... ownlab-render/1``.

    Anything other than a program is hashed through its JSON form.
    """
    if isinstance(subject, s.Program):
        blob = pretty_print(subject, canonical=True)
    else:
        blob = json.dumps(subject, sort_keys=True, ensure_ascii=False, default=str)
    digest = hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]
    return f"sha256:{digest} {RENDERER_VERSION}"


# -- text helpers ------------------------------------------------------------------

_ANSI = {"red": "31", "green": "32", "yellow": "33", "bold": "1", "dim": "2"}
STRIKE = "̶"


def paint(text: str, style: str, opts: RenderOptions) -> str:
    if not opts.color or not text:
        return text
    return f"\x1b[{_ANSI[style]}m{text}\x1b[0m"


def strip_ansi(text: str) -> str:
    return re.sub(r"\x1b\[[0-9;]*m", "", text)


def strike(text: str) -> str:
    return "".join(ch + STRIKE for ch in text)


# -- svg helpers -------------------------------------------------------------------

SVG_NS = "http://www.w3.org/2000/svg"
FONT = "font-family:monospace;font-size:12px"

PALETTE = {
    "ink": "#222222", "frame": "#f4f4f4", "heap": "#eef4fb", "tomb": "#fbeeee",
    "gain": "#1a7f37", "loss": "#b42318", "ub": "#b42318", "changed": "#fff4c2", "arrow": "#3456a0",
}
GRAY = {k: v for k, v in zip(PALETTE, ["#222222", "#f4f4f4", "#eeeeee", "#e4e4e4",
                                        "#222222", "#555555", "#222222", "#dddddd", "#444444"])}


def palette(opts: RenderOptions) -> dict[str, str]:
    return PALETTE if opts.color else GRAY


def svg_root(width: int, height: int, title: str, prov: str) -> ET.Element:
    root = ET.Element("svg", {
        "xmlns": SVG_NS, "width": str(width), "height": str(height),
        "viewBox": f"0 0 {width} {height}", "style": FONT,
    })
    ET.SubElement(root, "title").text = title
    ET.SubElement(root, "desc").text = prov
    return root


def sub(parent: ET.Element, tag: str, text: str | None = None, **attrs: object) -> ET.Element:
    el = ET.SubElement(parent, tag, {k.rstrip("_").replace("_", "-"): str(v) for k, v in attrs.items()})
    if text is not None:
        el.text = text
    return el


def svg_bytes(root: ET.Element) -> bytes:
    ET.indent(root, space=" ")
    return ET.tostring(root, encoding="unicode").encode("utf-8") + b"\n"


def parse_svg(content: bytes) -> ET.Element:
    root = ET.fromstring(content.decode("utf-8"))
    # drop the namespace so callers can use bare tag names
    for el in root.iter():
        if el.tag.startswith("{"):
            el.tag = el.tag.split("}", 1)[1]
    return root


def text_width(text: str) -> int:
    return 7 * len(text.replace(STRIKE, ""))
