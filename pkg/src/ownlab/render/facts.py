"""The shared assertion pass: logical facts a diagram must show, whatever its format.

``expected_facts`` derives them from the model being drawn and ``doc_facts``
reads them back out of a rendered text or SVG document, so comparing the
two checks that a rendering neither drops nor invents content.
"""

from __future__ import annotations

from typing import Any, Sequence

from ownlab.render import listing, memory, permtable
from ownlab.render.document import DiagramDoc, DiagramKind, Format, RenderOptions


def expected_facts(kind: DiagramKind, model: Any, opts: RenderOptions = RenderOptions()) -> set[tuple]:
    """Facts for ``model``: snapshots, permission steps, or ``(program, marks)``."""
    if kind is DiagramKind.MEMORY_TRACE:
        return memory.panel_facts(memory.panels(model, opts.level))
    if kind is DiagramKind.PERM_TABLE:
        return permtable.step_facts(model)
    program, marks = model
    return listing.visible_facts(listing.listing_facts(program, marks, opts))


def doc_facts(doc: DiagramDoc, opts: RenderOptions = RenderOptions()) -> set[tuple]:
    """Facts visible in a text or SVG document (HTML documents are not parsed)."""
    if doc.format is Format.HTML:
        raise ValueError("facts are read from text or SVG documents")
    text = doc.format is Format.TEXT
    if doc.kind is DiagramKind.MEMORY_TRACE:
        return memory.text_facts(doc.text) if text else memory.svg_facts(doc.content)
    if doc.kind is DiagramKind.PERM_TABLE:
        return permtable.text_facts(doc.text, opts) if text else permtable.svg_facts(doc.content, opts)
    return listing.text_facts(doc.text) if text else listing.svg_facts(doc.content)


def same_content(docs: Sequence[DiagramDoc], expected: set[tuple], opts: RenderOptions = RenderOptions()) -> list[str]:
    """Problems found comparing each document's facts with ``expected``; empty when all agree."""
    problems = []
    for doc in docs:
        got = doc_facts(doc, opts)
        for f in sorted(expected - got, key=repr):
            problems.append(f"{doc.format.value}: missing {f}")
        for f in sorted(got - expected, key=repr):
            problems.append(f"{doc.format.value}: unexpected {f}")
    return problems
