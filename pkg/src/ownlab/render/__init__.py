"""Deterministic text, SVG and HTML diagrams of traces, permission steps and listings."""

from ownlab.render.document import (
    RENDERER_VERSION, UNICODE_ICONS, DiagramDoc, DiagramKind, Format, Level, RenderOptions, provenance,
)
from ownlab.render.facts import doc_facts, expected_facts
from ownlab.render.listing import render_annotated_listing
from ownlab.render.memory import dangling_arrows, render_memory_trace
from ownlab.render.permtable import render_perm_table

__all__ = [
    "RENDERER_VERSION", "UNICODE_ICONS", "DiagramDoc", "DiagramKind", "Format", "Level", "RenderOptions",
    "dangling_arrows", "doc_facts", "expected_facts", "provenance", "render_annotated_listing",
    "render_memory_trace", "render_perm_table",
]
