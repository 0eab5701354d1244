from __future__ import annotations

from html import escape
from typing import Sequence

from ownlab.lang import syntax as s
from ownlab.lang.printer import pretty_print

_STYLE = ("body{font-family:sans-serif;margin:1.5em}"
          "pre{background:#f7f7f7;padding:.8em;border:1px solid #ddd}"
          "figure{margin:1em 0;overflow-x:auto}")


def html_page(title: str, figures: Sequence[bytes], program: s.Program | None, prov: str,
              listing: str | None = None) -> bytes:
    """A standalone page: the inline SVG figures plus the program listing."""
    parts = [
        "<!DOCTYPE html>",
        '<html lang="en">',
        "<head>",
        '<meta charset="utf-8">',
        f"<title>{escape(title)}</title>",
        f'<meta name="generator" content="{escape(prov)}">',
        f"<style>{_STYLE}</style>",
        "</head>",
        "<body>",
        f"<h1>{escape(title)}</h1>",
    ]
    for fig in figures:
        parts += ["<figure>", fig.decode("utf-8").rstrip("\n"), "</figure>"]
    if listing is None and program is not None:
        listing = pretty_print(program)
    if listing is not None:
        parts += ["<h2>Program</h2>", f'<pre class="listing">{escape(listing.rstrip())}</pre>']
    parts += ["</body>", "</html>"]
    return ("\n".join(parts) + "\n").encode("utf-8")
