"""ownlab: a laboratory for ownership-type checking on a small MIR-like language."""

__version__ = "0.1.0"


def corpus_paths() -> list:
    """The bundled example programs, sorted by file name."""
    from importlib.resources import files

    root = files("ownlab") / "corpus"
    return sorted((p for p in root.iterdir() if p.name.endswith(".own")), key=lambda p: p.name)
