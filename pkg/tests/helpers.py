"""Shared test helpers: corpus access, program strategies, and small builders."""

from __future__ import annotations

from pathlib import Path

from hypothesis import strategies as st

from ownlab import corpus_paths
from ownlab.diffcheck import FuzzConfig, generate_program
from ownlab.lang import TypedProgram, load, type_check

CORPUS = {p.stem: p for p in corpus_paths()}
GOLDEN = Path(__file__).parent / "golden"


def load_corpus(name: str) -> TypedProgram:
    return load(CORPUS[name].read_text(encoding="utf-8"))


def fuzz_typed(seed: int, **cfg) -> TypedProgram:
    return type_check(generate_program(FuzzConfig(seed=seed, **cfg)))


seeds = st.integers(min_value=0, max_value=2**31 - 1)

# generated programs: polymorphic by default, occasionally monomorphic and larger
programs = st.builds(
    lambda seed, mono, n: fuzz_typed(seed, abstract_lifetimes=not mono, max_instructions=n),
    seeds, st.booleans(), st.integers(min_value=3, max_value=12),
)
mono_programs = st.builds(lambda seed: fuzz_typed(seed, abstract_lifetimes=False), seeds)
