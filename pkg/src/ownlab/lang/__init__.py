"""The MIR-subset object language: syntax, parsing, printing, checking."""

from ownlab.lang.parser import ParseError, parse_program
from ownlab.lang.printer import pretty_print
from ownlab.lang.syntax import *  # noqa: F401,F403
from ownlab.lang.typecheck import TypeCheckError, TypedProgram, type_check
from ownlab.lang.wellformed import well_formed


def load(text: str) -> TypedProgram:
    """Parse, check well-formedness, and type-check in one go."""
    program = parse_program(text)
    diags = well_formed(program)
    if diags:
        raise ParseError(diags)
    return type_check(program)
