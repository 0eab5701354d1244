from __future__ import annotations

from ownlab.lang import syntax as s


def format_operand(op: s.Operand) -> str:
    return str(op)


def format_rvalue(rv: s.Rvalue) -> str:
    if isinstance(rv, s.Const):
        return str(rv.value)
    if isinstance(rv, s.Use):
        return str(rv.path)
    if isinstance(rv, s.Loan):
        return f"&{rv.qualifier.value} {rv.path}"
    if isinstance(rv, s.Box):
        return f"box {format_operand(rv.operand)}"
    items = [format_operand(op) for op in rv.items]
    if len(items) == 1:
        return f"({items[0]},)"
    return "(" + ", ".join(items) + ")"


def format_instruction(instr: s.Instruction) -> str:
    if isinstance(instr, s.Assign):
        return f"{instr.dest} = {format_rvalue(instr.rv)}"
    if isinstance(instr, s.If):
        return f"if {instr.cond} then {instr.then_target} else {instr.else_target}"
    if isinstance(instr, s.Call):
        return f"{instr.dest} = call {instr.callee}(" + ", ".join(map(str, instr.args)) + ")"
    if isinstance(instr, s.Return):
        return f"return {instr.operand}"
    return f"drop {instr.operand}"


def format_signature(f: s.FunctionDef) -> str:
    gens = ["'" + lt for lt in f.lifetimes] + [f"'{a} :> '{b}" for a, b in f.outlives]
    head = f"fn {f.name}"
    if gens:
        head += "<" + ", ".join(gens) + ">"
    params = ", ".join(("mut " if p.mutable else "") + f"{p.name}: {p.ty}" for p in f.params)
    head += f"({params})"
    if f.ret is not None:
        head += f" -> {f.ret}"
    return head


def format_declaration(b: s.Binding) -> str:
    return f"let {'mut ' if b.mutable else ''}{b.name}: {b.ty};"


def pretty_function(f: s.FunctionDef, canonical: bool = False) -> str:
    decls = sorted(f.locals, key=lambda b: b.name) if canonical else f.locals
    lines = [format_signature(f) + " {"]
    lines += ["    " + format_declaration(b) for b in decls]
    lines += [f"    {i}: {format_instruction(instr)};" for i, instr in enumerate(f.body)]
    lines.append("}")
    return "\n".join(lines)


def pretty_print(program: s.Program, canonical: bool = False) -> str:
    """Render a program as source text that parses back to the same program.

    With ``canonical=True`` local declarations are sorted by name, so the
    output is a normal form: printing a re-parsed canonical text is a no-op.
    """
    return "\n\n".join(pretty_function(f, canonical) for f in program.functions) + "\n"
