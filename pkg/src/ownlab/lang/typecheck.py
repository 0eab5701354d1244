from __future__ import annotations

from dataclasses import dataclass, field

from ownlab.lang import syntax as s


class TypeCheckError(Exception):
    def __init__(self, diagnostics: list[s.Diagnostic]):
        self.diagnostics = diagnostics
        super().__init__("; ".join(str(d) for d in diagnostics))


class _PathTypeError(Exception):
    pass


def path_type(f: s.FunctionDef, p: s.Path) -> s.LangType:
    b = f.binding(p.base)
    if b is None:
        raise _PathTypeError(f"unknown identifier {p.base}")
    ty = b.ty
    for k, op in enumerate(p.ops):
        here = s.Path(p.base, p.ops[:k])
        if isinstance(op, s.Deref):
            if not isinstance(ty, (s.RefT, s.BoxT)):
                raise _PathTypeError(f"cannot dereference {here} of type {ty}")
            ty = ty.inner
        else:
            if not isinstance(ty, s.TupleT):
                raise _PathTypeError(f"field projection .{op} on non-tuple {here} of type {ty}")
            if op >= len(ty.items):
                raise _PathTypeError(f"field projection .{op} out of tuple arity {len(ty.items)} on {here}")
            ty = ty.items[op]
    return ty


@dataclass
class TypedProgram:
    """A program together with its resolved path types and loan lifetimes."""

    program: s.Program
    types: dict[str, dict[s.Path, s.LangType]] = field(default_factory=dict)
    loan_lifetimes: dict[tuple[str, int], s.Lifetime] = field(default_factory=dict)

    def function(self, name: str) -> s.FunctionDef:
        return self.program.function(name)

    def type_of(self, fn: str, p: s.Path) -> s.LangType:
        table = self.types[fn]
        if p not in table:
            table[p] = path_type(self.program.function(fn), p)
        return table[p]

    def movable(self, fn: str, p: s.Path) -> bool:
        return s.is_movable(self.type_of(fn, p))

    def ref_derefs(self, fn: str, p: s.Path) -> list[tuple[s.Path, s.RefT]]:
        """Prefixes of p that are dereferenced as references (not boxes)."""
        out = []
        for k, op in enumerate(p.ops):
            if isinstance(op, s.Deref):
                prefix = s.Path(p.base, p.ops[:k])
                ty = self.type_of(fn, prefix)
                if isinstance(ty, s.RefT):
                    out.append((prefix, ty))
        return out


def _operand_type(f: s.FunctionDef, op: s.Operand) -> s.LangType:
    if isinstance(op, s.Num):
        return s.U32
    if isinstance(op, s.BoolConst):
        return s.BOOL
    return path_type(f, op)


def type_check(program: s.Program) -> TypedProgram:
    """Resolve a type for every path occurrence; raises TypeCheckError."""
    tp = TypedProgram(program)
    diags: list[s.Diagnostic] = []
    counter = 0
    for f in program.functions:
        tp.types[f.name] = {}
        for idx, instr in enumerate(f.body):
            if isinstance(instr, s.Assign) and isinstance(instr.rv, s.Loan):
                tp.loan_lifetimes[(f.name, idx)] = s.Lifetime(f"r{counter}", abstract=False)
                counter += 1
            try:
                _check_instruction(tp, f, idx, instr)
            except _PathTypeError as exc:
                diags.append(s.Diagnostic(str(exc), f.name, idx))
    if diags:
        raise TypeCheckError(diags)
    return tp


def _check_instruction(tp: TypedProgram, f: s.FunctionDef, idx: int, instr: s.Instruction) -> None:
    for p in s.instruction_paths(instr):
        tp.types[f.name][p] = path_type(f, p)
        for q in p.prefixes():
            tp.types[f.name].setdefault(q, path_type(f, q))

    def no_move_through_ref(p: s.Path) -> None:
        if tp.movable(f.name, p) and tp.ref_derefs(f.name, p):
            raise _PathTypeError(f"cannot move out of {p}, which is behind a reference")

    def no_shared_deref(p: s.Path, what: str) -> None:
        if any(rt.qualifier is s.Qualifier.SHARED for _, rt in tp.ref_derefs(f.name, p)):
            raise _PathTypeError(f"cannot {what} {p}, which is behind a shared reference")

    def expect(want: s.LangType, got: s.LangType, what: str) -> None:
        if s.erase(want) != s.erase(got):
            raise _PathTypeError(f"type mismatch at {what}: expected {want}, found {got}")

    operands: list[s.Path] = []
    if isinstance(instr, s.Assign) and isinstance(instr.rv, s.Tuple):
        operands = [op for op in instr.rv.items if isinstance(op, s.Path)]
    elif isinstance(instr, s.Call):
        operands = list(instr.args)
    for k, moved in enumerate(operands):
        if tp.movable(f.name, moved):
            for later in operands[k + 1:]:
                if later.overlaps(moved):
                    raise _PathTypeError(f"use of {later} after {moved} was moved in the same instruction")

    if isinstance(instr, s.Assign):
        dest_ty = path_type(f, instr.dest)
        no_shared_deref(instr.dest, "assign to")
        rv = instr.rv
        if isinstance(rv, s.Const):
            got = _operand_type(f, rv.value)
        elif isinstance(rv, s.Use):
            no_move_through_ref(rv.path)
            got = path_type(f, rv.path)
        elif isinstance(rv, s.Loan):
            if rv.qualifier is s.Qualifier.UNIQUE:
                no_shared_deref(rv.path, "uniquely borrow")
            got = s.RefT(tp.loan_lifetimes[(f.name, idx)], rv.qualifier, path_type(f, rv.path))
        elif isinstance(rv, s.Tuple):
            for op in rv.items:
                if isinstance(op, s.Path):
                    no_move_through_ref(op)
            got = s.TupleT(tuple(_operand_type(f, op) for op in rv.items))
        else:
            if isinstance(rv.operand, s.Path):
                no_move_through_ref(rv.operand)
            got = s.BoxT(_operand_type(f, rv.operand))
        expect(dest_ty, got, f"assignment to {instr.dest}")
    elif isinstance(instr, s.If):
        expect(s.BOOL, path_type(f, instr.cond), "if condition")
    elif isinstance(instr, s.Call):
        callee = tp.program.function(instr.callee)
        if len(callee.params) != len(instr.args):
            raise _PathTypeError(
                f"call to {callee.name} expects {len(callee.params)} arguments, got {len(instr.args)}")
        for param, arg in zip(callee.params, instr.args):
            no_move_through_ref(arg)
            expect(param.ty, path_type(f, arg), f"argument {param.name} of {callee.name}")
        no_shared_deref(instr.dest, "assign to")
        if callee.ret is not None:
            expect(path_type(f, instr.dest), callee.ret, f"call result of {callee.name}")
    elif isinstance(instr, s.Return):
        no_move_through_ref(instr.operand)
        if f.ret is not None:
            expect(f.ret, path_type(f, instr.operand), "return")
    else:
        no_move_through_ref(instr.operand)
