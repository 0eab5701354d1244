from __future__ import annotations

from ownlab.lang import syntax as s


def _function_diagnostics(f: s.FunctionDef, program: s.Program) -> list[s.Diagnostic]:
    out: list[s.Diagnostic] = []

    def diag(msg: str, index: int | None = None) -> None:
        out.append(s.Diagnostic(msg, f.name, index))

    seen: set[str] = set()
    for b in f.params + f.locals:
        if b.name in seen:
            diag(f"duplicate name {b.name}")
        seen.add(b.name)
    for a, b in f.outlives:
        for lt in (a, b):
            if lt not in f.lifetimes:
                diag(f"outlives constraint references undeclared lifetime '{lt}")
    for b in f.params + f.locals:
        for lt in s.lifetimes_of(b.ty):
            if lt.name not in f.lifetimes:
                diag(f"unknown lifetime '{lt.name} in type of {b.name}")

    n = len(f.body)
    if n == 0:
        diag("empty body")
        return out
    targets_ok = True
    for i, instr in enumerate(f.body):
        for p in s.instruction_paths(instr):
            if p.base not in seen:
                diag(f"unknown identifier {p.base}", i)
        if isinstance(instr, s.If):
            for t in (instr.then_target, instr.else_target):
                if not 0 <= t < n:
                    diag("branch target out of range", i)
                    targets_ok = False
        if isinstance(instr, s.Call) and not program.has_function(instr.callee):
            diag(f"unknown function {instr.callee}", i)
    if not isinstance(f.body[-1], (s.Return, s.If)):
        diag("missing return", n - 1)
        targets_ok = False
    if not targets_ok:
        return out

    # every instruction reachable from entry must be able to reach a Return
    reach = {0}
    stack = [0]
    while stack:
        i = stack.pop()
        for j in s.successors(f.body, i):
            if j not in reach:
                reach.add(j)
                stack.append(j)
    can_return = {i for i, instr in enumerate(f.body) if isinstance(instr, s.Return)}
    changed = True
    while changed:
        changed = False
        for i in range(n):
            if i not in can_return and any(j in can_return for j in s.successors(f.body, i)):
                can_return.add(i)
                changed = True
    for i in sorted(reach - can_return):
        diag("instruction cannot reach a return", i)
    return out


def _call_cycles(program: s.Program) -> list[s.Diagnostic]:
    graph = {
        f.name: sorted({i.callee for i in f.body if isinstance(i, s.Call) and program.has_function(i.callee)})
        for f in program.functions
    }
    color: dict[str, int] = {}
    found: list[s.Diagnostic] = []

    def visit(u: str) -> None:
        color[u] = 1
        for v in graph[u]:
            if color.get(v) == 1:
                found.append(s.Diagnostic(f"recursive call to {v} is not supported", u))
            elif v not in color:
                visit(v)
        color[u] = 2

    for name in graph:
        if name not in color:
            visit(name)
    return found


def well_formed(program: s.Program) -> list[s.Diagnostic]:
    """Structural checks on every function; an empty list means well formed."""
    out: list[s.Diagnostic] = []
    names = [f.name for f in program.functions]
    for name in sorted({n for n in names if names.count(n) > 1}):
        out.append(s.Diagnostic(f"duplicate function {name}"))
    if program.entry not in names:
        out.append(s.Diagnostic(f"missing entry function {program.entry}"))
    for f in program.functions:
        out.extend(_function_diagnostics(f, program))
    out.extend(_call_cycles(program))
    return out
