"""Greedy test-case reduction for programs that violate a property."""

from __future__ import annotations

from dataclasses import replace
from typing import Callable, Iterator

from ownlab.lang import syntax as s
from ownlab.lang.typecheck import TypeCheckError, TypedProgram, type_check
from ownlab.lang.wellformed import well_formed

# A property is violated when the predicate returns True.
Predicate = Callable[[TypedProgram], bool]


def _checked(p: s.Program) -> TypedProgram | None:
    if well_formed(p):
        return None
    try:
        return type_check(p)
    except (TypeCheckError, KeyError):
        return None


def _with_function(p: s.Program, f: s.FunctionDef) -> s.Program:
    return s.Program(tuple(f if g.name == f.name else g for g in p.functions), p.entry)


def _retarget(t: int, removed: int) -> int:
    return t - 1 if t > removed else t


def _remove_instruction(f: s.FunctionDef, k: int) -> s.FunctionDef:
    body = []
    for i, instr in enumerate(f.body):
        if i == k:
            continue
        if isinstance(instr, s.If):
            instr = s.If(instr.cond, _retarget(instr.then_target, k), _retarget(instr.else_target, k))
        body.append(instr)
    return replace(f, body=tuple(body))


def _simpler_rvalues(rv: s.Rvalue, ty: s.LangType) -> list[s.Rvalue]:
    out: list[s.Rvalue] = []
    if isinstance(ty, s.U32T) and rv != s.Const(s.Num(0)):
        out.append(s.Const(s.Num(0)))
    if isinstance(ty, s.BoolT) and rv != s.Const(s.BoolConst(False)):
        out.append(s.Const(s.BoolConst(False)))
    if isinstance(rv, s.Tuple):
        for k, op in enumerate(rv.items):
            if isinstance(op, s.Path):
                for c in (s.Num(0), s.BoolConst(False)):
                    out.append(s.Tuple(rv.items[:k] + (c,) + rv.items[k + 1:]))
    if isinstance(rv, s.Box) and isinstance(rv.operand, s.Path):
        out += [s.Box(s.Num(0)), s.Box(s.BoolConst(False))]
    return out


def candidates(p: s.Program) -> Iterator[s.Program]:
    """Every program one shrink step away from p, smallest changes last."""
    used = {i.callee for f in p.functions for i in f.body if isinstance(i, s.Call)}
    for f in p.functions:
        if f.name != p.entry and f.name not in used:
            yield s.Program(tuple(g for g in p.functions if g.name != f.name), p.entry)
    for f in p.functions:
        for k in range(len(f.body)):
            yield _with_function(p, _remove_instruction(f, k))
    for f in p.functions:
        for k, instr in enumerate(f.body):
            if isinstance(instr, s.If):
                for t in {instr.then_target, instr.else_target}:
                    if (instr.then_target, instr.else_target) != (t, t):
                        body = f.body[:k] + (s.If(instr.cond, t, t),) + f.body[k + 1:]
                        yield _with_function(p, replace(f, body=body))
    for f in p.functions:
        mentioned = {q.base for instr in f.body for q in s.instruction_paths(instr)}
        for b in f.locals:
            if b.name not in mentioned:
                yield _with_function(p, replace(f, locals=tuple(x for x in f.locals if x is not b)))
    for f in p.functions:
        for k, instr in enumerate(f.body):
            if isinstance(instr, s.Assign):
                tp = _checked(p)
                if tp is None:
                    continue
                ty = tp.type_of(f.name, instr.dest)
                for rv in _simpler_rvalues(instr.rv, ty):
                    body = f.body[:k] + (s.Assign(instr.dest, rv),) + f.body[k + 1:]
                    yield _with_function(p, replace(f, body=body))


def shrink(p: s.Program, violated: Predicate, max_rounds: int = 10_000) -> s.Program:
    """Reduce p while ``violated`` keeps holding; returns a local minimum.

    Raises ValueError when p does not violate the property to begin with.
    """
    tp = _checked(p)
    if tp is None or not violated(tp):
        raise ValueError("shrink needs a program that violates the property")
    for _ in range(max_rounds):
        for cand in candidates(p):
            ctp = _checked(cand)
            if ctp is not None and violated(ctp):
                p = cand
                break
        else:
            return p
    return p
