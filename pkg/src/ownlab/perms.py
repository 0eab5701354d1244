"""The permissions model: what each operation needs, what each path lacks, and why.

Permissions are R (read), W (write), O (own: move or drop) and F (flow a
lifetime into another).  At every instruction each tracked path either has
or misses each of R, W and O; a missing permission carries the cause that
removed it.  Some causes only explain a table cell (a dead variable) and
never make an operation fail; ``Cause.blocks`` says which.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping

from ownlab.facts import Access, FactBase, FunctionAnalysis, InstrId, LoanId
from ownlab.lang import syntax as s
from ownlab.polonius import outlives_closure


class Permission(str, Enum):
    R = "R"
    W = "W"
    O = "O"
    F = "F"


RWO = (Permission.R, Permission.W, Permission.O)
_PERM_ORDER = {p: k for k, p in enumerate(Permission)}


class CauseKind(str, Enum):
    MOVED = "Moved"
    BORROWED = "Borrowed"
    NOT_DECLARED_MUT = "NotDeclaredMut"
    DEAD = "Dead"
    UNINITIALIZED = "Uninitialized"
    MISSING_OUTLIVES = "MissingOutlives"


# display priority, most important first
_CAUSE_RANK = {k: n for n, k in enumerate(CauseKind)}


@dataclass(frozen=True)
class Cause:
    kind: CauseKind
    loan: LoanId | None = None
    lifetimes: tuple[str, str] | None = None
    # whether this cause makes an operation needing the permission fail
    blocks: bool = True

    def __str__(self) -> str:
        if self.kind is CauseKind.BORROWED:
            return f"Borrowed({self.loan})"
        if self.kind is CauseKind.MISSING_OUTLIVES:
            a, b = self.lifetimes
            return f"MissingOutlives('{a}, '{b})"
        return self.kind.value

    def rank(self) -> tuple:
        loan = self.loan.instruction if self.loan is not None else InstrId("", -1)
        return (_CAUSE_RANK[self.kind], not self.blocks, loan, self.lifetimes or ("", ""))


class Rule(str, Enum):
    """The missing-permission rules; each can be switched off for mutation testing."""

    MISSING_R = "Missing-R"
    MISSING_WO = "Missing-WO"
    MISSING_MOVED = "Missing-Moved"
    MISSING_FLOW = "Missing-Flow"
    NOT_DECLARED_MUT = "NotDeclaredMut"
    UNINITIALIZED = "Uninitialized"
    DEAD = "Dead"


ALL_RULES = frozenset(Rule)


@dataclass
class PermissionState:
    """Permissions on entry to an instruction."""

    at: InstrId
    has: dict[s.Path, frozenset[Permission]]
    missing: dict[s.Path, dict[Permission, Cause]]
    causes: dict[tuple[s.Path, Permission], tuple[Cause, ...]] = field(default_factory=dict, repr=False)

    def blocked(self, p: s.Path, c: Permission) -> Cause | None:
        """The highest-priority cause that makes needing c on p fail, if any."""
        for cause in self.causes.get((p, c), ()):
            if cause.blocks:
                return cause
        return None

    def to_record(self) -> dict:
        rows = []
        for p in sorted(set(self.has) | set(self.missing), key=s.Path.sort_key):
            rows.append({
                "path": str(p),
                "has": "".join(c.value for c in sorted(self.has.get(p, ()), key=_PERM_ORDER.get)),
                "missing": {c.value: str(cause) for c, cause in
                            sorted(self.missing.get(p, {}).items(), key=lambda kv: _PERM_ORDER[kv[0]])},
            })
        return {"kind": "perm-state", "function": self.at.function, "index": self.at.index, "paths": rows}


@dataclass
class PermissionStates:
    facts: FactBase
    states: dict[InstrId, PermissionState]
    rules: frozenset[Rule] = ALL_RULES

    def __getitem__(self, at: InstrId) -> PermissionState:
        return self.states[at]

    def __iter__(self):
        return iter(self.states[k] for k in sorted(self.states))

    def function(self, fn: str) -> list[PermissionState]:
        return [st for st in self if st.at.function == fn]


# -- needs ---------------------------------------------------------------------


def needs_at(fb: FactBase) -> set[tuple[s.Path, Permission, InstrId]]:
    out = {(p, Permission.R, at) for p, at in fb.read_at}
    out |= {(p, Permission.W, at) for p, at in fb.written_at}
    out |= {(p, Permission.O, at) for p, at in fb.moved_at}
    out |= {(p, Permission.F, at) for _, _, p, at in fb.flows}
    return out


# -- missing -------------------------------------------------------------------


def _write_forbidden(a: FunctionAnalysis, p: s.Path) -> bool:
    """Whether p is immutable by declaration: a non-mut root or a shared reference on the way."""
    derefs = a.tp.ref_derefs(a.fn, p)
    if any(rt.qualifier is s.Qualifier.SHARED for _, rt in derefs):
        return True
    if derefs:
        return False
    b = a.f.binding(p.base)
    return b is not None and not b.mutable


def _causes_at(a: FunctionAnalysis, fb: FactBase, i: int, p: s.Path,
               rules: frozenset[Rule]) -> dict[Permission, list[Cause]]:
    at = InstrId(a.fn, i)
    out: dict[Permission, list[Cause]] = {c: [] for c in RWO}
    if Rule.MISSING_MOVED in rules and a.moved_before(p, i):
        for c in RWO:
            out[c].append(Cause(CauseKind.MOVED))
    for loan in a.loans.values():
        if (loan, at) not in fb.loan_live_at:
            continue
        cause = Cause(CauseKind.BORROWED, loan)
        if Rule.MISSING_R in rules and loan.unique and a.loan_conflicts(loan, p, Access.READ):
            out[Permission.R].append(cause)
        if Rule.MISSING_WO in rules:
            if a.loan_conflicts(loan, p, Access.WRITE):
                out[Permission.W].append(cause)
            if a.loan_conflicts(loan, p, Access.MOVE):
                out[Permission.O].append(cause)
    root_init = p.base in a.init_in[i]
    if Rule.NOT_DECLARED_MUT in rules and _write_forbidden(a, p):
        # a non-mut binding may still receive its first value
        if root_init or a.tp.ref_derefs(a.fn, p):
            out[Permission.W].append(Cause(CauseKind.NOT_DECLARED_MUT))
    if Rule.DEAD in rules and p.base not in a.live_in[i]:
        for c in RWO:
            out[c].append(Cause(CauseKind.DEAD, blocks=False))
    if Rule.UNINITIALIZED in rules and p.base in a.uninit_in[i]:
        out[Permission.R].append(Cause(CauseKind.UNINITIALIZED))
        out[Permission.O].append(Cause(CauseKind.UNINITIALIZED))
        # storing into a whole variable is how it gets initialized; a unique
        # borrow also counts as a write but needs the place to exist already
        instr = a.f.body[i]
        stores = isinstance(instr, (s.Assign, s.Call)) and instr.dest == p
        out[Permission.W].append(Cause(CauseKind.UNINITIALIZED, blocks=not stores))
    for c in RWO:
        out[c].sort(key=Cause.rank)
    return out


def missing_at(fb: FactBase, rules: Iterable[Rule] = ALL_RULES) -> PermissionStates:
    """Per-instruction permission states over the tracked-path universe."""
    rules = frozenset(rules)
    states: dict[InstrId, PermissionState] = {}
    tp = fb.tp
    flows_by_at: dict[InstrId, list] = {}
    for r1, r2, p, at in fb.flows:
        flows_by_at.setdefault(at, []).append((r1, r2, p))
    for fn, a in fb.analyses.items():
        f = tp.function(fn)
        closure = outlives_closure(f.lifetimes, fb.declared_outlives.get(fn, frozenset()))
        for i in range(a.n):
            at = InstrId(fn, i)
            has: dict[s.Path, frozenset[Permission]] = {}
            missing: dict[s.Path, dict[Permission, Cause]] = {}
            causes: dict[tuple[s.Path, Permission], tuple[Cause, ...]] = {}
            for p in a.universe:
                per = _causes_at(a, fb, i, p, rules)
                has[p] = frozenset(c for c in RWO if not per[c])
                missing[p] = {c: per[c][0] for c in RWO if per[c]}
                for c in RWO:
                    if per[c]:
                        causes[(p, c)] = tuple(per[c])
            if Rule.MISSING_FLOW in rules:
                for r1, r2, p in sorted(flows_by_at.get(at, ()), key=lambda t: (t[0], t[1], t[2].sort_key())):
                    if (r1, r2) not in closure:
                        cause = Cause(CauseKind.MISSING_OUTLIVES, lifetimes=(r1, r2))
                        missing.setdefault(p, {}).setdefault(Permission.F, cause)
                        causes[(p, Permission.F)] = causes.get((p, Permission.F), ()) + (cause,)
            states[at] = PermissionState(at, has, missing, causes)
    return PermissionStates(fb, states, rules)


def missing_relation(states: PermissionStates) -> set[tuple[s.Path, Permission, InstrId]]:
    """The blocking missing-at relation: (p, c, I) where needing c on p at I fails."""
    out = set()
    for st in states:
        for (p, c), causes in st.causes.items():
            if any(x.blocks for x in causes):
                out.add((p, c, st.at))
    return out


# -- errors --------------------------------------------------------------------


@dataclass(frozen=True)
class PermissionErrorDiag:
    instruction: InstrId
    path: s.Path
    permission: Permission
    cause: Cause

    def message(self) -> str:
        return (f"{self.path} needs {self.permission.value} at {self.instruction}, "
                f"but it is missing ({self.cause})")

    def to_record(self) -> dict:
        return {
            "kind": "permission-error",
            "function": self.instruction.function,
            "index": self.instruction.index,
            "path": str(self.path),
            "permission": self.permission.value,
            "cause": str(self.cause),
            "cause_kind": self.cause.kind.value,
            "message": self.message(),
        }


def permission_errors(fb: FactBase, states: PermissionStates | None = None) -> list[PermissionErrorDiag]:
    """One diagnostic per needed permission that is missing, ordered by instruction then path."""
    states = states if states is not None else missing_at(fb)
    out = []
    for p, c, at in needs_at(fb):
        cause = states[at].blocked(p, c)
        if cause is not None:
            out.append(PermissionErrorDiag(at, p, c, cause))
    return sorted(out, key=lambda d: (d.instruction, d.path.sort_key(), _PERM_ORDER[d.permission]))


# -- steps ---------------------------------------------------------------------


class Icon(str, Enum):
    BIRTH = "Birth"
    BORROW_START = "BorrowStart"
    DEATH = "Death"
    REGAIN = "Regain"
    MOVED_OUT = "MovedOut"


@dataclass(frozen=True)
class PathChange:
    gains: frozenset[Permission]
    losses: frozenset[Permission]
    icons: tuple[tuple[Permission, Icon], ...]

    def icon_for(self, c: Permission) -> Icon:
        return dict(self.icons)[c]


@dataclass(frozen=True)
class PermStep:
    """The difference in permissions between two boundary points.

    ``edge`` is true for a step that follows a branch of an ``if`` rather
    than falling through to the next instruction.
    """

    boundary: tuple[InstrId, InstrId]
    changes: tuple[tuple[s.Path, PathChange], ...]
    edge: bool = False

    def change(self, p: s.Path) -> PathChange | None:
        return dict(self.changes).get(p)

    @property
    def label(self) -> str:
        a, b = self.boundary
        if self.edge:
            return f"edge {a} -> {b}"
        return f"after {a}"

    def apply(self, has: Mapping[s.Path, frozenset[Permission]]) -> dict[s.Path, frozenset[Permission]]:
        out = dict(has)
        for p, ch in self.changes:
            out[p] = (out.get(p, frozenset()) - ch.losses) | ch.gains
        return out

    def to_record(self) -> dict:
        a, b = self.boundary
        return {
            "kind": "perm-step",
            "function": a.function,
            "from": a.index,
            "to": b.index,
            "edge": self.edge,
            "changes": [
                {
                    "path": str(p),
                    "gains": "".join(c.value for c in sorted(ch.gains, key=_PERM_ORDER.get)),
                    "losses": "".join(c.value for c in sorted(ch.losses, key=_PERM_ORDER.get)),
                    "icons": {c.value: icon.value for c, icon in ch.icons},
                }
                for p, ch in self.changes
            ],
        }


def _loss_icon(cause: Cause) -> Icon:
    if cause.kind is CauseKind.BORROWED:
        return Icon.BORROW_START
    if cause.kind is CauseKind.MOVED:
        return Icon.MOVED_OUT
    return Icon.DEATH


def diff_states(before: PermissionState, after: PermissionState, edge: bool = False) -> PermStep:
    changes = []
    for p in sorted(set(before.has) | set(after.has), key=s.Path.sort_key):
        old, new = before.has.get(p, frozenset()), after.has.get(p, frozenset())
        gains, losses = new - old, old - new
        if not gains and not losses:
            continue
        icons = []
        for c in sorted(gains | losses, key=_PERM_ORDER.get):
            if c in gains:
                prev = before.missing.get(p, {}).get(c)
                icons.append((c, Icon.REGAIN if prev is not None and prev.kind is CauseKind.BORROWED
                              else Icon.BIRTH))
            else:
                icons.append((c, _loss_icon(after.missing[p][c])))
        changes.append((p, PathChange(frozenset(gains), frozenset(losses), tuple(icons))))
    return PermStep((before.at, after.at), tuple(changes), edge)


def _as_id(x: InstrId | int, fn: str) -> InstrId:
    return x if isinstance(x, InstrId) else InstrId(fn, x)


def steps(states: PermissionStates, boundaries: Iterable[tuple[InstrId | int, InstrId | int]] | None = None,
          function: str | None = None) -> list[PermStep]:
    """Permission steps for one function.

    By default there is one step per CFG edge between reachable
    instructions; steps out of an ``if`` are marked as edges.  Custom
    boundaries must be increasing pairs, sorted and non-overlapping.
    """
    fn = function or states.facts.tp.program.entry
    a = states.facts.analyses[fn]
    if boundaries is None:
        out = []
        for i in sorted(a.reachable()):
            instr = a.f.body[i]
            for j in s.successors(a.f.body, i):
                out.append(diff_states(states[InstrId(fn, i)], states[InstrId(fn, j)],
                                       edge=isinstance(instr, s.If)))
        return out
    pairs = [(_as_id(x, fn), _as_id(y, fn)) for x, y in boundaries]
    last = -1
    for x, y in pairs:
        if x.function != fn or y.function != fn:
            raise ValueError("boundaries must stay inside one function")
        if not (0 <= x.index < y.index < a.n):
            raise ValueError(f"invalid boundary ({x}, {y}): need from < to within the body")
        if x.index < last:
            raise ValueError("boundaries must be ordered and non-overlapping")
        last = y.index
    return [diff_states(states[x], states[y]) for x, y in pairs]


# -- expectation marks -----------------------------------------------------------


class MarkStyle(str, Enum):
    LETTER = "letter"
    CIRCLE = "circle"


@dataclass(frozen=True)
class ExpectationMark:
    instruction: InstrId
    path: s.Path
    expected: tuple[Permission, ...]
    satisfied: tuple[tuple[Permission, bool], ...]
    style: MarkStyle | None = None  # None defers to the renderer's default

    def is_satisfied(self, c: Permission) -> bool:
        return dict(self.satisfied)[c]

    @property
    def all_satisfied(self) -> bool:
        return all(ok for _, ok in self.satisfied)

    def to_record(self) -> dict:
        return {
            "kind": "expectation",
            "function": self.instruction.function,
            "index": self.instruction.index,
            "path": str(self.path),
            "expected": "".join(c.value for c in self.expected),
            "satisfied": {c.value: ok for c, ok in self.satisfied},
            "style": self.style.value if self.style is not None else "default",
        }


def expectations(fb: FactBase, states: PermissionStates,
                 style: Mapping[tuple[InstrId, s.Path], MarkStyle] | None = None,
                 default: MarkStyle | None = None) -> list[ExpectationMark]:
    """One mark per (instruction, path) an operation needs permissions on."""
    style = style or {}
    grouped: dict[tuple[InstrId, s.Path], set[Permission]] = {}
    for p, c, at in needs_at(fb):
        grouped.setdefault((at, p), set()).add(c)
    marks = []
    for (at, p), perms in sorted(grouped.items(), key=lambda kv: (kv[0][0], kv[0][1].sort_key())):
        expected = tuple(sorted(perms, key=_PERM_ORDER.get))
        sat = tuple((c, states[at].blocked(p, c) is None) for c in expected)
        marks.append(ExpectationMark(at, p, expected, sat, style.get((at, p), default)))
    return marks


# -- serialization ---------------------------------------------------------------

SCHEMA_VERSION = 1


def records_jsonl(records: Iterable[dict]) -> str:
    return "".join(json.dumps({"schema": SCHEMA_VERSION, **r}, sort_keys=True, ensure_ascii=False) + "\n"
                   for r in records)
