"""Access errors and subset errors in the style of Polonius.

A borrow conflict needs a loan that is both live and invalidated at the
same instruction; a move conflict needs a path that is read after it may
have been moved.  Lifetime parameter errors come from flows that the
function's declared outlives bounds do not permit.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from ownlab.facts import Access, FactBase, InstrId, LoanId
from ownlab.lang import syntax as s


class SubRule(str, Enum):
    READ_INVALID = "ReadInvalid"
    WRITE_INVALID = "WriteInvalid"
    MOVE_INVALID = "MoveInvalid"


_PRIORITY = {SubRule.READ_INVALID: 0, SubRule.WRITE_INVALID: 1, SubRule.MOVE_INVALID: 2}


class AccessRule(str, Enum):
    BORROW_CONFLICT = "BorrowConflict"
    MOVE_CONFLICT = "MoveConflict"


@dataclass(frozen=True)
class AccessErrorDiag:
    rule: AccessRule
    instruction: InstrId
    path: s.Path
    loan: LoanId | None = None
    sub_rule: SubRule | None = None

    def key(self) -> tuple:
        """Identity used for setwise comparison with other evaluators."""
        loan = self.loan.instruction if self.loan is not None else None
        sub = self.sub_rule.value if self.sub_rule is not None else None
        return (self.rule.value, self.instruction, str(self.path), loan, sub)

    def message(self) -> str:
        if self.rule is AccessRule.MOVE_CONFLICT:
            return f"{self.path} is read at {self.instruction} after it may have been moved"
        verb = {SubRule.READ_INVALID: "read", SubRule.WRITE_INVALID: "write",
                SubRule.MOVE_INVALID: "move"}[self.sub_rule]
        return f"{verb} of {self.path} at {self.instruction} invalidates live loan {self.loan}"

    def to_record(self) -> dict:
        return {
            "kind": "access-error",
            "rule": self.rule.value,
            "function": self.instruction.function,
            "index": self.instruction.index,
            "path": str(self.path),
            "loan": str(self.loan) if self.loan is not None else None,
            "sub_rule": self.sub_rule.value if self.sub_rule is not None else None,
            "message": self.message(),
        }


@dataclass(frozen=True)
class SubsetErrorDiag:
    longer: str
    shorter: str
    instruction: InstrId
    path: s.Path | None = None

    def message(self) -> str:
        via = f" via {self.path}" if self.path is not None else ""
        return (f"lifetime '{self.longer} must outlive '{self.shorter}{via} at {self.instruction}, "
                f"but the signature does not declare '{self.longer} :> '{self.shorter}")

    def to_record(self) -> dict:
        return {
            "kind": "subset-error",
            "rule": "LifetimeConflict",
            "function": self.instruction.function,
            "index": self.instruction.index,
            "longer": self.longer,
            "shorter": self.shorter,
            "path": str(self.path) if self.path is not None else None,
            "message": self.message(),
        }


def invalidations(fb: FactBase) -> set[tuple[LoanId, InstrId, SubRule]]:
    """(loan, I, sub-rule) for every conflicting access at I, live or not."""
    out: set[tuple[LoanId, InstrId, SubRule]] = set()
    rels = ((fb.read_at, Access.READ, SubRule.READ_INVALID),
            (fb.written_at, Access.WRITE, SubRule.WRITE_INVALID),
            (fb.moved_at, Access.MOVE, SubRule.MOVE_INVALID))
    by_fn: dict[str, list[LoanId]] = {}
    for loan in fb.loans():
        by_fn.setdefault(loan.instruction.function, []).append(loan)
    for rel, kind, sub in rels:
        for p, at in rel:
            for loan in by_fn.get(at.function, ()):
                if kind is Access.READ and not loan.unique:
                    continue
                if fb.loan_conflicts(loan, p, kind):
                    out.add((loan, at, sub))
    return out


def _invalidating_paths(fb: FactBase) -> dict[tuple[LoanId, InstrId, SubRule], list[s.Path]]:
    found: dict[tuple[LoanId, InstrId, SubRule], list[s.Path]] = {}
    rels = ((fb.read_at, Access.READ, SubRule.READ_INVALID),
            (fb.written_at, Access.WRITE, SubRule.WRITE_INVALID),
            (fb.moved_at, Access.MOVE, SubRule.MOVE_INVALID))
    for loan, at in sorted(fb.loan_live_at):
        for rel, kind, sub in rels:
            if kind is Access.READ and not loan.unique:
                continue
            for p, where in rel:
                if where == at and fb.loan_conflicts(loan, p, kind):
                    found.setdefault((loan, at, sub), []).append(p)
    return found


def access_errors(fb: FactBase) -> list[AccessErrorDiag]:
    """Borrow conflicts (one per live, invalidated loan and instruction) then move conflicts.

    The list is ordered by instruction, borrow conflicts before move
    conflicts at the same instruction, then by loan or path.
    """
    diags: list[AccessErrorDiag] = []
    hits = _invalidating_paths(fb)
    best: dict[tuple[LoanId, InstrId], SubRule] = {}
    for loan, at, sub in hits:
        cur = best.get((loan, at))
        if cur is None or _PRIORITY[sub] < _PRIORITY[cur]:
            best[(loan, at)] = sub
    for (loan, at), sub in best.items():
        path = min(hits[(loan, at, sub)], key=s.Path.sort_key)
        diags.append(AccessErrorDiag(AccessRule.BORROW_CONFLICT, at, path, loan, sub))
    for p, at in fb.read_at & fb.moved_before:
        diags.append(AccessErrorDiag(AccessRule.MOVE_CONFLICT, at, p))
    return sorted(diags, key=_diag_order)


def _diag_order(d: AccessErrorDiag) -> tuple:
    loan = d.loan.instruction if d.loan is not None else InstrId("", -1)
    return (d.instruction, 0 if d.rule is AccessRule.BORROW_CONFLICT else 1, loan, d.path.sort_key())


def outlives_closure(lifetimes: tuple[str, ...], declared: frozenset[tuple[str, str]] | set) -> set[tuple[str, str]]:
    """Reflexive-transitive closure of the declared ``a :> b`` pairs."""
    names = set(lifetimes) | {x for pair in declared for x in pair}
    rel = {(a, a) for a in names} | set(declared)
    changed = True
    while changed:
        changed = False
        for a, b in list(rel):
            for c, d in list(rel):
                if b == c and (a, d) not in rel:
                    rel.add((a, d))
                    changed = True
    return rel


def subset_errors(fb: FactBase, sig: s.FunctionDef | None = None) -> list[SubsetErrorDiag]:
    """One diagnostic per flow not permitted by the declared outlives closure.

    With ``sig`` given, only flows inside that function are considered.
    """
    tp = fb.tp
    out = []
    for r1, r2, p, at in fb.flows:
        if sig is not None and at.function != sig.name:
            continue
        f = sig if sig is not None else tp.function(at.function)
        if (r1, r2) not in outlives_closure(f.lifetimes, fb.declared_outlives.get(f.name, frozenset())):
            out.append(SubsetErrorDiag(r1, r2, at, p))
    return sorted(out, key=lambda d: (d.instruction, d.longer, d.shorter, d.path.sort_key()))
