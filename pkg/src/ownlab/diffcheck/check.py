"""Differential properties: theorem, soundness, and oracle equivalence."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Union

from ownlab.facts import build_facts
from ownlab.interp import DEFAULT_MAX_STEPS, LimitExceeded, Outcome, Ub, run
from ownlab.lang import syntax as s
from ownlab.lang.printer import pretty_print
from ownlab.lang.typecheck import TypedProgram
from ownlab.perms import ALL_RULES, Permission, Rule, missing_at, permission_errors
from ownlab.polonius import AccessRule, SubRule, access_errors, subset_errors
from ownlab.diffcheck.oracle import oracle_access_errors


class Property(str, Enum):
    THEOREM = "Theorem"
    SOUNDNESS = "Soundness"
    ORACLE_EQUIVALENCE = "OracleEquivalence"


@dataclass
class Verdicts:
    access_errors: list
    subset_errors: list
    permission_errors: list

    @property
    def polonius_rejects(self) -> bool:
        return bool(self.access_errors or self.subset_errors)

    @property
    def perms_rejects(self) -> bool:
        return bool(self.permission_errors)

    def summary(self) -> dict:
        return {
            "access_errors": [d.message() for d in self.access_errors],
            "subset_errors": [d.message() for d in self.subset_errors],
            "permission_errors": [d.message() for d in self.permission_errors],
        }


def verdicts(tp: TypedProgram, rules: Iterable[Rule] = ALL_RULES) -> Verdicts:
    fb = build_facts(tp)
    return Verdicts(access_errors(fb), subset_errors(fb), permission_errors(fb, missing_at(fb, rules)))


@dataclass
class CounterexampleReport:
    property: Property
    program: s.Program
    verdicts: dict
    outcome: str | None = None
    detail: str = ""

    def to_record(self) -> dict:
        return {
            "property": self.property.value,
            "program": pretty_print(self.program),
            "verdicts": self.verdicts,
            "outcome": self.outcome,
            "detail": self.detail,
        }

    def source(self) -> str:
        """The program as an ``.own`` file, with the violation in a header comment."""
        head = f"// {self.property.value} violation"
        if self.detail:
            head += f": {self.detail}"
        return head + "\n" + pretty_print(self.program)


@dataclass
class Holds:
    pass


@dataclass
class Violation:
    report: CounterexampleReport


@dataclass
class Inconclusive:
    outcome: LimitExceeded


CheckResult = Union[Holds, Violation, Inconclusive]

# which permission each kind of access error must surface as
_EXPECTED_PERMISSION = {
    SubRule.READ_INVALID: Permission.R,
    SubRule.WRITE_INVALID: Permission.W,
    SubRule.MOVE_INVALID: Permission.O,
}


def theorem_gaps(v: Verdicts) -> list[str]:
    """Access errors with no matching permission error at the same instruction."""
    errs = v.permission_errors
    gaps = []
    for d in v.access_errors:
        if d.rule is AccessRule.BORROW_CONFLICT:
            want = _EXPECTED_PERMISSION[d.sub_rule]
            ok = any(e.instruction == d.instruction and e.permission is want for e in errs)
        else:
            ok = any(e.instruction == d.instruction and e.permission is Permission.R
                     and e.path == d.path and e.cause.kind.value == "Moved" for e in errs)
        if not ok:
            gaps.append(d.message())
    return gaps


def check_theorem(tp: TypedProgram, rules: Iterable[Rule] = ALL_RULES) -> CheckResult:
    """Every access error must be matched by a permission error (case by case)."""
    v = verdicts(tp, rules)
    if not v.access_errors:
        return Holds()
    gaps = theorem_gaps(v)
    if not v.permission_errors or gaps:
        detail = "no permission error" if not v.permission_errors else "unmatched: " + "; ".join(gaps)
        return Violation(CounterexampleReport(Property.THEOREM, tp.program, v.summary(), detail=detail))
    return Holds()


def is_monomorphic(p: s.Program) -> bool:
    return all(not f.lifetimes for f in p.functions)


def describe_outcome(out: Outcome) -> str:
    if isinstance(out, Ub):
        return str(out.report)
    if isinstance(out, LimitExceeded):
        return f"step limit exceeded after {out.steps} steps"
    return f"terminated with {out.value!r} after {out.steps} steps"


def check_soundness(tp: TypedProgram, max_steps: int = DEFAULT_MAX_STEPS) -> CheckResult:
    """A program both checkers accept must not reach undefined behavior."""
    if not is_monomorphic(tp.program):
        raise ValueError("soundness is only checked on programs without abstract lifetimes")
    v = verdicts(tp)
    if v.polonius_rejects or v.perms_rejects:
        return Holds()
    out = run(tp, max_steps=max_steps)
    if isinstance(out, Ub):
        return Violation(CounterexampleReport(Property.SOUNDNESS, tp.program, v.summary(),
                                              describe_outcome(out), "accepted program has UB"))
    if isinstance(out, LimitExceeded):
        return Inconclusive(out)
    return Holds()


def check_oracle(tp: TypedProgram) -> CheckResult:
    main = {d.key() for d in access_errors(build_facts(tp))}
    oracle = {d.key() for d in oracle_access_errors(tp)}
    if main == oracle:
        return Holds()
    detail = f"pipeline only: {sorted(map(str, main - oracle))}; oracle only: {sorted(map(str, oracle - main))}"
    return Violation(CounterexampleReport(Property.ORACLE_EQUIVALENCE, tp.program, {}, detail=detail))
