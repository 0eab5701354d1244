"""Relational facts shared by the Polonius-style and permissions-style checkers.

Everything here is intra-procedural: a call contributes facts at the call
site from the callee's signature and never looks at the callee's body.

Several auxiliary analyses back the relations:

* variable liveness (backward, classic use/def),
* region carrying (forward, may): which loans and abstract lifetimes each
  variable's value may mention at each instruction,
* a flow-insensitive version of the same, used to resolve what a reference
  may point to when computing footprints,
* maybe-uninitialized variables (forward, may),
* moved paths (forward, may), which yields ``moved_before``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Union

from ownlab.lang import syntax as s
from ownlab.lang.typecheck import TypedProgram

InstrId = s.InstrId


class Access(str, Enum):
    READ = "read"
    WRITE = "write"
    MOVE = "move"


@dataclass(frozen=True, order=True)
class LoanId:
    """A loan is identified by the instruction that issues it."""

    instruction: InstrId
    path: s.Path = field(compare=False)
    qualifier: s.Qualifier = field(compare=False)
    lifetime: s.Lifetime = field(compare=False)

    @property
    def unique(self) -> bool:
        return self.qualifier is s.Qualifier.UNIQUE

    def __str__(self) -> str:
        return f"&{self.qualifier.value} {self.path}@{self.instruction}"


Region = Union[LoanId, str]  # a loan, or the name of an abstract lifetime


# A resolved footprint element: a root variable, the steps from it, and the
# loans traversed to get there.
@dataclass(frozen=True)
class Place:
    root: str
    steps: tuple[s.Step, ...]
    via: frozenset[LoanId] = frozenset()

    def related(self, other: Place) -> bool:
        if self.root != other.root:
            return False
        n = min(len(self.steps), len(other.steps))
        return self.steps[:n] == other.steps[:n]


def accesses(tp: TypedProgram, fn: str, instr: s.Instruction) -> list[tuple[Access, s.Path]]:
    """The reads, writes, and moves an instruction performs, in execution order."""
    out: list[tuple[Access, s.Path]] = []

    def use(p: s.Path) -> None:
        out.append((Access.READ, p))
        if tp.movable(fn, p):
            out.append((Access.MOVE, p))

    def operand(op: s.Operand) -> None:
        if isinstance(op, s.Path):
            use(op)

    if isinstance(instr, s.Assign):
        rv = instr.rv
        if isinstance(rv, s.Use):
            use(rv.path)
        elif isinstance(rv, s.Loan):
            kind = Access.WRITE if rv.qualifier is s.Qualifier.UNIQUE else Access.READ
            out.append((kind, rv.path))
        elif isinstance(rv, s.Tuple):
            for op in rv.items:
                operand(op)
        elif isinstance(rv, s.Box):
            operand(rv.operand)
        out.append((Access.WRITE, instr.dest))
    elif isinstance(instr, s.If):
        out.append((Access.READ, instr.cond))
    elif isinstance(instr, s.Call):
        for a in instr.args:
            use(a)
        out.append((Access.WRITE, instr.dest))
    elif isinstance(instr, s.Return):
        use(instr.operand)
    else:
        out.append((Access.MOVE, instr.operand))
    return out


def tracked_paths(f: s.FunctionDef) -> list[s.Path]:
    """Declared names plus every textual path of the body and all its prefixes."""
    seen: set[s.Path] = {s.Path(n) for n in f.names}
    for instr in f.body:
        for p in s.instruction_paths(instr):
            seen.update(p.prefixes())
    return sorted(seen, key=s.Path.sort_key)


def _predecessors(body: tuple[s.Instruction, ...]) -> list[list[int]]:
    preds: list[list[int]] = [[] for _ in body]
    for i in range(len(body)):
        for j in s.successors(body, i):
            preds[j].append(i)
    return preds


class FunctionAnalysis:
    """All per-function dataflow results the relations are derived from."""

    def __init__(self, tp: TypedProgram, fn: str):
        self.tp = tp
        self.fn = fn
        self.f = f = tp.function(fn)
        self.n = len(f.body)
        self.preds = _predecessors(f.body)
        self.acc = [accesses(tp, fn, instr) for instr in f.body]
        self.loans: dict[int, LoanId] = {}
        for i, instr in enumerate(f.body):
            if isinstance(instr, s.Assign) and isinstance(instr.rv, s.Loan):
                self.loans[i] = LoanId(InstrId(fn, i), instr.rv.path, instr.rv.qualifier,
                                       tp.loan_lifetimes[(fn, i)])
        self.universe = tracked_paths(f)
        self._resolve_cache: dict[tuple[s.Path, frozenset], frozenset[Place]] = {}
        self.fi = self._flow_insensitive()
        self._resolve_cache.clear()
        self.live_in = self._variable_liveness()
        self.carry_in = self._carry()
        self.uninit_in = self._maybe_uninit()
        self.init_in = self._maybe_init()
        self.moved_in = self._moved_paths()

    # -- types --

    def ty(self, p: s.Path) -> s.LangType:
        return self.tp.type_of(self.fn, p)

    # -- footprints --

    def resolve(self, p: s.Path, via: frozenset[LoanId] = frozenset()) -> frozenset[Place]:
        """Every place p may denote, following references through the loans they may hold."""
        key = (p, via)
        hit = self._resolve_cache.get(key)
        if hit is not None:
            return hit
        places = {Place(p.base, (), via)}
        for k, op in enumerate(p.ops):
            if isinstance(op, s.Deref):
                prefix_ty = self.ty(s.Path(p.base, p.ops[:k]))
                nxt = {Place(e.root, e.steps + (s.DEREF,), e.via) for e in places}
                if isinstance(prefix_ty, s.RefT):
                    want = s.erase(prefix_ty.inner)
                    for e in places:
                        for loan in self._held_loans(e.root):
                            if loan in e.via or s.erase(self.ty(loan.path)) != want:
                                continue
                            nxt |= self.resolve(loan.path, e.via | {loan})
                places = nxt
            else:
                places = {Place(e.root, e.steps + (op,), e.via) for e in places}
        out = frozenset(places)
        self._resolve_cache[key] = out
        return out

    def _held_loans(self, var: str) -> Iterable[LoanId]:
        return sorted(r for r in self.fi.get(var, ()) if isinstance(r, LoanId))

    def conflicts(self, p: s.Path, q: s.Path) -> bool:
        a, b = self.resolve(p), self.resolve(q)
        return any(x.related(y) for x in a for y in b)

    def loan_conflicts(self, loan: LoanId, p: s.Path, kind: Access) -> bool:
        """Whether an access of kind to p touches the memory reserved by loan.

        Reads and writes that reach the loaned place *through* a unique loan
        are uses of that loan, not conflicts with it.
        """
        mine = self.resolve(p)
        if loan.unique and kind is not Access.MOVE:
            mine = frozenset(e for e in mine if loan not in e.via)
        theirs = self.resolve(loan.path)
        return any(x.related(y) for x in mine for y in theirs)

    # -- regions --

    def _ref_deref_prefixes(self, p: s.Path) -> list[s.Path]:
        return [q for q, _ in self.tp.ref_derefs(self.fn, p)]

    def path_regions(self, p: s.Path, carry: dict[str, frozenset]) -> frozenset:
        ty = self.ty(p)
        if not s.contains_ref(ty):
            return frozenset()
        out: set = set()
        for e in self.resolve(p):
            out |= carry.get(e.root, frozenset())
        for q in self._ref_deref_prefixes(p):
            lt = self.ty(q).lifetime
            if lt is not None and lt.abstract:
                out |= {x.name for x in s.lifetimes_of(ty) if x.abstract}
                break
        return frozenset(out)

    def rvalue_regions(self, i: int, carry: dict[str, frozenset]) -> frozenset:
        instr = self.f.body[i]
        if isinstance(instr, s.Call):
            callee = self.tp.function(instr.callee)
            if callee.ret is None or not s.contains_ref(callee.ret):
                return frozenset()
            out: set = set()
            for a in instr.args:
                out |= self.path_regions(a, carry)
            return frozenset(out)
        rv = instr.rv
        if isinstance(rv, s.Const):
            return frozenset()
        if isinstance(rv, s.Use):
            return self.path_regions(rv.path, carry)
        if isinstance(rv, s.Loan):
            out = {self.loans[i]} | self.path_regions(rv.path, carry)
            for q in self._ref_deref_prefixes(rv.path):
                out |= self.path_regions(q, carry)
            return frozenset(out)
        ops = rv.items if isinstance(rv, s.Tuple) else (rv.operand,)
        out = set()
        for op in ops:
            if isinstance(op, s.Path):
                out |= self.path_regions(op, carry)
        return frozenset(out)

    def dest_roots(self, dest: s.Path) -> tuple[bool, set[str]]:
        """(strong, roots): which variables absorb the regions written to dest."""
        if not dest.ops:
            return True, {dest.base}
        if not self._ref_deref_prefixes(dest):
            return False, {dest.base}
        return False, {e.root for e in self.resolve(dest)}

    def transfer_carry(self, i: int, carry: dict[str, frozenset]) -> dict[str, frozenset]:
        instr = self.f.body[i]
        if not isinstance(instr, (s.Assign, s.Call)):
            return carry
        regions = self.rvalue_regions(i, carry)
        strong, roots = self.dest_roots(instr.dest)
        out = dict(carry)
        if strong:
            (root,) = roots
            if regions:
                out[root] = regions
            else:
                out.pop(root, None)
        elif regions:
            for r in roots:
                out[r] = out.get(r, frozenset()) | regions
        return out

    def entry_carry(self) -> dict[str, frozenset]:
        out = {}
        for b in self.f.params:
            lts = frozenset(lt.name for lt in s.lifetimes_of(b.ty) if lt.abstract)
            if lts:
                out[b.name] = lts
        return out

    def _flow_insensitive(self) -> dict[str, frozenset]:
        fi: dict[str, frozenset] = self.entry_carry()
        self.fi = fi
        changed = True
        while changed:
            changed = False
            self._resolve_cache.clear()
            for i, instr in enumerate(self.f.body):
                if not isinstance(instr, (s.Assign, s.Call)):
                    continue
                regions = self.rvalue_regions(i, fi)
                if not regions:
                    continue
                _, roots = self.dest_roots(instr.dest)
                for r in roots:
                    old = fi.get(r, frozenset())
                    if not regions <= old:
                        fi[r] = old | regions
                        changed = True
        return fi

    def _carry(self) -> list[dict[str, frozenset]]:
        """Forward may-analysis; carry_in[i] is the state on entry to i."""
        n = self.n
        ins: list[dict[str, frozenset] | None] = [None] * n
        ins[0] = self.entry_carry()
        work = [0]
        while work:
            i = work.pop()
            out = self.transfer_carry(i, ins[i])
            for j in s.successors(self.f.body, i):
                cur = ins[j]
                if cur is None:
                    merged = dict(out)
                else:
                    merged = dict(cur)
                    for v, rs in out.items():
                        merged[v] = merged.get(v, frozenset()) | rs
                if merged != cur:
                    ins[j] = merged
                    work.append(j)
        return [x if x is not None else {} for x in ins]

    # -- liveness --

    def uses_defs(self, i: int) -> tuple[set[str], set[str]]:
        instr = self.f.body[i]
        # writing through a dereference needs the pointer, so it is a use
        use = {p.base for kind, p in self.acc[i] if kind is not Access.WRITE or p.has_deref}
        defs: set[str] = set()
        if isinstance(instr, (s.Assign, s.Call)) and not instr.dest.ops:
            defs.add(instr.dest.base)
        return use, defs

    def _variable_liveness(self) -> list[frozenset[str]]:
        n = self.n
        ud = [self.uses_defs(i) for i in range(n)]
        live_in: list[frozenset[str]] = [frozenset()] * n
        changed = True
        while changed:
            changed = False
            for i in reversed(range(n)):
                out: set[str] = set()
                for j in s.successors(self.f.body, i):
                    out |= live_in[j]
                use, defs = ud[i]
                new = frozenset(use | (out - defs))
                if new != live_in[i]:
                    live_in[i] = new
                    changed = True
        return live_in

    def loan_live(self, loan: LoanId, i: int) -> bool:
        carry = self.carry_in[i]
        return any(loan in carry.get(v, ()) for v in self.live_in[i])

    # -- initialization and moves --

    def _maybe_uninit(self) -> list[frozenset[str]]:
        n = self.n
        entry = frozenset(b.name for b in self.f.locals)
        ins: list[frozenset[str] | None] = [None] * n
        ins[0] = entry
        work = [0]
        while work:
            i = work.pop()
            cur = ins[i]
            instr = self.f.body[i]
            if isinstance(instr, (s.Assign, s.Call)) and not instr.dest.ops:
                cur = cur - {instr.dest.base}
            for j in s.successors(self.f.body, i):
                merged = cur if ins[j] is None else ins[j] | cur
                if merged != ins[j]:
                    ins[j] = merged
                    work.append(j)
        return [x if x is not None else frozenset() for x in ins]

    def _maybe_init(self) -> list[frozenset[str]]:
        """Variables that are initialized along at least one path reaching each instruction."""
        n = self.n
        ins: list[frozenset[str] | None] = [None] * n
        ins[0] = frozenset(b.name for b in self.f.params)
        work = [0]
        while work:
            i = work.pop()
            cur = ins[i]
            instr = self.f.body[i]
            if isinstance(instr, (s.Assign, s.Call)) and not instr.dest.ops:
                cur = cur | {instr.dest.base}
            for j in s.successors(self.f.body, i):
                merged = cur if ins[j] is None else ins[j] | cur
                if merged != ins[j]:
                    ins[j] = merged
                    work.append(j)
        return [x if x is not None else frozenset() for x in ins]

    def transfer_moved(self, i: int, moved: frozenset[s.Path]) -> frozenset[s.Path]:
        cur = set(moved)
        cur.update(p for kind, p in self.acc[i] if kind is Access.MOVE)
        # only storing a new value reinitializes; a unique borrow does not
        instr = self.f.body[i]
        if isinstance(instr, (s.Assign, s.Call)):
            cur = {m for m in cur if not instr.dest.is_prefix_of(m)}
        return frozenset(cur)

    def _moved_paths(self) -> list[frozenset[s.Path]]:
        n = self.n
        ins: list[frozenset[s.Path] | None] = [None] * n
        ins[0] = frozenset()
        work = [0]
        while work:
            i = work.pop()
            out = self.transfer_moved(i, ins[i])
            for j in s.successors(self.f.body, i):
                merged = out if ins[j] is None else ins[j] | out
                if merged != ins[j]:
                    ins[j] = merged
                    work.append(j)
        return [x if x is not None else frozenset() for x in ins]

    def moved_before(self, p: s.Path, i: int) -> bool:
        return any(m.overlaps(p) for m in self.moved_in[i])

    def reachable(self) -> set[int]:
        seen = {0}
        stack = [0]
        while stack:
            i = stack.pop()
            for j in s.successors(self.f.body, i):
                if j not in seen:
                    seen.add(j)
                    stack.append(j)
        return seen


@dataclass
class FactBase:
    """Per-instruction relations over a whole program.

    ``analyses`` keeps the per-function dataflow results so both checkers
    can ask the same ``loan_conflicts`` question.
    """

    read_at: set[tuple[s.Path, InstrId]] = field(default_factory=set)
    written_at: set[tuple[s.Path, InstrId]] = field(default_factory=set)
    moved_at: set[tuple[s.Path, InstrId]] = field(default_factory=set)
    moved_before: set[tuple[s.Path, InstrId]] = field(default_factory=set)
    loan_issued_at: set[tuple[LoanId, InstrId]] = field(default_factory=set)
    loan_live_at: set[tuple[LoanId, InstrId]] = field(default_factory=set)
    flows: set[tuple[str, str, s.Path, InstrId]] = field(default_factory=set)
    declared_outlives: dict[str, frozenset[tuple[str, str]]] = field(default_factory=dict)
    analyses: dict[str, FunctionAnalysis] = field(default_factory=dict, repr=False, compare=False)
    tp: TypedProgram | None = field(default=None, repr=False, compare=False)

    def loans(self, fn: str | None = None) -> list[LoanId]:
        fns = [fn] if fn is not None else list(self.analyses)
        return sorted(l for f in fns for l in self.analyses[f].loans.values())

    def instructions(self, fn: str | None = None) -> list[InstrId]:
        fns = [fn] if fn is not None else list(self.analyses)
        return [InstrId(f, i) for f in fns for i in range(self.analyses[f].n)]

    def conflicts(self, fn: str, p: s.Path, q: s.Path) -> bool:
        return self.analyses[fn].conflicts(p, q)

    def loan_conflicts(self, loan: LoanId, p: s.Path, kind: Access) -> bool:
        return self.analyses[loan.instruction.function].loan_conflicts(loan, p, kind)

    def export(self) -> str:
        """Sorted, tab-separated tuples, one section per relation."""
        sections: list[str] = []

        def fmt(x) -> str:
            # bare strings in a relation are abstract lifetime names
            return f"'{x}" if isinstance(x, str) else str(x)

        def key(t):
            return tuple(x.sort_key() if isinstance(x, s.Path) else
                         (x.instruction if isinstance(x, LoanId) else x) for x in t)

        for name in ("read_at", "written_at", "moved_at", "moved_before",
                     "loan_issued_at", "loan_live_at", "flows"):
            rel = getattr(self, name)
            rows = ["\t".join(fmt(x) for x in t) for t in sorted(rel, key=key)]
            sections.append(f"# {name}\n" + "".join(r + "\n" for r in rows))
        rows = [f"{fn}\t'{a}\t'{b}" for fn in sorted(self.declared_outlives)
                for a, b in sorted(self.declared_outlives[fn])]
        sections.append("# declared_outlives\n" + "".join(r + "\n" for r in rows))
        return "".join(sections)


def _analyses(tp: TypedProgram) -> dict[str, FunctionAnalysis]:
    return {f.name: FunctionAnalysis(tp, f.name) for f in tp.program.functions}


def extract_accesses(tp: TypedProgram) -> tuple[set, set, set]:
    reads, writes, moves = set(), set(), set()
    target = {Access.READ: reads, Access.WRITE: writes, Access.MOVE: moves}
    for f in tp.program.functions:
        for i, instr in enumerate(f.body):
            for kind, p in accesses(tp, f.name, instr):
                target[kind].add((p, InstrId(f.name, i)))
    return reads, writes, moves


def _loan_liveness(an: dict[str, FunctionAnalysis]) -> set[tuple[LoanId, InstrId]]:
    out = set()
    for fn, a in an.items():
        for loan in a.loans.values():
            for i in range(a.n):
                if a.loan_live(loan, i):
                    out.add((loan, InstrId(fn, i)))
    return out


def compute_loan_liveness(tp: TypedProgram) -> set[tuple[LoanId, InstrId]]:
    """(loan, I) such that some variable live on entry to I may carry the loan."""
    return _loan_liveness(_analyses(tp))


def _moved_before(an: dict[str, FunctionAnalysis]) -> set[tuple[s.Path, InstrId]]:
    out = set()
    for fn, a in an.items():
        for i in range(a.n):
            for p in a.universe:
                if a.moved_before(p, i):
                    out.add((p, InstrId(fn, i)))
    return out


def compute_moved_before(tp: TypedProgram) -> set[tuple[s.Path, InstrId]]:
    return _moved_before(_analyses(tp))


def conflicts(p: s.Path, q: s.Path, tp: TypedProgram, fn: str = "main") -> bool:
    """Whether the footprints of p and q overlap in function fn."""
    return FunctionAnalysis(tp, fn).conflicts(p, q)


def _flows(an: dict[str, FunctionAnalysis]) -> set[tuple[str, str, s.Path, InstrId]]:
    out = set()
    for fn, a in an.items():
        f = a.f

        def emit(src: Iterable, target_ty: s.LangType, blame: s.Path, i: int) -> None:
            wanted = {lt.name for lt in s.lifetimes_of(target_ty) if lt.abstract}
            for r1 in src:
                if isinstance(r1, str):
                    for r2 in wanted:
                        if r1 != r2:
                            out.add((r1, r2, blame, InstrId(fn, i)))

        for i, instr in enumerate(f.body):
            carry = a.carry_in[i]
            if isinstance(instr, s.Return) and f.ret is not None:
                emit(a.path_regions(instr.operand, carry), f.ret, instr.operand, i)
            elif isinstance(instr, s.Assign):
                dest_ty = a.ty(instr.dest)
                rv = instr.rv
                if isinstance(rv, (s.Use, s.Loan)):
                    emit(a.rvalue_regions(i, carry), dest_ty, rv.path, i)
                elif isinstance(rv, (s.Tuple, s.Box)):
                    ops = rv.items if isinstance(rv, s.Tuple) else (rv.operand,)
                    for op in ops:
                        if isinstance(op, s.Path):
                            emit(a.path_regions(op, carry), dest_ty, op, i)
            elif isinstance(instr, s.Call):
                emit(a.rvalue_regions(i, carry), a.ty(instr.dest), instr.dest, i)
    return out


def compute_flows(tp: TypedProgram) -> set[tuple[str, str, s.Path, InstrId]]:
    """(ϱ1, ϱ2, p, I): a value whose type may mention ϱ1 is used where ϱ2 is expected."""
    return _flows(_analyses(tp))


def build_facts(tp: TypedProgram) -> FactBase:
    an = _analyses(tp)
    reads, writes, moves = extract_accesses(tp)
    fb = FactBase(
        read_at=reads,
        written_at=writes,
        moved_at=moves,
        moved_before=_moved_before(an),
        loan_issued_at={(loan, loan.instruction) for a in an.values() for loan in a.loans.values()},
        loan_live_at=_loan_liveness(an),
        flows=_flows(an),
        declared_outlives={f.name: frozenset(f.outlives) for f in tp.program.functions},
        analyses=an,
        tp=tp,
    )
    return fb
