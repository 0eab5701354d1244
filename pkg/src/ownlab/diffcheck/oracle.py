"""A brute-force re-derivation of the access-error judgments.

Nothing here is shared with the dataflow pipeline.  Instead of fixed
points over lattices the oracle enumerates:

* every reachable (instruction, region-state) pair to find what each
  variable may carry,
* CFG paths to decide variable liveness,
* simple CFG paths from each move to decide whether a path may have been
  moved before an instruction.

It only accepts small functions, where the enumeration stays cheap.
"""

from __future__ import annotations

from dataclasses import dataclass

from ownlab.lang import syntax as s
from ownlab.lang.typecheck import TypedProgram

MAX_INSTRUCTIONS = 12

_SUB_ORDER = ("ReadInvalid", "WriteInvalid", "MoveInvalid")


class InstanceTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class OracleDiag:
    rule: str
    instruction: s.InstrId
    path: s.Path
    loan: s.InstrId | None = None
    sub_rule: str | None = None

    def key(self) -> tuple:
        return (self.rule, self.instruction, str(self.path), self.loan, self.sub_rule)


def _ops_of(instr: s.Instruction) -> list[tuple[str, s.Path]]:
    """(kind, path) pairs, kind being 'r', 'w', 'm', or 'u' (a use: read plus maybe move)."""
    if isinstance(instr, s.If):
        return [("r", instr.cond)]
    if isinstance(instr, s.Return):
        return [("u", instr.operand)]
    if isinstance(instr, s.Drop):
        return [("m", instr.operand)]
    if isinstance(instr, s.Call):
        return [("u", a) for a in instr.args] + [("w", instr.dest)]
    rv = instr.rv
    pre: list[tuple[str, s.Path]] = []
    if isinstance(rv, s.Use):
        pre = [("u", rv.path)]
    elif isinstance(rv, s.Loan):
        pre = [("w" if rv.qualifier is s.Qualifier.UNIQUE else "r", rv.path)]
    elif isinstance(rv, s.Tuple):
        pre = [("u", op) for op in rv.items if isinstance(op, s.Path)]
    elif isinstance(rv, s.Box) and isinstance(rv.operand, s.Path):
        pre = [("u", rv.operand)]
    return pre + [("w", instr.dest)]


def _minimal(found: set[tuple[str, tuple, frozenset]]) -> set[tuple[str, tuple, frozenset]]:
    """Drop entries whose loan set strictly contains another's for the same place."""
    return {(r, st, v) for r, st, v in found
            if not any(r2 == r and st2 == st and v2 < v for r2, st2, v2 in found)}


class _FnOracle:
    def __init__(self, tp: TypedProgram, fn: str):
        self.tp = tp
        self.fn = fn
        self.f = tp.function(fn)
        self.body = self.f.body
        if len(self.body) > MAX_INSTRUCTIONS:
            raise InstanceTooLarge(f"{fn} has {len(self.body)} instructions (limit {MAX_INSTRUCTIONS})")
        self.succ = {i: list(s.successors(self.body, i)) for i in range(len(self.body))}
        self.loans = {i: ins.rv for i, ins in enumerate(self.body)
                      if isinstance(ins, s.Assign) and isinstance(ins.rv, s.Loan)}
        self.reads: list[set[s.Path]] = []
        self.writes: list[set[s.Path]] = []
        self.moves: list[set[s.Path]] = []
        for ins in self.body:
            r, w, m = set(), set(), set()
            for kind, p in _ops_of(ins):
                if kind == "r":
                    r.add(p)
                elif kind == "w":
                    w.add(p)
                elif kind == "m":
                    m.add(p)
                else:
                    r.add(p)
                    if s.is_movable(self.ty(p)):
                        m.add(p)
            self.reads.append(r)
            self.writes.append(w)
            self.moves.append(m)
        self.held: dict[str, set[int]] = {}
        self._places: dict[s.Path, set] = {}
        self._fi()

    def ty(self, p: s.Path) -> s.LangType:
        return self.tp.type_of(self.fn, p)

    # -- places --

    def places(self, p: s.Path) -> set[tuple[str, tuple, frozenset]]:
        """(root, steps, loans passed through) for every place p may name.

        Only inclusion-minimal loan sets are kept: a chain that reuses a loan
        lands where the chain without the detour does, through more loans.
        """
        if p not in self._places:
            self._solve_places(p)
        return self._places[p]

    def _place_deps(self, q: s.Path) -> list[s.Path]:
        if not q.ops:
            return []
        prefix = s.Path(q.base, q.ops[:-1])
        deps = [prefix]
        pty = self.ty(prefix)
        if isinstance(q.ops[-1], s.Deref) and isinstance(pty, s.RefT):
            deps += [self.loans[li].path for li in sorted(self.loans)
                     if s.erase(self.ty(self.loans[li].path)) == s.erase(pty.inner)]
        return deps

    def _places_once(self, q: s.Path, get) -> set[tuple[str, tuple, frozenset]]:
        if not q.ops:
            return {(q.base, (), frozenset())}
        prefix = s.Path(q.base, q.ops[:-1])
        last = q.ops[-1]
        inner = get(prefix)
        out = {(r, st + (last,), v) for r, st, v in inner}
        pty = self.ty(prefix)
        if isinstance(last, s.Deref) and isinstance(pty, s.RefT):
            for r, _, v in inner:
                for li in sorted(self.held.get(r, ())):
                    target = self.loans[li].path
                    if s.erase(self.ty(target)) == s.erase(pty.inner):
                        out |= {(r2, st2, v | v2 | {li}) for r2, st2, v2 in get(target)}
        return _minimal(out)

    def _solve_places(self, p: s.Path) -> None:
        # loans may target paths that deref the same references, so iterate to a fixed point
        dom, seen, todo = [], set(), [p]
        while todo:
            q = todo.pop()
            if q in seen or q in self._places:
                continue
            seen.add(q)
            dom.append(q)
            todo.extend(self._place_deps(q))
        approx: dict[s.Path, set] = {q: set() for q in dom}

        def get(q: s.Path) -> set:
            return self._places[q] if q in self._places else approx[q]

        changed = True
        while changed:
            changed = False
            for q in dom:
                new = self._places_once(q, get)
                if new != approx[q]:
                    approx[q] = new
                    changed = True
        self._places.update(approx)

    @staticmethod
    def _touch(a: tuple, b: tuple) -> bool:
        if a[0] != b[0]:
            return False
        k = min(len(a[1]), len(b[1]))
        return a[1][:k] == b[1][:k]

    def loan_hits(self, li: int, p: s.Path, kind: str) -> bool:
        loan = self.loans[li]
        mine = self.places(p)
        if loan.qualifier is s.Qualifier.UNIQUE and kind != "m":
            mine = {e for e in mine if li not in e[2]}
        return any(self._touch(x, y) for x in mine for y in self.places(loan.path))

    # -- regions --

    def deref_refs(self, p: s.Path) -> list[s.Path]:
        out = []
        for k, op in enumerate(p.ops):
            if isinstance(op, s.Deref):
                q = s.Path(p.base, p.ops[:k])
                if isinstance(self.ty(q), s.RefT):
                    out.append(q)
        return out

    def value_regions(self, p: s.Path, state: dict) -> set:
        t = self.ty(p)
        if not s.contains_ref(t):
            return set()
        out = set()
        for r, _, _ in self.places(p):
            out |= state.get(r, set())
        if any(self.ty(q).lifetime is not None and self.ty(q).lifetime.abstract for q in self.deref_refs(p)):
            out |= {lt.name for lt in s.lifetimes_of(t) if lt.abstract}
        return out

    def produced(self, i: int, state: dict) -> set:
        ins = self.body[i]
        if isinstance(ins, s.Call):
            ret = self.tp.function(ins.callee).ret
            if ret is None or not s.contains_ref(ret):
                return set()
            return set().union(*(self.value_regions(a, state) for a in ins.args)) if ins.args else set()
        rv = ins.rv
        if isinstance(rv, s.Use):
            return self.value_regions(rv.path, state)
        if isinstance(rv, s.Loan):
            out = {("loan", i)} | self.value_regions(rv.path, state)
            for q in self.deref_refs(rv.path):
                out |= self.value_regions(q, state)
            return out
        if isinstance(rv, (s.Tuple, s.Box)):
            ops = rv.items if isinstance(rv, s.Tuple) else (rv.operand,)
            out = set()
            for op in ops:
                if isinstance(op, s.Path):
                    out |= self.value_regions(op, state)
            return out
        return set()

    def receivers(self, dest: s.Path) -> tuple[bool, set[str]]:
        if not dest.ops:
            return True, {dest.base}
        if not self.deref_refs(dest):
            return False, {dest.base}
        return False, {r for r, _, _ in self.places(dest)}

    def start(self) -> dict:
        st = {}
        for b in self.f.params:
            names = {lt.name for lt in s.lifetimes_of(b.ty) if lt.abstract}
            if names:
                st[b.name] = names
        return st

    def _fi(self) -> None:
        fi = {k: set(v) for k, v in self.start().items()}
        while True:
            self.held = {v: {x[1] for x in rs if isinstance(x, tuple)} for v, rs in fi.items()}
            self._places = {}
            grew = False
            for i, ins in enumerate(self.body):
                if not isinstance(ins, (s.Assign, s.Call)):
                    continue
                got = self.produced(i, fi)
                for r in self.receivers(ins.dest)[1]:
                    cur = fi.setdefault(r, set())
                    if not got <= cur:
                        cur |= got
                        grew = True
            if not grew:
                break

    def carried(self) -> dict[int, dict[str, set]]:
        """Union of the region states over every way of reaching each instruction."""

        def freeze(st: dict) -> frozenset:
            return frozenset((v, x) for v, rs in st.items() for x in rs)

        def thaw(fz: frozenset) -> dict:
            st: dict = {}
            for v, x in fz:
                st.setdefault(v, set()).add(x)
            return st

        seen = {(0, freeze(self.start()))}
        todo = list(seen)
        while todo:
            i, fz = todo.pop()
            st = thaw(fz)
            ins = self.body[i]
            if isinstance(ins, (s.Assign, s.Call)):
                got = self.produced(i, st)
                strong, roots = self.receivers(ins.dest)
                if strong:
                    st[ins.dest.base] = set(got)
                else:
                    for r in roots:
                        st.setdefault(r, set()).update(got)
            nfz = freeze(st)
            for j in self.succ[i]:
                if (j, nfz) not in seen:
                    seen.add((j, nfz))
                    todo.append((j, nfz))
        out: dict[int, dict[str, set]] = {}
        for i, fz in seen:
            acc = out.setdefault(i, {})
            for v, x in fz:
                acc.setdefault(v, set()).add(x)
        return out

    # -- liveness and moves by path search --

    def used(self, i: int) -> set[str]:
        out = {p.base for p in self.reads[i] | self.moves[i]}
        out |= {p.base for p in self.writes[i] if p.has_deref}
        return out

    def defined(self, i: int) -> set[str]:
        ins = self.body[i]
        if isinstance(ins, (s.Assign, s.Call)) and not ins.dest.ops:
            return {ins.dest.base}
        return set()

    def live_at(self, v: str, i: int) -> bool:
        seen = set()
        todo = [i]
        while todo:
            k = todo.pop()
            if k in seen:
                continue
            seen.add(k)
            if v in self.used(k):
                return True
            if v in self.defined(k):
                continue
            todo.extend(self.succ[k])
        return False

    def reachable_from_entry(self) -> set[int]:
        seen, todo = set(), [0]
        while todo:
            k = todo.pop()
            if k not in seen:
                seen.add(k)
                todo.extend(self.succ[k])
        return seen

    def kills(self, k: int, m: s.Path) -> bool:
        ins = self.body[k]
        return isinstance(ins, (s.Assign, s.Call)) and ins.dest.is_prefix_of(m)

    def moved_path_reaches(self, j: int, m: s.Path, target: int) -> bool:
        """Whether some simple path leaves j and reaches target with m never reassigned."""
        if self.kills(j, m):
            return False

        def dfs(k: int, on_path: frozenset) -> bool:
            if k == target:
                return True
            if k in on_path or self.kills(k, m):
                return False
            return any(dfs(n, on_path | {k}) for n in self.succ[k])

        return any(dfs(n, frozenset({j}) - {target}) for n in self.succ[j])

    def moved_before(self, p: s.Path, i: int, reach: set[int]) -> bool:
        for j in sorted(reach):
            for m in self.moves[j]:
                if m.overlaps(p) and self.moved_path_reaches(j, m, i):
                    return True
        return False

    # -- judgments --

    def diagnostics(self) -> list[OracleDiag]:
        out: list[OracleDiag] = []
        carry = self.carried()
        reach = self.reachable_from_entry()
        for i in range(len(self.body)):
            at = s.InstrId(self.fn, i)
            state = carry.get(i, {})
            live_vars = [v for v in state if self.live_at(v, i)]
            for li, loan in sorted(self.loans.items()):
                if not any(("loan", li) in state[v] for v in live_vars):
                    continue
                unique = loan.qualifier is s.Qualifier.UNIQUE
                found = {}
                for name, kind, paths in (("ReadInvalid", "r", self.reads[i]),
                                          ("WriteInvalid", "w", self.writes[i]),
                                          ("MoveInvalid", "m", self.moves[i])):
                    if kind == "r" and not unique:
                        continue
                    hit = [p for p in paths if self.loan_hits(li, p, kind)]
                    if hit:
                        found[name] = min(hit, key=s.Path.sort_key)
                for name in _SUB_ORDER:
                    if name in found:
                        out.append(OracleDiag("BorrowConflict", at, found[name], s.InstrId(self.fn, li), name))
                        break
            for p in self.reads[i]:
                if self.moved_before(p, i, reach):
                    out.append(OracleDiag("MoveConflict", at, p))
        return out


def oracle_access_errors(tp: TypedProgram) -> list[OracleDiag]:
    """Access errors by exhaustive enumeration; raises InstanceTooLarge above 12 instructions."""
    out: list[OracleDiag] = []
    for f in tp.program.functions:
        out.extend(_FnOracle(tp, f.name).diagnostics())
    return sorted(out, key=lambda d: (d.instruction, d.rule, d.loan or s.InstrId("", -1), d.path.sort_key()))


def oracle_relations(tp: TypedProgram, universe: dict[str, list[s.Path]]) -> tuple[set, set]:
    """Loan liveness and moved-before, by enumeration.

    Returns ``(live, moved)`` where ``live`` holds (issuing instruction,
    instruction) pairs and ``moved`` holds (path, instruction) pairs for
    the paths listed per function in ``universe``.
    """
    live: set[tuple[s.InstrId, s.InstrId]] = set()
    moved: set[tuple[s.Path, s.InstrId]] = set()
    for f in tp.program.functions:
        o = _FnOracle(tp, f.name)
        carry = o.carried()
        reach = o.reachable_from_entry()
        for i in range(len(o.body)):
            at = s.InstrId(f.name, i)
            state = carry.get(i, {})
            live_vars = [v for v in state if o.live_at(v, i)]
            for li in o.loans:
                if any(("loan", li) in state[v] for v in live_vars):
                    live.add((s.InstrId(f.name, li), at))
            for p in universe.get(f.name, ()):
                if o.moved_before(p, i, reach):
                    moved.add((p, at))
    return live, moved
