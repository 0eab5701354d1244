"""Small-step interpreter for the dynamic model, with undefined-behavior detection.

The machine never consults a borrow checker: any type-correct program can be
executed, including ones the static models reject.  Moves are plain copies
at runtime; only ``drop`` deallocates, and it frees every heap location
reachable through owning (box) positions of the dropped value.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Union

from ownlab.lang import syntax as s
from ownlab.lang.typecheck import TypedProgram

DEFAULT_MAX_STEPS = 100_000


@dataclass(frozen=True)
class FrameSeg:
    depth: int
    var: str
    # generation of the frame that created the address; popped frames never come back
    gen: int

    def __str__(self) -> str:
        return f"frame({self.depth}, {self.var})"


@dataclass(frozen=True)
class HeapSeg:
    loc: int

    def __str__(self) -> str:
        return f"heap(κ{self.loc})"


Segment = Union[FrameSeg, HeapSeg]


@dataclass(frozen=True)
class Address:
    segment: Segment
    projection: tuple[int, ...] = ()

    def __str__(self) -> str:
        return str(self.segment) + "".join(f".{n}" for n in self.projection)


# a runtime value is a constant, an address, or a python tuple of runtime values
RtValue = Union[s.Num, s.BoolConst, Address, tuple]


def format_value(v: RtValue) -> str:
    if isinstance(v, tuple):
        return "(" + ", ".join(format_value(x) for x in v) + ")"
    return str(v)


class UbKind(str, Enum):
    USE_AFTER_FREE = "UseAfterFree"
    DOUBLE_FREE = "DoubleFree"
    INVALID_ADDRESS = "InvalidAddress"


@dataclass(frozen=True)
class UbReport:
    kind: UbKind
    instruction: s.InstrId
    path: s.Path
    heap_loc: int | None = None
    detail: str = ""

    def __str__(self) -> str:
        loc = f" (κ{self.heap_loc})" if self.heap_loc is not None else ""
        extra = f": {self.detail}" if self.detail else ""
        return f"undefined behavior: {self.kind.value} at {self.instruction} on {self.path}{loc}{extra}"

    def to_record(self) -> dict:
        return {
            "kind": self.kind.value,
            "function": self.instruction.function,
            "index": self.instruction.index,
            "path": str(self.path),
            "heap_loc": self.heap_loc,
            "detail": self.detail,
        }


@dataclass
class Frame:
    function: str
    return_to: int | None
    dest: s.Path | None
    env: dict[str, RtValue]
    pc: int
    gen: int
    # variables whose value has been moved out (display only; a move is a copy)
    moved: set[str] = field(default_factory=set)


@dataclass
class MachineState:
    stack: list[Frame]
    heap: dict[int, RtValue] = field(default_factory=dict)
    freed: set[int] = field(default_factory=set)
    next_loc: int = 0
    next_gen: int = 1

    @property
    def current(self) -> s.InstrId:
        top = self.stack[-1]
        return s.InstrId(top.function, top.pc)


def initial_state(tp: TypedProgram, entry: str | None = None) -> MachineState:
    entry = entry or tp.program.entry
    return MachineState(stack=[Frame(entry, None, None, {}, 0, 0)])


# -- step outcomes -------------------------------------------------------------


@dataclass
class Next:
    state: MachineState


@dataclass
class Terminated:
    value: RtValue
    steps: int = 0
    trace: list[TraceRecord] = field(default_factory=list, repr=False)


@dataclass
class Ub:
    report: UbReport
    trace: list[TraceRecord] = field(default_factory=list)


@dataclass
class LimitExceeded:
    steps: int


Outcome = Union[Terminated, Ub, LimitExceeded]


@dataclass
class TraceRecord:
    """One executed step: what changed in the environments and the heap."""

    instruction: s.InstrId
    depth: int
    env: dict[str, str] = field(default_factory=dict)
    heap: dict[int, str | None] = field(default_factory=dict)

    def to_record(self) -> dict:
        return {
            "function": self.instruction.function,
            "index": self.instruction.index,
            "depth": self.depth,
            "env": self.env,
            "heap": {f"κ{k}": v for k, v in sorted(self.heap.items())},
        }


class _UbSignal(Exception):
    def __init__(self, kind: UbKind, path: s.Path, heap_loc: int | None = None, detail: str = ""):
        self.kind, self.path, self.heap_loc, self.detail = kind, path, heap_loc, detail


class _Exec:
    """Executes one instruction against a mutable state."""

    def __init__(self, tp: TypedProgram, state: MachineState, record: TraceRecord | None):
        self.tp = tp
        self.st = state
        self.rec = record

    # -- memory access --

    def frame_of(self, seg: FrameSeg, path: s.Path) -> Frame:
        if seg.depth >= len(self.st.stack) or self.st.stack[seg.depth].gen != seg.gen:
            raise _UbSignal(UbKind.INVALID_ADDRESS, path, detail=f"dangling address into popped {seg}")
        return self.st.stack[seg.depth]

    def root_value(self, addr: Address, path: s.Path) -> RtValue:
        seg = addr.segment
        if isinstance(seg, HeapSeg):
            if seg.loc in self.st.freed:
                raise _UbSignal(UbKind.USE_AFTER_FREE, path, seg.loc)
            if seg.loc not in self.st.heap:
                raise _UbSignal(UbKind.INVALID_ADDRESS, path, seg.loc, "unallocated heap location")
            return self.st.heap[seg.loc]
        frame = self.frame_of(seg, path)
        if seg.var not in frame.env:
            raise _UbSignal(UbKind.INVALID_ADDRESS, path, detail=f"read of uninitialized {seg.var}")
        return frame.env[seg.var]

    def load(self, addr: Address, path: s.Path) -> RtValue:
        v = self.root_value(addr, path)
        for n in addr.projection:
            if not isinstance(v, tuple) or n >= len(v):
                raise _UbSignal(UbKind.INVALID_ADDRESS, path, detail=f"projection .{n} mismatch")
            v = v[n]
        return v

    def store(self, addr: Address, value: RtValue, path: s.Path) -> None:
        if addr.projection:
            old = self.root_value(addr, path)
            value = _replace(old, addr.projection, value, path)
        seg = addr.segment
        if isinstance(seg, HeapSeg):
            if seg.loc in self.st.freed:
                raise _UbSignal(UbKind.USE_AFTER_FREE, path, seg.loc)
            if seg.loc not in self.st.heap:
                raise _UbSignal(UbKind.INVALID_ADDRESS, path, seg.loc, "unallocated heap location")
            self.st.heap[seg.loc] = value
            if self.rec is not None:
                self.rec.heap[seg.loc] = format_value(value)
        else:
            frame = self.frame_of(seg, path)
            frame.env[seg.var] = value
            if self.rec is not None:
                prefix = "" if seg.depth == len(self.st.stack) - 1 else f"{seg.depth}:"
                self.rec.env[prefix + seg.var] = format_value(value)

    def place(self, frame_index: int, path: s.Path) -> Address:
        frame = self.st.stack[frame_index]
        addr = Address(FrameSeg(frame_index, path.base, frame.gen))
        for op in path.ops:
            if isinstance(op, s.Deref):
                target = self.load(addr, path)
                if not isinstance(target, Address):
                    raise _UbSignal(UbKind.INVALID_ADDRESS, path, detail="dereference of a non-address")
                addr = target
            else:
                addr = Address(addr.segment, addr.projection + (op,))
        return addr

    def read(self, path: s.Path) -> RtValue:
        top = len(self.st.stack) - 1
        v = self.load(self.place(top, path), path)
        fn = self.st.stack[top].function
        if not path.ops and self.tp.movable(fn, path):
            self.st.stack[top].moved.add(path.base)
        return v

    def operand(self, op: s.Operand) -> RtValue:
        if isinstance(op, s.Path):
            return self.read(op)
        return op

    def write(self, frame_index: int, path: s.Path, value: RtValue) -> None:
        self.store(self.place(frame_index, path), value, path)
        if not path.ops:
            self.st.stack[frame_index].moved.discard(path.base)

    def allocate(self, value: RtValue) -> Address:
        loc = self.st.next_loc
        self.st.next_loc += 1
        self.st.heap[loc] = value
        if self.rec is not None:
            self.rec.heap[loc] = format_value(value)
        return Address(HeapSeg(loc))

    def drop_value(self, value: RtValue, ty: s.LangType, path: s.Path) -> None:
        if isinstance(ty, s.BoxT):
            if not isinstance(value, Address) or not isinstance(value.segment, HeapSeg):
                raise _UbSignal(UbKind.INVALID_ADDRESS, path, detail="box does not hold a heap address")
            loc = value.segment.loc
            if loc in self.st.freed:
                raise _UbSignal(UbKind.DOUBLE_FREE, path, loc)
            if loc not in self.st.heap:
                raise _UbSignal(UbKind.INVALID_ADDRESS, path, loc, "unallocated heap location")
            self.drop_value(self.st.heap[loc], ty.inner, path)
            del self.st.heap[loc]
            self.st.freed.add(loc)
            if self.rec is not None:
                self.rec.heap[loc] = None
        elif isinstance(ty, s.TupleT):
            if not isinstance(value, tuple) or len(value) != len(ty.items):
                raise _UbSignal(UbKind.INVALID_ADDRESS, path, detail="tuple shape mismatch")
            for v, t in zip(value, ty.items):
                self.drop_value(v, t, path)

    # -- instructions --

    def rvalue(self, rv: s.Rvalue) -> RtValue:
        if isinstance(rv, s.Const):
            return rv.value
        if isinstance(rv, s.Use):
            return self.read(rv.path)
        if isinstance(rv, s.Loan):
            addr = self.place(len(self.st.stack) - 1, rv.path)
            # a reference must point at live memory when it is created
            self.load(addr, rv.path)
            return addr
        if isinstance(rv, s.Tuple):
            return tuple(self.operand(op) for op in rv.items)
        return self.allocate(self.operand(rv.operand))

    def run_instruction(self) -> Terminated | None:
        st = self.st
        top = len(st.stack) - 1
        frame = st.stack[top]
        fdef = self.tp.function(frame.function)
        instr = fdef.body[frame.pc]
        if isinstance(instr, s.Assign):
            value = self.rvalue(instr.rv)
            self.write(top, instr.dest, value)
            frame.pc += 1
        elif isinstance(instr, s.If):
            cond = self.read(instr.cond)
            if not isinstance(cond, s.BoolConst):
                raise _UbSignal(UbKind.INVALID_ADDRESS, instr.cond, detail="branch on a non-boolean")
            frame.pc = instr.then_target if cond.value else instr.else_target
        elif isinstance(instr, s.Drop):
            value = self.read(instr.operand)
            self.drop_value(value, self.tp.type_of(frame.function, instr.operand), instr.operand)
            frame.pc += 1
        elif isinstance(instr, s.Call):
            callee = self.tp.function(instr.callee)
            args = [self.read(a) for a in instr.args]
            env = {p.name: v for p, v in zip(callee.params, args)}
            st.stack.append(Frame(callee.name, frame.pc + 1, instr.dest, env, 0, st.next_gen))
            st.next_gen += 1
            if self.rec is not None:
                self.rec.env.update({f"{top + 1}:{k}": format_value(v) for k, v in env.items()})
        else:
            value = self.read(instr.operand)
            st.stack.pop()
            if not st.stack:
                return Terminated(value)
            caller = st.stack[-1]
            self.write(len(st.stack) - 1, frame.dest, value)
            caller.pc = frame.return_to
        return None


def _replace(v: RtValue, proj: tuple[int, ...], new: RtValue, path: s.Path) -> RtValue:
    if not proj:
        return new
    n = proj[0]
    if not isinstance(v, tuple) or n >= len(v):
        raise _UbSignal(UbKind.INVALID_ADDRESS, path, detail=f"projection .{n} mismatch")
    return v[:n] + (_replace(v[n], proj[1:], new, path),) + v[n + 1 :]


def _execute(tp: TypedProgram, state: MachineState, record: TraceRecord | None) -> Next | Terminated | Ub:
    where = state.current
    try:
        done = _Exec(tp, state, record).run_instruction()
    except _UbSignal as sig:
        return Ub(UbReport(sig.kind, where, sig.path, sig.heap_loc, sig.detail))
    return done if done is not None else Next(state)


def step(state: MachineState, tp: TypedProgram) -> Next | Terminated | Ub:
    """Advance one instruction without mutating ``state``."""
    return _execute(tp, copy.deepcopy(state), None)


def run(tp: TypedProgram, max_steps: int = DEFAULT_MAX_STEPS, entry: str | None = None) -> Outcome:
    """Execute from the entry function until termination, UB, or the step limit.

    Checker verdicts play no part here: rejected programs run like any other.
    """
    state = initial_state(tp, entry)
    records: list[TraceRecord] = []
    steps = 0
    while steps < max_steps:
        rec = TraceRecord(state.current, len(state.stack))
        result = _execute(tp, state, rec)
        steps += 1
        if isinstance(result, Ub):
            result.trace = records
            return result
        records.append(rec)
        if isinstance(result, Terminated):
            result.steps = steps
            result.trace = records
            return result
    return LimitExceeded(steps)


def trace_records_jsonl(records: Iterable[TraceRecord]) -> str:
    return "".join(json.dumps(r.to_record(), sort_keys=True) + "\n" for r in records)


# -- snapshots -----------------------------------------------------------------


@dataclass(frozen=True)
class Snapshot:
    """An immutable picture of the machine, labeled by where it was taken.

    ``label`` is the instruction about to execute, or ``"UB"`` for the
    final snapshot of an execution that hit undefined behavior.
    """

    label: str
    state: MachineState
    ub: UbReport | None = None
    types: dict[tuple[str, str], s.LangType] = field(default_factory=dict, compare=False)

    def model(self) -> dict[str, Any]:
        return snapshot_model(self)


def _cell_id(addr: Address, st: MachineState) -> str:
    seg = addr.segment
    proj = "".join(f".{n}" for n in addr.projection)
    if isinstance(seg, HeapSeg):
        if seg.loc in st.freed or seg.loc not in st.heap:
            return f"tomb:heap:{seg.loc}"
        return f"heap:{seg.loc}{proj}"
    live = seg.depth < len(st.stack) and st.stack[seg.depth].gen == seg.gen
    if not live:
        return f"tomb:frame:{seg.depth}:{seg.var}"
    return f"frame:{seg.depth}:{seg.var}{proj}"


def _value_model(v: RtValue, st: MachineState, arrows: list, origin: str, tombs: set) -> Any:
    if isinstance(v, tuple):
        return {"tuple": [_value_model(x, st, arrows, f"{origin}.{i}", tombs) for i, x in enumerate(v)]}
    if isinstance(v, Address):
        target = _cell_id(v, st)
        if target.startswith("tomb:"):
            tombs.add(target)
        arrows.append({"from": origin, "to": target})
        return {"addr": target}
    return {"const": str(v)}


def snapshot_model(snap: Snapshot) -> dict[str, Any]:
    """The document model of a snapshot: frames, heap cells, arrows, tombstones.

    Every arrow targets either a live cell of this snapshot or a tombstone
    listed in ``tombstones``.
    """
    st = snap.state
    arrows: list[dict] = []
    tombs: set[str] = set()
    frames = []
    for depth, fr in enumerate(st.stack):
        fdef_vars = []
        for name in sorted(fr.env):
            origin = f"frame:{depth}:{name}"
            fdef_vars.append({
                "name": name,
                "value": _value_model(fr.env[name], st, arrows, origin, tombs),
                "moved": name in fr.moved,
            })
        frames.append({"function": fr.function, "depth": depth, "vars": fdef_vars})
    heap = []
    for loc in sorted(st.heap):
        heap.append({"loc": loc, "value": _value_model(st.heap[loc], st, arrows, f"heap:{loc}", tombs)})
    tombstones = []
    for t in sorted(tombs):
        kind = "freed" if t.startswith("tomb:heap:") else "popped"
        entry = {"id": t, "kind": kind}
        if snap.ub is not None and snap.ub.kind is UbKind.DOUBLE_FREE and t == f"tomb:heap:{snap.ub.heap_loc}":
            entry["kind"] = "double-free"
        tombstones.append(entry)
    if snap.ub is not None and snap.ub.heap_loc is not None:
        t = f"tomb:heap:{snap.ub.heap_loc}"
        if t not in tombs and snap.ub.heap_loc in st.freed:
            kind = "double-free" if snap.ub.kind is UbKind.DOUBLE_FREE else "freed"
            tombstones.append({"id": t, "kind": kind})
    return {
        "label": snap.label,
        "frames": frames,
        "heap": heap,
        "tombstones": tombstones,
        "arrows": arrows,
        "ub": snap.ub.to_record() if snap.ub is not None else None,
    }


def _mark_key(mark: s.InstrId | int, entry: str) -> s.InstrId:
    return mark if isinstance(mark, s.InstrId) else s.InstrId(entry, mark)


def trace(tp: TypedProgram, marks: Iterable[s.InstrId | int] = (), max_steps: int = DEFAULT_MAX_STEPS) -> list[Snapshot]:
    """Snapshots of the machine each time control reaches a marked instruction.

    With no marks, a snapshot is taken before every step.  If execution hits
    undefined behavior a final snapshot labeled ``UB`` is appended.
    """
    entry = tp.program.entry
    wanted = {_mark_key(m, entry) for m in marks}
    state = initial_state(tp)
    snaps: list[Snapshot] = []
    for _ in range(max_steps):
        here = state.current
        if not wanted or here in wanted:
            snaps.append(Snapshot(str(here), copy.deepcopy(state)))
        pre = copy.deepcopy(state)
        result = _execute(tp, state, None)
        if isinstance(result, Ub):
            # the failed step may have partially updated the state; show the pre-step machine
            snaps.append(Snapshot("UB", pre, result.report))
            break
        if isinstance(result, Terminated):
            break
    return snaps
