"""Type-directed random generation of well-typed programs.

Types are chosen first (locals, parameters, return types); instructions are
then built to fit them, so every generated program passes ``well_formed``
and ``type_check`` without rejection sampling.  Generation is a pure
function of the configuration, seed included.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from ownlab.lang import syntax as s
from ownlab.lang.typecheck import TypeCheckError, type_check
from ownlab.lang.wellformed import well_formed

DEFAULT_WEIGHTS = {
    "const": 3.0,
    "use": 3.0,
    "loan": 3.0,
    "tuple": 1.0,
    "box": 1.5,
    "if": 1.0,
    "call": 1.0,
    "drop": 1.0,
}


@dataclass(frozen=True)
class FuzzConfig:
    seed: int = 0
    max_functions: int = 2
    max_instructions: int = 10
    max_locals: int = 5
    type_depth: int = 2
    weights: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_WEIGHTS), hash=False)
    abstract_lifetimes: bool = True
    calls: bool = True
    back_edge_probability: float = 0.05
    init_probability: float = 0.85

    def __post_init__(self) -> None:
        if self.max_functions < 1 or self.max_instructions < 2 or self.max_locals < 1 or self.type_depth < 1:
            raise ValueError("fuzz bounds must be at least 1 (2 instructions)")
        if any(w < 0 for w in self.weights.values()) or not any(w > 0 for w in self.weights.values()):
            raise ValueError("weights must be nonnegative with at least one positive")
        unknown = set(self.weights) - set(DEFAULT_WEIGHTS)
        if unknown:
            raise ValueError(f"unknown instruction kinds in weights: {sorted(unknown)}")

    def with_seed(self, seed: int) -> FuzzConfig:
        return FuzzConfig(seed, self.max_functions, self.max_instructions, self.max_locals,
                          self.type_depth, dict(self.weights), self.abstract_lifetimes, self.calls,
                          self.back_edge_probability, self.init_probability)


def _paths_of(name: str, ty: s.LangType, max_ops: int = 3) -> list[tuple[s.Path, s.LangType]]:
    out: list[tuple[s.Path, s.LangType]] = []

    def walk(p: s.Path, t: s.LangType) -> None:
        out.append((p, t))
        if len(p.ops) >= max_ops:
            return
        if isinstance(t, s.TupleT):
            for k, item in enumerate(t.items):
                walk(p.field(k), item)
        elif isinstance(t, (s.BoxT, s.RefT)):
            walk(p.deref(), t.inner)

    walk(s.Path(name), ty)
    return out


class _Gen:
    def __init__(self, cfg: FuzzConfig):
        self.cfg = cfg
        self.rng = random.Random(cfg.seed)

    # -- types --

    def base_type(self) -> s.LangType:
        return s.U32 if self.rng.random() < 0.7 else s.BOOL

    def local_type(self, depth: int, refs: bool = True) -> s.LangType:
        r = self.rng.random()
        if depth <= 0 or r < 0.35:
            return self.base_type()
        if r < 0.6:
            return s.BoxT(self.local_type(depth - 1, refs))
        if r < 0.8 and refs:
            q = s.Qualifier.UNIQUE if self.rng.random() < 0.5 else s.Qualifier.SHARED
            return s.RefT(None, q, self.local_type(depth - 1, refs))
        n = self.rng.choice((1, 2, 2, 3))
        return s.TupleT(tuple(self.local_type(depth - 1, refs) for _ in range(n)))

    def with_lifetime(self, ty: s.LangType, lt: str) -> s.LangType:
        """Attach an abstract lifetime to every reference in ty."""
        if isinstance(ty, s.RefT):
            return s.RefT(s.Lifetime(lt, True), ty.qualifier, self.with_lifetime(ty.inner, lt))
        if isinstance(ty, s.TupleT):
            return s.TupleT(tuple(self.with_lifetime(t, lt) for t in ty.items))
        if isinstance(ty, s.BoxT):
            return s.BoxT(self.with_lifetime(ty.inner, lt))
        return ty

    def ref_type(self, lt: str) -> s.LangType:
        q = s.Qualifier.UNIQUE if self.rng.random() < 0.5 else s.Qualifier.SHARED
        inner = self.local_type(self.cfg.type_depth - 1, refs=False)
        return s.RefT(s.Lifetime(lt, True), q, inner)

    # -- functions --

    def signature(self, name: str) -> tuple[tuple[str, ...], tuple[tuple[str, str], ...],
                                            tuple[s.Binding, ...], s.LangType | None]:
        rng = self.rng
        if not self.cfg.abstract_lifetimes:
            params = tuple(s.Binding(f"a{k}", self.local_type(self.cfg.type_depth, refs=False),
                                     rng.random() < 0.5)
                           for k in range(rng.randint(0, 2)))
            return (), (), params, self.local_type(self.cfg.type_depth - 1, refs=False)
        lts = ("a", "b") if rng.random() < 0.7 else ("a",)
        outlives: tuple[tuple[str, str], ...] = ()
        if len(lts) == 2 and rng.random() < 0.5:
            outlives = (("a", "b"),)
        params = []
        for k in range(rng.randint(1, 2)):
            if rng.random() < 0.6:
                ty = self.ref_type(rng.choice(lts))
            else:
                ty = self.local_type(self.cfg.type_depth - 1, refs=False)
            params.append(s.Binding(f"a{k}", ty, rng.random() < 0.5))
        ret = self.ref_type(rng.choice(lts)) if rng.random() < 0.6 else self.base_type()
        return lts, outlives, tuple(params), ret

    def function(self, name: str, callees: list[s.FunctionDef], is_main: bool) -> s.FunctionDef:
        rng, cfg = self.rng, self.cfg
        if is_main:
            lts, outlives, params, ret = (), (), (), None
        else:
            lts, outlives, params, ret = self.signature(name)
        nlocals = rng.randint(1, cfg.max_locals)
        locals_ = []
        for k in range(nlocals):
            ty = self.local_type(cfg.type_depth)
            if lts and rng.random() < 0.2:
                ty = self.with_lifetime(ty, rng.choice(lts))
            locals_.append(s.Binding(f"v{k}", ty, rng.random() < 0.75))
        if ret is not None:
            # guarantee a local of the return type exists
            locals_.append(s.Binding("out", ret, rng.random() < 0.75))
        draft = s.FunctionDef(name, lts, outlives, params, tuple(locals_), ret, ())
        n = rng.randint(2, cfg.max_instructions)
        body = _BodyGen(self, draft, callees, n).build()
        return s.FunctionDef(name, lts, outlives, params, tuple(locals_), ret, tuple(body))

    def program(self) -> s.Program:
        cfg = self.cfg
        nfun = self.rng.randint(1, cfg.max_functions) if cfg.calls else 1
        helpers: list[s.FunctionDef] = []
        # later helpers are generated first so every call goes to an existing function
        for k in reversed(range(1, nfun)):
            helpers.insert(0, self.function(f"f{k}", list(helpers), False))
        main = self.function("main", helpers, True)
        return s.Program((main, *helpers))


class _BodyGen:
    def __init__(self, g: _Gen, f: s.FunctionDef, callees: list[s.FunctionDef], n: int):
        self.g = g
        self.rng = g.rng
        self.f = f
        self.callees = callees
        self.n = n
        self.paths: list[tuple[s.Path, s.LangType]] = []
        for b in f.params + f.locals:
            self.paths.extend(_paths_of(b.name, b.ty))
        # roots believed initialized and not moved out, along the straight-line order;
        # careless bodies ignore it so the checkers still see plenty of misuse
        self.ready: set[str] = {b.name for b in f.params}
        self.careful = self.rng.random() < 0.95

    def usable(self, paths: list) -> list:
        if not self.careful:
            return paths
        base = (lambda x: x[0].base) if paths and isinstance(paths[0], tuple) else (lambda x: x.base)
        return [x for x in paths if base(x) in self.ready]

    def note(self, instr: s.Instruction) -> None:
        moved: list[s.Path] = []
        if isinstance(instr, s.Drop):
            moved.append(instr.operand)
        elif isinstance(instr, s.Call):
            moved.extend(instr.args)
        elif isinstance(instr, s.Assign):
            rv = instr.rv
            if isinstance(rv, s.Use):
                moved.append(rv.path)
            elif isinstance(rv, s.Tuple):
                moved.extend(op for op in rv.items if isinstance(op, s.Path))
            elif isinstance(rv, s.Box) and isinstance(rv.operand, s.Path):
                moved.append(rv.operand)
        types = dict(self.paths)
        for p in moved:
            if s.is_movable(types[p]):
                self.ready.discard(p.base)
        if isinstance(instr, (s.Assign, s.Call)) and not instr.dest.ops:
            self.ready.add(instr.dest.base)

    # -- path helpers --

    def ref_derefs(self, p: s.Path) -> list[s.RefT]:
        out = []
        ty = self.f.binding(p.base).ty
        for op in p.ops:
            if isinstance(op, s.Deref):
                if isinstance(ty, s.RefT):
                    out.append(ty)
                ty = ty.inner
            else:
                ty = ty.items[op]
        return out

    def readable(self, want: s.LangType) -> list[s.Path]:
        """Paths of erased type want that may be used as an operand (moved or copied)."""
        w = s.erase(want)
        return self.usable([p for p, t in self.paths
                            if s.erase(t) == w and not (s.is_movable(t) and self.ref_derefs(p))])

    def writable(self) -> list[tuple[s.Path, s.LangType]]:
        """Assignable paths: any whole variable, or a part of a ready one."""
        ok = [(p, t) for p, t in self.paths
              if not any(r.qualifier is s.Qualifier.SHARED for r in self.ref_derefs(p))]
        whole = [(p, t) for p, t in ok if not p.ops]
        return whole + self.usable([(p, t) for p, t in ok if p.ops])

    def moves_clash(self, ops: list) -> bool:
        """Whether an operand list reuses a path after moving it."""
        types = dict(self.paths)
        paths = [op for op in ops if isinstance(op, s.Path)]
        return any(s.is_movable(types[m]) and later.overlaps(m)
                   for k, m in enumerate(paths) for later in paths[k + 1:])

    def operand(self, want: s.LangType) -> s.Operand | None:
        cands: list[s.Operand] = list(self.readable(want))
        if isinstance(want, s.U32T):
            cands.append(s.Num(self.rng.randint(0, 9)))
        elif isinstance(want, s.BoolT):
            cands.append(s.BoolConst(self.rng.random() < 0.5))
        return self.rng.choice(cands) if cands else None

    # -- rvalues --

    def rvalue(self, kind: str, want: s.LangType) -> s.Rvalue | None:
        rng = self.rng
        if kind == "const":
            if isinstance(want, s.U32T):
                return s.Const(s.Num(rng.randint(0, 9)))
            if isinstance(want, s.BoolT):
                return s.Const(s.BoolConst(rng.random() < 0.5))
            return None
        if kind == "use":
            c = self.readable(want)
            return s.Use(rng.choice(c)) if c else None
        if kind == "loan":
            if not isinstance(want, s.RefT):
                return None
            w = s.erase(want.inner)
            if want.qualifier is s.Qualifier.UNIQUE:
                c = [p for p, t in self.writable() if s.erase(t) == w]
            else:
                c = [p for p, t in self.paths if s.erase(t) == w]
            c = self.usable(c)
            return s.Loan(want.qualifier, rng.choice(c)) if c else None
        if kind == "tuple":
            if not isinstance(want, s.TupleT):
                return None
            items = [self.operand(t) for t in want.items]
            if any(x is None for x in items) or self.moves_clash(items):
                return None
            return s.Tuple(tuple(items))
        if kind == "box":
            if not isinstance(want, s.BoxT):
                return None
            op = self.operand(want.inner)
            return None if op is None else s.Box(op)
        return None

    def fitting_rvalue(self, want: s.LangType, preferred: str) -> s.Rvalue | None:
        order = [preferred] + [k for k in ("const", "box", "tuple", "loan", "use") if k != preferred]
        for kind in order:
            rv = self.rvalue(kind, want)
            if rv is not None:
                return rv
        return None

    # -- instructions --

    def assign(self, kind: str, dests: list[tuple[s.Path, s.LangType]]) -> s.Instruction | None:
        rng = self.rng
        for _ in range(6):
            dest, ty = rng.choice(dests)
            rv = self.rvalue(kind, ty)
            if rv is not None:
                return s.Assign(dest, rv)
        return None

    def instruction(self, i: int) -> s.Instruction:
        rng = self.rng
        weights = dict(self.g.cfg.weights)
        if not self.callees:
            weights["call"] = 0.0
        if i >= self.n - 2:
            weights["if"] = 0.0
        kinds = [k for k, w in weights.items() if w > 0]
        for _ in range(12):
            kind = rng.choices(kinds, [weights[k] for k in kinds])[0]
            instr = self.try_kind(kind, i)
            if instr is not None:
                return instr
        # every local is writable with some constant-built value, or a plain copy
        for b in self.f.locals:
            rv = self.fitting_rvalue(b.ty, "const")
            if rv is not None:
                return s.Assign(s.Path(b.name), rv)
        b = self.f.locals[0]
        return s.Assign(s.Path(b.name), s.Use(s.Path(b.name)))

    def try_kind(self, kind: str, i: int) -> s.Instruction | None:
        rng = self.rng
        if kind in ("const", "use", "loan", "tuple", "box"):
            return self.assign(kind, self.writable())
        if kind == "if":
            conds = self.readable(s.BOOL)
            if not conds:
                return None
            fwd = rng.randint(i + 1, self.n - 1)
            if rng.random() < self.g.cfg.back_edge_probability:
                other = rng.randint(0, i)
            else:
                other = rng.randint(i + 1, self.n - 1)
            t, e = (fwd, other) if rng.random() < 0.5 else (other, fwd)
            return s.If(rng.choice(conds), t, e)
        if kind == "drop":
            c = self.usable([p for p, t in self.paths if s.is_movable(t) and not self.ref_derefs(p)])
            return s.Drop(rng.choice(c)) if c else None
        if kind == "call":
            callee = rng.choice(self.callees)
            args = []
            for param in callee.params:
                c = self.readable(param.ty)
                if not c:
                    return None
                args.append(rng.choice(c))
            if self.moves_clash(args):
                return None
            dests = [p for p, t in self.writable()
                     if callee.ret is not None and s.erase(t) == s.erase(callee.ret)]
            if not dests:
                return None
            return s.Call(rng.choice(dests), callee.name, tuple(args))
        return None

    def build(self) -> list[s.Instruction]:
        rng = self.rng
        body: list[s.Instruction] = []
        # most programs start by initializing some locals, as real code does
        if rng.random() < self.g.cfg.init_probability:
            order = list(self.f.locals)
            rng.shuffle(order)
            for b in order:
                if len(body) >= self.n - 1:
                    break
                if rng.random() < 0.95:
                    rv = self.fitting_rvalue(b.ty, rng.choice(("const", "use", "loan", "box", "tuple")))
                    if rv is not None:
                        body.append(s.Assign(s.Path(b.name), rv))
                        self.note(body[-1])
        while len(body) < self.n - 1:
            body.append(self.instruction(len(body)))
            self.note(body[-1])
        want = self.f.ret
        if want is None:
            cands = self.usable([p for p, t in self.paths if not (s.is_movable(t) and self.ref_derefs(p))])
        else:
            cands = self.readable(want)
        if not cands:
            cands = [p for p, t in self.paths
                     if (want is None or s.erase(t) == s.erase(want))
                     and not (s.is_movable(t) and self.ref_derefs(p))]
        body.append(s.Return(rng.choice(cands)))
        return body


def generate_program(cfg: FuzzConfig) -> s.Program:
    """A random well-formed, well-typed program; deterministic in ``cfg``."""
    for attempt in range(20):
        seed = cfg.seed if attempt == 0 else (cfg.seed * 1_000_003 + attempt) & (2**64 - 1)
        prog = _Gen(cfg.with_seed(seed)).program()
        if not well_formed(prog):
            try:
                type_check(prog)
                return prog
            except TypeCheckError:
                pass
    return _minimal_program()


def _minimal_program() -> s.Program:
    body = (s.Assign(s.Path("r"), s.Const(s.Num(0))), s.Return(s.Path("r")))
    main = s.FunctionDef("main", (), (), (), (s.Binding("r", s.U32),), None, body)
    return s.Program((main,))
