"""Abstract syntax for the MIR-subset object language.

Every node is a frozen dataclass, so programs compare structurally and can
be used as dictionary keys.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, NamedTuple, Union

U32_MAX = 2**32 - 1


class Qualifier(str, Enum):
    SHARED = "shared"
    UNIQUE = "unique"


@dataclass(frozen=True)
class Deref:
    def __str__(self) -> str:
        return "*"


DEREF = Deref()
Step = Union[int, Deref]


@dataclass(frozen=True)
class Path:
    """A variable followed by field projections and dereferences."""

    base: str
    ops: tuple[Step, ...] = ()

    def field(self, n: int) -> Path:
        return Path(self.base, self.ops + (n,))

    def deref(self) -> Path:
        return Path(self.base, self.ops + (DEREF,))

    def prefixes(self) -> Iterator[Path]:
        """Yield every prefix, shortest first, ending with the path itself."""
        for k in range(len(self.ops) + 1):
            yield Path(self.base, self.ops[:k])

    def is_prefix_of(self, other: Path) -> bool:
        return self.base == other.base and other.ops[: len(self.ops)] == self.ops

    def overlaps(self, other: Path) -> bool:
        return self.is_prefix_of(other) or other.is_prefix_of(self)

    @property
    def has_deref(self) -> bool:
        return any(isinstance(op, Deref) for op in self.ops)

    def __str__(self) -> str:
        text, wrapped = self.base, False
        for op in self.ops:
            if isinstance(op, Deref):
                text, wrapped = "*" + text, True
            else:
                text = f"({text}).{op}" if wrapped else f"{text}.{op}"
                wrapped = False
        return text

    def sort_key(self) -> tuple:
        return (self.base, tuple(-1 if isinstance(op, Deref) else op for op in self.ops))


def var(name: str) -> Path:
    return Path(name)


# -- constants and operands ---------------------------------------------------


@dataclass(frozen=True)
class Num:
    value: int

    def __post_init__(self) -> None:
        if not 0 <= self.value <= U32_MAX:
            raise ValueError(f"constant {self.value} does not fit in u32")

    def __str__(self) -> str:
        return str(self.value)


@dataclass(frozen=True)
class BoolConst:
    value: bool

    def __str__(self) -> str:
        return "true" if self.value else "false"


Constant = Union[Num, BoolConst]
Operand = Union[Path, Num, BoolConst]


# -- rvalues -------------------------------------------------------------------


@dataclass(frozen=True)
class Const:
    value: Constant


@dataclass(frozen=True)
class Use:
    path: Path


@dataclass(frozen=True)
class Loan:
    qualifier: Qualifier
    path: Path


@dataclass(frozen=True)
class Tuple:
    items: tuple[Operand, ...]


@dataclass(frozen=True)
class Box:
    operand: Operand


Rvalue = Union[Const, Use, Loan, Tuple, Box]


# -- instructions --------------------------------------------------------------


@dataclass(frozen=True)
class Assign:
    dest: Path
    rv: Rvalue


@dataclass(frozen=True)
class If:
    cond: Path
    then_target: int
    else_target: int


@dataclass(frozen=True)
class Call:
    dest: Path
    callee: str
    args: tuple[Path, ...]


@dataclass(frozen=True)
class Return:
    operand: Path


@dataclass(frozen=True)
class Drop:
    operand: Path


Instruction = Union[Assign, If, Call, Return, Drop]


def successors(body: tuple[Instruction, ...], index: int) -> tuple[int, ...]:
    instr = body[index]
    if isinstance(instr, Return):
        return ()
    if isinstance(instr, If):
        if instr.then_target == instr.else_target:
            return (instr.then_target,)
        return (instr.then_target, instr.else_target)
    return (index + 1,)


# -- types ---------------------------------------------------------------------


@dataclass(frozen=True)
class Lifetime:
    name: str
    abstract: bool

    def __str__(self) -> str:
        return "'" + self.name


@dataclass(frozen=True)
class U32T:
    def __str__(self) -> str:
        return "u32"


@dataclass(frozen=True)
class BoolT:
    def __str__(self) -> str:
        return "bool"


@dataclass(frozen=True)
class TupleT:
    items: tuple[LangType, ...]

    def __str__(self) -> str:
        if len(self.items) == 1:
            return f"({self.items[0]},)"
        return "(" + ", ".join(map(str, self.items)) + ")"


@dataclass(frozen=True)
class RefT:
    # None means the lifetime was elided in the source text.
    lifetime: Lifetime | None
    qualifier: Qualifier
    inner: LangType

    def __str__(self) -> str:
        lt = f"{self.lifetime} " if self.lifetime is not None else ""
        return f"&{lt}{self.qualifier.value} {self.inner}"


@dataclass(frozen=True)
class BoxT:
    inner: LangType

    def __str__(self) -> str:
        return f"box {self.inner}"


LangType = Union[U32T, BoolT, TupleT, RefT, BoxT]
U32 = U32T()
BOOL = BoolT()


def erase(ty: LangType) -> LangType:
    """Drop lifetimes; two types are assignment-compatible iff erasures match."""
    if isinstance(ty, TupleT):
        return TupleT(tuple(erase(t) for t in ty.items))
    if isinstance(ty, RefT):
        return RefT(None, ty.qualifier, erase(ty.inner))
    if isinstance(ty, BoxT):
        return BoxT(erase(ty.inner))
    return ty


def is_movable(ty: LangType) -> bool:
    if isinstance(ty, BoxT):
        return True
    if isinstance(ty, RefT):
        return ty.qualifier is Qualifier.UNIQUE
    if isinstance(ty, TupleT):
        return any(is_movable(t) for t in ty.items)
    return False


def contains_ref(ty: LangType) -> bool:
    if isinstance(ty, RefT):
        return True
    if isinstance(ty, TupleT):
        return any(contains_ref(t) for t in ty.items)
    if isinstance(ty, BoxT):
        return contains_ref(ty.inner)
    return False


def lifetimes_of(ty: LangType) -> list[Lifetime]:
    if isinstance(ty, RefT):
        head = [ty.lifetime] if ty.lifetime is not None else []
        return head + lifetimes_of(ty.inner)
    if isinstance(ty, TupleT):
        return [lt for t in ty.items for lt in lifetimes_of(t)]
    if isinstance(ty, BoxT):
        return lifetimes_of(ty.inner)
    return []


# -- functions and programs ----------------------------------------------------


@dataclass(frozen=True)
class Binding:
    """A parameter or declared local."""

    name: str
    ty: LangType
    mutable: bool = False


@dataclass(frozen=True)
class FunctionDef:
    name: str
    lifetimes: tuple[str, ...]
    outlives: tuple[tuple[str, str], ...]
    params: tuple[Binding, ...]
    locals: tuple[Binding, ...]
    ret: LangType | None
    body: tuple[Instruction, ...]

    def binding(self, name: str) -> Binding | None:
        for b in self.params + self.locals:
            if b.name == name:
                return b
        return None

    @property
    def names(self) -> list[str]:
        return [b.name for b in self.params + self.locals]


@dataclass(frozen=True)
class Program:
    functions: tuple[FunctionDef, ...]
    entry: str = field(default="main")

    def function(self, name: str) -> FunctionDef:
        for f in self.functions:
            if f.name == name:
                return f
        raise KeyError(name)

    def has_function(self, name: str) -> bool:
        return any(f.name == name for f in self.functions)


def instruction_paths(instr: Instruction) -> list[Path]:
    """Every path written textually in an instruction."""
    out: list[Path] = []
    if isinstance(instr, Assign):
        out.append(instr.dest)
        rv = instr.rv
        if isinstance(rv, (Use, Loan)):
            out.append(rv.path)
        elif isinstance(rv, Tuple):
            out.extend(op for op in rv.items if isinstance(op, Path))
        elif isinstance(rv, Box) and isinstance(rv.operand, Path):
            out.append(rv.operand)
    elif isinstance(instr, If):
        out.append(instr.cond)
    elif isinstance(instr, Call):
        out.append(instr.dest)
        out.extend(instr.args)
    else:
        out.append(instr.operand)
    return out


@dataclass
class Diagnostic:
    message: str
    function: str | None = None
    index: int | None = None
    line: int | None = None
    col: int | None = None

    def __str__(self) -> str:
        where = []
        if self.line is not None:
            where.append(f"{self.line}:{self.col}")
        if self.function is not None:
            where.append(self.function if self.index is None else f"{self.function}[{self.index}]")
        return (" ".join(where) + ": " if where else "") + self.message


class InstrId(NamedTuple):
    function: str
    index: int

    def __str__(self) -> str:
        return f"{self.function}[{self.index}]"
