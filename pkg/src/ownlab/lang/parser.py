"""Recursive-descent parser for `.own` source files.

Concrete syntax, by example::

    fn id<'a, 'b, 'a :> 'b>(x: &'a unique u32) -> &'b unique u32 {
        let y: &unique u32;
        0: y = x;
        1: return y;
    }

Instructions carry explicit indices, which must run 0, 1, 2, ... in order.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from ownlab.lang import syntax as s

KEYWORDS = {
    "fn", "let", "mut", "box", "drop", "return", "if", "then", "else",
    "call", "shared", "unique", "true", "false", "u32", "bool",
}

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>//[^\n]*)
  | (?P<lifetime>'[A-Za-z_][A-Za-z0-9_]*)
  | (?P<num>[0-9]+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<punct>->|:>|[{}()<>,;:=.*&])
    """,
    re.VERBOSE,
)


class ParseError(Exception):
    def __init__(self, diagnostics: list[s.Diagnostic]):
        self.diagnostics = diagnostics
        super().__init__("; ".join(str(d) for d in diagnostics))


@dataclass
class Token:
    kind: str  # "ident", "kw", "num", "lifetime", "punct", "eof"
    text: str
    line: int
    col: int


def tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    line, line_start, pos = 1, 0, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError([s.Diagnostic(f"unexpected character {text[pos]!r}",
                                           line=line, col=pos - line_start + 1)])
        kind = m.lastgroup
        col = pos - line_start + 1
        if kind == "nl":
            line, line_start = line + 1, m.end()
        elif kind == "ident" and m.group() in KEYWORDS:
            tokens.append(Token("kw", m.group(), line, col))
        elif kind not in ("ws", "comment"):
            tokens.append(Token(kind, m.group(), line, col))
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.i = 0
        self.lifetimes: set[str] = set()

    # -- token helpers --

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def error(self, msg: str, tok: Token | None = None) -> ParseError:
        tok = tok or self.tok
        return ParseError([s.Diagnostic(msg, line=tok.line, col=tok.col)])

    def at(self, text: str) -> bool:
        return self.tok.kind in ("punct", "kw") and self.tok.text == text

    def eat(self, text: str) -> bool:
        if self.at(text):
            self.i += 1
            return True
        return False

    def expect(self, text: str) -> Token:
        if not self.at(text):
            found = self.tok.text or "end of input"
            raise self.error(f"syntax error: expected {text!r}, found {found!r}")
        tok = self.tok
        self.i += 1
        return tok

    def ident(self) -> str:
        if self.tok.kind != "ident":
            raise self.error(f"syntax error: expected identifier, found {self.tok.text!r}")
        self.i += 1
        return self.toks[self.i - 1].text

    def number(self) -> int:
        if self.tok.kind != "num":
            raise self.error(f"syntax error: expected number, found {self.tok.text!r}")
        self.i += 1
        return int(self.toks[self.i - 1].text)

    # -- grammar --

    def program(self) -> tuple[list[s.FunctionDef], list[tuple[Token, s.FunctionDef]]]:
        funcs = []
        while self.tok.kind != "eof":
            start = self.tok
            funcs.append((start, self.function()))
        return [f for _, f in funcs], funcs

    def function(self) -> s.FunctionDef:
        self.expect("fn")
        name = self.ident()
        lifetimes: list[str] = []
        outlives: list[tuple[str, str]] = []
        constraint_toks: list[Token] = []
        if self.eat("<"):
            while True:
                tok = self.tok
                a = self.lifetime_name()
                if self.eat(":>"):
                    outlives.append((a, self.lifetime_name()))
                    constraint_toks.append(tok)
                elif a in lifetimes:
                    raise self.error(f"duplicate lifetime '{a}", tok)
                else:
                    lifetimes.append(a)
                if not self.eat(","):
                    break
            self.expect(">")
        for (a, b), tok in zip(outlives, constraint_toks):
            for lt in (a, b):
                if lt not in lifetimes:
                    raise self.error(f"unknown lifetime '{lt}", tok)
        self.lifetimes = set(lifetimes)
        self.expect("(")
        params: list[s.Binding] = []
        if not self.at(")"):
            while True:
                mutable = self.eat("mut")
                pname = self.ident()
                self.expect(":")
                params.append(s.Binding(pname, self.type_(), mutable))
                if not self.eat(","):
                    break
        self.expect(")")
        ret = self.type_() if self.eat("->") else None
        self.expect("{")
        locals_: list[s.Binding] = []
        body: list[s.Instruction] = []
        positions: list[Token] = []
        while not self.eat("}"):
            if self.eat("let"):
                mutable = self.eat("mut")
                lname = self.ident()
                self.expect(":")
                locals_.append(s.Binding(lname, self.type_(), mutable))
                self.expect(";")
                continue
            tok = self.tok
            idx = self.number()
            if idx != len(body):
                raise self.error(f"instruction index {idx} out of sequence (expected {len(body)})", tok)
            self.expect(":")
            positions.append(tok)
            body.append(self.instruction())
            self.expect(";")
        fdef = s.FunctionDef(name, tuple(lifetimes), tuple(outlives), tuple(params),
                             tuple(locals_), ret, tuple(body))
        self.check_names(fdef, positions)
        return fdef

    def check_names(self, f: s.FunctionDef, positions: list[Token]) -> None:
        seen: set[str] = set()
        for b in f.params + f.locals:
            if b.name in seen:
                raise ParseError([s.Diagnostic(f"duplicate name {b.name}", function=f.name)])
            seen.add(b.name)
        for idx, (instr, tok) in enumerate(zip(f.body, positions)):
            for p in s.instruction_paths(instr):
                if p.base not in seen:
                    raise ParseError([s.Diagnostic(f"unknown identifier {p.base}", f.name, idx,
                                                   tok.line, tok.col)])

    def lifetime_name(self) -> str:
        if self.tok.kind != "lifetime":
            raise self.error(f"syntax error: expected lifetime, found {self.tok.text!r}")
        self.i += 1
        return self.toks[self.i - 1].text[1:]

    def type_(self) -> s.LangType:
        if self.eat("u32"):
            return s.U32
        if self.eat("bool"):
            return s.BOOL
        if self.eat("box"):
            return s.BoxT(self.type_())
        if self.eat("&"):
            lt = None
            if self.tok.kind == "lifetime":
                tok = self.tok
                name = self.lifetime_name()
                if name not in self.lifetimes:
                    raise self.error(f"unknown lifetime '{name}", tok)
                lt = s.Lifetime(name, abstract=True)
            return s.RefT(lt, self.qualifier(), self.type_())
        if self.eat("("):
            items: list[s.LangType] = []
            trailing = False
            while not self.at(")"):
                items.append(self.type_())
                trailing = self.eat(",")
                if not trailing:
                    break
            self.expect(")")
            if len(items) == 1 and not trailing:
                return items[0]
            return s.TupleT(tuple(items))
        raise self.error(f"syntax error: expected type, found {self.tok.text!r}")

    def qualifier(self) -> s.Qualifier:
        if self.eat("shared"):
            return s.Qualifier.SHARED
        if self.eat("unique"):
            return s.Qualifier.UNIQUE
        raise self.error("syntax error: expected 'shared' or 'unique'")

    def instruction(self) -> s.Instruction:
        if self.eat("if"):
            cond = self.path()
            self.expect("then")
            t = self.number()
            self.expect("else")
            return s.If(cond, t, self.number())
        if self.eat("return"):
            return s.Return(self.path())
        if self.eat("drop"):
            return s.Drop(self.path())
        dest = self.path()
        self.expect("=")
        if self.eat("call"):
            callee = self.ident()
            self.expect("(")
            args: list[s.Path] = []
            if not self.at(")"):
                while True:
                    args.append(self.path())
                    if not self.eat(","):
                        break
            self.expect(")")
            return s.Call(dest, callee, tuple(args))
        return s.Assign(dest, self.rvalue())

    def constant(self) -> s.Constant | None:
        if self.tok.kind == "num":
            tok = self.tok
            n = self.number()
            if n > s.U32_MAX:
                raise self.error(f"constant {n} does not fit in u32", tok)
            return s.Num(n)
        if self.eat("true"):
            return s.BoolConst(True)
        if self.eat("false"):
            return s.BoolConst(False)
        return None

    def operand(self) -> s.Operand:
        c = self.constant()
        return c if c is not None else self.path()

    def rvalue(self) -> s.Rvalue:
        c = self.constant()
        if c is not None:
            return s.Const(c)
        if self.eat("&"):
            q = self.qualifier()
            return s.Loan(q, self.path())
        if self.eat("box"):
            return s.Box(self.operand())
        if self.at("("):
            self.i += 1
            if self.eat(")"):
                return s.Tuple(())
            first = self.operand()
            if self.eat(","):
                items = [first]
                while not self.at(")"):
                    items.append(self.operand())
                    if not self.eat(","):
                        break
                self.expect(")")
                return s.Tuple(tuple(items))
            self.expect(")")
            if not isinstance(first, s.Path):
                raise self.error("syntax error: parenthesized constant is not an rvalue")
            return s.Use(self.postfix(first))
        return s.Use(self.path())

    def path(self) -> s.Path:
        if self.eat("*"):
            return self.path().deref()
        if self.eat("("):
            inner = self.path()
            self.expect(")")
            return self.postfix(inner)
        return self.postfix(s.Path(self.ident()))

    def postfix(self, p: s.Path) -> s.Path:
        while self.eat("."):
            p = p.field(self.number())
        return p


def parse_program(text: str) -> s.Program:
    """Parse source text into a Program; raises ParseError with diagnostics."""
    parser = _Parser(text)
    funcs, located = parser.program()
    names: set[str] = set()
    for tok, f in located:
        if f.name in names:
            raise ParseError([s.Diagnostic(f"duplicate function {f.name}", line=tok.line, col=tok.col)])
        names.add(f.name)
    for f in funcs:
        for idx, instr in enumerate(f.body):
            if isinstance(instr, s.Call) and instr.callee not in names:
                raise ParseError([s.Diagnostic(f"unknown function {instr.callee}", f.name, idx)])
    if "main" not in names:
        raise ParseError([s.Diagnostic("missing entry function main")])
    return s.Program(tuple(funcs))
