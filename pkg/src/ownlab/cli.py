"""Command-line entry point: ``ownlab check|run|trace|perms|render|fuzz``."""

from __future__ import annotations

import argparse
import json
import os
import re
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence, TextIO

from ownlab import __version__
from ownlab.diffcheck import FuzzConfig, Property, campaign
from ownlab.facts import build_facts
from ownlab.interp import DEFAULT_MAX_STEPS, LimitExceeded, Terminated, Ub, format_value, run, trace
from ownlab.lang import InstrId, ParseError, TypeCheckError, TypedProgram, load
from ownlab.perms import MarkStyle, expectations, missing_at, permission_errors, steps
from ownlab.polonius import access_errors, subset_errors
from ownlab.render import Format, Level, RenderOptions, render_annotated_listing, render_memory_trace, \
    render_perm_table

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_DIAGNOSTICS = 1
EXIT_UB = 2
EXIT_LIMIT = 3
EXIT_USAGE = 64

COUNTERFACTUAL_FLAG = "--ignore-borrowck"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """An argument parser that reports bad flags with exit status 64."""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass
class Output:
    out: TextIO
    err: TextIO
    records: bool
    color: bool

    def emit(self, record: dict) -> None:
        self.out.write(json.dumps({"schema": SCHEMA_VERSION, **record}, sort_keys=True, ensure_ascii=False) + "\n")

    def line(self, text: str = "") -> None:
        self.out.write(text + "\n")


def _color_wanted(stream: TextIO) -> bool:
    return "NO_COLOR" not in os.environ and hasattr(stream, "isatty") and stream.isatty()


# -- loading and checking -----------------------------------------------------------


def _load(path: str, o: Output) -> TypedProgram | None:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        o.err.write(f"{path}: cannot read: {exc.strerror or exc}\n")
        return None
    try:
        return load(text)
    except (ParseError, TypeCheckError) as exc:
        kind = "parse" if isinstance(exc, ParseError) else "type"
        if o.records:
            for d in exc.diagnostics:
                o.emit({"kind": f"{kind}-error", "file": path, "message": str(d)})
        else:
            for d in exc.diagnostics:
                o.err.write(f"{path}: {kind} error: {d}\n")
        return None


@dataclass
class CheckResult:
    polonius: list
    perms: list

    @property
    def rejected(self) -> bool:
        return bool(self.polonius or self.perms)


def _check(tp: TypedProgram, model: str) -> CheckResult:
    fb = build_facts(tp)
    pol = access_errors(fb) + subset_errors(fb) if model in ("polonius", "both") else []
    perm = permission_errors(fb) if model in ("perms", "both") else []
    return CheckResult(pol, perm)


def _report(path: str, res: CheckResult, model: str, o: Output) -> None:
    groups = [("polonius", res.polonius), ("perms", res.perms)]
    for name, diags in groups:
        if model not in (name, "both"):
            continue
        if o.records:
            for d in diags:
                o.emit({"file": path, "model": name, **d.to_record()})
            continue
        noun = "error" if len(diags) == 1 else "errors"
        o.line(f"{path}: {name}: {len(diags)} {noun}" if diags else f"{path}: {name}: ok")
        for d in diags:
            rec = d.to_record()
            tag = rec.get("rule") or "permission"
            if rec.get("sub_rule"):
                tag += f"/{rec['sub_rule']}"
            elif rec["kind"] == "permission-error":
                tag = f"permission/{rec['permission']}"
            o.line(f"  error[{tag}] {rec['function']}[{rec['index']}]: {d.message()}")


# -- subcommands --------------------------------------------------------------------


def cmd_check(args: argparse.Namespace, o: Output) -> int:
    status = EXIT_OK
    for path in args.files:
        tp = _load(path, o)
        if tp is None:
            status = EXIT_DIAGNOSTICS
            continue
        res = _check(tp, args.model)
        _report(path, res, args.model, o)
        if res.rejected:
            status = EXIT_DIAGNOSTICS
    return status


def _gate(path: str, tp: TypedProgram, args: argparse.Namespace, o: Output) -> bool:
    """Whether execution may go ahead; prints the diagnostics and a hint when not."""
    if args.ignore_borrowck:
        return True
    res = _check(tp, args.model)
    if not res.rejected:
        return True
    _report(path, res, args.model, o)
    o.err.write(f"{path}: the borrow checker rejects this program; "
                f"pass {COUNTERFACTUAL_FLAG} to execute it anyway\n")
    return False


def _outcome_status(path: str, outcome, o: Output) -> int:
    if isinstance(outcome, Terminated):
        if o.records:
            o.emit({"kind": "outcome", "file": path, "outcome": "Terminated",
                    "value": format_value(outcome.value), "steps": outcome.steps})
        else:
            o.line(f"{path}: terminated with {format_value(outcome.value)} after {outcome.steps} steps")
        return EXIT_OK
    if isinstance(outcome, Ub):
        if o.records:
            o.emit({"kind": "outcome", "file": path, "outcome": "Ub", "ub": outcome.report.to_record()})
        else:
            o.line(f"{path}: {outcome.report}")
        return EXIT_UB
    if o.records:
        o.emit({"kind": "outcome", "file": path, "outcome": "LimitExceeded", "steps": outcome.steps})
    else:
        o.line(f"{path}: step limit exceeded after {outcome.steps} steps")
    return EXIT_LIMIT


def cmd_run(args: argparse.Namespace, o: Output) -> int:
    status = EXIT_OK
    for path in args.files:
        tp = _load(path, o)
        if tp is None or not _gate(path, tp, args, o):
            status = max(status, EXIT_DIAGNOSTICS)
            continue
        outcome = run(tp, max_steps=args.max_steps)
        if o.records and not isinstance(outcome, LimitExceeded):
            for rec in outcome.trace:
                o.emit({"kind": "step", "file": path, **rec.to_record()})
        status = max(status, _outcome_status(path, outcome, o))
    return status


_MARK = re.compile(r"^(?:(\w+)\[(\d+)\]|(\d+))$")


def parse_marks(text: str | None, entry: str) -> list[InstrId]:
    if not text:
        return []
    marks = []
    for tok in text.split(","):
        m = _MARK.match(tok.strip())
        if m is None:
            raise UsageError(f"bad mark {tok.strip()!r}: use an index like 3 or an id like main[3]")
        marks.append(InstrId(m[1], int(m[2])) if m[1] else InstrId(entry, int(m[3])))
    return marks


def _options(args: argparse.Namespace, o: Output, fmt: Format = Format.TEXT) -> RenderOptions:
    level = Level.EXPANDED if getattr(args, "expanded", False) else Level.ABSTRACTED
    style = MarkStyle(getattr(args, "style", "letter"))
    return RenderOptions(format=fmt, level=level, style=style, color=o.color and fmt is Format.TEXT)


def cmd_trace(args: argparse.Namespace, o: Output) -> int:
    status = EXIT_OK
    for path in args.files:
        tp = _load(path, o)
        if tp is None or not _gate(path, tp, args, o):
            status = max(status, EXIT_DIAGNOSTICS)
            continue
        try:
            marks = parse_marks(args.marks, tp.program.entry)
        except UsageError as exc:
            o.err.write(f"ownlab trace: error: {exc}\n")
            return EXIT_USAGE
        snaps = trace(tp, marks, max_steps=args.max_steps)
        outcome = run(tp, max_steps=args.max_steps)
        if o.records:
            for snap in snaps:
                o.emit({"kind": "snapshot", "file": path, **snap.model()})
        elif snaps:
            o.out.write(render_memory_trace(snaps, _options(args, o), tp.program).text)
        else:
            o.line(f"{path}: no snapshot was taken (no marked instruction was reached)")
        status = max(status, _outcome_status(path, outcome, o))
    return status


def cmd_perms(args: argparse.Namespace, o: Output) -> int:
    status = EXIT_OK
    for path in args.files:
        tp = _load(path, o)
        if tp is None:
            status = EXIT_DIAGNOSTICS
            continue
        fb = build_facts(tp)
        states = missing_at(fb)
        marks = expectations(fb, states)
        names = [args.function] if args.function else [f.name for f in tp.program.functions]
        for name in names:
            if not tp.program.has_function(name):
                o.err.write(f"{path}: no function named {name}\n")
                return EXIT_USAGE
        if o.records:
            for st in states:
                if st.at.function in names:
                    o.emit({"file": path, **st.to_record()})
            for name in names:
                for step in steps(states, function=name):
                    o.emit({"file": path, **step.to_record()})
            for m in marks:
                if m.instruction.function in names:
                    o.emit({"file": path, **m.to_record()})
            continue
        opts = _options(args, o)
        for name in names:
            o.out.write(render_perm_table(steps(states, function=name), opts, tp.program).text)
            o.line()
        o.out.write(render_annotated_listing(tp.program, [m for m in marks if m.instruction.function in names],
                                             opts).text)
    return status


DIAGRAMS = ("memory", "perms", "listing")


def cmd_render(args: argparse.Namespace, o: Output) -> int:
    status = EXIT_OK
    kinds = args.diagram or list(DIAGRAMS)
    formats = [Format(f) for f in (args.formats or ["text", "svg", "html"])] if args.out_dir else [Format.TEXT]
    for path in args.files:
        tp = _load(path, o)
        if tp is None:
            status = EXIT_DIAGNOSTICS
            continue
        fb = build_facts(tp)
        states = missing_at(fb)
        stem = Path(path).stem
        for fmt in formats:
            opts = _options(args, o if args.out_dir is None else replace(o, color=False), fmt)
            docs = []
            if "memory" in kinds:
                # diagrams show what a run does, so rejected programs are executed too
                snaps = trace(tp, max_steps=args.max_steps)
                if snaps:
                    docs.append(("memory", render_memory_trace(snaps, opts, tp.program)))
            if "perms" in kinds:
                docs.append(("perms", render_perm_table(steps(states), opts, tp.program)))
            if "listing" in kinds:
                docs.append(("listing", render_annotated_listing(tp.program, expectations(fb, states), opts)))
            for kind, doc in docs:
                if args.out_dir:
                    out = doc.write(args.out_dir, f"{stem}.{kind}")
                    if o.records:
                        o.emit({"kind": "diagram", "file": path, "diagram": kind, "format": fmt.value,
                                "path": str(out), "provenance": doc.provenance})
                    else:
                        o.line(f"wrote {out}")
                else:
                    o.out.write(doc.text)
                    o.line()
    return status


def cmd_fuzz(args: argparse.Namespace, o: Output) -> int:
    props = [Property(p) for p in (args.property or ["Theorem"])]
    mono = args.monomorphic or Property.SOUNDNESS in props
    cfg = FuzzConfig(seed=args.seed, max_instructions=args.max_instructions, abstract_lifetimes=not mono)
    report = campaign(cfg, props, args.count, max_steps=args.max_steps, workers=args.workers)
    if args.out_dir:
        out = Path(args.out_dir)
        (out / "report.jsonl").write_text(report.to_jsonl(), encoding="utf-8")
        for k, (seed, rep) in enumerate(report.violations):
            (out / f"counterexample-{seed}-{k}.own").write_text(rep.source(), encoding="utf-8")
    if o.records:
        o.out.write(report.to_jsonl())
    else:
        o.out.write(report.summary())
    return EXIT_OK if report.ok else EXIT_DIAGNOSTICS


# -- argument parsing ---------------------------------------------------------------


def _positive(text: str) -> int:
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if n < 0:
        raise argparse.ArgumentTypeError("expected a non-negative integer")
    return n


def _directory(text: str) -> str:
    if not Path(text).is_dir():
        raise argparse.ArgumentTypeError(f"{text} is not a directory")
    return text


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--format", choices=["human", "records"], default="human",
                        help="human-readable text or line-delimited JSON records")
    model = _Parser(add_help=False)
    model.add_argument("--model", choices=["polonius", "perms", "both"], default="both",
                       help="which borrow-checking model to consult")
    execute = _Parser(add_help=False)
    execute.add_argument(COUNTERFACTUAL_FLAG, dest="ignore_borrowck", action="store_true",
                         help="execute even if the borrow checker rejects the program")
    execute.add_argument("--max-steps", type=_positive, default=DEFAULT_MAX_STEPS)
    view = _Parser(add_help=False)
    lv = view.add_mutually_exclusive_group()
    lv.add_argument("--abstracted", dest="expanded", action="store_false", help="show tuples as single cells")
    lv.add_argument("--expanded", dest="expanded", action="store_true", help="give every tuple field its own row")
    view.set_defaults(expanded=False)
    view.add_argument("--style", choices=["letter", "circle"], default="letter", help="permission mark style")

    p = _Parser(prog="ownlab", description="Ownership-type checking laboratory.")
    p.add_argument("--version", action="version", version=f"ownlab {__version__}")
    subs = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = subs.add_parser("check", parents=[common, model], help="report borrow-checking diagnostics")
    c.add_argument("files", nargs="+")
    c.set_defaults(func=cmd_check)

    r = subs.add_parser("run", parents=[common, model, execute], help="execute a program")
    r.add_argument("files", nargs="+")
    r.set_defaults(func=cmd_run)

    t = subs.add_parser("trace", parents=[common, model, execute, view], help="show memory snapshots of a run")
    t.add_argument("files", nargs="+")
    t.add_argument("--marks", help="comma-separated instructions to snapshot, e.g. 1,3 or main[1],f[0]")
    t.set_defaults(func=cmd_trace)

    pm = subs.add_parser("perms", parents=[common, view], help="permission states, steps and expectation marks")
    pm.add_argument("files", nargs="+")
    pm.add_argument("--function", help="limit output to one function")
    pm.set_defaults(func=cmd_perms)

    rd = subs.add_parser("render", parents=[common, view], help="write diagrams as text, SVG and HTML")
    rd.add_argument("files", nargs="+")
    rd.add_argument("--out-dir", type=_directory, help="write files here instead of printing text diagrams")
    rd.add_argument("--diagram", action="append", choices=DIAGRAMS, help="diagram kind (repeatable)")
    rd.add_argument("--as", dest="formats", action="append", choices=["text", "svg", "html"],
                    help="file format with --out-dir (repeatable; all three by default)")
    rd.add_argument("--max-steps", type=_positive, default=DEFAULT_MAX_STEPS)
    rd.set_defaults(func=cmd_render)

    fz = subs.add_parser("fuzz", parents=[common], help="run a differential fuzz campaign")
    fz.add_argument("--seed", type=_positive, default=0)
    fz.add_argument("--count", type=_positive, default=1000)
    fz.add_argument("--property", action="append", choices=[x.value for x in Property],
                    help="property to check (repeatable; Theorem by default)")
    fz.add_argument("--monomorphic", action="store_true", help="generate programs without abstract lifetimes")
    fz.add_argument("--max-instructions", type=_positive, default=10)
    fz.add_argument("--max-steps", type=_positive, default=DEFAULT_MAX_STEPS)
    fz.add_argument("--workers", type=_positive, default=1)
    fz.add_argument("--out-dir", type=_directory, help="write report.jsonl and counterexample files here")
    fz.set_defaults(func=cmd_fuzz)
    return p


def main(argv: Sequence[str] | None = None, out: TextIO | None = None, err: TextIO | None = None) -> int:
    out = out if out is not None else sys.stdout
    err = err if err is not None else sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    o = Output(out, err, args.format == "records", _color_wanted(out))
    try:
        return args.func(args, o)
    except ValueError as exc:
        # bad option values that only show up once the input is known (e.g. an invalid fuzz config)
        err.write(f"ownlab {args.command}: error: {exc}\n")
        return EXIT_USAGE


def _entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    _entry()
