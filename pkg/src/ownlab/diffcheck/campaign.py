"""Run properties over many generated programs and aggregate the results."""

from __future__ import annotations

import json
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable

from ownlab.diffcheck.check import (
    CounterexampleReport, Inconclusive, Property, Violation, check_oracle, check_soundness,
    check_theorem, describe_outcome, verdicts,
)
from ownlab.diffcheck.generate import FuzzConfig, generate_program
from ownlab.diffcheck.shrink import shrink
from ownlab.interp import DEFAULT_MAX_STEPS, Terminated, run
from ownlab.lang.printer import pretty_print
from ownlab.lang.typecheck import type_check

SCHEMA_VERSION = 1


@dataclass
class SeedResult:
    seed: int
    verdict: str
    outcome: str
    violations: list[CounterexampleReport] = field(default_factory=list)
    inconclusive: bool = False
    incomplete_source: str | None = None


@dataclass
class CampaignReport:
    count: int = 0
    properties: tuple[str, ...] = ()
    verdicts: Counter = field(default_factory=Counter)
    outcomes: Counter = field(default_factory=Counter)
    inconclusive: int = 0
    violations: list[tuple[int, CounterexampleReport]] = field(default_factory=list)
    incompleteness: list[tuple[int, str]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    @property
    def perms_only_rate(self) -> float:
        return self.verdicts["rejected-by-perms-only"] / self.count if self.count else 0.0

    @property
    def inconclusive_rate(self) -> float:
        return self.inconclusive / self.count if self.count else 0.0

    def to_records(self) -> list[dict]:
        recs: list[dict] = [{
            "kind": "campaign-summary",
            "count": self.count,
            "properties": list(self.properties),
            "verdicts": dict(sorted(self.verdicts.items())),
            "outcomes": dict(sorted(self.outcomes.items())),
            "inconclusive": self.inconclusive,
            "violations": len(self.violations),
            "incompleteness": len(self.incompleteness),
        }]
        for seed, rep in self.violations:
            recs.append({"kind": "counterexample", "seed": seed, **rep.to_record()})
        for seed, src in self.incompleteness:
            recs.append({"kind": "incompleteness", "seed": seed, "program": src})
        return recs

    def to_jsonl(self) -> str:
        return "".join(json.dumps({"schema": SCHEMA_VERSION, **r}, sort_keys=True) + "\n"
                       for r in self.to_records())

    def summary(self) -> str:
        lines = [f"programs: {self.count}",
                 f"properties: {', '.join(self.properties) or 'none'}"]
        for k, v in sorted(self.verdicts.items()):
            lines.append(f"  {k}: {v}")
        lines.append(f"inconclusive (step limit): {self.inconclusive}")
        lines.append(f"incompleteness examples: {len(self.incompleteness)}")
        lines.append(f"violations: {len(self.violations)}")
        for seed, rep in self.violations:
            lines.append(f"  seed {seed}: {rep.property.value}: {rep.detail}")
        return "\n".join(lines) + "\n"


def _classify(pol: bool, perm: bool) -> str:
    if pol and perm:
        return "rejected-by-both"
    if perm:
        return "rejected-by-perms-only"
    if pol:
        return "rejected-by-polonius-only"
    return "accepted-by-both"


def _shrunk(report: CounterexampleReport, prop: Property, max_steps: int) -> CounterexampleReport:
    def still(tp) -> bool:
        if prop is Property.THEOREM:
            return isinstance(check_theorem(tp), Violation)
        if prop is Property.SOUNDNESS:
            return isinstance(check_soundness(tp, max_steps), Violation)
        return isinstance(check_oracle(tp), Violation)

    small = shrink(report.program, still)
    report.program = small
    return report


def run_seed(cfg: FuzzConfig, seed: int, properties: tuple[Property, ...],
             max_steps: int = DEFAULT_MAX_STEPS, shrink_violations: bool = True) -> SeedResult:
    program = generate_program(cfg.with_seed(seed))
    tp = type_check(program)
    v = verdicts(tp)
    verdict = _classify(v.polonius_rejects, v.perms_rejects)
    out = run(tp, max_steps=max_steps)
    res = SeedResult(seed, verdict, type(out).__name__)
    if (v.polonius_rejects or v.perms_rejects) and isinstance(out, Terminated):
        res.incomplete_source = pretty_print(program)
    for prop in properties:
        if prop is Property.THEOREM:
            r = check_theorem(tp)
        elif prop is Property.SOUNDNESS:
            r = check_soundness(tp, max_steps)
        else:
            r = check_oracle(tp)
        if isinstance(r, Violation):
            rep = r.report
            rep.outcome = describe_outcome(out)
            res.violations.append(_shrunk(rep, prop, max_steps) if shrink_violations else rep)
        elif isinstance(r, Inconclusive):
            res.inconclusive = True
    return res


def _run_chunk(args: tuple) -> list[SeedResult]:
    cfg, seeds, props, max_steps = args
    return [run_seed(cfg, sd, props, max_steps) for sd in seeds]


def campaign(cfg: FuzzConfig, properties: Iterable[Property | str], count: int,
             max_steps: int = DEFAULT_MAX_STEPS, workers: int = 1, catalog_limit: int = 50) -> CampaignReport:
    """Check ``properties`` on ``count`` programs, seeds ``cfg.seed`` onward.

    Seeds are independent, so ``workers > 1`` spreads them over processes;
    the report is identical either way.
    """
    props = tuple(Property(p) for p in properties)
    if Property.SOUNDNESS in props and cfg.abstract_lifetimes:
        raise ValueError("soundness campaigns need abstract_lifetimes=False")
    report = CampaignReport(properties=tuple(p.value for p in props))
    seeds = [cfg.seed + k for k in range(count)]
    if workers > 1 and count > 1:
        size = max(1, len(seeds) // (workers * 4))
        chunks = [(cfg, seeds[k:k + size], props, max_steps) for k in range(0, len(seeds), size)]
        with ProcessPoolExecutor(workers) as pool:
            results = [r for chunk in pool.map(_run_chunk, chunks) for r in chunk]
    else:
        results = [run_seed(cfg, sd, props, max_steps) for sd in seeds]
    for r in sorted(results, key=lambda r: r.seed):
        report.count += 1
        report.verdicts[r.verdict] += 1
        report.outcomes[r.outcome] += 1
        report.inconclusive += r.inconclusive
        report.violations.extend((r.seed, v) for v in r.violations)
        if r.incomplete_source is not None and len(report.incompleteness) < catalog_limit:
            report.incompleteness.append((r.seed, r.incomplete_source))
    return report
