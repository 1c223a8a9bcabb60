"""Post-run checks: agreement, integrity, liveness, linearizability and more.

Every check works from the persisted artifacts (trace, history, metrics), so
a run can be re-checked offline and a tampered trace is caught.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from ..lincheck import Operation, SearchBudgetExceeded, check_linearizable
from ..trace import Record
from .metrics import RunMetrics, recount


@dataclass
class CheckResult:
    name: str
    ok: bool
    expected: bool = True
    detail: str = ""

    @property
    def passed(self) -> bool:
        return self.ok == self.expected

    def line(self) -> str:
        status = "PASS" if self.ok else "FAIL"
        note = "" if self.expected else " (expected fail)"
        verdict = "" if self.passed else "  <-- unexpected"
        return f"{self.name:16s} {status}{note}{verdict}" + (f"  {self.detail}" if self.detail else "")


@dataclass
class CheckReport:
    results: list[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def __getitem__(self, name: str) -> CheckResult:
        for r in self.results:
            if r.name == name:
                return r
        raise KeyError(name)

    def format(self) -> str:
        return "\n".join(r.line() for r in self.results)


def check_agreement(records: Iterable[Record], correct: set[str]) -> CheckResult:
    seen: dict[int, dict[str, str]] = {}
    for r in records:
        if r.kind == "decide" and r.node in correct:
            seen.setdefault(r.inst, {})[r.node] = r.digest
    bad = {c: d for c, d in seen.items() if len(set(d.values())) > 1}
    if bad:
        c = min(bad)
        return CheckResult("agreement", False, detail=f"instance {c} decided differently: {bad[c]}")
    return CheckResult("agreement", True, detail=f"{len(seen)} instances")


def check_integrity(records: Iterable[Record], correct: set[str]) -> CheckResult:
    decided: set[tuple[str, int]] = set()
    last: dict[str, int] = {}
    for r in records:
        if r.node not in correct:
            continue
        if r.kind == "decide":
            if (r.node, r.inst) in decided:
                return CheckResult("integrity", False, detail=f"{r.node} decided {r.inst} twice")
            decided.add((r.node, r.inst))
        elif r.kind == "execute":
            if r.inst != last.get(r.node, 0) + 1:
                return CheckResult("integrity", False,
                                   detail=f"{r.node} executed {r.inst} after {last.get(r.node, 0)}")
            last[r.node] = r.inst
        elif r.kind == "install":
            if r.inst <= last.get(r.node, 0):
                return CheckResult("integrity", False, detail=f"{r.node} installed an old checkpoint")
            last[r.node] = r.inst
    return CheckResult("integrity", True)


def check_convergence(records: Iterable[Record], correct: set[str]) -> CheckResult:
    top: dict[str, int] = {n: 0 for n in correct}
    for r in records:
        if r.kind in ("execute", "install") and r.node in correct:
            top[r.node] = max(top[r.node], r.inst)
    ok = len(set(top.values())) <= 1
    return CheckResult("convergence", ok, detail=" ".join(f"{n}={c}" for n, c in sorted(top.items())))


def check_liveness(metrics: RunMetrics, bound: Optional[int] = None) -> CheckResult:
    if metrics.incomplete:
        return CheckResult("liveness", False,
                           detail=f"{metrics.incomplete} of {metrics.planned} operations incomplete")
    worst = max((x for lat in metrics.latencies.values() for x in lat), default=0)
    if bound is not None and worst > bound:
        return CheckResult("liveness", False, detail=f"latency {worst} exceeds bound {bound}")
    return CheckResult("liveness", True, detail=f"{metrics.completed} operations, max latency {worst}")


def check_linearizability(history: Sequence[Operation], initial: str = "0") -> CheckResult:
    try:
        violation = check_linearizable(history, initial)
    except SearchBudgetExceeded as e:
        return CheckResult("linearizability", False, detail=f"search budget exceeded: {e}")
    if violation is not None:
        return CheckResult("linearizability", False, detail=violation.format())
    return CheckResult("linearizability", True, detail=f"{len(history)} operations")


def check_metrics(metrics: RunMetrics, records: Sequence[Record], correct: set[str]) -> CheckResult:
    again = recount(records, correct, planned=metrics.planned).counted()
    mine = metrics.counted()
    diff = sorted(k for k in mine if mine[k] != again[k])
    return CheckResult("metrics", not diff, detail=f"mismatch in {diff}" if diff else "")


def check_run(metrics: RunMetrics, history: Sequence[Operation], trace: Iterable[Record],
              checks: Sequence[str], correct: set[str], expect: Optional[dict] = None,
              liveness_bound: Optional[int] = None) -> CheckReport:
    records = list(trace)
    expect = expect or {}
    report = CheckReport()
    for name in checks:
        if name == "agreement":
            res = check_agreement(records, correct)
        elif name == "integrity":
            res = check_integrity(records, correct)
        elif name == "convergence":
            res = check_convergence(records, correct)
        elif name == "liveness":
            res = check_liveness(metrics, liveness_bound)
        elif name == "linearizability":
            res = check_linearizability(history)
        elif name == "metrics":
            res = check_metrics(metrics, records, correct)
        else:
            raise ValueError(f"unknown check {name!r}")
        res.expected = expect.get(name, True)
        report.results.append(res)
    return report


def check_result(result) -> CheckReport:
    """Run a finished scenario's configured checks."""
    sc = result.scenario
    return check_run(result.metrics, result.history, result.trace, sc.checks, result.correct,
                     sc.expect, sc.liveness_bound)
