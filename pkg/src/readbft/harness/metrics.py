"""Run metrics, counted live and recounted from the trace."""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass, field
from statistics import mean
from typing import IO, Iterable, Optional

from ..trace import Record


@dataclass
class RunMetrics:
    end_time: int = 0
    planned: int = 0
    completed: int = 0
    latencies: dict = field(default_factory=dict)  # client node -> [sim-time]
    messages: dict = field(default_factory=dict)  # message type -> sends
    decisions: dict = field(default_factory=dict)  # replica node -> decide count
    executed: dict = field(default_factory=dict)  # replica node -> highest executed instance
    regency: int = 0  # highest regency installed by a correct replica
    correct_stops: int = 0
    isolated_lag: Optional[float] = None  # mean decide-lag of isolated replicas

    @property
    def incomplete(self) -> int:
        return self.planned - self.completed

    @property
    def req_decision(self) -> int:
        return self.messages.get("REQ-DECISION", 0)

    @property
    def fwd_decision(self) -> int:
        return self.messages.get("FWD-DECISION", 0)

    @property
    def regency_changes(self) -> int:
        return self.regency

    def mean_latency(self) -> Optional[float]:
        values = [x for lat in self.latencies.values() for x in lat]
        return mean(values) if values else None

    def counted(self) -> dict:
        """The trace-derivable part, for recount comparisons."""
        return {
            "completed": self.completed,
            "latencies": {k: list(v) for k, v in sorted(self.latencies.items())},
            "messages": dict(sorted(self.messages.items())),
            "decisions": dict(sorted(self.decisions.items())),
            "executed": dict(sorted(self.executed.items())),
            "regency": self.regency,
            "correct_stops": self.correct_stops,
        }

    def rows(self) -> list[tuple[str, str, object]]:
        out: list[tuple[str, str, object]] = [
            ("end_time", "", self.end_time), ("planned", "", self.planned),
            ("completed", "", self.completed), ("incomplete", "", self.incomplete),
            ("regency_changes", "", self.regency), ("correct_stops", "", self.correct_stops),
            ("req_decision", "", self.req_decision), ("fwd_decision", "", self.fwd_decision),
        ]
        if self.isolated_lag is not None:
            out.append(("isolated_lag", "", round(self.isolated_lag, 6)))
        lat = self.mean_latency()
        if lat is not None:
            out.append(("mean_latency", "", round(lat, 6)))
        out += [("messages", t, c) for t, c in sorted(self.messages.items())]
        out += [("decisions", n, c) for n, c in sorted(self.decisions.items())]
        out += [("executed", n, c) for n, c in sorted(self.executed.items())]
        for node, lats in sorted(self.latencies.items()):
            out += [("latency", f"{node}#{i + 1}", v) for i, v in enumerate(lats)]
        return out

    def write_csv(self, fh: IO[str]) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("metric", "key", "value"))
        w.writerows(self.rows())


def decide_lag(records: Iterable[Record], isolated: set[str], correct: set[str]) -> Optional[float]:
    """Mean over (isolated replica, instance) of its decide time minus the
    earliest decide time of the same instance at another correct replica."""
    first: dict[int, int] = {}
    mine: dict[tuple[str, int], int] = {}
    for r in records:
        if r.kind != "decide" or r.node not in correct:
            continue
        if r.node in isolated:
            mine.setdefault((r.node, r.inst), r.t)
        elif r.inst not in first:
            first[r.inst] = r.t
    lags = [t - first[c] for (_, c), t in mine.items() if c in first]
    return mean(lags) if lags else None


def recount(records: Iterable[Record], correct: set[str], isolated: set[str] = frozenset(),
            planned: int = 0) -> RunMetrics:
    """Metrics computed from the trace alone."""
    records = list(records)
    m = RunMetrics(planned=planned)
    messages: Counter = Counter()
    decisions: Counter = Counter()
    invoked: dict[str, int] = {}
    for r in records:
        m.end_time = max(m.end_time, r.t)
        if r.kind == "send":
            messages[r.type] += 1
        elif r.kind == "decide":
            decisions[r.node] += 1
        elif r.kind in ("execute", "install"):
            m.executed[r.node] = max(m.executed.get(r.node, 0), r.inst)
        elif r.kind == "regency" and r.node in correct:
            m.regency = max(m.regency, r.view)
        elif r.kind == "stop" and r.node in correct:
            m.correct_stops += 1
        elif r.kind == "invoke":
            invoked[r.node] = r.t
        elif r.kind == "complete":
            m.latencies.setdefault(r.node, []).append(r.t - invoked[r.node])
            m.completed += 1
    m.messages = dict(messages)
    m.decisions = dict(decisions)
    m.isolated_lag = decide_lag(records, set(isolated), correct) if isolated else None
    return m
