"""Linearizability checking for key-value register histories.

Each key is an independent read/write register, so a history is checked one
key at a time (there are no multi-key operations).  For every key we search
for a linearization depth-first, in the style of Wing & Gong with Lowe's
memoization: a search state is the set of operations already linearized plus
the register value, and states already seen are not explored again.

Incomplete operations (no response before the horizon) are handled in one of
two ways.  Under ``possibly-effective`` (the default) an incomplete update
may or may not have taken effect and may be linearized at any point after its
invocation; incomplete reads constrain nothing.  Under ``drop`` every
incomplete operation is removed before checking.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Iterable, Optional, Sequence

INITIAL = "0"
INF = float("inf")


class SearchBudgetExceeded(Exception):
    """The search visited more states than allowed."""


@dataclass(frozen=True)
class Operation:
    client: int
    kind: str  # "read" | "update"
    key: str
    value: Optional[str]  # value written, or value returned by a read
    invoke: int
    response: Optional[int] = None  # None: never completed
    inv_ix: int = 0  # tie-breakers among events at the same sim-time
    resp_ix: int = 0
    seq: int = 0

    @property
    def complete(self) -> bool:
        return self.response is not None

    def inv_stamp(self) -> tuple:
        return (self.invoke, self.inv_ix)

    def resp_stamp(self) -> tuple:
        return (INF, 0) if self.response is None else (self.response, self.resp_ix)

    def to_json(self) -> str:
        return json.dumps(asdict(self), separators=(",", ":"), sort_keys=True)


def precedes(a: Operation, b: Operation) -> bool:
    """Real-time order: ``a`` responded before ``b`` was invoked."""
    return a.resp_stamp() < b.inv_stamp()


@dataclass
class Violation:
    key: str
    ops: list[Operation]  # minimal violating prefix restricted to ``key``

    def format(self) -> str:
        lines = [f"linearizability violation on key {self.key!r} ({len(self.ops)} ops):"]
        for op in sorted(self.ops, key=Operation.inv_stamp):
            resp = "-" if op.response is None else str(op.response)
            lines.append(f"  t={op.invoke}..{resp} c{op.client} {op.kind} {op.key}={op.value}")
        return "\n".join(lines)

    def __str__(self) -> str:
        return self.format()


def _prepare(ops: Sequence[Operation], incomplete: str) -> list[Operation]:
    if incomplete not in ("possibly-effective", "drop"):
        raise ValueError(f"unknown incomplete-op mode {incomplete!r}")
    out = []
    for op in ops:
        if op.response is None and (incomplete == "drop" or op.kind == "read"):
            continue
        if op.response is not None and op.resp_stamp() < op.inv_stamp():
            raise ValueError(f"operation responds before it is invoked: {op}")
        out.append(op)
    return out


def linearizable_key(ops: Sequence[Operation], initial: str = INITIAL,
                     incomplete: str = "possibly-effective", budget: int = 1_000_000) -> bool:
    """Search for a linearization of one key's operations."""
    ops = _prepare(ops, incomplete)
    n = len(ops)
    if n == 0:
        return True
    required = 0
    for i, op in enumerate(ops):
        if op.complete:
            required |= 1 << i
    # before[i]: mask of operations that must be linearized before op i
    before = [0] * n
    for i, a in enumerate(ops):
        for j, b in enumerate(ops):
            if i != j and precedes(b, a):
                before[i] |= 1 << j
    seen: set[tuple[int, str]] = set()
    explored = 0
    stack = [(0, initial)]
    while stack:
        done, value = stack.pop()
        if done & required == required:
            return True
        if (done, value) in seen:
            continue
        seen.add((done, value))
        explored += 1
        if explored > budget:
            raise SearchBudgetExceeded(f"more than {budget} states for {n} operations")
        for i, op in enumerate(ops):
            bit = 1 << i
            if done & bit or before[i] & ~done:
                continue
            if op.kind == "read":
                if op.value == value:
                    stack.append((done | bit, value))
            else:
                stack.append((done | bit, op.value))
    return False


def _prefix(ops: Sequence[Operation], events: list[tuple], k: int) -> list[Operation]:
    """Operations visible after the first ``k`` events, responses cut off at k."""
    if k == 0:
        return []
    cutoff = events[k - 1]
    out = []
    for op in ops:
        if op.inv_stamp() > cutoff:
            continue
        if op.response is not None and op.resp_stamp() > cutoff:
            op = Operation(op.client, op.kind, op.key, None if op.kind == "read" else op.value,
                           op.invoke, None, op.inv_ix, 0, op.seq)
        out.append(op)
    return out


def check_linearizable(history: Iterable[Operation], initial: str = INITIAL,
                       incomplete: str = "possibly-effective",
                       budget: int = 1_000_000) -> Optional[Violation]:
    """None when linearizable, else a Violation with a minimal event prefix."""
    by_key: dict[str, list[Operation]] = {}
    for op in history:
        by_key.setdefault(op.key, []).append(op)
    for key in sorted(by_key):
        ops = by_key[key]
        if linearizable_key(ops, initial, incomplete, budget):
            continue
        events = sorted({op.inv_stamp() for op in ops}
                        | {op.resp_stamp() for op in ops if op.response is not None})
        lo, hi = 0, len(events)  # prefix lo is fine, prefix hi violates
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if linearizable_key(_prefix(ops, events, mid), initial, incomplete, budget):
                lo = mid
            else:
                hi = mid
        return Violation(key, _prefix(ops, events, hi))
    return None
