"""Closed-loop clients with fast (unordered) reads and ordered operations."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Optional, Sequence

from .lincheck import Operation
from .messages import Kind, OrderedRequest, ReadOnlyRequest, Reply, Request
from .protocol_core import SystemParams
from .replica import ReadQuorum


@dataclass(frozen=True)
class Op:
    kind: Kind
    key: str
    value: str = ""  # payload for updates


class ReplyCollector:
    """Counts replies per result, one vote per replica."""

    def __init__(self, client_seq: int, required: int, ordered: bool):
        self.client_seq = client_seq
        self.required = required
        self.ordered = ordered
        self.replies: dict[int, Optional[str]] = {}

    def add(self, reply: Reply) -> Optional[str]:
        """Record ``reply``; return the result once it has ``required`` matches."""
        if reply.client_seq != self.client_seq or reply.ordered != self.ordered:
            return None
        if reply.replica in self.replies:
            return None
        self.replies[reply.replica] = reply.result
        count = Counter(self.replies.values())[reply.result]
        return reply.result if count >= self.required else None

    @property
    def max_matching(self) -> int:
        counts = Counter(self.replies.values())
        return max(counts.values(), default=0)


def required_replies(params: SystemParams, mode: ReadQuorum) -> int:
    return params.q if mode is ReadQuorum.OPTIMIZED else params.weak


class Client:
    def __init__(self, cid: int, params: SystemParams, ops: Sequence[Op],
                 read_quorum: ReadQuorum = ReadQuorum.OPTIMIZED, fast_reads: bool = True,
                 retransmit: int = 400, read_timeout: int = 100, start: int = 0, think: int = 0):
        self.id = cid
        self.name = f"c{cid}"
        self.params = params
        self.ops = list(ops)
        self.required = required_replies(params, read_quorum)
        self.fast_reads = fast_reads
        self.retransmit = retransmit
        self.read_timeout = read_timeout
        self.start_time = start
        self.think = think
        self.sim = None
        self.replicas = [f"r{i}" for i in range(params.n)]

        self.seq = 0
        self.index = 0
        self.current: Optional[Request] = None
        self.collector: Optional[ReplyCollector] = None
        self.invoked_at = 0
        self.inv_ix = 0
        self.history: list[Operation] = []
        self.latencies: list[int] = []
        self.max_matching = 0  # best matching count seen for the pending request
        self.fallbacks = 0

    def attach(self, sim) -> None:
        self.sim = sim

    def start(self) -> None:
        if self.ops:
            self.sim.set_timer(self.name, self.start_time, "next")

    @property
    def done(self) -> bool:
        return self.index >= len(self.ops) and self.current is None

    @property
    def completed(self) -> int:
        return len(self.latencies)

    def _issue(self) -> None:
        op = self.ops[self.index]
        self.seq += 1
        self.current = Request(self.id, self.seq, op.kind, op.key, op.value)
        self.invoked_at = self.sim.now
        self.inv_ix = len(self.sim.trace)
        self.max_matching = 0
        kind = "read" if op.kind == Kind.READ else "update"
        self.sim.trace.emit(self.sim.now, self.name, "invoke", inst=self.seq,
                            info=f"{kind} {op.key}" + (f"={op.value}" if op.kind == Kind.UPDATE else ""))
        if op.kind == Kind.READ and self.fast_reads:
            self.collector = ReplyCollector(self.seq, self.required, ordered=False)
            self.sim.broadcast(self.name, self.replicas, ReadOnlyRequest(self.current))
            self.sim.set_timer(self.name, self.read_timeout, "read")
        else:
            self._send_ordered()

    def _send_ordered(self) -> None:
        self.collector = ReplyCollector(self.seq, self.required, ordered=True)
        self.sim.broadcast(self.name, self.replicas, OrderedRequest(self.current))
        self.sim.set_timer(self.name, self.retransmit, "retx")

    def on_timer(self, tid) -> None:
        if tid == "next":
            self._issue()
        elif self.current is None:
            return
        elif tid == "read" and not self.collector.ordered:
            self.fallbacks += 1
            self._send_ordered()  # same (client, seq), now ordered
        elif tid == "retx":
            self.sim.broadcast(self.name, self.replicas, OrderedRequest(self.current))
            self.sim.set_timer(self.name, self.retransmit, "retx")

    def on_message(self, src: str, msg) -> None:
        if not isinstance(msg, Reply) or self.current is None:
            return
        if src != f"r{msg.replica}":
            return  # reply claims another replica's identity
        result = self.collector.add(msg)
        self.max_matching = max(self.max_matching, self.collector.max_matching)
        if result is not None:
            self._complete(result)

    def _complete(self, result: str) -> None:
        req = self.current
        now = self.sim.now
        self.sim.cancel_timer(self.name, "read")
        self.sim.cancel_timer(self.name, "retx")
        self.sim.trace.emit(now, self.name, "complete", inst=req.client_seq, info=result)
        kind = "read" if req.kind == Kind.READ else "update"
        self.history.append(Operation(
            client=self.id, kind=kind, key=req.key,
            value=result if kind == "read" else req.payload,
            invoke=self.invoked_at, response=now,
            inv_ix=self.inv_ix, resp_ix=len(self.sim.trace), seq=req.client_seq,
        ))
        self.latencies.append(now - self.invoked_at)
        self.current = None
        self.collector = None
        self.index += 1
        if self.index < len(self.ops):
            self.sim.set_timer(self.name, self.think, "next")

    def pending_operation(self) -> Optional[Operation]:
        """The in-flight operation as an incomplete history record."""
        req = self.current
        if req is None:
            return None
        kind = "read" if req.kind == Kind.READ else "update"
        return Operation(self.id, kind, req.key, None if kind == "read" else req.payload,
                         self.invoked_at, None, self.inv_ix, 0, req.client_seq)
