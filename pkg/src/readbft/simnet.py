"""Deterministic discrete-event network with partial synchrony.

Time is an integer.  Events are ordered by (time, sequence number) where the
sequence number is assigned when the event is scheduled, so ties resolve in
scheduling order and every run is a pure function of (config, seed).

Before GST the scheduler is adversarial: delays are drawn from
``[pre_gst_min, pre_gst_max]`` and, under the ``drop`` policy, individual
transmission attempts are lost and retried by the link layer every
``retransmit_interval`` (fair links).  From GST on, nothing is lost and every
delay is at most ``delta``.

Outage windows model a replica that is offline: traffic to or from it inside
the window is lost for good and its timers are postponed to the window's end.
"""

from __future__ import annotations

import heapq
import random
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Optional

from .messages import trace_fields, wire_size
from .trace import Trace


class HorizonExhausted(Exception):
    """The run condition was not met before the horizon (or quiescence)."""

    def __init__(self, now: int, horizon: int):
        super().__init__(f"condition unmet at t={now} (horizon {horizon})")
        self.now = now
        self.horizon = horizon


@dataclass(frozen=True)
class Outage:
    node: str
    start: int
    end: int


@dataclass
class NetConfig:
    gst: int = 0
    delay: int = 10
    jitter: int = 0
    delta: Optional[int] = None
    pre_gst: str = "delay"  # "delay" | "drop"
    pre_gst_min: int = 1
    pre_gst_max: int = 100
    drop_prob: float = 0.0
    retransmit_interval: int = 50
    regions: dict[str, str] = field(default_factory=dict)  # node -> region
    matrix: dict[str, dict[str, int]] = field(default_factory=dict)  # region -> region -> delay
    links: dict[tuple[str, str], int] = field(default_factory=dict)  # (src, dst) -> delay
    outages: list[Outage] = field(default_factory=list)
    seed: int = 0

    def base_delay(self, src: str, dst: str) -> int:
        d = self.links.get((src, dst))
        if d is not None:
            return d
        if self.matrix:
            ra, rb = self.regions.get(src), self.regions.get(dst)
            if ra is not None and rb is not None:
                return self.matrix[ra][rb]
        return self.delay

    def max_base(self) -> int:
        values = [self.delay, *self.links.values()]
        for row in self.matrix.values():
            values.extend(row.values())
        return max(values)

    @property
    def bound(self) -> int:
        return self.delta if self.delta is not None else self.max_base() + self.jitter

    def validate(self) -> None:
        if self.pre_gst not in ("delay", "drop"):
            raise ValueError(f"pre_gst must be 'delay' or 'drop', got {self.pre_gst!r}")
        if self.delay < 1 or self.jitter < 0:
            raise ValueError("delay must be >= 1 and jitter >= 0")
        if not 1 <= self.pre_gst_min <= self.pre_gst_max:
            raise ValueError("need 1 <= pre_gst_min <= pre_gst_max")
        if not 0.0 <= self.drop_prob < 1.0:
            raise ValueError("drop_prob must be in [0, 1)")
        if self.retransmit_interval < 1:
            raise ValueError("retransmit_interval must be >= 1")
        if self.delta is not None and self.delta < self.max_base():
            raise ValueError(f"delta={self.delta} is below the largest base delay {self.max_base()}")
        for row in self.matrix.values():
            if any(v < 1 for v in row.values()):
                raise ValueError("matrix delays must be >= 1")
        for o in self.outages:
            if o.end < o.start:
                raise ValueError(f"outage for {o.node} ends before it starts")


_DELIVER, _TIMER, _RETRY, _CALL = 0, 1, 2, 3


class Simulator:
    """Single-threaded event engine that owns every node reactor."""

    def __init__(self, config: NetConfig, adversary=None, trace: Optional[Trace] = None):
        config.validate()
        self.config = config
        self.adversary = adversary
        self.trace = trace if trace is not None else Trace()
        self.now = 0
        self.nodes: dict = {}
        self._queue: list = []
        self._seq = 0
        self._timers: dict[tuple[str, object], int] = {}
        self._rng = random.Random(f"net/{config.seed}")
        self._outages: dict[str, list[Outage]] = {}
        for o in config.outages:
            self._outages.setdefault(o.node, []).append(o)
        self.delivered = 0
        self.sent = Counter()  # live per-type send counts, after adversary filtering

    # --- setup ---------------------------------------------------------

    def add_node(self, node) -> None:
        if node.name in self.nodes:
            raise ValueError(f"duplicate node {node.name}")
        self.nodes[node.name] = node
        node.attach(self)

    def start(self) -> None:
        for node in list(self.nodes.values()):
            node.start()

    def _push(self, time: int, kind: int, a, b=None, c=None) -> int:
        self._seq += 1
        heapq.heappush(self._queue, (time, self._seq, kind, a, b, c))
        return self._seq

    def call_at(self, time: int, fn: Callable[[], None]) -> None:
        self._push(max(time, self.now), _CALL, fn)

    # --- outages -------------------------------------------------------

    def down_until(self, node: str, t: int) -> Optional[int]:
        for o in self._outages.get(node, ()):
            if o.start <= t < o.end:
                return o.end
        return None

    # --- sending -------------------------------------------------------

    def send(self, src: str, dst: str, msg) -> None:
        if self.down_until(src, self.now) is not None:
            return
        if self.adversary is not None and self.adversary.controls(src):
            verdict = self.adversary.filter(src, dst, msg, self.now)
            if verdict == "DROP":
                self._emit_msg("drop", src, dst, msg, info="adversary")
                return
            if verdict != "PASS":
                msg = verdict.message
        self.sent[msg.TYPE] += 1
        self._emit_msg("send", src, dst, msg)
        self._transmit(src, dst, msg)

    def broadcast(self, src: str, dsts, msg) -> None:
        for dst in dsts:
            if dst != src:
                self.send(src, dst, msg)

    def _transmit(self, src: str, dst: str, msg) -> None:
        cfg = self.config
        now = self.now
        if now >= cfg.gst:
            delay = cfg.base_delay(src, dst)
            if cfg.jitter:
                delay += self._rng.randint(0, cfg.jitter)
            delay = min(delay, cfg.bound)
        else:
            if cfg.pre_gst == "drop" and self._rng.random() < cfg.drop_prob:
                self._push(now + cfg.retransmit_interval, _RETRY, src, dst, msg)
                return
            delay = max(cfg.base_delay(src, dst), self._rng.randint(cfg.pre_gst_min, cfg.pre_gst_max))
        self._push(now + delay, _DELIVER, dst, src, msg)

    def _emit_msg(self, kind: str, node: str, peer: str, msg, info=None) -> None:
        inst, view, digest = trace_fields(msg)
        self.trace.emit(self.now, node, kind, msg.TYPE, inst, view, digest, peer, wire_size(msg), info)

    # --- timers --------------------------------------------------------

    def set_timer(self, node: str, delay: int, tid) -> None:
        if delay < 0:
            raise ValueError("timer delay must be non-negative")
        self._timers[(node, tid)] = self._push(self.now + delay, _TIMER, node, tid)

    def cancel_timer(self, node: str, tid) -> None:
        self._timers.pop((node, tid), None)

    def timer_pending(self, node: str, tid) -> bool:
        return (node, tid) in self._timers

    # --- running -------------------------------------------------------

    def step(self) -> bool:
        """Process one event; False when the queue is empty."""
        while self._queue:
            time, seq, kind, a, b, c = heapq.heappop(self._queue)
            if kind == _TIMER and self._timers.get((a, b)) != seq:
                continue  # cancelled or superseded
            self.now = time
            if kind == _DELIVER:
                dst, src, msg = a, b, c
                if self.down_until(dst, time) is not None:
                    self._emit_msg("drop", dst, src, msg, info="outage")
                    return True
                self.delivered += 1
                self._emit_msg("recv", dst, src, msg)
                self.nodes[dst].on_message(src, msg)
            elif kind == _TIMER:
                resume = self.down_until(a, time)
                if resume is not None:
                    self._timers[(a, b)] = self._push(resume, _TIMER, a, b)
                    return True
                del self._timers[(a, b)]
                self.nodes[a].on_timer(b)
            elif kind == _RETRY:
                self._transmit(a, b, c)
            else:
                a()
            return True
        return False

    def run(self, horizon: int, until: Optional[Callable[[], bool]] = None) -> int:
        """Run to the horizon, to quiescence, or until ``until()`` holds."""
        while self._queue and self._queue[0][0] <= horizon:
            self.step()
            if until is not None and until():
                return self.now
        return self.now

    def run_until(self, condition: Callable[[], bool], horizon: int) -> int:
        if condition():
            return self.now
        self.run(horizon, condition)
        if not condition():
            raise HorizonExhausted(self.now, horizon)
        return self.now

    @property
    def pending_events(self) -> int:
        return len(self._queue)
