"""Replica state machine: ordering, decision, execution and recovery.

The normal case is BFT-SMaRt's PROPOSE / PREPARE / ACCEPT pattern.  Two
optional extensions make every correct replica learn every decision:

* ``Mode.BROADCAST``: on deciding, a replica sends FWD-DECISION(c, v, proof)
  to every other replica before executing.
* ``Mode.FORWARD``: a replica that sees f+1 ACCEPTs for a digest it has no
  matching proposal for asks 2f peers for the decision (REQ-DECISION); a
  replica that decides from a forwarded decision echoes it to everyone.

Leader change is a simplified regency rotation: f+1 STOPs make a replica
join, a quorum of STOPs installs the next regency, replicas report their log
(STOPDATA, signed) to the new leader, and the leader broadcasts a SYNC whose
plan every replica recomputes from the enclosed reports before adopting it.

Each replica is a single-threaded reactor driven by the simulator.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

from .checkpoint import Checkpoint, NoMatchingCheckpoint, select_checkpoint, snapshot
from .messages import (
    Accept, CheckpointMsg, FwdDecision, Kind, OrderedRequest, OutdatedReq, Prepare, Propose,
    ReadOnlyRequest, Reply, Report, ReqDecision, Request, StateReply, StateRequest, Stop,
    StopData, Sync, SyncPlan,
)
from .protocol_core import (
    Authenticator, DecisionProof, Digest, Phase, PreparedCert, SystemParams, attest,
    batch_digest, digest_of, make_proof, verify_prepared_cert, verify_proof,
)



class Mode(str, Enum):
    BASELINE = "baseline"
    BROADCAST = "broadcast"
    FORWARD = "forward"


class ReadQuorum(str, Enum):
    OPTIMIZED = "optimized"  # q matching replies for every operation
    NAIVE = "naive"  # f+1 matching replies


@dataclass
class ReplicaConfig:
    mode: Mode = Mode.BASELINE
    read_quorum_mode: ReadQuorum = ReadQuorum.OPTIMIZED
    checkpoint_period: int = 100
    propose_timeout: int = 500
    batch_limit: int = 32
    checkpoint_reply_store: bool = True
    state_transfer_delay: int = 200
    window: int = 1000
    max_backoff: int = 5
    initial_value: str = "0"

    def validate(self) -> None:
        if self.checkpoint_period < 1:
            raise ValueError("checkpoint_period must be >= 1")
        if self.propose_timeout <= 0:
            raise ValueError("propose_timeout must be > 0")
        if self.batch_limit < 1:
            raise ValueError("batch_limit must be >= 1")
        if self.window < self.checkpoint_period:
            raise ValueError("window must be at least one checkpoint period")


@dataclass
class LogEntry:
    instance: int
    values: dict = field(default_factory=dict)  # digest -> batch, from any source
    proposals: dict = field(default_factory=dict)  # view -> digest proposed by that view's leader
    prepares: dict = field(default_factory=dict)  # (view, digest) -> {signer: Attestation}
    accepts: dict = field(default_factory=dict)
    sent: set = field(default_factory=set)  # (phase, view) votes already cast
    prepared: Optional[PreparedCert] = None  # highest-view prepared certificate
    decided: bool = False
    value: Optional[tuple] = None
    proof: Optional[DecisionProof] = None
    executed: bool = False


def ring_targets(me: int, n: int, count: int) -> list[int]:
    """``count`` replicas following ``me`` in ring order, never ``me`` itself."""
    return [(me + k) % n for k in range(1, n)][:count]


def compute_sync_plan(params: SystemParams, auth: Authenticator, reports: Sequence[Report]) -> SyncPlan:
    """Leader-change plan from a quorum of reports.

    Verified decisions are kept as they are.  Above the highest executed
    instance, undecided instances are re-proposed with the batch of their
    highest-view prepared certificate, or with an empty batch when no report
    has one.
    """
    decided: dict[int, tuple] = {}
    certs: dict[int, PreparedCert] = {}
    for rep in sorted(reports, key=lambda r: r.sender):
        for c, batch, proof in rep.decided:
            if c not in decided and verify_proof(params, c, batch, proof, auth):
                decided[c] = (batch, proof)
        for cert in rep.prepared:
            cur = certs.get(cert.instance)
            if (cur is None or cert.view > cur.view) and verify_prepared_cert(params, cert, auth):
                certs[cert.instance] = cert
    low = max(rep.low for rep in reports)
    high = max([low, *decided, *certs])
    decisions = tuple((c, decided[c][0], decided[c][1]) for c in sorted(decided))
    reproposals = tuple(
        (c, certs[c].batch if c in certs else ())
        for c in range(low + 1, high + 1)
        if c not in decided
    )
    return SyncPlan(decisions, reproposals, low, high)


class Replica:
    def __init__(self, rid: int, params: SystemParams, config: ReplicaConfig, auth: Authenticator):
        config.validate()
        self.id = rid
        self.name = f"r{rid}"
        self.params = params
        self.config = config
        self.auth = auth
        self.sim = None
        self.peers = [f"r{i}" for i in range(params.n)]

        self.regency = 0
        self.synced = True
        self.app: dict[str, str] = {}
        self.last_seq: dict[int, int] = {}
        self.reply_store: dict[int, tuple[int, str]] = {}
        self.last_executed = 0
        self.low = 0  # garbage-collection horizon
        self.log: dict[int, LogEntry] = {}
        self.checkpoints: list[Checkpoint] = []  # own checkpoints at or above the stable one
        self.stable: Optional[Checkpoint] = None  # latest checkpoint vouched for by a quorum

        self.pending: dict[tuple[int, int], Request] = {}
        self.req_stage: dict[tuple[int, int], int] = {}
        self.proposed: dict[tuple[int, int], int] = {}
        self.next_instance = 1
        self.backoff = 0

        self.probed: set[int] = set()
        self.forward_waiting: dict[int, set[int]] = {}
        self.forwarded: dict[int, set[int]] = {}

        self.stops: dict[int, set[int]] = {}
        self.stop_sent: set[int] = set()
        self.stopdata: dict[int, dict[int, StopData]] = {}
        self.last_sync: Optional[Sync] = None
        self.future: list = []

        self.ckpt_votes: dict[tuple[int, Digest], set[int]] = {}
        self.lag_target = 0
        self.st_active = False
        self.st_replies: dict[int, StateReply] = {}
        self.decide_count = 0
        self.stop_count = 0

        self._handlers = {
            "REQUEST": self.on_request,
            "READ": self.on_readonly_request,
            "PROPOSE": self.on_propose,
            "PREPARE": self.on_prepare,
            "ACCEPT": self.on_accept,
            "FWD-DECISION": self.on_fwd_decision,
            "REQ-DECISION": self.on_req_decision,
            "OUTDATED-REQ": self.on_outdated,
            "STOP": self.on_stop,
            "STOPDATA": self.on_stopdata,
            "SYNC": self.on_sync,
            "CHECKPOINT": self.on_checkpoint,
            "STATE-REQ": self.on_state_request,
            "STATE-REPLY": self.on_state_reply,
        }

    # --- plumbing ------------------------------------------------------

    def attach(self, sim) -> None:
        self.sim = sim

    def start(self) -> None:
        pass

    @property
    def now(self) -> int:
        return self.sim.now

    def leader_of(self, regency: int) -> int:
        return regency % self.params.n

    @property
    def is_leader(self) -> bool:
        return self.leader_of(self.regency) == self.id

    def _emit(self, kind, **kw) -> None:
        self.sim.trace.emit(self.now, self.name, kind, **kw)

    def _send(self, dst: str, msg) -> None:
        self.sim.send(self.name, dst, msg)

    def _broadcast(self, msg) -> None:
        self.sim.broadcast(self.name, self.peers, msg)

    @staticmethod
    def _sender(src: str) -> Optional[int]:
        return int(src[1:]) if src.startswith("r") else None

    def decided(self, c: int) -> bool:
        if c <= self.last_executed:
            return True
        e = self.log.get(c)
        return e is not None and e.decided

    def _entry(self, c: int) -> Optional[LogEntry]:
        if c <= self.last_executed or c > self.last_executed + self.config.window:
            return None
        e = self.log.get(c)
        if e is None:
            e = self.log[c] = LogEntry(c)
        return e

    def _defer(self, src: str, msg) -> None:
        if len(self.future) < 10_000:
            self.future.append((src, msg))

    def _replay(self) -> None:
        waiting, self.future = self.future, []
        for src, msg in waiting:
            self.on_message(src, msg)

    # --- dispatch ------------------------------------------------------

    def on_message(self, src: str, msg) -> None:
        handler = self._handlers.get(msg.TYPE)
        if handler is not None:
            handler(src, msg)

    def on_timer(self, tid) -> None:
        if isinstance(tid, tuple) and tid[0] == "req":
            self.on_request_timeout((tid[1], tid[2]))
        elif tid == "lag":
            if self.last_executed < self.lag_target:
                self.start_state_transfer()
        elif tid == "st":
            if self.st_active:
                self._broadcast(StateRequest(self.last_executed))
                self.sim.set_timer(self.name, self.config.propose_timeout, "st")

    # --- client requests -----------------------------------------------

    def on_request(self, src: str, msg: OrderedRequest) -> None:
        req = msg.request
        if req.client_id < 0:
            return
        rid = req.rid
        if req.client_seq <= self.last_seq.get(req.client_id, 0):
            stored = self.reply_store.get(req.client_id)
            if stored is not None and stored[0] == req.client_seq:
                self._reply(req.client_id, req.client_seq, stored[1], True, self.last_executed)
            return
        if rid not in self.pending:
            self.pending[rid] = req
            self.req_stage[rid] = 0
            self._arm_request_timer(rid)
        self._maybe_propose()

    def _request_timeout(self) -> int:
        return self.config.propose_timeout * (2 ** min(self.backoff, self.config.max_backoff))

    def _arm_request_timer(self, rid) -> None:
        self.sim.set_timer(self.name, self._request_timeout(), ("req", rid[0], rid[1]))

    def on_request_timeout(self, rid) -> None:
        req = self.pending.get(rid)
        if req is None:
            return
        if self.req_stage.get(rid, 0) == 0:
            self.req_stage[rid] = 1
            if not self.is_leader:
                self._send(self.peers[self.leader_of(self.regency)], OrderedRequest(req))
            self._arm_request_timer(rid)
        else:
            self.req_stage[rid] = 2
            self.send_stop(self.regency + 1)

    def on_readonly_request(self, src: str, msg: ReadOnlyRequest) -> None:
        req = msg.request
        value = self.app.get(req.key, self.config.initial_value)
        self._reply(req.client_id, req.client_seq, value, False, self.last_executed)

    def _reply(self, client: int, seq: int, result, ordered: bool, instance: int) -> None:
        if client >= 0:
            self._send(f"c{client}", Reply(seq, self.id, result, ordered, instance))

    # --- ordering ------------------------------------------------------

    def _maybe_propose(self) -> None:
        if not self.is_leader or not self.synced:
            return
        if self.last_executed < self.next_instance - 1:
            return  # one consensus at a time
        batch = tuple(
            req for rid, req in self.pending.items() if rid not in self.proposed
        )[: self.config.batch_limit]
        if not batch:
            return
        c = self.next_instance
        self.next_instance += 1
        for req in batch:
            self.proposed[req.rid] = c
        msg = Propose(self.regency, c, batch, batch_digest(c, batch))
        self._broadcast(msg)
        self._accept_proposal(msg)

    def on_propose(self, src: str, msg: Propose) -> None:
        if src != self.peers[self.leader_of(msg.view)]:
            return
        if msg.view > self.regency or (msg.view == self.regency and not self.synced):
            self._defer(src, msg)
            return
        if msg.view < self.regency:
            return
        self._accept_proposal(msg)

    def _accept_proposal(self, msg: Propose) -> None:
        c = msg.instance
        if batch_digest(c, msg.batch) != msg.digest:
            return
        e = self._entry(c)
        if e is None or e.decided:
            return
        known = e.proposals.get(msg.view)
        if known is not None:
            if known != msg.digest:
                self._emit("conflict", inst=c, view=msg.view, digest=msg.digest)
            return
        e.proposals[msg.view] = msg.digest
        e.values[msg.digest] = msg.batch
        self._vote(e, Phase.PREPARE, msg.view, msg.digest)
        self._check_prepared(e, msg.view, msg.digest)
        self._check_decide(e, msg.view, msg.digest)

    def _vote(self, e: LogEntry, phase: Phase, view: int, digest: Digest) -> None:
        if (phase, view) in e.sent:
            return
        e.sent.add((phase, view))
        att = attest(self.auth, self.id, phase, e.instance, view, digest)
        votes = e.prepares if phase == Phase.PREPARE else e.accepts
        votes.setdefault((view, digest), {})[self.id] = att
        self._broadcast(Prepare(att) if phase == Phase.PREPARE else Accept(att))

    def _take_vote(self, src: str, att, phase: Phase) -> Optional[LogEntry]:
        if not 0 <= att.signer < self.params.n or src != self.peers[att.signer]:
            return None
        if att.phase != phase or not att.verify(self.auth):
            return None
        e = self._entry(att.instance)
        if e is None:
            return None
        votes = (e.prepares if phase == Phase.PREPARE else e.accepts).setdefault((att.view, att.digest), {})
        if att.signer in votes:
            return None
        votes[att.signer] = att
        return e

    def on_prepare(self, src: str, msg: Prepare) -> None:
        view = msg.att.view
        if view > self.regency:
            self._defer(src, msg)
            return
        if view < self.regency:
            return
        e = self._take_vote(src, msg.att, Phase.PREPARE)
        if e is not None:
            self._check_prepared(e, view, msg.att.digest)

    def on_accept(self, src: str, msg: Accept) -> None:
        view = msg.att.view
        if view > self.regency:
            self._defer(src, msg)
            return
        if view < self.regency:
            return
        e = self._take_vote(src, msg.att, Phase.ACCEPT)
        if e is None:
            return
        self._check_decide(e, view, msg.att.digest)
        self.maybe_request_decision(e, view, msg.att.digest)

    def _check_prepared(self, e: LogEntry, view: int, digest: Digest) -> None:
        if e.decided or e.proposals.get(view) != digest:
            return
        votes = e.prepares.get((view, digest), {})
        if len(votes) < self.params.q or (Phase.ACCEPT, view) in e.sent:
            return
        cert = PreparedCert(e.instance, view, e.values[digest],
                            tuple(votes[s] for s in sorted(votes)))
        if e.prepared is None or e.prepared.view <= view:
            e.prepared = cert
        self._vote(e, Phase.ACCEPT, view, digest)
        self._check_decide(e, view, digest)

    def _check_decide(self, e: LogEntry, view: int, digest: Digest) -> None:
        if e.decided:
            return
        votes = e.accepts.get((view, digest), {})
        if len(votes) < self.params.q:
            return
        batch = e.values.get(digest)
        if batch is None:
            return  # quorum of ACCEPTs but the value was never received
        if (Phase.ACCEPT, view) not in e.sent:
            # q ACCEPTs pin this value for the view; adding ours lets peers
            # that are still short of a quorum finish too
            self._vote(e, Phase.ACCEPT, view, digest)
        proof = make_proof(self.params, e.instance, digest, votes.values())
        self.decide(e.instance, batch, proof, via="quorum")

    # --- decisions -----------------------------------------------------

    def decide(self, c: int, batch: tuple, proof: DecisionProof, via: str) -> None:
        e = self._entry(c)
        if e is None or e.decided:
            return
        e.decided = True
        e.value = tuple(batch)
        e.proof = proof
        e.values[proof.value_digest] = e.value
        self.decide_count += 1
        self._emit("decide", inst=c, view=proof.view, digest=proof.value_digest, info=via)
        if self.config.mode is Mode.BROADCAST:
            self._broadcast(FwdDecision(c, e.value, proof))
        for requester in sorted(self.forward_waiting.pop(c, ())):
            self._forward_to(requester, c)
        self._try_execute()
        self._maybe_propose()

    def maybe_request_decision(self, e: LogEntry, view: int, digest: Digest) -> None:
        c = e.instance
        if self.config.mode is not Mode.FORWARD or e.decided or c in self.probed:
            return
        if len(e.accepts.get((view, digest), {})) < self.params.f + 1:
            return
        if e.proposals.get(view) == digest:
            return
        self.probed.add(c)
        targets = ring_targets(self.id, self.params.n, 2 * self.params.f)
        self._emit("probe", inst=c, view=view, digest=digest,
                   info=",".join(self.peers[t] for t in targets))
        for t in targets:
            self._send(self.peers[t], ReqDecision(c))

    def _forward_to(self, requester: int, c: int) -> None:
        served = self.forwarded.setdefault(c, set())
        if requester in served:
            return
        served.add(requester)
        e = self.log[c]
        self._send(self.peers[requester], FwdDecision(c, e.value, e.proof))

    def on_req_decision(self, src: str, msg: ReqDecision) -> None:
        requester = self._sender(src)
        c = msg.instance
        if requester is None or c < 1:
            return
        if c <= self.low and c not in self.log:
            if self.stable is not None:
                ck = self.stable
                self._send(src, OutdatedReq(c, ck.up_to, ck.batch, ck.proof))
            return
        e = self.log.get(c)
        if e is not None and e.decided:
            self._forward_to(requester, c)
        elif c <= self.last_executed + self.config.window:
            self.forward_waiting.setdefault(c, set()).add(requester)

    def on_fwd_decision(self, src: str, msg: FwdDecision) -> None:
        c = msg.instance
        if self.decided(c) or c > self.last_executed + self.config.window:
            return
        if not verify_proof(self.params, c, msg.batch, msg.proof, self.auth):
            self._emit("reject", type=msg.TYPE, inst=c, peer=src, info="bad proof")
            return
        if self.config.mode is Mode.FORWARD:
            self._broadcast(msg)  # echo
        self.decide(c, msg.batch, msg.proof, via="fwd")

    def on_outdated(self, src: str, msg: OutdatedReq) -> None:
        if msg.up_to <= self.last_executed or msg.proof is None:
            return
        if verify_proof(self.params, msg.up_to, msg.batch, msg.proof, self.auth):
            self.lag_target = max(self.lag_target, msg.up_to)
            self.start_state_transfer()

    # --- execution -----------------------------------------------------

    def _try_execute(self) -> None:
        while True:
            e = self.log.get(self.last_executed + 1)
            if e is None or not e.decided:
                return
            self.execute_and_reply(e)

    def _apply(self, req: Request) -> str:
        if req.kind == Kind.UPDATE:
            self.app[req.key] = req.payload
            return "ok/" + req.payload
        return self.app.get(req.key, self.config.initial_value)

    def execute_and_reply(self, e: LogEntry) -> None:
        c = e.instance
        for req in e.value:
            if req.client_seq <= self.last_seq.get(req.client_id, 0):
                continue  # already executed (re-proposed duplicate)
            result = self._apply(req)
            self.last_seq[req.client_id] = req.client_seq
            if req.client_id >= 0:
                self.reply_store[req.client_id] = (req.client_seq, result)
                self._reply(req.client_id, req.client_seq, result, True, c)
            self._forget_request(req.rid)
        e.executed = True
        self.last_executed = c
        self.backoff = 0
        self._emit("execute", inst=c, digest=e.proof.value_digest if e.proof else None)
        for rid in [rid for rid, inst in self.proposed.items() if inst == c]:
            del self.proposed[rid]
        if self.st_active and c >= self.lag_target:
            self._end_state_transfer()  # caught up through ordinary execution
        if c % self.config.checkpoint_period == 0:
            self.checkpoint_and_gc()

    def _forget_request(self, rid) -> None:
        if self.pending.pop(rid, None) is not None:
            self.req_stage.pop(rid, None)
            self.sim.cancel_timer(self.name, ("req", rid[0], rid[1]))
        self.proposed.pop(rid, None)

    # --- checkpoints and state transfer -----------------------------------

    def checkpoint_and_gc(self) -> Checkpoint:
        c = self.last_executed
        e = self.log.get(c)
        ck = snapshot(c, self.app, self.last_seq, self.reply_store,
                      self.config.checkpoint_reply_store,
                      e.value if e else (), e.proof if e else None)
        self.checkpoints.append(ck)
        self._emit("checkpoint", inst=c, digest=ck.state_digest)
        self._broadcast(CheckpointMsg(c, ck.state_digest))
        self._checkpoint_vote(self.id, c, ck.state_digest)
        return ck

    def _make_stable(self, ck: Checkpoint) -> None:
        """A quorum vouches for ``ck``: older log entries can go."""
        self.stable = ck
        self.checkpoints = [k for k in self.checkpoints if k.up_to >= ck.up_to]
        self._gc(ck.up_to)
        self._emit("gc", inst=ck.up_to, digest=ck.state_digest)

    def _gc(self, up_to: int) -> None:
        self.low = max(self.low, up_to)
        for table in (self.log, self.forward_waiting, self.forwarded):
            for c in [c for c in table if c <= up_to]:
                del table[c]
        self.probed = {c for c in self.probed if c > up_to}
        self.ckpt_votes = {k: v for k, v in self.ckpt_votes.items() if k[0] > up_to}

    def on_checkpoint(self, src: str, msg: CheckpointMsg) -> None:
        sender = self._sender(src)
        if sender is not None:
            self._checkpoint_vote(sender, msg.up_to, msg.state_digest)

    def _checkpoint_vote(self, sender: int, up_to: int, digest: Digest) -> None:
        if up_to <= self.low:
            return
        votes = self.ckpt_votes.setdefault((up_to, digest), set())
        votes.add(sender)
        if len(votes) >= self.params.f + 1 and up_to > max(self.last_executed, self.lag_target):
            self.lag_target = up_to  # f+1 replicas are ahead of us
            if not self.sim.timer_pending(self.name, "lag"):
                self.sim.set_timer(self.name, self.config.state_transfer_delay, "lag")
        if len(votes) >= self.params.q:
            for ck in self.checkpoints:
                if ck.up_to == up_to and ck.state_digest == digest:
                    self._make_stable(ck)
                    break

    def start_state_transfer(self) -> None:
        if self.st_active:
            return
        self.st_active = True
        self.st_replies = {}
        self._emit("st-start", inst=self.last_executed)
        self._broadcast(StateRequest(self.last_executed))
        self.sim.set_timer(self.name, self.config.propose_timeout, "st")

    def _end_state_transfer(self) -> None:
        self.st_active = False
        self.sim.cancel_timer(self.name, "st")

    def on_state_request(self, src: str, msg: StateRequest) -> None:
        offer = tuple(ck for ck in self.checkpoints if ck.up_to > msg.after)
        if offer:
            self._send(src, StateReply(offer, self.regency))

    def on_state_reply(self, src: str, msg: StateReply) -> None:
        sender = self._sender(src)
        if not self.st_active or sender is None:
            return
        self.st_replies[sender] = msg
        pairs = [(s, ck) for s, m in sorted(self.st_replies.items()) for ck in m.checkpoints]
        try:
            ck = select_checkpoint(pairs, self.params.f, after=self.last_executed)
        except NoMatchingCheckpoint:
            return
        self.install_checkpoint(ck)

    def install_checkpoint(self, ck: Checkpoint) -> None:
        self.app = dict(ck.app)
        self.last_seq = dict(ck.last_seq)
        self.reply_store = {} if ck.replies is None else {c: (s, r) for c, s, r in ck.replies}
        self.last_executed = ck.up_to
        self.checkpoints = [ck]
        self.stable = ck
        self._gc(ck.up_to)
        for rid in [rid for rid in self.pending if rid[1] <= self.last_seq.get(rid[0], 0)]:
            self._forget_request(rid)
        self.proposed = {rid: c for rid, c in self.proposed.items() if c > ck.up_to}
        self._end_state_transfer()
        self._emit("install", inst=ck.up_to, digest=ck.state_digest)
        regs = sorted((m.regency for m in self.st_replies.values()), reverse=True)
        if len(regs) > self.params.f and regs[self.params.f] > self.regency:
            self.install_regency(regs[self.params.f])
        self._try_execute()
        self._maybe_propose()

    # --- leader change -------------------------------------------------

    def send_stop(self, target: int) -> None:
        if target <= self.regency or target in self.stop_sent:
            return
        self.stop_sent.add(target)
        self.stops.setdefault(target, set()).add(self.id)
        self.stop_count += 1
        self._emit("stop", view=target)
        self._broadcast(Stop(target))
        self._check_stops(target)

    def on_stop(self, src: str, msg: Stop) -> None:
        sender = self._sender(src)
        if sender is None or msg.regency <= self.regency:
            return
        self.stops.setdefault(msg.regency, set()).add(sender)
        self._check_stops(msg.regency)

    def _check_stops(self, target: int) -> None:
        votes = self.stops.get(target, set())
        if len(votes) >= self.params.f + 1 and target not in self.stop_sent:
            self.send_stop(target)
            return
        if len(votes) >= self.params.q and target > self.regency:
            self.install_regency(target)

    def _make_report(self) -> Report:
        decided, prepared = [], []
        for c in sorted(self.log):
            e = self.log[c]
            if e.decided:
                decided.append((c, e.value, e.proof))
            elif e.prepared is not None:
                prepared.append(e.prepared)
        return Report(self.id, self.regency, self.last_executed, tuple(decided), tuple(prepared))

    def install_regency(self, r: int) -> None:
        if r <= self.regency:
            return
        self.regency = r
        self.synced = False
        self.proposed.clear()
        self.backoff += 1
        for t in [t for t in self.stops if t <= r]:
            del self.stops[t]
        self._emit("regency", view=r, info=self.peers[self.leader_of(r)])
        report = self._make_report()
        sd = StopData(report, self.auth.sign(self.id, digest_of(report)))
        leader = self.peers[self.leader_of(r)]
        if leader == self.name:
            self.on_stopdata(self.name, sd)
        else:
            self._send(leader, sd)
        for rid in self.pending:
            self.req_stage[rid] = 0
            self._arm_request_timer(rid)
        self._replay()

    def _report_ok(self, sd: StopData, regency: int) -> bool:
        rep = sd.report
        return (rep.regency == regency and 0 <= rep.sender < self.params.n
                and self.auth.verify(rep.sender, digest_of(rep), sd.tag))

    def on_stopdata(self, src: str, msg: StopData) -> None:
        r = msg.report.regency
        if r > self.regency:
            self._defer(src, msg)
            return
        if r < self.regency or self.leader_of(r) != self.id:
            return
        if src != self.peers[msg.report.sender] or not self._report_ok(msg, r):
            return
        if self.synced:
            if self.last_sync is not None and self.last_sync.regency == r and src != self.name:
                self._send(src, self.last_sync)  # late joiner
            return
        got = self.stopdata.setdefault(r, {})
        got[msg.report.sender] = msg
        if len(got) < self.params.q:
            return
        reports = tuple(got[s] for s in sorted(got))
        plan = compute_sync_plan(self.params, self.auth, [sd.report for sd in reports])
        sync = Sync(r, reports, plan)
        self.last_sync = sync
        self.stopdata = {k: v for k, v in self.stopdata.items() if k > r}
        self._broadcast(sync)
        self._apply_sync(sync)

    def on_sync(self, src: str, msg: Sync) -> None:
        r = msg.regency
        if r > self.regency:
            self._defer(src, msg)
            return
        if r < self.regency or self.synced or src != self.peers[self.leader_of(r)]:
            return
        senders = {sd.report.sender for sd in msg.reports}
        if len(senders) < self.params.q or len(senders) != len(msg.reports):
            return
        if not all(self._report_ok(sd, r) for sd in msg.reports):
            return
        if compute_sync_plan(self.params, self.auth, [sd.report for sd in msg.reports]) != msg.plan:
            self._emit("reject", type=msg.TYPE, view=r, peer=src, info="plan mismatch")
            return
        self._apply_sync(msg)

    def _apply_sync(self, sync: Sync) -> None:
        plan = sync.plan
        self._emit("sync", view=sync.regency, inst=plan.high)
        for c, batch, proof in plan.decisions:
            if not self.decided(c):
                self.decide(c, batch, proof, via="sync")
        for c, batch in plan.reproposals:
            self._accept_proposal(Propose(sync.regency, c, batch, batch_digest(c, batch)))
            if self.is_leader:
                for req in batch:
                    self.proposed[req.rid] = c
        if plan.low > self.last_executed:
            self.lag_target = max(self.lag_target, plan.low)
            if not self.sim.timer_pending(self.name, "lag"):
                self.sim.set_timer(self.name, self.config.state_transfer_delay, "lag")
        self.synced = True
        if self.is_leader:
            self.next_instance = max(plan.high, self.last_executed) + 1
        self._replay()
        self._maybe_propose()
