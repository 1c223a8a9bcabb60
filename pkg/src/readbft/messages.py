"""Wire messages exchanged between clients and replicas.

Naming follows BFT-SMaRt: PROPOSE is PBFT's PRE-PREPARE, PREPARE is PBFT's
PREPARE (BFT-SMaRt WRITE) and ACCEPT is PBFT's COMMIT.  PREPARE and ACCEPT
carry only a digest; the batch itself travels in PROPOSE, FWD-DECISION,
SYNC and OUTDATED-REQ.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import Optional

from .protocol_core import Attestation, DecisionProof, Digest, PreparedCert


class Kind(IntEnum):
    READ = 0
    UPDATE = 1


@dataclass(frozen=True)
class Request:
    client_id: int
    client_seq: int
    kind: Kind
    key: str
    payload: str = ""

    @property
    def rid(self) -> tuple[int, int]:
        return (self.client_id, self.client_seq)


@dataclass(frozen=True)
class OrderedRequest:
    request: Request
    TYPE = "REQUEST"


@dataclass(frozen=True)
class ReadOnlyRequest:
    request: Request
    TYPE = "READ"


@dataclass(frozen=True)
class Reply:
    client_seq: int
    replica: int
    result: Optional[str]
    ordered: bool
    instance: int  # executed instance the result reflects
    TYPE = "REPLY"


@dataclass(frozen=True)
class Propose:
    view: int
    instance: int
    batch: tuple[Request, ...]
    digest: Digest
    TYPE = "PROPOSE"


@dataclass(frozen=True)
class Prepare:
    att: Attestation
    TYPE = "PREPARE"


@dataclass(frozen=True)
class Accept:
    att: Attestation
    TYPE = "ACCEPT"


@dataclass(frozen=True)
class FwdDecision:
    instance: int
    batch: tuple[Request, ...]
    proof: DecisionProof
    TYPE = "FWD-DECISION"


@dataclass(frozen=True)
class ReqDecision:
    instance: int
    TYPE = "REQ-DECISION"


@dataclass(frozen=True)
class OutdatedReq:
    instance: int  # the instance that was asked for
    up_to: int  # checkpoint horizon of the responder
    batch: tuple[Request, ...]  # value decided at up_to
    proof: Optional[DecisionProof]
    TYPE = "OUTDATED-REQ"


@dataclass(frozen=True)
class Stop:
    regency: int
    TYPE = "STOP"


@dataclass(frozen=True)
class Report:
    """What a replica knows when it enters a new regency."""

    sender: int
    regency: int
    low: int  # last executed instance
    decided: tuple[tuple[int, tuple[Request, ...], DecisionProof], ...]
    prepared: tuple[PreparedCert, ...]


@dataclass(frozen=True)
class StopData:
    report: Report
    tag: bytes
    TYPE = "STOPDATA"


@dataclass(frozen=True)
class SyncPlan:
    decisions: tuple[tuple[int, tuple[Request, ...], DecisionProof], ...]
    reproposals: tuple[tuple[int, tuple[Request, ...]], ...]
    low: int
    high: int


@dataclass(frozen=True)
class Sync:
    regency: int
    reports: tuple[StopData, ...]
    plan: SyncPlan
    TYPE = "SYNC"


@dataclass(frozen=True)
class CheckpointMsg:
    up_to: int
    state_digest: Digest
    TYPE = "CHECKPOINT"


@dataclass(frozen=True)
class StateRequest:
    after: int
    TYPE = "STATE-REQ"


@dataclass(frozen=True)
class StateReply:
    checkpoints: tuple  # tuple[Checkpoint, ...]
    regency: int
    TYPE = "STATE-REPLY"


MESSAGE_TYPES = (
    "REQUEST", "READ", "REPLY", "PROPOSE", "PREPARE", "ACCEPT", "FWD-DECISION",
    "REQ-DECISION", "OUTDATED-REQ", "STOP", "STOPDATA", "SYNC", "CHECKPOINT",
    "STATE-REQ", "STATE-REPLY",
)

# --- trace helpers -------------------------------------------------------

HEADER = 16


def _req_size(r: Request) -> int:
    return 23 + len(r.key.encode()) + len(r.payload.encode())


def _batch_size(batch) -> int:
    return 4 + sum(_req_size(r) for r in batch)


def _att_size(a: Attestation) -> int:
    return 53 + len(a.tag)


def _proof_size(p: Optional[DecisionProof]) -> int:
    if p is None:
        return 1
    return 44 + sum(_att_size(a) for a in p.attestations)


def _cert_size(c: PreparedCert) -> int:
    return 20 + _batch_size(c.batch) + sum(_att_size(a) for a in c.attestations)


def _report_size(r: Report) -> int:
    return (24 + sum(8 + _batch_size(b) + _proof_size(p) for _, b, p in r.decided)
            + sum(_cert_size(c) for c in r.prepared))


def wire_size(msg) -> int:
    """Approximate encoded size in bytes; a deterministic accounting figure."""
    t = msg.TYPE
    if t in ("REQUEST", "READ"):
        body = _req_size(msg.request)
    elif t == "REPLY":
        body = 21 + len((msg.result or "").encode())
    elif t == "PROPOSE":
        body = 16 + 32 + _batch_size(msg.batch)
    elif t in ("PREPARE", "ACCEPT"):
        body = _att_size(msg.att)
    elif t == "FWD-DECISION":
        body = 8 + _batch_size(msg.batch) + _proof_size(msg.proof)
    elif t == "OUTDATED-REQ":
        body = 16 + _batch_size(msg.batch) + _proof_size(msg.proof)
    elif t in ("REQ-DECISION", "STOP", "STATE-REQ"):
        body = 8
    elif t == "STOPDATA":
        body = _report_size(msg.report) + len(msg.tag)
    elif t == "SYNC":
        p = msg.plan
        body = (24 + sum(_report_size(s.report) + len(s.tag) for s in msg.reports)
                + sum(8 + _batch_size(b) + _proof_size(pr) for _, b, pr in p.decisions)
                + sum(8 + _batch_size(b) for _, b in p.reproposals))
    elif t == "CHECKPOINT":
        body = 40
    elif t == "STATE-REPLY":
        body = 8 + sum(ck.wire_size() for ck in msg.checkpoints)
    else:
        body = 0
    return HEADER + body


def trace_fields(msg) -> tuple[Optional[int], Optional[int], Optional[Digest]]:
    """(instance, view, digest) for a trace record, where meaningful."""
    t = msg.TYPE
    if t == "PROPOSE":
        return msg.instance, msg.view, msg.digest
    if t in ("PREPARE", "ACCEPT"):
        a = msg.att
        return a.instance, a.view, a.digest
    if t == "FWD-DECISION":
        proof = msg.proof
        return msg.instance, getattr(proof, "view", None), getattr(proof, "value_digest", None)
    if t in ("REQ-DECISION", "OUTDATED-REQ"):
        return msg.instance, None, None
    if t == "STOP":
        return None, msg.regency, None
    if t == "STOPDATA":
        return None, msg.report.regency, None
    if t == "SYNC":
        return None, msg.regency, None
    if t == "CHECKPOINT":
        return msg.up_to, None, msg.state_digest
    if t == "REPLY":
        return msg.instance, None, None
    return None, None, None
