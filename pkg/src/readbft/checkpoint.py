"""Checkpoints and the choice of which one to install during state transfer."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

from .protocol_core import DecisionProof, Digest, digest_of


class NoMatchingCheckpoint(Exception):
    """Fewer than f+1 distinct replicas vouch for any single checkpoint."""


@dataclass(frozen=True)
class Checkpoint:
    up_to: int
    app: tuple  # sorted (key, value) pairs
    last_seq: tuple  # sorted (client_id, client_seq) pairs
    replies: Optional[tuple]  # sorted (client_id, client_seq, result); None when not transferred
    batch: tuple = ()  # value decided at up_to
    proof: Optional[DecisionProof] = None  # latest decision proof at or before up_to

    @property
    def state_digest(self) -> Digest:
        # proofs differ between replicas (different ACCEPT sets), so they stay out
        return digest_of((self.up_to, self.app, self.last_seq, self.replies))

    def wire_size(self) -> int:
        size = 8 + sum(len(k) + len(v) + 8 for k, v in self.app) + 16 * len(self.last_seq)
        if self.replies:
            size += sum(16 + len(r or "") for _, _, r in self.replies)
        return size


def snapshot(up_to: int, app: dict, last_seq: dict, reply_store: dict, include_replies: bool,
             batch: tuple = (), proof: Optional[DecisionProof] = None) -> Checkpoint:
    replies = None
    if include_replies:
        replies = tuple(sorted((c, seq, res) for c, (seq, res) in reply_store.items()))
    return Checkpoint(
        up_to=up_to,
        app=tuple(sorted(app.items())),
        last_seq=tuple(sorted(last_seq.items())),
        replies=replies,
        batch=tuple(batch),
        proof=proof,
    )


def select_checkpoint(replies: Iterable[tuple[int, Checkpoint]], f: int, after: int = 0) -> Checkpoint:
    """Highest checkpoint beyond ``after`` vouched for by f+1 distinct senders.

    ``replies`` holds (sender, checkpoint) pairs; a sender may offer several
    checkpoints but is counted once per state digest.
    """
    support: dict[tuple[int, Digest], set[int]] = {}
    body: dict[tuple[int, Digest], Checkpoint] = {}
    for sender, ck in replies:
        if ck.up_to <= after:
            continue
        key = (ck.up_to, ck.state_digest)
        support.setdefault(key, set()).add(sender)
        body.setdefault(key, ck)
    good = [k for k, senders in support.items() if len(senders) >= f + 1]
    if not good:
        raise NoMatchingCheckpoint(f"no checkpoint above {after} has {f + 1} matching digests")
    return body[max(good)]
