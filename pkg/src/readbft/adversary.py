"""Byzantine behaviour as send-side filters on controlled replicas.

Controlled replicas run the ordinary replica code; every message they emit
passes through :meth:`Adversary.filter`, which may pass it, drop it or replace
it.  Replacements are signed with the controlled replica's own key only, so
the adversary can equivocate but never forge a correct replica's attestation.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from .messages import (
    Accept, Kind, Prepare, Propose, Reply, Request, Sync,
)
from .protocol_core import Authenticator, RestrictedSigner, SystemParams, attest, batch_digest


class Variant(str, Enum):
    OMIT_PROPOSE = "omit_propose"
    CONFLICTING_PROPOSE = "conflicting_propose"
    SILENT = "silent"
    CRASH = "crash"  # every controlled replica, leader included, sends nothing


PASS = "PASS"
DROP = "DROP"


@dataclass(frozen=True)
class Replace:
    message: object


BYZANTINE_CLIENT = -1


@dataclass(frozen=True)
class AttackPolicy:
    controlled: frozenset = frozenset()
    isolated: frozenset = frozenset()
    censored_clients: frozenset = frozenset()
    variant: Variant = Variant.OMIT_PROPOSE
    leader: Optional[int] = 0  # controlled replica that keeps playing leader under SILENT
    stale_reads: bool = False
    drop_types: frozenset = frozenset()
    drop_prob: float = 0.0
    equivocate_prob: float = 0.0
    seed: int = 0

    def validate(self, params: SystemParams) -> None:
        if len(self.controlled) > params.f:
            raise ValueError(f"adversary controls {len(self.controlled)} > f={params.f} replicas")
        if len(self.isolated) > params.f:
            raise ValueError(f"{len(self.isolated)} isolated replicas > f={params.f}")
        if self.controlled & self.isolated:
            raise ValueError("isolated replicas must be correct (not controlled)")
        for r in self.controlled | self.isolated:
            if not 0 <= r < params.n:
                raise ValueError(f"replica id {r} out of range")
        if not (0.0 <= self.drop_prob <= 1.0 and 0.0 <= self.equivocate_prob <= 1.0):
            raise ValueError("probabilities must be in [0, 1]")


def conflicting_batch(instance: int, batch: tuple) -> tuple:
    """A well-formed batch that differs from ``batch`` (and so has another digest)."""
    extra = Request(BYZANTINE_CLIENT, instance, Kind.UPDATE, "__byz__", f"x{instance}")
    return tuple(batch) + (extra,)


class Adversary:
    def __init__(self, policy: AttackPolicy, params: SystemParams, auth: Authenticator,
                 initial_value: str = "0"):
        policy.validate(params)
        self.policy = policy
        self.params = params
        self.signer = RestrictedSigner(auth, policy.controlled)
        self.initial_value = initial_value
        self._names = {f"r{i}" for i in policy.controlled}
        self._isolated = {f"r{i}" for i in policy.isolated}
        self._censored = {f"c{i}" for i in policy.censored_clients}
        self._rng = random.Random(f"adv-filter/{policy.seed}")

    def controls(self, node: str) -> bool:
        return node in self._names

    def filter(self, src: str, dst: str, msg, now: int):
        p = self.policy
        src_id = int(src[1:])
        if p.variant is Variant.CRASH:
            return DROP
        if p.variant is Variant.SILENT and src_id != p.leader:
            return DROP
        if msg.TYPE in p.drop_types:
            return DROP
        if p.drop_prob and self._rng.random() < p.drop_prob:
            return DROP
        if isinstance(msg, Reply):
            if dst in self._censored:
                return DROP
            if p.stale_reads and not msg.ordered:
                return Replace(Reply(msg.client_seq, msg.replica, self.initial_value, False, 0))
            return PASS
        if dst in self._isolated:
            if isinstance(msg, (Propose, Sync)) and p.variant is Variant.OMIT_PROPOSE:
                return DROP
            if isinstance(msg, Propose) and p.variant is Variant.CONFLICTING_PROPOSE:
                batch = conflicting_batch(msg.instance, msg.batch)
                return Replace(Propose(msg.view, msg.instance, batch, batch_digest(msg.instance, batch)))
        if isinstance(msg, (Prepare, Accept)) and p.equivocate_prob:
            if self._rng.random() < p.equivocate_prob:
                a = msg.att
                fake = hashlib.sha256(b"byz" + a.digest).digest()
                att = attest(self.signer, a.signer, a.phase, a.instance, a.view, fake)
                return Replace(type(msg)(att))
        return PASS


def randomized_adversary(seed: int, params: SystemParams, n_clients: int) -> AttackPolicy:
    """A reproducible random policy: same seed, same policy."""
    rng = random.Random(f"adversary/{seed}/{params.n}/{params.f}/{n_clients}")
    k = rng.randint(0, params.f)
    replicas = list(range(params.n))
    if k and rng.random() < 0.6:
        controlled = {0} | set(rng.sample(replicas[1:], k - 1))
    else:
        controlled = set(rng.sample(replicas, k))
    correct = [r for r in replicas if r not in controlled]
    isolated = set(rng.sample(correct, rng.randint(0, params.f))) if controlled else set()
    variant = rng.choice(list(Variant))
    censored = {c for c in range(n_clients) if rng.random() < 0.5}
    return AttackPolicy(
        controlled=frozenset(controlled),
        isolated=frozenset(isolated),
        censored_clients=frozenset(censored) if controlled else frozenset(),
        variant=variant,
        leader=min(controlled) if controlled else None,
        stale_reads=bool(controlled) and rng.random() < 0.5,
        drop_prob=rng.choice([0.0, 0.0, 0.1, 0.3]) if controlled else 0.0,
        equivocate_prob=rng.choice([0.0, 0.2, 0.5]) if controlled else 0.0,
        seed=seed,
    )
