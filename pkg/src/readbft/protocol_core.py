"""Quorum arithmetic, digests, authenticators and decision proofs.

Everything here is a pure function or an immutable value so it can be shared
by replicas, clients, the adversary and the offline checkers.

Byte layouts used for hashing and signing are documented in docs/FORMATS.md
and must not change without bumping the version tags below.
"""

from __future__ import annotations

import dataclasses
import hashlib
import hmac
import struct
from dataclasses import dataclass
from enum import IntEnum
from typing import Iterable, Protocol, Sequence

Digest = bytes

BATCH_TAG = b"RBFT/batch/v1"
ATTEST_TAG = b"RBFT/att/v1"
TAG_LEN = 16


class ProofError(Exception):
    """Base class for decision-proof construction failures."""


class InsufficientAttestations(ProofError):
    pass


class MixedDigests(ProofError):
    pass


class InvalidParams(ValueError):
    pass


@dataclass(frozen=True)
class SystemParams:
    n: int
    f: int

    def __post_init__(self):
        if self.f < 0 or self.n < 1:
            raise InvalidParams(f"n={self.n}, f={self.f}: need n >= 1 and f >= 0")
        if self.n < 3 * self.f + 1:
            raise InvalidParams(f"n={self.n} < 3f+1={3 * self.f + 1}")

    @property
    def q(self) -> int:
        return quorum_size(self)

    @property
    def weak(self) -> int:
        return weak_certificate_size(self)

    @property
    def replicas(self) -> range:
        return range(self.n)


def quorum_size(params: SystemParams) -> int:
    # ceil((n + f + 1) / 2); equals 2f+1 when n = 3f+1
    return (params.n + params.f + 2) // 2


def weak_certificate_size(params: SystemParams) -> int:
    return params.f + 1


def quorum_intersection(params: SystemParams, set_a: Iterable[int], set_b: Iterable[int]) -> int:
    a, b = set(set_a), set(set_b)
    universe = set(params.replicas)
    if not (a <= universe and b <= universe):
        raise ValueError("replica sets must be subsets of the replica universe")
    return len(a & b)


# --- canonical encodings -------------------------------------------------

def _u8(x: int) -> bytes:
    return struct.pack(">B", x)


def _u16(x: int) -> bytes:
    return struct.pack(">H", x)


def _u32(x: int) -> bytes:
    return struct.pack(">I", x)


def _u64(x: int) -> bytes:
    return struct.pack(">Q", x)


def _i64(x: int) -> bytes:
    return struct.pack(">q", x)


def encode_batch(instance: int, batch: Sequence) -> bytes:
    """Bit-exact batch encoding; requests are taken in batch order.

    Each request must expose ``client_id``, ``client_seq``, ``kind`` (0 read,
    1 update), ``key`` and ``payload``.
    """
    parts = [BATCH_TAG, _u64(instance), _u32(len(batch))]
    for req in batch:
        key = req.key.encode("utf-8")
        payload = req.payload.encode("utf-8") if isinstance(req.payload, str) else bytes(req.payload)
        parts += [
            _i64(req.client_id),
            _u64(req.client_seq),
            _u8(int(req.kind)),
            _u16(len(key)),
            key,
            _u32(len(payload)),
            payload,
        ]
    return b"".join(parts)


def batch_digest(instance: int, batch: Sequence) -> Digest:
    return hashlib.sha256(encode_batch(instance, batch)).digest()


def canonical_bytes(obj) -> bytes:
    """Deterministic, type-tagged encoding of nested plain data.

    Handles None, bool, int, str, bytes, enums, tuples/lists, dicts and
    dataclasses.  Dict entries are ordered by their encoded keys.
    """
    if obj is None:
        return b"N"
    if isinstance(obj, bool):
        return b"T" if obj else b"F"
    if isinstance(obj, int):
        s = str(int(obj)).encode()
        return b"I" + _u32(len(s)) + s
    if isinstance(obj, str):
        s = obj.encode("utf-8")
        return b"S" + _u32(len(s)) + s
    if isinstance(obj, (bytes, bytearray)):
        return b"B" + _u32(len(obj)) + bytes(obj)
    if isinstance(obj, (list, tuple)):
        return b"L" + _u32(len(obj)) + b"".join(canonical_bytes(x) for x in obj)
    if isinstance(obj, (set, frozenset)):
        items = sorted(canonical_bytes(x) for x in obj)
        return b"L" + _u32(len(items)) + b"".join(items)
    if isinstance(obj, dict):
        items = sorted((canonical_bytes(k), canonical_bytes(v)) for k, v in obj.items())
        return b"D" + _u32(len(items)) + b"".join(k + v for k, v in items)
    if dataclasses.is_dataclass(obj):
        name = type(obj).__name__.encode()
        fields = [(f.name, getattr(obj, f.name)) for f in dataclasses.fields(obj)]
        return b"O" + _u16(len(name)) + name + canonical_bytes(dict(fields))
    raise TypeError(f"cannot canonically encode {type(obj).__name__}")


def digest_of(obj) -> Digest:
    return hashlib.sha256(canonical_bytes(obj)).digest()


def short(d: Digest | None, width: int = 8) -> str | None:
    return None if d is None else d.hex()[:width]


# --- authenticators ------------------------------------------------------

class Authenticator(Protocol):
    def sign(self, signer: int, payload: bytes) -> bytes: ...

    def verify(self, signer: int, payload: bytes, tag: bytes) -> bool: ...


def _seed_bytes(seed) -> bytes:
    return str(seed).encode("utf-8")


class MacAuthenticator:
    """Simulated signatures: HMAC-SHA256 under per-replica keys from a registry.

    Any holder of the registry can verify, which stands in for public
    verifiability.  Keys are derived from the seed so runs replay exactly.
    """

    def __init__(self, n: int, seed=0):
        base = _seed_bytes(seed)
        self._keys = {
            i: hmac.new(base, b"rbft-key/%d" % i, hashlib.sha256).digest() for i in range(n)
        }

    def sign(self, signer: int, payload: bytes) -> bytes:
        return hmac.new(self._keys[signer], payload, hashlib.sha256).digest()[:TAG_LEN]

    def verify(self, signer: int, payload: bytes, tag: bytes) -> bool:
        key = self._keys.get(signer)
        if key is None:
            return False
        expected = hmac.new(key, payload, hashlib.sha256).digest()[:TAG_LEN]
        return hmac.compare_digest(expected, tag)


class Ed25519Authenticator:
    """Real signatures behind the same interface (deterministic keys from seed)."""

    def __init__(self, n: int, seed=0):
        from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey

        base = _seed_bytes(seed)
        self._priv = {
            i: Ed25519PrivateKey.from_private_bytes(hashlib.sha256(base + b"/ed25519/%d" % i).digest())
            for i in range(n)
        }
        self._pub = {i: k.public_key() for i, k in self._priv.items()}

    def sign(self, signer: int, payload: bytes) -> bytes:
        return self._priv[signer].sign(payload)

    def verify(self, signer: int, payload: bytes, tag: bytes) -> bool:
        from cryptography.exceptions import InvalidSignature

        pub = self._pub.get(signer)
        if pub is None:
            return False
        try:
            pub.verify(tag, payload)
        except InvalidSignature:
            return False
        return True


class RestrictedSigner:
    """Verifies for everyone but signs only for an allowed set of replicas.

    Handed to the adversary: it holds the keys of the replicas it controls and
    nothing else.
    """

    def __init__(self, inner: Authenticator, allowed: Iterable[int]):
        self._inner = inner
        self.allowed = frozenset(allowed)

    def sign(self, signer: int, payload: bytes) -> bytes:
        if signer not in self.allowed:
            raise PermissionError(f"no signing key for replica {signer}")
        return self._inner.sign(signer, payload)

    def verify(self, signer: int, payload: bytes, tag: bytes) -> bool:
        return self._inner.verify(signer, payload, tag)


def make_authenticator(scheme: str, n: int, seed=0) -> Authenticator:
    if scheme == "mac":
        return MacAuthenticator(n, seed)
    if scheme == "ed25519":
        return Ed25519Authenticator(n, seed)
    raise ValueError(f"unknown authenticator scheme {scheme!r}")


# --- attestations and proofs ---------------------------------------------

class Phase(IntEnum):
    PREPARE = 1
    ACCEPT = 2


@dataclass(frozen=True)
class Attestation:
    signer: int
    phase: Phase
    instance: int
    view: int
    digest: Digest
    tag: bytes

    def payload(self) -> bytes:
        return attestation_payload(self.signer, self.phase, self.instance, self.view, self.digest)

    def verify(self, auth: Authenticator) -> bool:
        return auth.verify(self.signer, self.payload(), self.tag)


def attestation_payload(signer: int, phase: Phase, instance: int, view: int, digest: Digest) -> bytes:
    return ATTEST_TAG + _u8(int(phase)) + _u32(signer) + _u64(instance) + _u64(view) + digest


def attest(auth: Authenticator, signer: int, phase: Phase, instance: int, view: int, digest: Digest) -> Attestation:
    tag = auth.sign(signer, attestation_payload(signer, phase, instance, view, digest))
    return Attestation(signer, Phase(phase), instance, view, digest, tag)


@dataclass(frozen=True)
class DecisionProof:
    """Externally verifiable evidence that ``value_digest`` was decided.

    Holds at least a quorum of ACCEPT attestations from distinct replicas, all
    for the same instance, view and digest.  More than a quorum is accepted.
    """

    instance: int
    value_digest: Digest
    attestations: tuple[Attestation, ...]

    @property
    def view(self) -> int:
        return self.attestations[0].view if self.attestations else -1

    @property
    def signers(self) -> tuple[int, ...]:
        return tuple(a.signer for a in self.attestations)


@dataclass(frozen=True)
class PreparedCert:
    """A batch together with a quorum of PREPAREs for it in one view."""

    instance: int
    view: int
    batch: tuple
    attestations: tuple[Attestation, ...]

    @property
    def digest(self) -> Digest:
        return batch_digest(self.instance, self.batch)


def _collect(params: SystemParams, phase: Phase, instance: int, digest: Digest,
             attestations: Iterable[Attestation]) -> tuple[Attestation, ...]:
    by_signer: dict[int, Attestation] = {}
    view = None
    for a in attestations:
        if a.phase != phase or a.instance != instance or a.digest != digest:
            raise MixedDigests(
                f"attestation from {a.signer} is for ({a.phase.name}, {a.instance}, {short(a.digest)}), "
                f"expected ({phase.name}, {instance}, {short(digest)})"
            )
        if view is None:
            view = a.view
        elif a.view != view:
            raise MixedDigests(f"attestations span views {view} and {a.view}")
        by_signer.setdefault(a.signer, a)
    if len(by_signer) < quorum_size(params):
        raise InsufficientAttestations(
            f"{len(by_signer)} distinct signers, quorum is {quorum_size(params)}"
        )
    return tuple(by_signer[s] for s in sorted(by_signer))


def make_proof(params: SystemParams, instance: int, value_digest: Digest,
               attestations: Iterable[Attestation]) -> DecisionProof:
    atts = _collect(params, Phase.ACCEPT, instance, value_digest, attestations)
    return DecisionProof(instance, value_digest, atts)


def make_prepared_cert(params: SystemParams, instance: int, view: int, batch: Sequence,
                       attestations: Iterable[Attestation]) -> PreparedCert:
    batch = tuple(batch)
    atts = _collect(params, Phase.PREPARE, instance, batch_digest(instance, batch), attestations)
    if atts[0].view != view:
        raise MixedDigests(f"attestations are for view {atts[0].view}, expected {view}")
    return PreparedCert(instance, view, batch, atts)


def _quorum_ok(params: SystemParams, auth: Authenticator, phase: Phase, instance: int,
               view: int, digest: Digest, attestations: Sequence[Attestation]) -> bool:
    signers = set()
    for a in attestations:
        if (a.phase != phase or a.instance != instance or a.view != view
                or a.digest != digest or a.signer in signers
                or not (0 <= a.signer < params.n) or not a.verify(auth)):
            return False
        signers.add(a.signer)
    return len(signers) >= quorum_size(params)


def verify_proof(params: SystemParams, instance: int, value: Sequence, proof: DecisionProof,
                 auth: Authenticator) -> bool:
    """True iff ``proof`` shows that ``value`` was decided in ``instance``.

    Any defect (wrong value, wrong instance, duplicate or forged signer, too few
    attestations) yields False rather than an exception.
    """
    if not isinstance(proof, DecisionProof) or proof.instance != instance or not proof.attestations:
        return False
    if batch_digest(instance, value) != proof.value_digest:
        return False
    return _quorum_ok(params, auth, Phase.ACCEPT, instance, proof.view, proof.value_digest,
                      proof.attestations)


def verify_prepared_cert(params: SystemParams, cert: PreparedCert, auth: Authenticator) -> bool:
    if not isinstance(cert, PreparedCert):
        return False
    return _quorum_ok(params, auth, Phase.PREPARE, cert.instance, cert.view, cert.digest,
                      cert.attestations)
