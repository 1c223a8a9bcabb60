"""Structured event trace shared by the engine, the nodes and the checkers.

One record per event, always with the same ten fields in the same order::

    t, node, kind, type, inst, view, digest, peer, size, info

Serialized as one compact JSON object per line (see docs/FORMATS.md).
"""

from __future__ import annotations

import json
from typing import IO, Iterable, Iterator, NamedTuple, Optional

DIGEST_HEX = 16


class Record(NamedTuple):
    t: int
    node: str
    kind: str
    type: Optional[str] = None
    inst: Optional[int] = None
    view: Optional[int] = None
    digest: Optional[str] = None
    peer: Optional[str] = None
    size: Optional[int] = None
    info: Optional[str] = None


FIELDS = Record._fields


def hexd(d: Optional[bytes]) -> Optional[str]:
    return None if d is None else d.hex()[:DIGEST_HEX]


class Trace:
    def __init__(self):
        self.records: list[Record] = []

    def emit(self, t, node, kind, type=None, inst=None, view=None, digest=None, peer=None,
             size=None, info=None):
        if isinstance(digest, (bytes, bytearray)):
            digest = hexd(digest)
        self.records.append(Record(t, node, kind, type, inst, view, digest, peer, size, info))

    def __iter__(self) -> Iterator[Record]:
        return iter(self.records)

    def __len__(self):
        return len(self.records)

    def of_kind(self, *kinds: str) -> list[Record]:
        return [r for r in self.records if r.kind in kinds]


def dump_line(rec: Record) -> str:
    return json.dumps(dict(zip(FIELDS, rec)), separators=(",", ":"), ensure_ascii=True)


def write_jsonl(records: Iterable[Record], fh: IO[str]) -> None:
    for rec in records:
        fh.write(dump_line(rec))
        fh.write("\n")


def read_jsonl(fh: IO[str]) -> list[Record]:
    out = []
    for lineno, line in enumerate(fh, 1):
        line = line.strip()
        if not line:
            continue
        obj = json.loads(line)
        missing = [k for k in FIELDS if k not in obj]
        if missing:
            raise ValueError(f"trace line {lineno}: missing fields {missing}")
        out.append(Record(*(obj[k] for k in FIELDS)))
    return out
