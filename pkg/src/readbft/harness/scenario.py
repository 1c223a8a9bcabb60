"""Scenario files: a versioned YAML schema with line-accurate diagnostics.

A scenario binds system size, replica and client settings, the network, an
optional adversary, a workload, the checks to run and their expected
outcomes.  See docs/FORMATS.md for the full schema.
"""

from __future__ import annotations

import dataclasses
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import yaml

from ..adversary import AttackPolicy, Variant
from ..client import Op
from ..messages import MESSAGE_TYPES, Kind
from ..protocol_core import InvalidParams, SystemParams
from ..replica import Mode, ReadQuorum, ReplicaConfig
from ..simnet import NetConfig, Outage

SCHEMA = "readbft-scenario/1"
CHECKS = ("agreement", "integrity", "liveness", "linearizability", "convergence", "metrics")
SCENARIO_DIR = Path(__file__).resolve().parent.parent / "scenarios"


class ConfigError(Exception):
    """Invalid scenario, with the offending field and source line when known."""

    def __init__(self, message: str, field: str = "", line: Optional[int] = None,
                 source: str = "<scenario>"):
        self.message = message
        self.field = field
        self.line = line
        self.source = source
        where = source if line is None else f"{source}:{line}"
        super().__init__(f"{where}: {field + ': ' if field else ''}{message}")


@dataclass
class ClientSpec:
    fast_reads: bool = True
    retransmit: int = 400
    read_timeout: int = 100


@dataclass
class WorkloadSpec:
    clients: int = 1
    ops_per_client: int = 1
    read_ratio: float = 0.0
    keys: int = 1
    payload_size: int = 0
    start: int = 0
    stagger: int = 0
    think: int = 0
    scripts: dict = field(default_factory=dict)  # client id -> {"start": t, "ops": [Op]}


@dataclass
class Scenario:
    name: str
    params: SystemParams
    replica: ReplicaConfig
    client: ClientSpec
    net: NetConfig
    workload: WorkloadSpec
    attack: Optional[AttackPolicy] = None
    randomized_attack: bool = False
    seed: int = 1
    horizon: int = 1_000_000
    description: str = ""
    auth: str = "mac"
    checks: tuple = ("agreement", "integrity", "liveness", "linearizability", "metrics")
    expect: dict = field(default_factory=dict)  # check name -> expected outcome
    liveness_bound: Optional[int] = None

    def with_seed(self, seed: int) -> "Scenario":
        net = dataclasses.replace(self.net, seed=seed)
        attack = self.attack and dataclasses.replace(self.attack, seed=seed)
        return dataclasses.replace(self, seed=seed, net=net, attack=attack)

    def with_mode(self, mode: Mode) -> "Scenario":
        return dataclasses.replace(self, replica=dataclasses.replace(self.replica, mode=mode))

    def validate(self) -> None:
        n = self.params.n
        try:
            self.replica.validate()
        except ValueError as e:
            raise ConfigError(str(e), "replica") from None
        try:
            self.net.validate()
        except ValueError as e:
            raise ConfigError(str(e), "net") from None
        if self.attack is not None:
            try:
                self.attack.validate(self.params)
            except ValueError as e:
                raise ConfigError(str(e), "adversary") from None
            for c in self.attack.censored_clients:
                if not 0 <= c < self.workload.clients:
                    raise ConfigError(f"client id {c} out of range", "adversary.censored_clients")
        if self.horizon <= self.net.gst:
            raise ConfigError(f"horizon {self.horizon} must exceed gst {self.net.gst}", "horizon")
        nodes = {f"r{i}" for i in range(n)} | {f"c{j}" for j in range(self.workload.clients)}
        for o in self.net.outages:
            if o.node not in nodes:
                raise ConfigError(f"unknown node {o.node!r}", "net.outages")
        for (a, b) in self.net.links:
            for x in (a, b):
                if x not in nodes:
                    raise ConfigError(f"unknown node {x!r}", "net.links")
        for node, region in self.net.regions.items():
            if node not in nodes:
                raise ConfigError(f"unknown node {node!r}", "net.regions")
            if self.net.matrix and region not in self.net.matrix:
                raise ConfigError(f"region {region!r} missing from matrix", "net.regions")
        for cid in self.workload.scripts:
            if not 0 <= cid < self.workload.clients:
                raise ConfigError(f"client id {cid} out of range", "workload.scripts")
        for c in self.checks:
            if c not in CHECKS:
                raise ConfigError(f"unknown check {c!r}", "checks")

    def client_ops(self) -> dict[int, tuple[int, list[Op]]]:
        """Per client: (start time, operations).  Deterministic in the seed."""
        w = self.workload
        rng = random.Random(f"workload/{self.seed}")
        out = {}
        for cid in range(w.clients):
            if cid in w.scripts:
                s = w.scripts[cid]
                out[cid] = (s["start"], list(s["ops"]))
                continue
            ops = []
            for k in range(1, w.ops_per_client + 1):
                key = f"k{rng.randrange(w.keys)}"
                if rng.random() < w.read_ratio:
                    ops.append(Op(Kind.READ, key))
                else:
                    value = f"c{cid}s{k}"
                    ops.append(Op(Kind.UPDATE, key, value.ljust(w.payload_size, "x")))
            out[cid] = (w.start + cid * w.stagger, ops)
        return out

    def planned_ops(self) -> int:
        return sum(len(ops) for _, ops in self.client_ops().values())


# --- loading -------------------------------------------------------------

_T = {"int": int, "float": (int, float), "bool": bool, "str": str, "list": list, "dict": dict}

_SECTIONS: dict[str, dict[str, str]] = {
    "system": {"n": "int", "f": "int"},
    "replica": {"mode": "str", "read_quorum_mode": "str", "checkpoint_period": "int",
                "propose_timeout": "int", "batch_limit": "int", "checkpoint_reply_store": "bool",
                "state_transfer_delay": "int", "window": "int"},
    "client": {"fast_reads": "bool", "retransmit": "int", "read_timeout": "int"},
    "net": {"gst": "int", "delay": "int", "jitter": "int", "delta": "int", "pre_gst": "str",
            "pre_gst_min": "int", "pre_gst_max": "int", "drop_prob": "float",
            "retransmit_interval": "int", "regions": "dict", "matrix": "dict", "links": "list",
            "outages": "list"},
    "adversary": {"controlled": "list", "isolated": "list", "censored_clients": "list",
                  "variant": "str", "leader": "int", "stale_reads": "bool", "drop_types": "list",
                  "drop_prob": "float", "equivocate_prob": "float", "randomized": "bool"},
    "workload": {"clients": "int", "ops_per_client": "int", "read_ratio": "float", "keys": "int",
                 "payload_size": "int", "start": "int", "stagger": "int", "think": "int",
                 "scripts": "dict"},
}
_TOP = {"schema": "str", "name": "str", "description": "str", "seed": "int", "horizon": "int",
        "auth": "str", "checks": "list", "expect": "dict", "liveness_bound": "int"}
_REQUIRED_TOP = ("schema", "name", "system")


class _Doc:
    """Plain data plus the source line of every path in the YAML document."""

    def __init__(self, text: str, source: str):
        self.source = source
        self.lines: dict[tuple, int] = {}
        try:
            node = yaml.compose(text, Loader=yaml.SafeLoader)
        except yaml.YAMLError as e:
            mark = getattr(e, "problem_mark", None)
            raise ConfigError(f"YAML syntax error: {getattr(e, 'problem', e)}",
                              line=mark.line + 1 if mark else None, source=source) from None
        if node is None:
            raise ConfigError("empty scenario file", source=source)
        self.data = self._walk(node, ())

    def _walk(self, node, path):
        self.lines[path] = node.start_mark.line + 1
        if isinstance(node, yaml.MappingNode):
            out = {}
            for k, v in node.value:
                key = yaml.safe_load(yaml.serialize(k))
                if key in out:
                    raise ConfigError(f"duplicate key {key!r}", self.dotted(path + (key,)),
                                      k.start_mark.line + 1, self.source)
                self.lines[path + (key,)] = k.start_mark.line + 1
                out[key] = self._walk(v, path + (key,))
                self.lines[path + (key,)] = k.start_mark.line + 1
            return out
        if isinstance(node, yaml.SequenceNode):
            return [self._walk(v, path + (i,)) for i, v in enumerate(node.value)]
        return yaml.safe_load(yaml.serialize(node))

    @staticmethod
    def dotted(path) -> str:
        return ".".join(str(p) for p in path)

    def line(self, path) -> Optional[int]:
        path = tuple(path)
        while path not in self.lines and path:
            path = path[:-1]
        return self.lines.get(path)

    def error(self, message: str, *path) -> ConfigError:
        return ConfigError(message, self.dotted(path), self.line(path), self.source)


def _typed(doc: _Doc, mapping: dict, schema: dict, path: tuple) -> dict:
    if not isinstance(mapping, dict):
        raise doc.error("expected a mapping", *path)
    for key, value in mapping.items():
        if key not in schema:
            raise doc.error(f"unknown field (expected one of {sorted(schema)})", *path, key)
        want = schema[key]
        ok = isinstance(value, _T[want]) and not (want in ("int", "float") and isinstance(value, bool))
        if not ok and not (value is None and key in ("delta", "leader")):
            raise doc.error(f"expected {want}, got {type(value).__name__}", *path, key)
    return mapping


def _enum(doc: _Doc, cls, value, *path):
    try:
        return cls(value)
    except ValueError:
        raise doc.error(f"{value!r} is not one of {[m.value for m in cls]}", *path) from None


def _int_list(doc: _Doc, values, *path) -> frozenset:
    for i, v in enumerate(values):
        if not isinstance(v, int) or isinstance(v, bool):
            raise doc.error("expected an integer id", *path, i)
    return frozenset(values)


def _script(doc: _Doc, cid, spec, path) -> dict:
    if not isinstance(cid, int):
        raise doc.error("script keys are client ids", *path)
    if not isinstance(spec, dict) or "ops" not in spec:
        raise doc.error("expected {start, ops}", *path)
    _typed(doc, spec, {"start": "int", "ops": "list"}, path)
    ops = []
    for i, raw in enumerate(spec["ops"]):
        p = path + ("ops", i)
        if not isinstance(raw, dict):
            raise doc.error("expected {op, key, value}", *p)
        _typed(doc, raw, {"op": "str", "key": "str", "value": "str"}, p)
        kind = {"read": Kind.READ, "update": Kind.UPDATE}.get(raw.get("op"))
        if kind is None:
            raise doc.error("op must be 'read' or 'update'", *p, "op")
        if "key" not in raw:
            raise doc.error("missing key", *p)
        if kind == Kind.UPDATE and "value" not in raw:
            raise doc.error("update needs a value", *p)
        ops.append(Op(kind, raw["key"], raw.get("value", "")))
    return {"start": spec.get("start", 0), "ops": ops}


def parse_scenario(text: str, source: str = "<scenario>") -> Scenario:
    doc = _Doc(text, source)
    d = doc.data
    if not isinstance(d, dict):
        raise doc.error("top level must be a mapping")
    for key in _REQUIRED_TOP:
        if key not in d:
            raise doc.error(f"missing required field {key!r}")
    top = {k: v for k, v in d.items() if k not in _SECTIONS}
    _typed(doc, top, _TOP, ())
    if d["schema"] != SCHEMA:
        raise doc.error(f"unsupported schema {d['schema']!r} (expected {SCHEMA!r})", "schema")
    sec = {name: _typed(doc, d.get(name) or {}, schema, (name,)) for name, schema in _SECTIONS.items()}

    try:
        params = SystemParams(sec["system"].get("n", 4), sec["system"].get("f", 1))
    except InvalidParams as e:
        raise doc.error(str(e), "system") from None
    seed = d.get("seed", 1)

    r = dict(sec["replica"])
    if "mode" in r:
        r["mode"] = _enum(doc, Mode, r["mode"], "replica", "mode")
    if "read_quorum_mode" in r:
        r["read_quorum_mode"] = _enum(doc, ReadQuorum, r["read_quorum_mode"], "replica", "read_quorum_mode")
    replica = ReplicaConfig(**r)

    n_raw = dict(sec["net"])
    outages = []
    for i, o in enumerate(n_raw.pop("outages", [])):
        _typed(doc, o, {"node": "str", "start": "int", "end": "int"}, ("net", "outages", i))
        outages.append(Outage(o["node"], o["start"], o["end"]))
    links = {}
    for i, link in enumerate(n_raw.pop("links", [])):
        _typed(doc, link, {"src": "str", "dst": "str", "delay": "int"}, ("net", "links", i))
        links[(link["src"], link["dst"])] = link["delay"]
    matrix = n_raw.pop("matrix", {})
    for a, row in matrix.items():
        if not isinstance(row, dict) or not all(isinstance(v, int) for v in row.values()):
            raise doc.error("matrix rows map region -> integer delay", "net", "matrix", a)
    if matrix:
        for a in matrix:
            for b in matrix:
                if b not in matrix[a]:
                    raise doc.error(f"missing delay {a} -> {b}", "net", "matrix", a)
    net = NetConfig(outages=outages, links=links, matrix=matrix, seed=seed, **n_raw)

    attack, randomized = None, False
    if d.get("adversary"):
        a = dict(sec["adversary"])
        randomized = a.pop("randomized", False)
        if not randomized:
            kw: dict[str, Any] = {"seed": seed}
            for key in ("controlled", "isolated", "censored_clients"):
                if key in a:
                    kw[key] = _int_list(doc, a[key], "adversary", key)
            if "variant" in a:
                kw["variant"] = _enum(doc, Variant, a["variant"], "adversary", "variant")
            if "drop_types" in a:
                bad = [t for t in a["drop_types"] if t not in MESSAGE_TYPES]
                if bad:
                    raise doc.error(f"unknown message types {bad}", "adversary", "drop_types")
                kw["drop_types"] = frozenset(a["drop_types"])
            for key in ("leader", "stale_reads", "drop_prob", "equivocate_prob"):
                if key in a:
                    kw[key] = a[key]
            attack = AttackPolicy(**kw)

    w = dict(sec["workload"])
    scripts = {cid: _script(doc, cid, s, ("workload", "scripts", cid))
               for cid, s in w.pop("scripts", {}).items()}
    workload = WorkloadSpec(scripts=scripts, **w)
    if workload.clients < 0 or workload.ops_per_client < 0 or workload.keys < 1:
        raise doc.error("clients/ops_per_client must be >= 0 and keys >= 1", "workload")
    if not 0.0 <= workload.read_ratio <= 1.0:
        raise doc.error("read_ratio must be in [0, 1]", "workload", "read_ratio")

    checks = d.get("checks", list(Scenario.checks))
    expect = {}
    for name, value in (d.get("expect") or {}).items():
        if value not in ("pass", "fail"):
            raise doc.error("expected 'pass' or 'fail'", "expect", name)
        expect[name] = value == "pass"
    if d.get("auth", "mac") not in ("mac", "ed25519"):
        raise doc.error("auth must be 'mac' or 'ed25519'", "auth")

    sc = Scenario(
        name=d["name"], params=params, replica=replica, client=ClientSpec(**sec["client"]),
        net=net, workload=workload, attack=attack, randomized_attack=randomized, seed=seed,
        horizon=d.get("horizon", 1_000_000), description=d.get("description", ""),
        auth=d.get("auth", "mac"), checks=tuple(checks), expect=expect,
        liveness_bound=d.get("liveness_bound"),
    )
    try:
        sc.validate()
    except ConfigError as e:
        path = tuple(e.field.split(".")) if e.field else ()
        raise ConfigError(e.message, e.field, doc.line(path), source) from None
    for name in expect:
        if name not in sc.checks:
            raise doc.error(f"expectation for a check that is not run: {name!r}", "expect", name)
    return sc


def load_scenario(ref: str) -> Scenario:
    """Load a scenario by file path or by shipped scenario name."""
    path = Path(ref)
    if not path.exists():
        path = SCENARIO_DIR / f"{ref}.yaml"
    if not path.exists():
        raise ConfigError(f"no such scenario file or shipped scenario: {ref!r}", source=ref)
    return parse_scenario(path.read_text(), str(path))


def shipped_scenarios() -> list[str]:
    return sorted(p.stem for p in SCENARIO_DIR.glob("*.yaml"))
