"""Build and run a scenario; persist its trace, metrics and history."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from ..adversary import Adversary, AttackPolicy, randomized_adversary
from ..client import Client
from ..lincheck import Operation
from ..protocol_core import make_authenticator
from ..replica import Replica
from ..simnet import Simulator
from ..trace import Trace, write_jsonl
from .metrics import RunMetrics, decide_lag
from .scenario import Scenario


@dataclass
class RunResult:
    scenario: Scenario
    metrics: RunMetrics
    history: list[Operation]  # completed operations followed by pending ones
    trace: Trace
    sim: Simulator
    replicas: list[Replica]
    clients: list[Client]
    attack: Optional[AttackPolicy]

    @property
    def correct(self) -> set[str]:
        controlled = self.attack.controlled if self.attack else ()
        return {r.name for r in self.replicas if r.id not in controlled}

    @property
    def isolated(self) -> set[str]:
        return {f"r{i}" for i in self.attack.isolated} if self.attack else set()

    def correct_replicas(self) -> list[Replica]:
        return [r for r in self.replicas if r.name in self.correct]


def run_scenario(scenario: Scenario, out_dir: Optional[Path] = None) -> RunResult:
    scenario.validate()
    params = scenario.params
    auth = make_authenticator(scenario.auth, params.n, scenario.seed)
    attack = scenario.attack
    if scenario.randomized_attack:
        attack = randomized_adversary(scenario.seed, params, scenario.workload.clients)
    adversary = None
    if attack is not None:
        adversary = Adversary(attack, params, auth, scenario.replica.initial_value)
    trace = Trace()
    sim = Simulator(scenario.net, adversary, trace)
    replicas = [Replica(i, params, scenario.replica, auth) for i in range(params.n)]
    for r in replicas:
        sim.add_node(r)
    clients = []
    cs = scenario.client
    for cid, (start, ops) in sorted(scenario.client_ops().items()):
        c = Client(cid, params, ops, scenario.replica.read_quorum_mode, cs.fast_reads,
                   cs.retransmit, cs.read_timeout, start, scenario.workload.think)
        clients.append(c)
        sim.add_node(c)
    sim.start()
    sim.run(scenario.horizon)

    history = [op for c in clients for op in c.history]
    history += [op for c in clients if (op := c.pending_operation()) is not None]
    result = RunResult(scenario, RunMetrics(), history, trace, sim, replicas, clients, attack)
    result.metrics = live_metrics(result)
    if out_dir is not None:
        persist(result, Path(out_dir))
    return result


def live_metrics(result: RunResult) -> RunMetrics:
    """Metrics from the nodes' own counters (cross-checked against the trace)."""
    correct = result.correct
    m = RunMetrics(end_time=result.sim.now, planned=result.scenario.planned_ops())
    m.completed = sum(c.completed for c in result.clients)
    m.latencies = {c.name: list(c.latencies) for c in result.clients if c.latencies}
    m.messages = dict(result.sim.sent)
    m.decisions = {r.name: r.decide_count for r in result.replicas if r.decide_count}
    m.executed = {r.name: r.last_executed for r in result.replicas if r.last_executed}
    m.regency = max((r.regency for r in result.replicas if r.name in correct), default=0)
    m.correct_stops = sum(r.stop_count for r in result.replicas if r.name in correct)
    if result.isolated:
        m.isolated_lag = decide_lag(result.trace, result.isolated, correct)
    return m


def persist(result: RunResult, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "trace.jsonl", "w") as fh:
        write_jsonl(result.trace, fh)
    with open(out_dir / "metrics.csv", "w") as fh:
        result.metrics.write_csv(fh)
    with open(out_dir / "history.jsonl", "w") as fh:
        for op in result.history:
            fh.write(op.to_json() + "\n")


def read_history(path: Path) -> list[Operation]:
    with open(path) as fh:
        return [Operation(**json.loads(line)) for line in fh if line.strip()]
