"""Seeded property campaign: random adversaries, adversarial pre-GST scheduling.

Each seed fixes a whole scenario (system size, network, adversary, workload);
the same seed is run under each patch mode.
"""

from __future__ import annotations

import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from ..protocol_core import SystemParams
from ..replica import Mode, ReadQuorum, ReplicaConfig
from ..simnet import NetConfig
from .checks import check_result
from .runner import run_scenario
from .scenario import ClientSpec, Scenario, WorkloadSpec

CAMPAIGN_CHECKS = ("agreement", "integrity", "liveness", "linearizability", "metrics")


def campaign_scenario(seed: int, mode: Mode) -> Scenario:
    rng = random.Random(f"campaign/{seed}")
    params = SystemParams(7, 2) if rng.random() < 0.15 else SystemParams(4, 1)
    pre_gst = rng.choice(["delay", "drop"])
    net = NetConfig(
        gst=rng.choice([0, 300, 1500]),
        delay=rng.randint(5, 15),
        jitter=rng.randint(0, 8),
        pre_gst=pre_gst,
        pre_gst_min=1,
        pre_gst_max=rng.choice([60, 250]),
        drop_prob=0.25 if pre_gst == "drop" else 0.0,
        retransmit_interval=40,
        seed=seed,
    )
    replica = ReplicaConfig(
        mode=mode,
        read_quorum_mode=ReadQuorum.OPTIMIZED,
        checkpoint_period=rng.choice([2, 3, 5]),
        propose_timeout=rng.choice([300, 600]),
        batch_limit=rng.choice([1, 3, 16]),
        state_transfer_delay=rng.choice([100, 300]),
        window=200,
    )
    workload = WorkloadSpec(clients=rng.randint(1, 3), ops_per_client=rng.randint(3, 6),
                            read_ratio=0.4, keys=2, stagger=rng.randint(0, 50))
    return Scenario(
        name=f"campaign-{seed}-{mode.value}", params=params, replica=replica,
        client=ClientSpec(fast_reads=True, retransmit=500, read_timeout=150),
        net=net, workload=workload, randomized_attack=True, seed=seed, horizon=400_000,
        checks=CAMPAIGN_CHECKS,
    )


@dataclass
class CampaignRun:
    seed: int
    mode: str
    failures: dict  # check name -> detail, only failing checks
    n: int
    regency: int
    decided: int


@dataclass
class CampaignSummary:
    runs: list[CampaignRun] = field(default_factory=list)

    def failing(self, check: str) -> list[CampaignRun]:
        return [r for r in self.runs if check in r.failures]

    def format(self) -> str:
        lines = [f"{len(self.runs)} runs"]
        for check in CAMPAIGN_CHECKS:
            bad = self.failing(check)
            lines.append(f"  {check:16s} {len(self.runs) - len(bad)} pass, {len(bad)} fail"
                         + (f" (e.g. seed {bad[0].seed} {bad[0].mode})" if bad else ""))
        return "\n".join(lines)


def run_one(seed: int, mode: str) -> CampaignRun:
    result = run_scenario(campaign_scenario(seed, Mode(mode)))
    report = check_result(result)
    failures = {r.name: r.detail for r in report.results if not r.ok}
    decided = max(result.metrics.executed.values(), default=0)
    return CampaignRun(seed, mode, failures, result.scenario.params.n, result.metrics.regency, decided)


def run_campaign(seeds: Iterable[int], modes: Sequence[Mode] = (Mode.BROADCAST, Mode.FORWARD),
                 workers: int = 1) -> CampaignSummary:
    jobs = [(s, Mode(m).value) for s in seeds for m in modes]
    summary = CampaignSummary()
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            summary.runs = list(pool.map(run_one, *zip(*jobs), chunksize=16))
    else:
        summary.runs = [run_one(s, m) for s, m in jobs]
    return summary
