"""Side-by-side comparison of protocol modes on one scenario."""

from __future__ import annotations

import csv
from typing import IO, Iterable, Optional, Sequence

from ..replica import Mode
from .checks import check_result
from .runner import run_scenario
from .scenario import Scenario

COLUMNS = ("mode", "seed", "completed", "planned", "mean_latency", "messages", "req_decision",
           "fwd_decision", "regency_changes", "isolated_lag", "checks")


def compare_modes(scenario: Scenario, modes: Sequence[Mode] = tuple(Mode),
                  seeds: Optional[Iterable[int]] = None) -> list[dict]:
    """One row per (mode, seed); everything but the mode is held fixed."""
    rows = []
    for mode in modes:
        for seed in seeds if seeds is not None else (scenario.seed,):
            result = run_scenario(scenario.with_mode(Mode(mode)).with_seed(seed))
            m = result.metrics
            lat = m.mean_latency()
            rows.append({
                "mode": Mode(mode).value,
                "seed": seed,
                "completed": m.completed,
                "planned": m.planned,
                "mean_latency": None if lat is None else round(lat, 3),
                "messages": sum(m.messages.values()),
                "req_decision": m.req_decision,
                "fwd_decision": m.fwd_decision,
                "regency_changes": m.regency,
                "isolated_lag": None if m.isolated_lag is None else round(m.isolated_lag, 3),
                "checks": "pass" if check_result(result).passed else "fail",
            })
    return rows


def write_table(rows: Sequence[dict], fh: IO[str]) -> None:
    w = csv.DictWriter(fh, fieldnames=COLUMNS, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)


def format_table(rows: Sequence[dict]) -> str:
    cells = [[str(c) for c in COLUMNS]]
    cells += [["-" if r[c] is None else str(r[c]) for c in COLUMNS] for r in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(COLUMNS))]
    return "\n".join("  ".join(v.rjust(w) for v, w in zip(row, widths)) for row in cells)
