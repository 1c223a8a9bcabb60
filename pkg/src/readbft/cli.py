"""Command line: run, compare, check and list scenarios.

Exit status: 0 when everything passes, 1 when a check fails (against its
expected outcome), 2 for configuration errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path
from typing import Optional, Sequence

from .harness.checks import check_result
from .harness.compare import format_table, write_table, compare_modes
from .harness.runner import run_scenario
from .harness.scenario import ConfigError, Scenario, load_scenario, shipped_scenarios
from .replica import Mode

EXIT_OK, EXIT_CHECK, EXIT_CONFIG = 0, 1, 2


def _load(args) -> Scenario:
    sc = load_scenario(args.scenario)
    if args.seed is not None:
        sc = sc.with_seed(args.seed)
    if args.horizon is not None:
        sc = dataclasses.replace(sc, horizon=args.horizon)
    sc.validate()
    return sc


def _summary(result) -> str:
    m = result.metrics
    lat = m.mean_latency()
    parts = [
        f"scenario {result.scenario.name} seed {result.scenario.seed}",
        f"completed {m.completed}/{m.planned}",
        f"end t={m.end_time}",
        f"regency changes {m.regency}",
        f"REQ-DECISION {m.req_decision}",
        f"FWD-DECISION {m.fwd_decision}",
    ]
    if lat is not None:
        parts.append(f"mean latency {lat:.1f}")
    return ", ".join(parts)


def cmd_run(args) -> int:
    sc = _load(args)
    out = Path(args.out) / sc.name if args.out else None
    result = run_scenario(sc, out)
    print(_summary(result))
    if out is not None:
        print(f"artifacts in {out}")
    return EXIT_OK


def cmd_check(args) -> int:
    sc = _load(args)
    out = Path(args.out) / sc.name if args.out else None
    result = run_scenario(sc, out)
    report = check_result(result)
    print(_summary(result))
    print(report.format())
    print("PASS" if report.passed else "FAIL")
    return EXIT_OK if report.passed else EXIT_CHECK


def cmd_compare(args) -> int:
    sc = _load(args)
    try:
        modes = [Mode(m) for m in args.modes.split(",")]
    except ValueError as e:
        raise ConfigError(str(e), "--modes") from None
    seeds = range(sc.seed, sc.seed + args.seeds)
    rows = compare_modes(sc, modes, seeds)
    print(format_table(rows))
    if args.out:
        path = Path(args.out)
        path.mkdir(parents=True, exist_ok=True)
        with open(path / f"compare-{sc.name}.csv", "w") as fh:
            write_table(rows, fh)
    return EXIT_OK


def cmd_list(args) -> int:
    for name in shipped_scenarios():
        sc = load_scenario(name)
        desc = " ".join(sc.description.split())
        print(f"{name:30s} {desc}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="readbft", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def scenario_cmd(name, fn, help_text):
        s = sub.add_parser(name, help=help_text)
        s.add_argument("scenario", help="shipped scenario name or path to a YAML file")
        s.add_argument("--seed", type=int, help="override the scenario seed")
        s.add_argument("--horizon", type=int, help="override the horizon (sim-time)")
        s.add_argument("--out", help="output directory for artifacts")
        s.set_defaults(fn=fn)
        return s

    scenario_cmd("run", cmd_run, "run a scenario and write trace, metrics and history")
    scenario_cmd("check", cmd_check, "run a scenario and its checks")
    c = scenario_cmd("compare", cmd_compare, "compare protocol modes on one scenario")
    c.add_argument("--modes", default="baseline,broadcast,forward")
    c.add_argument("--seeds", type=int, default=1, help="number of consecutive seeds per mode")
    ls = sub.add_parser("list-scenarios", help="list shipped scenarios")
    ls.set_defaults(fn=cmd_list)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
