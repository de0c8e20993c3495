"""Command-line pipeline: load, sample, reduce, build, solve and report.

Exit codes: 0 when every model is solved to optimality, 2 when a time budget
ran out but every model has an incumbent, 1 on any error.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

from .milp import OPTIMAL, TIME_LIMIT, export_lp_format
from .model import EvScenario, Instance, InstanceError, load_instance
from .report import (RunRecord, RunReport, expected_series, exchange_series, format_table, profit_table,
                     write_exchange_csv, write_profits_csv, write_solution_json)
from .scenarios import (EvDistribution, kmeans_reduce, read_scenarios_csv, sample_scenarios,
                        write_scenarios_csv)
from .scheduler import (JOINT, MONOLITHIC, PER_SCENARIO, TWO_STAGE, build_model, check_evs,
                        solve_scenarios)

log = logging.getLogger("p2psched")

EXIT_OK, EXIT_ERROR, EXIT_TIME_LIMIT = 0, 1, 2
THREADS_ENV = "P2PSCHED_THREADS"


@dataclass(frozen=True)
class RunConfig:
    instance: Path
    scenarios: str = "none"          # "none", "sample" or a CSV path
    n: int = 1000
    k: int = 3
    seed: int = 0
    strategy: str = TWO_STAGE
    aggregation: str = PER_SCENARIO
    time_budget: float = 600.0
    gap: float | None = None
    out: Path = Path("out")
    emit_lp: bool = False
    threads: int = 1

    def check(self) -> None:
        if self.scenarios == "sample" and not 1 <= self.k <= self.n:
            raise ValueError(f"need 1 <= k <= n, got k={self.k}, n={self.n}")
        if self.strategy not in (MONOLITHIC, TWO_STAGE):
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.aggregation not in (PER_SCENARIO, JOINT):
            raise ValueError(f"unknown aggregation {self.aggregation!r}")


class PipelineError(RuntimeError):
    pass


def env_threads(default: int = 1) -> int:
    raw = os.environ.get(THREADS_ENV)
    if not raw:
        return default
    try:
        return max(1, int(raw))
    except ValueError:
        raise PipelineError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None


def resolve_scenarios(config: RunConfig, instance: Instance) -> list[EvScenario]:
    """Representatives for the run; empty means the instance's own EVs."""
    if config.scenarios == "none":
        return []
    if config.scenarios == "sample":
        dist = EvDistribution(horizon=instance.horizon, seed=config.seed)
        sample = sample_scenarios(dist, config.n)
        reduced = kmeans_reduce(sample, config.k, config.seed)
        log.info("reduced %d samples to %d representatives (inertia %.4f)",
                 config.n, len(reduced.representatives), reduced.inertia)
        return reduced.representatives
    reps = read_scenarios_csv(config.scenarios, instance.horizon)
    if not reps:
        raise PipelineError(f"{config.scenarios}: no scenarios")
    total = sum(r.weight for r in reps)
    if config.aggregation == PER_SCENARIO and abs(total - 1.0) > 1e-9:
        raise PipelineError(f"{config.scenarios}: weights sum to {total}, expected 1")
    return reps


def _options(config: RunConfig, instance: Instance):
    opts = replace(instance.options, time_budget=config.time_budget)
    if config.gap is not None:
        opts = replace(opts, abs_gap=config.gap)
    return opts


def run(config: RunConfig) -> int:
    config.check()
    instance = load_instance(config.instance)
    reps = resolve_scenarios(config, instance)
    options = _options(config, instance)
    config.out.mkdir(parents=True, exist_ok=True)

    outcomes = solve_scenarios(instance, reps, config.strategy, config.aggregation, options, config.threads)
    records, ledgers, series = [], [], []
    status = OPTIMAL
    for i, oc in enumerate(outcomes):
        sol = oc.solution
        if not sol.values or oc.profit is None:
            raise PipelineError(f"scenario {i}: solver finished with status {sol.status} and no solution")
        if sol.status == TIME_LIMIT:
            status = TIME_LIMIT
        ledgers.append((oc.weight, oc.profit.aggregate))
        series.append((oc.weight, exchange_series(sol, oc.index, instance)))
        records.append(RunRecord(oc.weight, list(oc.evs), sol.status, sol.objective, sol.gap,
                                 dict(sol.info.get("assignment", {})), sol.values, oc.profit.aggregate))

    # per-scenario weights already sum to 1; a joint or fleet run carries weight 1
    ledger = profit_table(ledgers)
    objective = math.fsum(w * r.objective for w, r in zip((o.weight for o in outcomes), records))
    gap = math.fsum(w * r.gap for w, r in zip((o.weight for o in outcomes), records))
    report = RunReport(status, objective, gap, config.strategy, config.aggregation, ledger,
                       expected_series(series), records)

    write_solution_json(report, config.out / "solution.json")
    write_profits_csv(ledger, config.out / "profits.csv")
    write_exchange_csv(report.series, config.out)
    write_scenarios_csv(reps or list(instance.evs), config.out / "scenarios.csv")
    if config.emit_lp:
        for i, oc in enumerate(outcomes):
            model, _ = build_model(instance, oc.evs)
            name = "model.lp" if i == 0 else f"model_r{i}.lp"
            (config.out / name).write_text(export_lp_format(model))

    print(format_table(ledger))
    print(f"status: {status}  objective: {objective:.2f}  gap: {gap:.2e}")
    return EXIT_OK if status == OPTIMAL else EXIT_TIME_LIMIT


def export_model(config: RunConfig, output: Path | None = None) -> Path:
    """Build the model of the first representative (or the instance fleet) and write LP text."""
    config.check()
    instance = load_instance(config.instance)
    reps = resolve_scenarios(config, instance)
    if not reps:
        evs = instance.evs
    elif config.aggregation == JOINT:
        evs = tuple(replace(r, weight=1.0) for r in reps)
    else:
        evs = (replace(reps[0], weight=1.0),)
    check_evs(instance, evs)
    model, _ = build_model(instance, evs)
    text = export_lp_format(model)
    path = output or config.out / "model.lp"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path


def _parse_sample(tokens: Sequence[str]) -> dict[str, int]:
    out = {}
    for tok in tokens:
        key, sep, val = tok.partition("=")
        if not sep or key not in ("n", "k"):
            raise argparse.ArgumentTypeError(f"--sample expects n=<int> k=<int>, got {tok!r}")
        out[key] = int(val)
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="p2psched", description="Day-ahead P2P community energy scheduler")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--instance", required=True, type=Path, help="instance JSON file")
        sp.add_argument("--scenarios", default=None, help="'sample', 'none' or a scenario CSV path")
        sp.add_argument("--sample", nargs="*", metavar="KEY=VALUE",
                        help="shorthand for --scenarios sample with n=<int> k=<int>")
        sp.add_argument("--n", type=int, default=1000, help="number of sampled scenarios")
        sp.add_argument("--k", type=int, default=3, help="number of representatives")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--aggregation", choices=(PER_SCENARIO, JOINT), default=PER_SCENARIO)
        sp.add_argument("--out", type=Path, default=Path("out"), help="output directory")

    r = sub.add_parser("run", help="solve and write all artifacts")
    common(r)
    r.add_argument("--strategy", choices=(MONOLITHIC, TWO_STAGE), default=TWO_STAGE)
    r.add_argument("--time-budget", type=float, default=600.0, help="seconds per solved model")
    r.add_argument("--gap", type=float, default=None, help="absolute optimality gap in $")
    r.add_argument("--emit-lp", action="store_true", help="also write model.lp")

    e = sub.add_parser("export-model", help="write the LP-format model without solving")
    common(e)
    e.add_argument("--output", type=Path, default=None, help="LP file path (default <out>/model.lp)")
    return p


def config_from_args(args: argparse.Namespace) -> RunConfig:
    scenarios = args.scenarios
    n, k = args.n, args.k
    if args.sample is not None:
        if scenarios not in (None, "sample"):
            raise PipelineError("--sample conflicts with --scenarios " + scenarios)
        scenarios = "sample"
        extra = _parse_sample(args.sample)
        n, k = extra.get("n", n), extra.get("k", k)
    return RunConfig(
        instance=args.instance, scenarios=scenarios or "none", n=n, k=k, seed=args.seed,
        strategy=getattr(args, "strategy", TWO_STAGE), aggregation=args.aggregation,
        time_budget=getattr(args, "time_budget", 600.0), gap=getattr(args, "gap", None),
        out=args.out, emit_lp=getattr(args, "emit_lp", False), threads=env_threads(),
    )


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on bad flags, which would read as a time limit here
        return EXIT_OK if exc.code in (0, None) else EXIT_ERROR
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = config_from_args(args)
        if args.command == "run":
            return run(config)
        path = export_model(config, args.output)
        print(f"wrote {path}")
        return EXIT_OK
    except (InstanceError, PipelineError, ValueError, OSError, argparse.ArgumentTypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
