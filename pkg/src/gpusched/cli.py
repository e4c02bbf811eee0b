"""Command-line experiment runner.

Exit codes: 0 success, 1 usage or parse error, 2 validation failure,
3 oracle size guard.

Output files (all with a fixed header, floats in shortest round-trip form):

    trace.csv    time,kind,job,node,g
    ledger.csv   policy,seed,energy_cost,tardiness_penalty,total_cost,makespan,calls,preemptions,migrations,rework_epochs
    calls.csv    policy,seed,call,time,queue_length,objective
    timing.csv   policy,seed,call,time,wall_seconds
    summary.csv  policy,runs,energy_mean,total_mean,makespan_mean,call_seconds_mean,rg_reduction

Wall-clock measurements live only in ``timing.csv`` and ``summary.csv``;
every other file is byte-identical across repeated runs with the same flags.
"""

from __future__ import annotations

import argparse
import csv
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

from . import files, sim
from .baselines import baseline_schedule
from .greedy import GreedyConfig, optimize
from .model import InvalidScheduleError, evaluate_objective
from .oracle import OracleTooLargeError, exhaustive_optimum, validate_schedule
from .workload import PRICE_PER_KWH, PUE, ScenarioSpec, armida_trace, generate

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_GUARD = 0, 1, 2, 3

TRACE_HEADER = ("time", "kind", "job", "node", "g")
LEDGER_HEADER = ("policy", "seed", "energy_cost", "tardiness_penalty", "total_cost", "makespan",
                 "calls", "preemptions", "migrations", "rework_epochs")
CALLS_HEADER = ("policy", "seed", "call", "time", "queue_length", "objective")
TIMING_HEADER = ("policy", "seed", "call", "time", "wall_seconds")
SUMMARY_HEADER = ("policy", "runs", "energy_mean", "total_mean", "makespan_mean", "call_seconds_mean",
                  "rg_reduction")

# reductions reported for clusters of up to 100 nodes with measured profiles
REFERENCE_REDUCTION = {1: 0.62, 2: 0.30}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _fmt(value) -> str:
    return repr(float(value)) if isinstance(value, float) else str(value)


def _write_csv(path: Path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(header)
        for row in rows:
            out.writerow([_fmt(v) for v in row])


def _ledger_row(policy: str, seed, ledger: sim.CostLedger) -> tuple:
    return (policy, seed, ledger.energy_cost, ledger.tardiness_penalty, ledger.total_cost, ledger.makespan,
            len(ledger.per_call_stats), ledger.preemptions, ledger.migrations, float(ledger.rework_epochs))


def _load_workload(args):
    """Return (jobs, catalog, price, pue, rho, horizon, label)."""
    if args.instance is not None:
        if args.scenario is not None:
            raise UsageError("--instance and --scenario are mutually exclusive")
        if args.instance == "armida":
            jobs, catalog = armida_trace()
            return jobs, catalog, PRICE_PER_KWH, PUE, 100.0, None, "armida"
        inst = files.read_instance(args.instance)
        if inst.completed:
            print("note: completed_epochs ignored; the simulation starts every job from scratch", file=sys.stderr)
        return list(inst.jobs), inst.catalog, inst.price_per_kwh, inst.pue, inst.rho, inst.horizon, args.instance
    if args.scenario is None:
        raise UsageError("one of --instance or --scenario is required")
    spec = ScenarioSpec(n_nodes=args.nodes, node_mix=f"scenario{args.scenario}", seed=args.seed)
    jobs, catalog = generate(spec)
    return jobs, catalog, PRICE_PER_KWH, PUE, spec.rho, None, f"scenario{args.scenario}"


def _sim_config(policy: str, seed: int, rg_iters: int, period: Optional[float], price: float, pue: float,
                rho: float, horizon: Optional[float]) -> sim.SimConfig:
    return sim.SimConfig(policy=policy, periodic_interval=period, price_per_kwh=price, pue=pue, rho=rho,
                         horizon=horizon, greedy=GreedyConfig(max_iterations=rg_iters, seed=seed))


def cmd_simulate(args) -> int:
    jobs, catalog, price, pue, rho, horizon, _ = _load_workload(args)
    config = _sim_config(args.policy, args.seed, args.rg_iters, args.period, price, pue, rho, horizon)
    result = sim.run(jobs, catalog, config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "trace.csv", TRACE_HEADER, result.trace)
    _write_csv(out / "ledger.csv", LEDGER_HEADER, [_ledger_row(args.policy, args.seed, result.ledger)])
    stats = result.ledger.per_call_stats
    _write_csv(out / "calls.csv", CALLS_HEADER,
               [(args.policy, args.seed, k, s.time, s.queue_length, s.objective) for k, s in enumerate(stats)])
    _write_csv(out / "timing.csv", TIMING_HEADER,
               [(args.policy, args.seed, k, s.time, s.wall_seconds) for k, s in enumerate(stats)])
    led = result.ledger
    print(f"{args.policy}: energy {led.energy_cost:.6f} EUR, tardiness {led.tardiness_penalty:.6f}, "
          f"total {led.total_cost:.6f}, makespan {led.makespan:.1f} s, "
          f"{len(stats)} calls, {led.preemptions} preemptions, {led.migrations} migrations")
    return EXIT_OK


def _compare_one(task):
    scenario, nodes, seed, policy, rg_iters, period = task
    spec = ScenarioSpec(n_nodes=nodes, node_mix=f"scenario{scenario}", seed=seed)
    jobs, catalog = generate(spec)
    config = _sim_config(policy, seed, rg_iters, period, PRICE_PER_KWH, PUE, spec.rho, None)
    return sim.run(jobs, catalog, config).ledger


def cmd_compare(args) -> int:
    if args.seeds < 1:
        raise UsageError("--seeds must be >= 1")
    tasks = [(args.scenario, args.nodes, seed, policy, args.rg_iters, args.period)
             for policy in sim.POLICIES for seed in range(args.seeds)]
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            ledgers = list(pool.map(_compare_one, tasks))
    else:
        ledgers = [_compare_one(t) for t in tasks]
    runs: dict[str, list] = {p: [] for p in sim.POLICIES}
    for (_, _, seed, policy, _, _), ledger in zip(tasks, ledgers):
        runs[policy].append((seed, ledger))

    summaries = {p: sim.summarize([l for _, l in runs[p]]) for p in sim.POLICIES}
    rg_total = summaries["rg"].total_mean
    rows = []
    for p in sim.POLICIES:
        s = summaries[p]
        red = "" if p == "rg" else sim.reduction(rg_total, s.total_mean)
        rows.append((p, s.runs, s.energy_mean, s.total_mean, s.makespan_mean, s.call_seconds_mean, red))

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "ledger.csv", LEDGER_HEADER,
               [_ledger_row(p, seed, l) for p in sim.POLICIES for seed, l in runs[p]])
    _write_csv(out / "calls.csv", CALLS_HEADER,
               [(p, seed, k, s.time, s.queue_length, s.objective)
                for p in sim.POLICIES for seed, l in runs[p] for k, s in enumerate(l.per_call_stats)])
    _write_csv(out / "timing.csv", TIMING_HEADER,
               [(p, seed, k, s.time, s.wall_seconds)
                for p in sim.POLICIES for seed, l in runs[p] for k, s in enumerate(l.per_call_stats)])
    _write_csv(out / "summary.csv", SUMMARY_HEADER, rows)

    print(f"scenario {args.scenario}, {args.nodes} nodes, {args.seeds} seeds")
    print(f"{'policy':<7}{'energy EUR':>14}{'total cost':>16}{'makespan s':>14}{'call s':>12}{'RG saves':>10}")
    for p, _, e, t, m, c, red in rows:
        red_txt = "" if red == "" else f"{100 * red:.1f}%"
        print(f"{p:<7}{e:>14.4f}{t:>16.2f}{m:>14.1f}{c:>12.5f}{red_txt:>10}")
    best = min(summaries[p].total_mean for p in sim.POLICIES if p != "rg")
    ref = REFERENCE_REDUCTION.get(args.scenario)
    print(f"RG saving vs best baseline: {100 * sim.reduction(rg_total, best):.1f}%"
          + (f" (reference at up to 100 nodes: around {100 * ref:.0f}%)" if ref else ""))
    return EXIT_OK


def _schedule_objective(schedule, problem) -> str:
    b = evaluate_objective(schedule, problem)
    return (f"f_OBJ {b.total!r} (tardiness {b.tardiness_cost!r}, postponement {b.worst_case_cost!r}, "
            f"first-ending {b.first_end_cost!r})")


def cmd_validate(args) -> int:
    inst = files.read_instance(args.instance)
    schedule = files.read_schedule(args.schedule)
    problem = inst.problem()
    report = validate_schedule(schedule, problem, strict=args.strict)
    print(report.format())
    status = EXIT_OK if report.feasible else EXIT_INVALID
    if report.feasible:
        try:
            print("schedule " + _schedule_objective(schedule, problem))
        except InvalidScheduleError as exc:
            print(f"schedule rejected: {exc}")
            status = EXIT_INVALID
    if args.oracle:
        try:
            _, best = exhaustive_optimum(problem)
        except OracleTooLargeError as exc:
            print(f"oracle refused: {exc}", file=sys.stderr)
            return EXIT_GUARD
        print(f"oracle optimum f_OBJ {best.total!r}")
    return status


def cmd_oracle(args) -> int:
    inst = files.read_instance(args.instance)
    problem = inst.problem()
    try:
        schedule, best = exhaustive_optimum(problem)
    except OracleTooLargeError as exc:
        print(f"oracle refused: {exc}", file=sys.stderr)
        return EXIT_GUARD
    print(f"optimum f_OBJ {best.total!r}")
    print(files.dumps_schedule(schedule), end="")
    if args.schedule is None:
        return EXIT_OK
    given = files.read_schedule(args.schedule)
    report = validate_schedule(given, problem)
    print(report.format())
    if not report.feasible:
        return EXIT_INVALID
    value = evaluate_objective(given, problem).total
    print(f"given schedule f_OBJ {value!r}, gap {value - best.total!r}")
    return EXIT_OK


def cmd_optimize(args) -> int:
    inst = files.read_instance(args.instance)
    problem = inst.problem()
    if args.policy == "rg":
        schedule, _ = optimize(problem, GreedyConfig(max_iterations=args.rg_iters, seed=args.seed))
    else:
        schedule = baseline_schedule(problem, args.policy)
    text = files.dumps_schedule(schedule)
    if args.out:
        Path(args.out).write_text(text)
    else:
        print(text, end="")
    print(_schedule_objective(schedule, problem), file=sys.stderr)
    return EXIT_OK


def cmd_generate(args) -> int:
    if args.preset == "armida":
        jobs, catalog = armida_trace()
        rho = 100.0
    else:
        spec = ScenarioSpec(n_nodes=args.nodes, node_mix=f"scenario{args.scenario}", seed=args.seed)
        jobs, catalog = generate(spec)
        rho = spec.rho
    inst = files.InstanceFile(catalog, tuple(jobs), rho=rho)
    text = files.dumps_instance(inst)
    if args.out:
        Path(args.out).write_text(text)
    else:
        print(text, end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gpusched", description="Energy- and deadline-aware GPU cluster scheduling experiments.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def run_flags(p, workload=True):
        if workload:
            p.add_argument("--instance", help="instance file, or 'armida' for the built-in 8-job trace")
        p.add_argument("--scenario", type=int, choices=(1, 2))
        p.add_argument("--nodes", type=int, default=10)
        p.add_argument("--rg-iters", type=int, default=1000)
        p.add_argument("--period", type=float, default=None, help="periodic rescheduling interval in seconds")
        p.add_argument("--out", default=".", help="output directory")

    p = sub.add_parser("simulate", help="run one policy on one workload")
    run_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--policy", choices=sim.POLICIES, default="rg")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="all four policies over several seeds")
    run_flags(p, workload=False)
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--workers", type=int, default=1, help="parallel processes for the replications")
    p.set_defaults(func=cmd_compare, scenario=1)

    p = sub.add_parser("validate", help="check a schedule against every constraint")
    p.add_argument("--instance", required=True)
    p.add_argument("--schedule", required=True)
    p.add_argument("--strict", action="store_true", help="treat the node-usage constraint as binding")
    p.add_argument("--oracle", action="store_true", help="also report the exhaustive optimum")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("oracle", help="exhaustive optimum of a tiny instance")
    p.add_argument("--instance", required=True)
    p.add_argument("--schedule", help="schedule to validate and compare with the optimum")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("optimize", help="one scheduling decision for an instance file")
    p.add_argument("--instance", required=True)
    p.add_argument("--policy", choices=sim.POLICIES, default="rg")
    p.add_argument("--rg-iters", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="schedule file (stdout if omitted)")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("generate", help="write a synthetic instance file")
    p.add_argument("--scenario", type=int, choices=(1, 2), default=1)
    p.add_argument("--preset", choices=("armida",))
    p.add_argument("--nodes", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="instance file (stdout if omitted)")
    p.set_defaults(func=cmd_generate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, files.InstanceFormatError, InvalidScheduleError, OSError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
