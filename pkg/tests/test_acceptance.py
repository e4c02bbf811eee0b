"""Acceptance criteria, one test each; every test prints a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v -s``; the lines are also
collected into an "acceptance criteria" section at the end of any run.
"""

import csv
import statistics
import time

import numpy as np
import pytest

import test_properties
from conftest import ACCEPTANCE_LINES, scenario_snapshot
from gpusched import sim
from gpusched.baselines import BaselinePolicy, baseline_schedule
from gpusched.cli import main
from gpusched.greedy import GreedyConfig, optimize
from gpusched.oracle import exhaustive_optimum, validate_schedule
from gpusched.workload import PRICE_PER_KWH, PUE, ScenarioSpec, armida_trace, generate, tiny_instance

SEEDS = range(10)


def report(name: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)


def run_scenario(mix: str):
    """All four policies over ten seeds at N=10, J=100."""
    runs = {p: [] for p in sim.POLICIES}
    started = time.perf_counter()
    for seed in SEEDS:
        jobs, catalog = generate(ScenarioSpec(n_nodes=10, node_mix=mix, seed=seed))
        for p in sim.POLICIES:
            config = sim.SimConfig(policy=p, greedy=GreedyConfig(max_iterations=1000, seed=seed))
            runs[p].append(sim.run(jobs, catalog, config))
    return runs, time.perf_counter() - started


@pytest.fixture(scope="module")
def scenario1():
    return run_scenario("scenario1")


@pytest.fixture(scope="module")
def scenario2():
    return run_scenario("scenario2")


def test_1_oracle_optimality_at_tiny_scale():
    started = time.perf_counter()
    hits = below = 0
    for seed in range(100):
        inst = tiny_instance(seed)
        _, best = exhaustive_optimum(inst)
        _, got = optimize(inst, GreedyConfig(max_iterations=1000, seed=seed))
        tol = 1e-9 * max(1.0, abs(best.total))
        hits += abs(got.total - best.total) <= tol
        below += got.total < best.total - tol
    elapsed = time.perf_counter() - started
    ok = hits >= 95 and below == 0 and elapsed < 10
    report("1 oracle optimality", ok, f"RG attains the optimum on {hits}/100 (need >= 95), "
           f"{below} below it, {elapsed:.1f} s")
    assert below == 0
    assert elapsed < 10
    assert hits >= 95


def test_2_validator_soundness():
    checked = bad = 0

    def check(inst, schedule):
        nonlocal checked, bad
        checked += 1
        bad += not validate_schedule(schedule, inst).feasible

    for seed in range(20):
        for mix in ("scenario1", "scenario2"):
            inst = scenario_snapshot(seed, node_mix=mix)
            check(inst, optimize(inst, GreedyConfig(max_iterations=200, seed=seed))[0])
            for policy in BaselinePolicy:
                check(inst, baseline_schedule(inst, policy))
        inst = tiny_instance(seed)
        check(inst, optimize(inst, GreedyConfig(max_iterations=200, seed=seed))[0])
        for policy in BaselinePolicy:
            check(inst, baseline_schedule(inst, policy))
    # every decision taken during full simulations
    for policy in sim.POLICIES:
        jobs, catalog = armida_trace()
        sim.run(jobs, catalog, sim.SimConfig(policy=policy, periodic_interval=300.0), observer=check)
        for seed in range(3):
            jobs, catalog = generate(ScenarioSpec(n_nodes=4, node_mix=f"scenario{seed % 2 + 1}", seed=seed))
            sim.run(jobs, catalog, sim.SimConfig(policy=policy, greedy=GreedyConfig(max_iterations=200, seed=seed)),
                    observer=check)
    report("2 validator soundness", bad == 0, f"{checked - bad}/{checked} schedules with zero violations")
    assert bad == 0


def _comparison(runs, elapsed, name, soft_target):
    means = {p: statistics.fmean(r.ledger.total_cost for r in runs[p]) for p in sim.POLICIES}
    best_base = min(means[p] for p in ("fifo", "edf", "ps"))
    saving = sim.reduction(means["rg"], best_base)
    dominates = all(means["rg"] < means[p] for p in ("fifo", "edf", "ps"))
    ok = dominates and elapsed < 300
    soft = "met" if saving >= soft_target else "missed"
    detail = ", ".join(f"{p} {means[p]:.1f}" for p in sim.POLICIES)
    report(name, ok, f"mean total cost {detail}; saving vs best baseline {100 * saving:.1f}% "
           f"(soft target {100 * soft_target:.0f}% {soft}); {elapsed:.0f} s")
    return dominates


def test_3_scenario1_comparison(scenario1):
    runs, elapsed = scenario1
    assert _comparison(runs, elapsed, "3 scenario-1 comparison", 0.25)
    assert elapsed < 300


def test_4_scenario2_comparison(scenario2):
    runs, elapsed = scenario2
    assert _comparison(runs, elapsed, "4 scenario-2 comparison", 0.10)
    assert elapsed < 300


def test_5_optimizer_latency(scenario1, scenario2):
    walls = [s.wall_seconds for runs in (scenario1[0], scenario2[0]) for r in runs["rg"]
             for s in r.ledger.per_call_stats]
    p99 = float(np.percentile(walls, 99))
    report("5 optimizer latency", p99 < 0.1, f"p99 {1000 * p99:.1f} ms over {len(walls)} calls "
           f"(max {1000 * max(walls):.1f} ms)")
    assert p99 < 0.1


def test_6_energy_ledger_exactness(scenario1, scenario2):
    worst = 0.0
    count = 0
    results = [r for runs in (scenario1[0], scenario2[0]) for rs in runs.values() for r in rs]
    jobs, catalog = armida_trace()
    for p in sim.POLICIES:
        results.append(sim.run(jobs, catalog, sim.SimConfig(policy=p, periodic_interval=300.0)))
    for r in results:
        walked = sim.energy_from_trace(r.trace, r.nodes)
        worst = max(worst, abs(r.ledger.energy_cost - walked) / walked)
        count += 1
    node = catalog.nodes()[1]
    rate_ok = (sim.SimConfig().price_per_kwh, sim.SimConfig().pue) == (0.172, 1.33) and all(
        node.cost(g) == (200.0 + g * 250.0) * PUE * PRICE_PER_KWH / 3.6e6 for g in (1, 2))
    ok = worst <= 1e-6 and rate_ok
    report("6 energy-ledger exactness", ok, f"worst relative gap {worst:.2e} over {count} runs; "
           f"ARMIDA rates at 0.172 EUR/kWh x PUE 1.33: {'yes' if rate_ok else 'no'}")
    assert ok


def test_7_armida_replay():
    jobs, catalog = armida_trace()
    res = sim.run(jobs, catalog, sim.SimConfig(periodic_interval=300.0))
    where, shared = {}, 0.0
    last = None
    for rec in res.trace:
        if last is not None and rec.time > last:
            on_06 = sum(1 for n in where.values() if n == "armida-06")
            if on_06 >= 2:
                shared += rec.time - last
        last = rec.time
        if rec.kind in ("completion", "preempt", "migrate"):
            where.pop(rec.job, None)
        if rec.kind in ("start", "migrate"):
            where[rec.job] = rec.node
    finished = len(res.ledger.completion_times)
    preempted = sum(1 for rec in res.trace if rec.kind == "preempt")
    ok = finished == 8 and shared > 0 and preempted >= 1
    report("7 ARMIDA replay", ok, f"{finished}/8 jobs completed, {shared:.0f} s of GPU sharing on armida-06, "
           f"{preempted} preemptions, energy {res.ledger.energy_cost:.4f} EUR")
    assert ok


def test_8_determinism(tmp_path):
    flags = ["simulate", "--scenario", "1", "--nodes", "10", "--policy", "rg", "--seed", "7"]
    for d in ("a", "b"):
        assert main(flags + ["--out", str(tmp_path / d)]) == 0
    same = all((tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
               for f in ("trace.csv", "ledger.csv", "calls.csv"))

    cmp_flags = ["compare", "--scenario", "2", "--nodes", "3", "--seeds", "2", "--rg-iters", "100"]
    for d in ("c", "e"):
        assert main(cmp_flags + ["--out", str(tmp_path / d)]) == 0
    same &= all((tmp_path / "c" / f).read_bytes() == (tmp_path / "e" / f).read_bytes()
                for f in ("ledger.csv", "calls.csv"))

    def untimed(path):
        with open(path, newline="") as fh:
            return [{k: v for k, v in row.items() if k != "call_seconds_mean"} for row in csv.DictReader(fh)]

    same &= untimed(tmp_path / "c" / "summary.csv") == untimed(tmp_path / "e" / "summary.csv")

    parity = 0
    cases = [tiny_instance(s) for s in range(20)] + [scenario_snapshot(s, node_mix=m)
                                                     for s in range(10) for m in ("scenario1", "scenario2")]
    for k, inst in enumerate(cases):
        fast = optimize(inst, GreedyConfig(seed=k))
        slow = optimize(inst, GreedyConfig(seed=k, vectorized=False))
        parity += fast == slow
    ok = same and parity == len(cases)
    report("8 determinism", ok, f"repeated CLI outputs byte-identical: {'yes' if same else 'no'}; "
           f"parallel/sequential winners identical on {parity}/{len(cases)} instances")
    assert ok


def test_9_property_suites():
    suites = [
        test_properties.test_pressure_shifts_with_due_date,
        test_properties.test_best_configuration_meets_due_date_when_possible,
        test_properties.test_synthesized_profiles_are_sublinear,
        test_properties.test_swap_frequency,
        test_properties.test_selection_frequency,
        test_properties.test_greedy_schedule_properties,
        test_properties.test_weight_scaling,
        test_properties.test_objective_additive_over_disjoint_parts,
    ]
    failed = []
    for suite in suites:
        try:
            suite()
        except Exception as exc:  # report every broken suite, not just the first
            failed.append(f"{suite.__name__}: {type(exc).__name__}")
    report("9 property suites", not failed,
           f"{len(suites) - len(failed)}/{len(suites)} suites hold over 1000 cases each"
           + (f"; broken: {', '.join(failed)}" if failed else ""))
    assert not failed
