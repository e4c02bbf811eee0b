"""Discrete-event simulation of a GPU cluster under a scheduling policy.

Rescheduling happens at every job arrival, job completion and (optionally)
periodic tick. Events sharing a timestamp are handled together and trigger
one optimizer call. Jobs that lose or change their configuration restart
from their last epoch snapshot.
"""

from __future__ import annotations

import heapq
import math
import statistics
import time
from dataclasses import dataclass, field
from typing import Callable, Literal, NamedTuple, Optional, Sequence

from .baselines import BaselinePolicy, baseline_schedule
from .greedy import GreedyConfig, optimize
from .model import Assigned, JobSpec, JobState, Node, ProblemInstance, Schedule, evaluate_objective
from .workload import PRICE_PER_KWH, PUE, Catalog

# event kinds in tie-break order
ARRIVAL, COMPLETION, TICK = 0, 1, 2
_KIND_NAMES = {ARRIVAL: "arrival", COMPLETION: "completion", TICK: "tick"}

Policy = Literal["rg", "fifo", "edf", "ps"]
POLICIES = ("rg", "fifo", "edf", "ps")


class TraceRecord(NamedTuple):
    """One line of the event trace.

    ``kind`` is an event (``arrival``, ``completion``, ``tick``) or a
    resulting action (``start``, ``preempt``, ``migrate``). For ``migrate``
    the node and g are the new configuration; for ``preempt`` and
    ``completion`` the configuration just released.
    """

    time: float
    kind: str
    job: str = ""
    node: str = ""
    g: int = 0


class CallStat(NamedTuple):
    time: float
    wall_seconds: float
    objective: float
    queue_length: int


@dataclass
class CostLedger:
    energy_cost: float = 0.0
    tardiness_penalty: float = 0.0
    makespan: float = 0.0
    per_call_stats: list[CallStat] = field(default_factory=list)
    rework_epochs: float = 0.0
    preemptions: int = 0
    migrations: int = 0
    completion_times: dict[str, float] = field(default_factory=dict)

    @property
    def total_cost(self) -> float:
        return self.energy_cost + self.tardiness_penalty

    @property
    def mean_call_seconds(self) -> float:
        if not self.per_call_stats:
            return 0.0
        return statistics.fmean(s.wall_seconds for s in self.per_call_stats)


@dataclass(frozen=True)
class SimConfig:
    policy: Policy = "rg"
    periodic_interval: Optional[float] = None
    snapshot_epochs: int = 1
    price_per_kwh: float = PRICE_PER_KWH
    pue: float = PUE
    rho: float = 100.0
    horizon: Optional[float] = None
    greedy: GreedyConfig = GreedyConfig()
    first_end_rate: Literal["job", "node"] = "job"

    def __post_init__(self):
        if self.policy not in POLICIES:
            raise ValueError(f"unknown policy {self.policy!r}")
        if self.pue < 1:
            raise ValueError("pue must be >= 1")
        if self.snapshot_epochs < 1:
            raise ValueError("snapshot_epochs must be >= 1")
        if self.periodic_interval is not None and not self.periodic_interval > 0:
            raise ValueError("periodic_interval must be positive")


@dataclass
class SimResult:
    ledger: CostLedger
    trace: list[TraceRecord]
    nodes: tuple[Node, ...]


def default_horizon(workload: Sequence[JobSpec], periodic_interval: Optional[float]) -> float:
    """Periodic interval if set, else mean inter-arrival time (1 h fallback)."""
    if periodic_interval is not None:
        return float(periodic_interval)
    times = sorted(j.submission_time for j in workload)
    if len(times) >= 2 and times[-1] > times[0]:
        return (times[-1] - times[0]) / (len(times) - 1)
    return 3600.0


class _Running:
    __slots__ = ("placement", "started_at", "epochs_at_start", "per_epoch", "finish", "version")

    def __init__(self, placement, started_at, epochs_at_start, per_epoch, finish, version):
        self.placement = placement
        self.started_at = started_at
        self.epochs_at_start = epochs_at_start
        self.per_epoch = per_epoch
        self.finish = finish
        self.version = version


def run(workload: Sequence[JobSpec], catalog: Catalog, config: SimConfig = SimConfig(),
        observer: Optional[Callable[[ProblemInstance, Schedule], None]] = None) -> SimResult:
    """Simulate the workload to completion and return the ledger and trace.

    ``observer``, if given, sees every rescheduling point's instance and the
    schedule chosen for it.
    """
    nodes = catalog.nodes(config.price_per_kwh, config.pue)
    by_id = {n.id: n for n in nodes}
    profiles = catalog.profiles
    specs = {j.id: j for j in workload}
    if len(specs) != len(workload):
        raise ValueError("duplicate job ids in workload")
    horizon = config.horizon if config.horizon is not None else default_horizon(workload, config.periodic_interval)
    policy = None if config.policy == "rg" else BaselinePolicy(config.policy)

    events: list[tuple] = []
    for j in workload:
        heapq.heappush(events, (j.submission_time, ARRIVAL, j.id, 0))
    if config.periodic_interval is not None and workload:
        first = min(j.submission_time for j in workload)
        heapq.heappush(events, (first + config.periodic_interval, TICK, "", 0))

    ledger = CostLedger()
    trace: list[TraceRecord] = []
    progress: dict[str, float] = {}
    running: dict[str, _Running] = {}
    finished: dict[str, float] = {}
    versions: dict[str, int] = {}
    last_time = min((j.submission_time for j in workload), default=0.0)
    start_time = last_time

    def epochs_now(jid: str, now: float) -> float:
        r = running[jid]
        done = r.epochs_at_start + (now - r.started_at) / r.per_epoch
        return min(done, specs[jid].total_epochs)

    def node_rate(now_used: dict[str, int]) -> float:
        return sum(by_id[n].cost(g) for n, g in now_used.items() if g > 0)

    def gpus_used() -> dict[str, int]:
        used: dict[str, int] = {}
        for r in running.values():
            used[r.placement.node] = used.get(r.placement.node, 0) + r.placement.g
        return used

    while len(finished) < len(specs):
        if not events:
            raise RuntimeError("simulation stalled with unfinished jobs")
        now = events[0][0]
        batch = []
        while events and events[0][0] == now:
            batch.append(heapq.heappop(events))

        # energy for the interval since the previous event
        ledger.energy_cost += node_rate(gpus_used()) * (now - last_time)
        last_time = now

        reschedule = False
        for _, kind, jid, version in batch:
            if kind == COMPLETION:
                r = running.get(jid)
                if r is None or r.version != version:
                    continue  # stale prediction
                del running[jid]
                progress[jid] = float(specs[jid].total_epochs)
                finished[jid] = now
                trace.append(TraceRecord(now, "completion", jid, r.placement.node, r.placement.g))
            elif kind == ARRIVAL:
                progress[jid] = 0.0
                trace.append(TraceRecord(now, "arrival", jid))
            else:
                trace.append(TraceRecord(now, "tick"))
                if len(finished) < len(specs):
                    heapq.heappush(events, (now + config.periodic_interval, TICK, "", 0))
            reschedule = True
        if not reschedule or len(finished) == len(specs):
            continue

        active = [jid for jid in progress if jid not in finished]
        states = []
        for jid in sorted(active):
            done = epochs_now(jid, now) if jid in running else progress[jid]
            placement = running[jid].placement if jid in running else None
            states.append(JobState(specs[jid], done, placement))
        instance = ProblemInstance(nodes, states, profiles, rho=config.rho, horizon=horizon, now=now,
                                   first_end_rate=config.first_end_rate)
        tic = time.perf_counter()
        if policy is None:
            schedule, breakdown = optimize(instance, config.greedy)
            wall = time.perf_counter() - tic
            objective = breakdown.total
        else:
            schedule = baseline_schedule(instance, policy)
            wall = time.perf_counter() - tic
            objective = evaluate_objective(schedule, instance).total
        ledger.per_call_stats.append(CallStat(now, wall, objective, len(states)))
        if observer is not None:
            observer(instance, schedule)

        # release first so migrations never see a transiently over-full node
        starts = []
        for state in states:
            jid = state.id
            new = schedule.decisions[jid]
            old = running.get(jid)
            if old is not None and new == old.placement:
                continue
            if old is not None:
                done = state.completed_epochs
                kept = math.floor(done / config.snapshot_epochs + 1e-9) * config.snapshot_epochs
                kept = min(kept, done)
                ledger.rework_epochs += done - kept
                progress[jid] = kept
                del running[jid]
                if new is None:
                    ledger.preemptions += 1
                    trace.append(TraceRecord(now, "preempt", jid, old.placement.node, old.placement.g))
                else:
                    ledger.migrations += 1
                    trace.append(TraceRecord(now, "migrate", jid, new.node, new.g))
            elif new is not None:
                trace.append(TraceRecord(now, "start", jid, new.node, new.g))
            if new is not None:
                starts.append((jid, new))
        for jid, new in starts:
            spec = specs[jid]
            node = by_id[new.node]
            per_epoch = profiles.per_epoch(spec.job_class, node.gpu_type.name, new.g)
            done = progress[jid]
            finish = now + (spec.total_epochs - done) * per_epoch
            versions[jid] = versions.get(jid, 0) + 1
            running[jid] = _Running(Assigned(new.node, new.g), now, done, per_epoch, finish, versions[jid])
            heapq.heappush(events, (finish, COMPLETION, jid, versions[jid]))

    for jid, t in finished.items():
        spec = specs[jid]
        ledger.tardiness_penalty += spec.tardiness_weight * max(0.0, t - spec.due_date)
    ledger.completion_times = dict(sorted(finished.items()))
    ledger.makespan = (max(finished.values()) - start_time) if finished else 0.0
    return SimResult(ledger, trace, nodes)


def energy_from_trace(trace: Sequence[TraceRecord], nodes: Sequence[Node]) -> float:
    """Recompute the energy bill by walking the trace's placement changes.

    Independent of the simulator's own accumulator: it rebuilds per-node GPU
    usage from start/migrate/preempt/completion records and integrates the
    node cost rate over every interval of constant usage.
    """
    rates = {n.id: n for n in nodes}
    where: dict[str, tuple[str, int]] = {}
    used: dict[str, int] = {}
    total = 0.0
    last = None
    for rec in sorted(enumerate(trace), key=lambda p: (p[1].time, p[0])):
        rec = rec[1]
        if last is not None and rec.time > last:
            for node_id, g in used.items():
                if g > 0:
                    total += rates[node_id].cost(g) * (rec.time - last)
        last = rec.time if last is None else max(last, rec.time)
        if rec.kind in ("completion", "preempt", "migrate"):
            if rec.job in where:
                n, g = where.pop(rec.job)
                used[n] -= g
        if rec.kind in ("start", "migrate"):
            where[rec.job] = (rec.node, rec.g)
            used[rec.node] = used.get(rec.node, 0) + rec.g
    return total


@dataclass(frozen=True)
class Summary:
    runs: int
    energy_mean: float
    energy_std: float
    total_mean: float
    total_std: float
    makespan_mean: float
    makespan_std: float
    call_seconds_mean: float


def summarize(ledgers: Sequence[CostLedger]) -> Summary:
    """Mean and population standard deviation across runs."""
    if not ledgers:
        raise ValueError("summarize needs at least one ledger")

    def stats(values):
        values = list(values)
        return statistics.fmean(values), statistics.pstdev(values)

    e = stats(l.energy_cost for l in ledgers)
    t = stats(l.total_cost for l in ledgers)
    m = stats(l.makespan for l in ledgers)
    calls = statistics.fmean(l.mean_call_seconds for l in ledgers)
    return Summary(len(ledgers), e[0], e[1], t[0], t[1], m[0], m[1], calls)


def reduction(rg_total: float, baseline_total: float) -> float:
    """Relative total-cost saving of the optimizer over a baseline."""
    return 1.0 - rg_total / baseline_total
