"""Domain types and the per-rescheduling-point cost model.

Times are seconds on a single clock. Deadlines are absolute; the optimizer
works on residual quantities (``due_date - now`` and remaining work) so the
same formulas hold at every rescheduling point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Literal, Mapping, NamedTuple, Optional

import numpy as np


class UnprofiledConfigurationError(LookupError):
    """No per-epoch time is known for a (job class, GPU type, g) triple."""


class InvalidScheduleError(ValueError):
    pass


@dataclass(frozen=True)
class GpuType:
    name: str
    relative_speed: float = 1.0

    def __post_init__(self):
        if not self.relative_speed > 0:
            raise ValueError(f"relative_speed must be positive, got {self.relative_speed}")


@dataclass(frozen=True)
class Node:
    """A GPU node.

    ``cost_rate[g - 1]`` is the cost per second of running the node with ``g``
    GPUs busy. Rates must be strictly increasing and affine in ``g``.
    """

    id: str
    gpu_type: GpuType
    capacity: int
    cost_rate: tuple[float, ...]

    def __post_init__(self):
        if self.capacity < 1:
            raise ValueError(f"node {self.id}: capacity must be >= 1")
        rates = tuple(float(c) for c in self.cost_rate)
        object.__setattr__(self, "cost_rate", rates)
        if len(rates) != self.capacity:
            raise ValueError(f"node {self.id}: need one cost rate per GPU count 1..{self.capacity}")
        if rates[0] < 0:
            raise ValueError(f"node {self.id}: negative cost rate")
        steps = np.diff(rates)
        if np.any(steps <= 0):
            raise ValueError(f"node {self.id}: cost rate must be strictly increasing in g")
        if len(steps) > 1 and not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
            raise ValueError(f"node {self.id}: cost rate must be affine in g")

    def cost(self, g: int) -> float:
        if not 1 <= g <= self.capacity:
            raise ValueError(f"node {self.id} has no {g}-GPU configuration")
        return self.cost_rate[g - 1]

    def is_equivalent(self, other: Node) -> bool:
        """Same hardware and same prices, so interchangeable for any job."""
        return (
            self.gpu_type == other.gpu_type
            and self.capacity == other.capacity
            and self.cost_rate == other.cost_rate
        )


@dataclass(frozen=True)
class JobSpec:
    id: str
    job_class: str
    total_epochs: int
    submission_time: float
    due_date: float
    tardiness_weight: float = 1.0
    batch_size: int = 1

    def __post_init__(self):
        if self.total_epochs < 1:
            raise ValueError(f"job {self.id}: total_epochs must be >= 1")
        if self.tardiness_weight < 0:
            raise ValueError(f"job {self.id}: tardiness_weight must be nonnegative")


class Assigned(NamedTuple):
    node: str
    g: int


#: Decision value for a job that waits until the next rescheduling point.
POSTPONED = None

Decision = Optional[Assigned]


@dataclass(frozen=True)
class JobState:
    """A job as seen by the optimizer at one rescheduling point.

    ``completed_epochs`` may be fractional while the job is running; it is
    rolled back to a snapshot boundary when the job is preempted.
    ``placement`` is the configuration the job currently runs on, if any.
    """

    spec: JobSpec
    completed_epochs: float = 0.0
    placement: Decision = None
    finished_at: Optional[float] = None

    def __post_init__(self):
        if not 0 <= self.completed_epochs <= self.spec.total_epochs:
            raise ValueError(f"job {self.spec.id}: completed_epochs out of range")
        if self.placement is not None and self.placement.g < 1:
            raise ValueError(f"job {self.spec.id}: running with g < 1")

    @property
    def id(self) -> str:
        return self.spec.id

    @property
    def status(self) -> str:
        if self.finished_at is not None:
            return "finished"
        return "running" if self.placement is not None else "queued"

    @property
    def remaining_epochs(self) -> float:
        return self.spec.total_epochs - self.completed_epochs


@dataclass(frozen=True)
class ProfileTable:
    """Per-epoch execution times keyed by ``(job_class, gpu_type, g)``."""

    entries: Mapping[tuple[str, str, int], float]

    def __post_init__(self):
        for key, t in self.entries.items():
            if not t > 0:
                raise ValueError(f"profile {key}: per-epoch time must be positive")

    def per_epoch(self, job_class: str, gpu_type: str, g: int) -> float:
        try:
            return self.entries[(job_class, gpu_type, g)]
        except KeyError:
            raise UnprofiledConfigurationError(
                f"no profile for class={job_class!r} gpu_type={gpu_type!r} g={g}"
            ) from None

    def curves(self) -> dict[tuple[str, str], dict[int, float]]:
        out: dict[tuple[str, str], dict[int, float]] = {}
        for (cls, gtype, g), t in self.entries.items():
            out.setdefault((cls, gtype), {})[g] = t
        return out

    def check_scaling(self, strict: bool = False) -> list[str]:
        """Return the (class, type) pairs whose curve breaks sublinear scaling.

        Per-epoch time must not increase with ``g`` and the GPU-seconds per
        epoch ``g * t(g)`` must not decrease. ``strict`` demands the latter
        grow strictly, which rejects perfectly linear speedup.
        """
        bad = []
        for (cls, gtype), curve in sorted(self.curves().items()):
            gs = sorted(curve)
            for a, b in zip(gs, gs[1:]):
                ta, tb = curve[a], curve[b]
                work_a, work_b = a * ta, b * tb
                if tb > ta * (1 + 1e-12):
                    bad.append(f"{cls}/{gtype}: time increases from g={a} to g={b}")
                elif strict and not work_b > work_a * (1 + 1e-12):
                    bad.append(f"{cls}/{gtype}: g*t(g) not strictly increasing at g={b}")
                elif work_b < work_a * (1 - 1e-12):
                    bad.append(f"{cls}/{gtype}: superlinear speedup at g={b}")
        return bad


@dataclass(frozen=True)
class Schedule:
    decisions: Mapping[str, Decision]
    timestamp: float = 0.0

    def assigned(self) -> dict[str, Assigned]:
        return {j: d for j, d in self.decisions.items() if d is not None}

    def postponed(self) -> list[str]:
        return [j for j, d in self.decisions.items() if d is None]

    def gpus_in_use(self) -> dict[str, int]:
        used: dict[str, int] = {}
        for d in self.decisions.values():
            if d is not None:
                used[d.node] = used.get(d.node, 0) + d.g
        return used


@dataclass(frozen=True)
class ObjectiveBreakdown:
    tardiness_cost: float = 0.0
    worst_case_cost: float = 0.0
    first_end_cost: float = 0.0

    @property
    def total(self) -> float:
        return self.tardiness_cost + self.worst_case_cost + self.first_end_cost


class _Tables:
    """Dense arrays derived from an instance; shared by every optimizer path.

    Configurations are enumerated node by node (nodes sorted by id), g
    ascending, so a configuration's index is its lexicographic tie-break rank.
    Jobs are sorted by id for the same reason.
    """

    def __init__(self, inst: ProblemInstance):
        self.nodes = sorted(inst.nodes, key=lambda n: n.id)
        self.jobs = sorted(inst.jobs, key=lambda j: j.id)
        self.node_index = {n.id: i for i, n in enumerate(self.nodes)}
        self.job_index = {j.id: i for i, j in enumerate(self.jobs)}
        self.capacity = np.array([n.capacity for n in self.nodes], dtype=np.int64)

        configs = [(i, g) for i, n in enumerate(self.nodes) for g in range(1, n.capacity + 1)]
        self.configs = configs
        self.config_index = {cfg: c for c, cfg in enumerate(configs)}
        self.cfg_node = np.array([c[0] for c in configs], dtype=np.int64)
        self.cfg_g = np.array([c[1] for c in configs], dtype=np.int64)
        self.cfg_rate = np.array([self.nodes[i].cost(g) for i, g in configs], dtype=float)

        # equivalence class per node: identical hardware and prices
        klass: list[int] = []
        reps: list[Node] = []
        for n in self.nodes:
            for k, r in enumerate(reps):
                if n.is_equivalent(r):
                    klass.append(k)
                    break
            else:
                klass.append(len(reps))
                reps.append(n)
        self.node_class = np.array(klass, dtype=np.int64)

        n_jobs, n_cfg = len(self.jobs), len(configs)
        times = np.empty((n_jobs, n_cfg))
        for a, job in enumerate(self.jobs):
            for c, (i, g) in enumerate(configs):
                times[a, c] = remaining_time(job, self.nodes[i], g, inst.profiles)
        self.times = times
        self.cost = times * self.cfg_rate
        self.due = np.array([j.spec.due_date for j in self.jobs], dtype=float)
        self.weight = np.array([j.spec.tardiness_weight for j in self.jobs], dtype=float)
        self.now = float(inst.now)
        if n_cfg:
            self.fastest = times.min(axis=1) if n_jobs else np.zeros(0)
            self.slowest = times.max(axis=1) if n_jobs else np.zeros(0)
        else:
            self.fastest = np.full(n_jobs, math.inf)
            self.slowest = np.full(n_jobs, math.inf)
        self.pressure = (self.now + self.fastest) - self.due
        self.meets_due = (self.now + times) < self.due[:, None]
        self.current_node = np.array(
            [
                self.node_index.get(j.placement.node, -1) if j.placement is not None else -1
                for j in self.jobs
            ],
            dtype=np.int64,
        )

    def feasible_by_cost(self, a: int) -> list[int]:
        """Configurations meeting job ``a``'s due date, cheapest first."""
        idx = np.flatnonzero(self.meets_due[a])
        return sorted(idx.tolist(), key=lambda c: (self.cost[a, c], c))

    def all_by_time(self, a: int) -> list[int]:
        return sorted(range(len(self.configs)), key=lambda c: (self.times[a, c], c))

    def best(self, a: int) -> int:
        feasible = self.feasible_by_cost(a)
        if feasible:
            return feasible[0]
        return self.all_by_time(a)[0]


@dataclass(frozen=True)
class ProblemInstance:
    """Everything the optimizer sees at one rescheduling point.

    ``first_end_rate`` selects how the first-ending job's energy cost is
    priced: ``"job"`` uses the rate for the job's own GPU count, ``"node"``
    the rate for all GPUs busy on its node.
    """

    nodes: tuple[Node, ...]
    jobs: tuple[JobState, ...]
    profiles: ProfileTable
    rho: float = 100.0
    horizon: float = 300.0
    now: float = 0.0
    first_end_rate: Literal["job", "node"] = "job"

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "jobs", tuple(self.jobs))
        if self.rho < 0:
            raise ValueError("rho must be nonnegative")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if self.first_end_rate not in ("job", "node"):
            raise ValueError(f"unknown first_end_rate {self.first_end_rate!r}")
        if len({n.id for n in self.nodes}) != len(self.nodes):
            raise ValueError("duplicate node ids")
        if len({j.id for j in self.jobs}) != len(self.jobs):
            raise ValueError("duplicate job ids")
        names: dict[str, GpuType] = {}
        for n in self.nodes:
            if names.setdefault(n.gpu_type.name, n.gpu_type) != n.gpu_type:
                raise ValueError(f"conflicting definitions of GPU type {n.gpu_type.name}")

    @cached_property
    def tables(self) -> _Tables:
        return _Tables(self)

    def node(self, node_id: str) -> Node:
        return self.tables.nodes[self.tables.node_index[node_id]]

    def job(self, job_id: str) -> JobState:
        return self.tables.jobs[self.tables.job_index[job_id]]

    def configurations(self) -> Iterable[tuple[Node, int]]:
        for node in self.tables.nodes:
            for g in range(1, node.capacity + 1):
                yield node, g


def remaining_time(job: JobState, node: Node, g: int, profiles: ProfileTable) -> float:
    """Seconds needed to finish ``job`` on ``g`` GPUs of ``node``."""
    if not 1 <= g <= node.capacity:
        raise ValueError(f"node {node.id} has no {g}-GPU configuration")
    per_epoch = profiles.per_epoch(job.spec.job_class, node.gpu_type.name, g)
    if job.finished_at is not None:
        return 0.0
    return job.remaining_epochs * per_epoch


def pressure(job: JobState, instance: ProblemInstance) -> float:
    """How far past its due date the job ends even on its fastest configuration.

    Positive values mean lateness is unavoidable.
    """
    fastest = min(remaining_time(job, n, g, instance.profiles) for n, g in instance.configurations())
    return (instance.now + fastest) - job.spec.due_date


def best_configuration(job: JobState, instance: ProblemInstance) -> Assigned:
    """Cheapest configuration that meets the due date, else the fastest one.

    Occupancy is ignored. Ties go to the lowest (node id, g).
    """
    candidates = []
    for node, g in instance.configurations():
        t = remaining_time(job, node, g, instance.profiles)
        candidates.append((t, node, g))
    if not candidates:
        raise ValueError("empty catalog")
    feasible = [(t * n.cost(g), n.id, g) for t, n, g in candidates if instance.now + t < job.spec.due_date]
    if feasible:
        _, node_id, g = min(feasible)
    else:
        _, node_id, g = min((t, n.id, g) for t, n, g in candidates)
    return Assigned(node_id, g)


def check_schedule(schedule: Schedule, instance: ProblemInstance) -> None:
    """Raise :class:`InvalidScheduleError` unless the schedule fits the instance."""
    tabs = instance.tables
    if set(schedule.decisions) != set(tabs.job_index):
        missing = set(tabs.job_index) - set(schedule.decisions)
        extra = set(schedule.decisions) - set(tabs.job_index)
        raise InvalidScheduleError(f"schedule/job mismatch: missing={sorted(missing)} extra={sorted(extra)}")
    for job_id, d in schedule.decisions.items():
        if d is None:
            continue
        if d.node not in tabs.node_index:
            raise InvalidScheduleError(f"job {job_id}: unknown node {d.node}")
        cap = instance.node(d.node).capacity
        if not 1 <= d.g <= cap:
            raise InvalidScheduleError(f"job {job_id}: g={d.g} outside 1..{cap} on {d.node}")
    for node_id, used in schedule.gpus_in_use().items():
        cap = instance.node(node_id).capacity
        if used > cap:
            raise InvalidScheduleError(f"node {node_id}: {used} GPUs assigned, capacity {cap}")


def evaluate_objective(schedule: Schedule, instance: ProblemInstance) -> ObjectiveBreakdown:
    """Proxy cost of a schedule at ``instance.now``.

    Sums, in job-id order, weighted tardiness of started jobs and
    rho-weighted worst-case tardiness of postponed ones (waiting one horizon
    then running on their slowest configuration), plus, in node-id order, the
    energy cost of each node's first-ending job.
    """
    check_schedule(schedule, instance)
    tabs = instance.tables
    now, rho, horizon = instance.now, instance.rho, instance.horizon

    tardiness = 0.0
    worst = 0.0
    first: dict[str, tuple[float, float]] = {}
    used = schedule.gpus_in_use()
    for a, job in enumerate(tabs.jobs):
        d = schedule.decisions[job.id]
        w = job.spec.tardiness_weight
        due = job.spec.due_date
        if d is None:
            worst += rho * w * max(0.0, ((now + horizon) + tabs.slowest[a]) - due)
            continue
        node = instance.node(d.node)
        t = float(tabs.times[a, _config_index(tabs, d)])
        tardiness += w * max(0.0, (now + t) - due)
        g_rate = d.g if instance.first_end_rate == "job" else used[d.node]
        # strict < keeps the lowest job id on ties
        if d.node not in first or t < first[d.node][0]:
            first[d.node] = (t, t * node.cost(g_rate))
    first_end = 0.0
    for node in tabs.nodes:
        if node.id in first:
            first_end += first[node.id][1]
    return ObjectiveBreakdown(float(tardiness), float(worst), float(first_end))


def _config_index(tabs: _Tables, d: Assigned) -> int:
    return tabs.config_index[(tabs.node_index[d.node], d.g)]
