from __future__ import annotations

import pytest

from gpusched.model import GpuType, JobSpec, JobState, Node, ProblemInstance, ProfileTable

V100 = GpuType("V100", 1.0)
T4 = GpuType("T4", 0.45)


def node(node_id: str, capacity: int = 1, rates=None, gpu_type: GpuType = V100) -> Node:
    if rates is None:
        rates = tuple(0.01 * (1 + g) for g in range(1, capacity + 1))
    return Node(node_id, gpu_type, capacity, tuple(rates))


def job(job_id: str, epochs: int = 1, due: float = 1e9, weight: float = 1.0, cls: str = "X",
        done: float = 0.0, submit: float = 0.0, placement=None) -> JobState:
    return JobState(JobSpec(job_id, cls, epochs, submit, due, weight), done, placement)


def profiles(per_epoch: dict, cls: str = "X") -> ProfileTable:
    """``per_epoch`` maps (gpu type name, g) to seconds."""
    return ProfileTable({(cls, t, g): v for (t, g), v in per_epoch.items()})


def instance(nodes, jobs, table, **kw) -> ProblemInstance:
    return ProblemInstance(tuple(nodes), tuple(jobs), table, **kw)


@pytest.fixture
def two_config():
    """One V100 node with two GPUs: 100 s at cost 1.0 or 60 s at cost 1.5."""
    n1 = node("n1", 2, (0.01, 0.025))
    table = profiles({("V100", 1): 100.0, ("V100", 2): 60.0})
    return n1, table


def scenario_snapshot(seed: int, node_mix: str = "scenario1", n_nodes: int = 4, horizon: float = 900.0,
                      upto: int | None = None) -> ProblemInstance:
    """A mid-run queue from a generated scenario: some jobs already running.

    Jobs submitted up to the ``upto``-th arrival are present; a first-come
    placement of the earliest half is treated as the running set, with
    random progress.
    """
    import numpy as np

    from gpusched.baselines import baseline_schedule
    from gpusched.workload import ScenarioSpec, generate

    spec = ScenarioSpec(n_nodes=n_nodes, node_mix=node_mix, seed=seed)
    workload, catalog = generate(spec)
    rng = np.random.default_rng(seed)
    k = upto if upto is not None else int(rng.integers(2, len(workload)))
    now = workload[k - 1].submission_time
    present = workload[:k]
    nodes = catalog.nodes()
    first = ProblemInstance(nodes, [JobState(j) for j in present[: (k + 1) // 2]], catalog.profiles,
                            horizon=horizon, now=now)
    placed = baseline_schedule(first, "fifo").assigned()
    jobs = []
    for j in present:
        if j.id in placed:
            done = float(rng.uniform(0, j.total_epochs))
            jobs.append(JobState(j, done, placed[j.id]))
        else:
            jobs.append(JobState(j))
    return ProblemInstance(nodes, jobs, catalog.profiles, rho=spec.rho, horizon=horizon, now=now)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
