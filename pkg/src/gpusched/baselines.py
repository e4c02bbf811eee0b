"""Ordering-only schedulers used as comparison points.

They never touch a job once it runs: no preemption, no migration, no
resizing. Queued jobs are placed in policy order using the same
per-job configuration rule as the greedy optimizer.
"""

from __future__ import annotations

import enum
from typing import Mapping

from .model import Assigned, JobState, ProblemInstance, Schedule


class BaselinePolicy(str, enum.Enum):
    FIFO = "fifo"
    EDF = "edf"
    PS = "ps"

    def key(self, job: JobState):
        spec = job.spec
        if self is BaselinePolicy.FIFO:
            return (spec.submission_time, spec.id)
        if self is BaselinePolicy.EDF:
            return (spec.due_date, spec.id)
        return (-spec.tardiness_weight, spec.id)


def baseline_schedule(instance: ProblemInstance, policy: BaselinePolicy | str,
                      locked: Mapping[str, Assigned] | None = None) -> Schedule:
    """Keep running jobs where they are and place queued ones in policy order.

    ``locked`` maps every running job to its configuration; by default it is
    read from the jobs' current placements. Each queued job takes its best
    configuration if it fits, otherwise the first fitting one among its
    due-date-meeting configurations by cost, then all configurations by time.
    """
    policy = BaselinePolicy(policy)
    tabs = instance.tables
    if locked is None:
        locked = {j.id: j.placement for j in tabs.jobs if j.placement is not None}
    free = tabs.capacity.copy()
    decisions = {}
    for job_id, d in locked.items():
        if job_id not in tabs.job_index:
            raise KeyError(f"locked job {job_id} not in instance")
        free[tabs.node_index[d.node]] -= d.g
        decisions[job_id] = Assigned(d.node, d.g)
    if (free < 0).any():
        raise ValueError("locked assignments exceed node capacity")

    queued = sorted((j for j in tabs.jobs if j.id not in locked), key=policy.key)
    for job in queued:
        a = tabs.job_index[job.id]
        decisions[job.id] = None
        for c in [tabs.best(a)] + tabs.feasible_by_cost(a) + tabs.all_by_time(a):
            i, g = tabs.configs[c]
            if free[i] >= g:
                free[i] -= g
                decisions[job.id] = Assigned(tabs.nodes[i].id, g)
                break
    return Schedule({j.id: decisions[j.id] for j in tabs.jobs}, instance.now)
