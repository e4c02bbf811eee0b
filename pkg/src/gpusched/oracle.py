"""Exact view of the allocation problem: variable encoding, constraint
checker, and brute-force optimum for tiny instances.

Constraint ids (``MSha`` ... ``MShx``) follow the mixed-integer formulation
of the problem. Nothing here calls an external solver; the bilinear
first-ending term is evaluated directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .model import (
    Assigned,
    ObjectiveBreakdown,
    ProblemInstance,
    Schedule,
    evaluate_objective,
)

TOLERANCE = 1e-9
ORACLE_LIMIT = 10**6


class OracleTooLargeError(ValueError):
    """Raised when an instance has too many decision combinations to enumerate."""


@dataclass
class MinlpEncoding:
    """0/1 and continuous variables of one schedule.

    Array axes are (job, node, g) with jobs and nodes in id order and
    ``g - 1`` as the last index. ``y[n, g - 1] == 1`` marks the total GPU
    count in use on node ``n``.
    """

    job_ids: list[str]
    node_ids: list[str]
    w: np.ndarray
    y: np.ndarray
    z: np.ndarray
    x: np.ndarray
    tau: np.ndarray
    tau_hat: np.ndarray
    pi: np.ndarray
    alpha: np.ndarray

    def objective(self, instance: ProblemInstance) -> ObjectiveBreakdown:
        weights = instance.tables.weight
        rho = instance.rho
        tard = 0.0
        worst = 0.0
        for a in range(len(self.job_ids)):
            tard += float(weights[a]) * float(self.tau[a])
            worst += rho * float(weights[a]) * float(self.tau_hat[a])
        first = 0.0
        for n in range(len(self.node_ids)):
            first += sum(float(self.alpha[a, n]) * float(self.pi[a, n]) for a in range(len(self.job_ids)))
        return ObjectiveBreakdown(float(tard), float(worst), float(first))


class Violation(NamedTuple):
    constraint: str
    where: tuple
    amount: float


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)
    informational: list[Violation] = field(default_factory=list)
    strict: bool = False

    @property
    def feasible(self) -> bool:
        return not self.violations

    def constraints(self) -> set[str]:
        return {v.constraint for v in self.violations}

    def format(self) -> str:
        lines = [f"{len(self.violations)} violations" + (" (strict)" if self.strict else "")]
        for v in self.violations:
            lines.append(f"  {v.constraint} at {v.where}: {v.amount:.12g}")
        for v in self.informational:
            lines.append(f"  note: {v.constraint} at {v.where}: {v.amount:.12g}")
        return "\n".join(lines)


def encode(schedule: Schedule, instance: ProblemInstance) -> MinlpEncoding:
    """Translate a schedule into the formulation's variables.

    Continuous variables take their smallest values allowed by the
    constraints; the first-ending flag goes to the assigned job with the
    shortest remaining time on each node (lowest id on ties).
    """
    tabs = instance.tables
    n_jobs, n_nodes = len(tabs.jobs), len(tabs.nodes)
    gmax = int(tabs.capacity.max()) if n_nodes else 0
    w = np.zeros(n_nodes, dtype=np.int64)
    y = np.zeros((n_nodes, gmax), dtype=np.int64)
    z = np.zeros((n_jobs, n_nodes), dtype=np.int64)
    x = np.zeros((n_jobs, n_nodes, gmax), dtype=np.int64)
    tau = np.zeros(n_jobs)
    tau_hat = np.zeros(n_jobs)
    pi = np.zeros((n_jobs, n_nodes))
    alpha = np.zeros((n_jobs, n_nodes), dtype=np.int64)
    now, horizon = instance.now, instance.horizon

    used = schedule.gpus_in_use()
    first: dict[int, tuple[float, int]] = {}
    for a, job in enumerate(tabs.jobs):
        d = schedule.decisions.get(job.id)
        due = job.spec.due_date
        if d is None:
            tau_hat[a] = max(0.0, ((now + horizon) + float(tabs.slowest[a])) - due)
            continue
        n = tabs.node_index[d.node]
        z[a, n] = 1
        if 1 <= d.g <= gmax:
            x[a, n, d.g - 1] = 1
        if d.g > tabs.capacity[n]:
            continue  # no such configuration; surfaces as a domain violation
        t = float(tabs.times[a, tabs.config_index[(n, d.g)]])
        tau[a] = max(0.0, (now + t) - due)
        node = tabs.nodes[n]
        rate_g = d.g if instance.first_end_rate == "job" else min(used[d.node], node.capacity)
        pi[a, n] = t * node.cost(rate_g)
        if n not in first or t < first[n][0]:
            first[n] = (t, a)
    for n, (_, a) in first.items():
        alpha[a, n] = 1
    for n, node in enumerate(tabs.nodes):
        total = used.get(node.id, 0)
        if total > 0:
            w[n] = 1
            y[n, min(total, node.capacity) - 1] = 1
    return MinlpEncoding([j.id for j in tabs.jobs], [n.id for n in tabs.nodes],
                         w, y, z, x, tau, tau_hat, pi, alpha)


def validate(enc: MinlpEncoding, instance: ProblemInstance, strict: bool = False) -> ValidationReport:
    """Check every constraint of the formulation against an encoding.

    Node-usage forcing (``MShp``) is only a violation in strict mode; the
    heuristics may legitimately leave nodes empty.
    """
    tabs = instance.tables
    report = ValidationReport(strict=strict)
    J, N = len(enc.job_ids), len(enc.node_ids)
    caps = tabs.capacity
    gmax = enc.x.shape[2] if enc.x.ndim == 3 else 0
    now, horizon = instance.now, instance.horizon
    jid, nid = enc.job_ids, enc.node_ids

    def bad(name, where, amount):
        if amount > TOLERANCE:
            report.violations.append(Violation(name, where, float(amount)))

    for a in range(J):
        for n in range(N):
            bad("MSha", (jid[a], nid[n]), enc.x[a, n].sum() - enc.z[a, n])
            bad("MShc", (jid[a], nid[n]), enc.z[a, n] - enc.w[n])
            for g in range(gmax):
                bad("MShd", (jid[a], nid[n], g + 1), enc.x[a, n, g] - enc.z[a, n])
            bad("MSho", (jid[a], nid[n]), enc.alpha[a, n] - enc.z[a, n])
        bad("MShe", (jid[a],), enc.z[a].sum() - 1)
        bad("MShg", (jid[a],), abs(enc.x[a].sum() - enc.z[a].sum()))

    gpus = np.einsum("jng,g->n", enc.x, np.arange(1, gmax + 1)) if gmax else np.zeros(N)
    for n in range(N):
        bad("MShh", (nid[n],), abs(enc.y[n].sum() - enc.w[n]))
        for g in range(1, int(caps[n]) + 1):
            yg = enc.y[n, g - 1]
            bad("MShi", (nid[n], g), gpus[n] - (g * yg + caps[n] * (1 - yg)))
            bad("MShj", (nid[n], g), g * yg - gpus[n])
        bad("MShn", (nid[n],), abs(enc.alpha[:, n].sum() - enc.w[n]))

    for a, job in enumerate(tabs.jobs):
        due = job.spec.due_date
        started = float(enc.z[a].sum())
        work = 0.0
        for n in range(N):
            for g in range(1, min(int(caps[n]), gmax) + 1):
                if enc.x[a, n, g - 1]:
                    t = float(tabs.times[a, tabs.config_index[(n, g)]])
                    work += t
                    bad("MShm", (jid[a], nid[n]), t * tabs.nodes[n].cost(g) - enc.pi[a, n])
        # due-date sides are gated by the same start indicator as the time sides
        bad("MShk", (jid[a],), ((now * started + work) - due * started) - enc.tau[a])
        waiting = 1.0 - started
        late = ((now + horizon) + float(tabs.slowest[a])) * waiting
        bad("MShl", (jid[a],), (late - due * waiting) - enc.tau_hat[a])

    used_nodes = int(enc.w.sum())
    target = min(N, J)
    if used_nodes != target:
        v = Violation("MShp", (), float(abs(used_nodes - target)))
        (report.violations if strict else report.informational).append(v)

    def binary(name, arr, label):
        for idx in zip(*np.nonzero((arr != 0) & (arr != 1))):
            report.violations.append(Violation(name, label(idx), float(arr[idx])))

    binary("MShq", enc.w, lambda i: (nid[i[0]],))
    binary("MShr", enc.y, lambda i: (nid[i[0]], i[1] + 1))
    binary("MShs", enc.z, lambda i: (jid[i[0]], nid[i[1]]))
    binary("MSht", enc.x, lambda i: (jid[i[0]], nid[i[1]], i[2] + 1))
    for n in range(N):
        for g in range(int(caps[n]), gmax):
            for a in range(J):
                if enc.x[a, n, g]:
                    report.violations.append(Violation("MSht", (jid[a], nid[n], g + 1), 1.0))
            if enc.y[n, g]:
                report.violations.append(Violation("MShr", (nid[n], g + 1), 1.0))
    for a in range(J):
        bad("MShu", (jid[a],), -enc.tau[a])
        bad("MShv", (jid[a],), -enc.tau_hat[a])
        for n in range(N):
            bad("MShw", (jid[a], nid[n]), -enc.pi[a, n])
    binary("MShx", enc.alpha, lambda i: (jid[i[0]], nid[i[1]]))
    return report


def validate_schedule(schedule: Schedule, instance: ProblemInstance, strict: bool = False) -> ValidationReport:
    return validate(encode(schedule, instance), instance, strict=strict)


def search_space(instance: ProblemInstance) -> int:
    options = 1 + sum(n.capacity for n in instance.nodes)
    return options ** len(instance.jobs)


def exhaustive_optimum(instance: ProblemInstance, limit: int = ORACLE_LIMIT) -> tuple[Schedule, ObjectiveBreakdown]:
    """Minimum-objective schedule over every postpone/configuration choice.

    Ties go to the lexicographically smallest decision vector (jobs by id,
    postponement before configurations, configurations by node id then g).
    """
    size = search_space(instance)
    if size > limit:
        raise OracleTooLargeError(f"instance too large for oracle: {size} combinations > {limit}")
    tabs = instance.tables
    free = tabs.capacity.copy()
    choice: list[int] = [-1] * len(tabs.jobs)
    best: list = [math.inf, None]

    def leaf():
        decisions = {}
        for a, c in enumerate(choice):
            if c < 0:
                decisions[tabs.jobs[a].id] = None
            else:
                i, g = tabs.configs[c]
                decisions[tabs.jobs[a].id] = Assigned(tabs.nodes[i].id, g)
        schedule = Schedule(decisions, instance.now)
        total = evaluate_objective(schedule, instance).total
        if total < best[0]:
            best[0], best[1] = total, schedule

    def walk(a: int):
        if a == len(choice):
            leaf()
            return
        choice[a] = -1
        walk(a + 1)
        for c, (i, g) in enumerate(tabs.configs):
            if free[i] >= g:
                free[i] -= g
                choice[a] = c
                walk(a + 1)
                free[i] += g
        choice[a] = -1

    walk(0)
    schedule = best[1]
    return schedule, evaluate_objective(schedule, instance)
