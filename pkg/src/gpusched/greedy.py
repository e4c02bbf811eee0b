"""Randomized greedy capacity allocation.

Each iteration sorts the queue by pressure (with random adjacent swaps),
then places jobs one at a time on a randomly drawn low-cost configuration,
falling back to other configurations when the drawn one does not fit.
The best schedule under the proxy objective across iterations wins.

Iteration randomness is drawn up front as one row of uniforms per
iteration, so the batched (all iterations at once) and sequential
evaluations consume identical numbers and agree bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Optional, Sequence

import numpy as np

from .model import (
    Assigned,
    JobState,
    ObjectiveBreakdown,
    ProblemInstance,
    Schedule,
    evaluate_objective,
)

EPSILON = 1e-9


@dataclass(frozen=True)
class GreedyConfig:
    """Knobs of the randomized construction.

    Attributes:
        max_iterations: constructions attempted per call; iteration 0 is
            always the plain deterministic greedy.
        seed: source of all iteration randomness.
        swap_base_probability: chance of swapping two adjacent jobs of equal
            weight in the pressure-sorted queue.
        candidate_pool_size: how many of the cheapest configurations the
            randomized selection may draw from.
        fallback_scope: ``"any"`` lets a fallback placement use any node with
            free GPUs; ``"open"`` restricts it to nodes already hosting a job
            in the partial schedule, which strands idle nodes under overload.
        randomize: with False every iteration is the deterministic greedy.
        vectorized: evaluate all iterations at once with numpy.
    """

    max_iterations: int = 1000
    seed: int = 0
    swap_base_probability: float = 0.5
    candidate_pool_size: int = 5
    fallback_scope: Literal["open", "any"] = "any"
    randomize: bool = True
    vectorized: bool = True

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not 0.0 <= self.swap_base_probability <= 1.0:
            raise ValueError("swap_base_probability must be in [0, 1]")
        if self.candidate_pool_size < 1:
            raise ValueError("candidate_pool_size must be >= 1")
        if self.fallback_scope not in ("open", "any"):
            raise ValueError(f"unknown fallback_scope {self.fallback_scope!r}")


def _swap_probability(base: float, w_first: float, w_second: float) -> float:
    # a heavier job ahead resists being pushed back
    if w_first == 0.0:
        return base
    return base * min(1.0, w_second / w_first)


def _sort_indices(pressures: Sequence[float], weights: Sequence[float], swap_u: Optional[Sequence[float]],
                  base: float) -> list[int]:
    order = sorted(range(len(pressures)), key=lambda a: (-pressures[a], a))
    if swap_u is None:
        return order
    for i in range(len(order) - 1):
        j, k = order[i], order[i + 1]
        if swap_u[i] < _swap_probability(base, weights[j], weights[k]):
            order[i], order[i + 1] = k, j
    return order


def sort_jobs_list(queue: Sequence[JobState], pressures: dict[str, float], rng: Optional[np.random.Generator] = None,
                   swap_base_probability: float = 0.5) -> list[JobState]:
    """Order jobs by decreasing pressure, then randomly swap neighbours.

    One sweep over adjacent pairs; the pair ``(j, k)`` swaps with
    probability ``swap_base_probability * min(1, w_k / w_j)``. Ties in
    pressure keep job-id order. Without ``rng`` no swaps happen.
    """
    jobs = sorted(queue, key=lambda j: j.id)
    press = [pressures[j.id] for j in jobs]
    weights = [j.spec.tardiness_weight for j in jobs]
    swap_u = rng.random(max(len(jobs) - 1, 0)) if rng is not None else None
    return [jobs[a] for a in _sort_indices(press, weights, swap_u, swap_base_probability)]


class _Plan:
    """Per-instance candidate pools and fallback chains, shared by both engines."""

    def __init__(self, instance: ProblemInstance, config: GreedyConfig):
        tabs = instance.tables
        self.tabs = tabs
        self.config = config
        n_jobs, n_cfg = tabs.times.shape
        self.n_jobs = n_jobs

        pools, chains = [], []
        for a in range(n_jobs):
            feasible = tabs.feasible_by_cost(a)
            by_time = tabs.all_by_time(a)
            if feasible:
                pool = feasible[: config.candidate_pool_size]
                values = tabs.cost[a, pool]
            else:
                pool = by_time[: config.candidate_pool_size]
                values = tabs.times[a, pool]
            if np.any(values == 0):
                values = values + EPSILON
            pools.append((pool, np.cumsum(1.0 / values)))
            chains.append(feasible + by_time)
        self.pools = pools
        self.chains = chains

        width = max((len(p) for p, _ in pools), default=1)
        self.pool_cfg = np.zeros((n_jobs, width), dtype=np.int64)
        self.pool_cum = np.full((n_jobs, width), np.inf)
        self.pool_len = np.zeros(n_jobs, dtype=np.int64)
        for a, (pool, cum) in enumerate(pools):
            self.pool_cfg[a, : len(pool)] = pool
            self.pool_cum[a, : len(pool)] = cum
            self.pool_len[a] = len(pool)
        self.pool_total = np.array([cum[-1] for _, cum in pools]) if pools else np.zeros(0)

        length = max((len(c) for c in chains), default=1)
        self.chain_cfg = np.full((n_jobs, length), -1, dtype=np.int64)
        for a, chain in enumerate(chains):
            self.chain_cfg[a, : len(chain)] = chain

        n_nodes = len(tabs.nodes)
        gmax = int(tabs.capacity.max()) if n_nodes else 0
        self.cfg_at = np.full((max(n_nodes, 1), gmax + 1), -1, dtype=np.int64)
        for c, (i, g) in enumerate(tabs.configs):
            self.cfg_at[i, g] = c

    def pick(self, a: int, u: Optional[float]) -> int:
        """Configuration index drawn for job ``a`` from uniform ``u``."""
        pool, cum = self.pools[a]
        if u is None:
            return pool[0]
        idx = int(np.searchsorted(cum, u * cum[-1], side="right"))
        return pool[min(idx, len(pool) - 1)]

    def sticky_node(self, a: int, c: int) -> int:
        """Node to try for candidate ``c``: the job's current node when interchangeable."""
        tabs = self.tabs
        star = int(tabs.cfg_node[c])
        cur = int(tabs.current_node[a])
        if cur >= 0 and cur != star and tabs.node_class[cur] == tabs.node_class[star]:
            return cur
        return star


def select_candidate_configuration(job: JobState, instance: ProblemInstance,
                                   rng: Optional[np.random.Generator] = None,
                                   candidate_pool_size: int = 5) -> Assigned:
    """Draw one of the cheapest due-date-meeting configurations.

    Selection probability is inversely proportional to the configuration's
    cost (or, when no configuration meets the due date, to its time) among
    the ``candidate_pool_size`` best. Without ``rng`` the best one is
    returned.
    """
    plan = _Plan(instance, GreedyConfig(candidate_pool_size=candidate_pool_size))
    a = instance.tables.job_index[job.id]
    u = float(rng.random()) if rng is not None else None
    c = plan.pick(a, u)
    node_idx, g = instance.tables.configs[c]
    return Assigned(instance.tables.nodes[node_idx].id, g)


def _construct(plan: _Plan, swap_u: Optional[Sequence[float]], select_u: Optional[Sequence[float]]) -> list[int]:
    """One construction; returns the configuration index per job (-1 postponed)."""
    tabs = plan.tabs
    free = tabs.capacity.copy()
    is_open = np.zeros(len(free), dtype=bool)
    anywhere = plan.config.fallback_scope == "any"
    decision = [-1] * plan.n_jobs
    order = _sort_indices(tabs.pressure.tolist(), tabs.weight.tolist(), swap_u, plan.config.swap_base_probability)
    for step, a in enumerate(order):
        c = plan.pick(a, None if select_u is None else select_u[step])
        g = int(tabs.cfg_g[c])
        star = int(tabs.cfg_node[c])
        sticky = plan.sticky_node(a, c)
        placed = -1
        if free[sticky] >= g:
            placed = int(plan.cfg_at[sticky, g])
        elif free[star] >= g:
            placed = c
        else:
            for alt in plan.chains[a]:
                n = tabs.cfg_node[alt]
                if (anywhere or is_open[n]) and free[n] >= tabs.cfg_g[alt]:
                    placed = alt
                    break
        if placed >= 0:
            n = tabs.cfg_node[placed]
            free[n] -= tabs.cfg_g[placed]
            is_open[n] = True
        decision[a] = placed
    return decision


def _to_schedule(tabs, decision: Sequence[int]) -> Schedule:
    out = {}
    for a, c in enumerate(decision):
        if c < 0:
            out[tabs.jobs[a].id] = None
        else:
            i, g = tabs.configs[int(c)]
            out[tabs.jobs[a].id] = Assigned(tabs.nodes[i].id, int(g))
    return Schedule(out, tabs.now)


def construct_schedule(instance: ProblemInstance, config: GreedyConfig = GreedyConfig(),
                       rng: Optional[np.random.Generator] = None) -> Schedule:
    """Build one schedule; deterministic greedy when ``rng`` is None.

    Jobs are taken in (randomized) pressure order. Each job tries its drawn
    candidate configuration, preferring an interchangeable node it already
    runs on, then walks its due-date-meeting configurations by cost and all
    configurations by time over the nodes allowed by
    ``config.fallback_scope``; if none fits it is postponed.
    """
    plan = _Plan(instance, config)
    n = plan.n_jobs
    if rng is None:
        decision = _construct(plan, None, None)
    else:
        swap_u = rng.random(max(n - 1, 0))
        select_u = rng.random(n)
        decision = _construct(plan, swap_u, select_u)
    return _to_schedule(instance.tables, decision)


def iteration_uniforms(seed: int, iterations: int, n_jobs: int) -> np.ndarray:
    """Random numbers for every iteration; row 0 encodes the deterministic pass.

    Row ``i`` holds ``n_jobs - 1`` swap draws followed by ``n_jobs``
    selection draws. A swap draw of 1.0 never swaps and a selection draw of
    0.0 always takes the best candidate.
    """
    width = max(2 * n_jobs - 1, 0)
    u = np.random.default_rng(seed).random((iterations, width))
    u[0, : n_jobs - 1] = 1.0
    u[0, n_jobs - 1:] = 0.0
    return u


def _construct_batch(plan: _Plan, u: np.ndarray) -> np.ndarray:
    tabs = plan.tabs
    n_it = u.shape[0]
    n_jobs = plan.n_jobs
    rows = np.arange(n_it)
    free = np.tile(tabs.capacity, (n_it, 1))
    is_open = np.zeros_like(free, dtype=bool)
    decision = np.full((n_it, n_jobs), -1, dtype=np.int64)
    base = plan.config.swap_base_probability

    order = np.tile(np.array(sorted(range(n_jobs), key=lambda a: (-tabs.pressure[a], a)), dtype=np.int64), (n_it, 1))
    w = tabs.weight
    for i in range(n_jobs - 1):
        j, k = order[:, i].copy(), order[:, i + 1].copy()
        wj, wk = w[j], w[k]
        with np.errstate(divide="ignore", invalid="ignore"):
            p = np.where(wj == 0.0, base, base * np.minimum(1.0, wk / wj))
        swap = u[:, i] < p
        order[swap, i] = k[swap]
        order[swap, i + 1] = j[swap]

    cur = tabs.current_node
    klass = tabs.node_class
    anywhere = plan.config.fallback_scope == "any"
    chain_valid = plan.chain_cfg >= 0
    chain_node = np.where(chain_valid, tabs.cfg_node[np.maximum(plan.chain_cfg, 0)], 0)
    chain_g = np.where(chain_valid, tabs.cfg_g[np.maximum(plan.chain_cfg, 0)], 1 << 30)
    for step in range(n_jobs):
        a = order[:, step]
        x = u[:, n_jobs - 1 + step] * plan.pool_total[a]
        idx = (plan.pool_cum[a] <= x[:, None]).sum(axis=1)
        idx = np.minimum(idx, plan.pool_len[a] - 1)
        c = plan.pool_cfg[a, idx]
        g = tabs.cfg_g[c]
        star = tabs.cfg_node[c]
        ca = cur[a]
        sticky = np.where((ca >= 0) & (klass[np.maximum(ca, 0)] == klass[star]), np.maximum(ca, 0), star)

        placed = np.full(n_it, -1, dtype=np.int64)
        ok_sticky = free[rows, sticky] >= g
        placed[ok_sticky] = plan.cfg_at[sticky[ok_sticky], g[ok_sticky]]
        ok_star = ~ok_sticky & (free[rows, star] >= g)
        placed[ok_star] = c[ok_star]

        rest = np.flatnonzero(placed < 0)
        if rest.size:
            ar = a[rest]
            nodes = chain_node[ar]
            fits = free[rest[:, None], nodes] >= chain_g[ar]
            if not anywhere:
                fits &= is_open[rest[:, None], nodes]
            hit = fits.any(axis=1)
            first = fits.argmax(axis=1)
            placed[rest[hit]] = plan.chain_cfg[ar[hit], first[hit]]

        ok = placed >= 0
        pn = tabs.cfg_node[placed[ok]]
        free[rows[ok], pn] -= tabs.cfg_g[placed[ok]]
        is_open[rows[ok], pn] = True
        decision[rows, a] = placed
    return decision


def _objective_batch(instance: ProblemInstance, decision: np.ndarray) -> np.ndarray:
    """Proxy objective per row, summed in the same order as ``evaluate_objective``."""
    tabs = instance.tables
    n_it, n_jobs = decision.shape
    rows = np.arange(n_it)
    n_nodes = len(tabs.nodes)
    now, rho, horizon = instance.now, instance.rho, instance.horizon

    tard = np.zeros(n_it)
    worst = np.zeros(n_it)
    cfg = np.maximum(decision, 0)
    assigned = decision >= 0
    node = tabs.cfg_node[cfg]
    if instance.first_end_rate == "node":
        used = np.zeros((n_it, n_nodes), dtype=np.int64)
        for a in range(n_jobs):
            np.add.at(used, (rows[assigned[:, a]], node[assigned[:, a], a]), tabs.cfg_g[cfg[assigned[:, a], a]])
        rate_table = np.zeros((n_nodes, int(tabs.capacity.max()) + 1))
        for i, nd in enumerate(tabs.nodes):
            rate_table[i, 1:nd.capacity + 1] = nd.cost_rate
    best_t = np.full((n_it, n_nodes), np.inf)
    best_pi = np.zeros((n_it, n_nodes))
    for a in range(n_jobs):
        on = assigned[:, a]
        t = tabs.times[a, cfg[:, a]]
        w = float(tabs.weight[a])
        due = float(tabs.due[a])
        tard = tard + np.where(on, w * np.maximum(0.0, (now + t) - due), 0.0)
        late = rho * w * max(0.0, ((now + horizon) + float(tabs.slowest[a])) - due)
        worst = worst + np.where(on, 0.0, late)
        n = node[:, a]
        better = on & (t < best_t[rows, n])
        if instance.first_end_rate == "node":
            rate = rate_table[n, used[rows, n]]
        else:
            rate = tabs.cfg_rate[cfg[:, a]]
        r = rows[better]
        best_t[r, n[better]] = t[better]
        best_pi[r, n[better]] = (t * rate)[better]
    first = np.zeros(n_it)
    for i in range(n_nodes):
        first = first + np.where(np.isfinite(best_t[:, i]), best_pi[:, i], 0.0)
    return (tard + worst) + first


def optimize(instance: ProblemInstance, config: GreedyConfig = GreedyConfig()) -> tuple[Schedule, ObjectiveBreakdown]:
    """Best of ``config.max_iterations`` randomized constructions.

    Ties between iterations go to the lowest iteration index, so the result
    never loses to the deterministic greedy and is reproducible from
    ``(instance, config)``.
    """
    tabs = instance.tables
    n_jobs = len(tabs.jobs)
    if n_jobs == 0:
        empty = Schedule({}, instance.now)
        return empty, evaluate_objective(empty, instance)
    iterations = config.max_iterations if config.randomize else 1
    plan = _Plan(instance, config)
    u = iteration_uniforms(config.seed, iterations, n_jobs)

    if config.vectorized:
        decisions = _construct_batch(plan, u)
        totals = _objective_batch(instance, decisions)
        best = int(np.argmin(totals))
        schedule = _to_schedule(tabs, decisions[best].tolist())
    else:
        schedule, best_total = None, np.inf
        for it in range(iterations):
            if it == 0:
                decision = _construct(plan, None, None)
            else:
                decision = _construct(plan, u[it, : n_jobs - 1], u[it, n_jobs - 1:])
            candidate = _to_schedule(tabs, decision)
            total = evaluate_objective(candidate, instance).total
            if total < best_total:
                schedule, best_total = candidate, total
    return schedule, evaluate_objective(schedule, instance)
