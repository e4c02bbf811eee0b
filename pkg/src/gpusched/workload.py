"""Cluster catalogs, synthetic execution-time profiles and workload generators."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .model import GpuType, JobSpec, JobState, Node, ProblemInstance, ProfileTable

#: Euro per kWh, the base energy price of the reference cluster.
PRICE_PER_KWH = 0.172
#: Power usage effectiveness measured on the reference cluster.
PUE = 1.33

# Synthetic wattages (vendor TDPs); no measured power table is available.
DEFAULT_IDLE_WATTS = 200.0
V100 = GpuType("V100", relative_speed=1.0)
T4 = GpuType("T4", relative_speed=0.45)
DEFAULT_GPU_WATTS = {"V100": 250.0, "T4": 70.0}

JOB_CLASSES = ("LSTM", "EfficientNet", "ConvNet")
EPOCH_CHOICES = (60, 80, 160)
BATCH_CHOICES = (4096, 8192)

# Per-epoch seconds on one V100 for the reference trace's applications.
ARMIDA_BASE_TIMES = {
    "EfficientNet": 30.0,
    "ConvNet": 20.0,
    "LSTM-big": 60.0,
    "LSTM-small": 40.0,
}


def cost_rates(idle_watts: float, gpu_watts: float, capacity: int,
               price_per_kwh: float = PRICE_PER_KWH, pue: float = PUE) -> tuple[float, ...]:
    """Cost per second of a node with 1..capacity GPUs busy.

    Power is ``idle_watts + g * gpu_watts``, inflated by ``pue`` and billed
    at ``price_per_kwh``.
    """
    return tuple(
        (idle_watts + g * gpu_watts) * pue * price_per_kwh / 3.6e6 for g in range(1, capacity + 1)
    )


@dataclass(frozen=True)
class NodeHardware:
    id: str
    gpu_type: str
    capacity: int
    idle_watts: float = DEFAULT_IDLE_WATTS
    gpu_watts: Optional[float] = None  # overrides the catalog's per-type wattage


@dataclass(frozen=True)
class Catalog:
    gpu_types: tuple[GpuType, ...]
    hardware: tuple[NodeHardware, ...]
    profiles: ProfileTable
    type_watts: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_GPU_WATTS))

    def __post_init__(self):
        object.__setattr__(self, "gpu_types", tuple(self.gpu_types))
        object.__setattr__(self, "hardware", tuple(self.hardware))
        names = [t.name for t in self.gpu_types]
        if len(set(names)) != len(names):
            raise ValueError("GPU type names must be unique")
        for hw in self.hardware:
            if hw.gpu_type not in names:
                raise ValueError(f"node {hw.id}: unknown GPU type {hw.gpu_type!r}")
            if hw.gpu_watts is None and hw.gpu_type not in self.type_watts:
                raise ValueError(f"node {hw.id}: no wattage for GPU type {hw.gpu_type!r}")

    def gpu_type(self, name: str) -> GpuType:
        return next(t for t in self.gpu_types if t.name == name)

    def nodes(self, price_per_kwh: float = PRICE_PER_KWH, pue: float = PUE) -> tuple[Node, ...]:
        out = []
        for hw in self.hardware:
            watts = hw.gpu_watts if hw.gpu_watts is not None else self.type_watts[hw.gpu_type]
            rates = cost_rates(hw.idle_watts, watts, hw.capacity, price_per_kwh, pue)
            out.append(Node(hw.id, self.gpu_type(hw.gpu_type), hw.capacity, rates))
        return tuple(out)

    @property
    def total_gpus(self) -> int:
        return sum(hw.capacity for hw in self.hardware)


def synthesize_profiles(classes: Sequence[str], gpu_types: Sequence[GpuType], max_g: int | Mapping[str, int],
                        beta: float = 0.8, base_times: Optional[Mapping[str, float]] = None,
                        base_range: tuple[float, float] = (20.0, 120.0),
                        seed: Optional[int] = None) -> ProfileTable:
    """Per-epoch times ``base(class) / (speed(type) * g**beta)``.

    Classes missing from ``base_times`` get a base drawn uniformly from
    ``base_range`` with ``seed``. ``max_g`` is either one bound for every type
    or a per-type mapping.
    """
    if not 0 < beta <= 1:
        raise ValueError("beta must be in (0, 1] for sublinear speedup")
    rng = np.random.default_rng(seed)
    bases = {}
    for cls in classes:
        if base_times is not None and cls in base_times:
            bases[cls] = float(base_times[cls])
        else:
            bases[cls] = float(rng.uniform(*base_range))
    entries = {}
    for gtype in gpu_types:
        top = max_g[gtype.name] if isinstance(max_g, Mapping) else max_g
        for cls in classes:
            for g in range(1, top + 1):
                entries[(cls, gtype.name, g)] = bases[cls] / (gtype.relative_speed * g ** beta)
    return ProfileTable(entries)


@dataclass(frozen=True)
class ScenarioSpec:
    """A synthetic cluster plus workload.

    ``node_mix`` is ``"scenario1"`` (half 2xV100, half 1xT4) or
    ``"scenario2"`` (half 4xV100, half 2xT4). Arrivals alternate between
    bursts and calm phases of ``phase_jobs`` submissions each, with
    exponential gaps of the given means.
    """

    n_nodes: int = 10
    jobs_per_node: int = 10
    node_mix: str = "scenario1"
    rho: float = 100.0
    seed: int = 0
    burst_mean_gap: float = 200.0
    calm_mean_gap: float = 1500.0
    phase_jobs: int = 10
    slack_range: tuple[float, float] = (1.2, 3.0)
    weight_range: tuple[int, int] = (1, 5)
    beta: float = 0.8

    def __post_init__(self):
        if self.n_nodes < 1:
            raise ValueError("n_nodes must be >= 1")
        if self.node_mix not in NODE_MIXES:
            raise ValueError(f"unknown node mix {self.node_mix!r}")
        if self.slack_range[0] <= 1.0:
            raise ValueError("slack must exceed 1 so every job can meet its due date on arrival")

    @property
    def n_jobs(self) -> int:
        return self.n_nodes * self.jobs_per_node


NODE_MIXES = {
    "scenario1": {"V100": 2, "T4": 1},
    "scenario2": {"V100": 4, "T4": 2},
}


def scenario_catalog(n_nodes: int, node_mix: str, seed: int = 0, beta: float = 0.8) -> Catalog:
    caps = NODE_MIXES[node_mix]
    n_v100 = math.ceil(n_nodes / 2)
    hardware = []
    for i in range(n_nodes):
        gtype = "V100" if i < n_v100 else "T4"
        hardware.append(NodeHardware(f"n{i:03d}", gtype, caps[gtype]))
    types = (V100, T4)
    profiles = synthesize_profiles(JOB_CLASSES, types, caps, beta=beta, seed=seed)
    return Catalog(types, tuple(hardware), profiles)


def _fastest_total(cls: str, epochs: int, catalog: Catalog) -> float:
    best = math.inf
    for hw in catalog.hardware:
        for g in range(1, hw.capacity + 1):
            best = min(best, epochs * catalog.profiles.per_epoch(cls, hw.gpu_type, g))
    return best


def generate(spec: ScenarioSpec) -> tuple[list[JobSpec], Catalog]:
    """Draw a workload and its cluster; identical seeds give identical output."""
    catalog = scenario_catalog(spec.n_nodes, spec.node_mix, seed=spec.seed, beta=spec.beta)
    rng = np.random.default_rng([spec.seed, 1])
    jobs = []
    t = 0.0
    for k in range(spec.n_jobs):
        if k > 0:
            burst = (k // spec.phase_jobs) % 2 == 0
            t += float(rng.exponential(spec.burst_mean_gap if burst else spec.calm_mean_gap))
        cls = JOB_CLASSES[int(rng.integers(len(JOB_CLASSES)))]
        epochs = EPOCH_CHOICES[int(rng.integers(len(EPOCH_CHOICES)))]
        batch = BATCH_CHOICES[int(rng.integers(len(BATCH_CHOICES)))]
        weight = int(rng.integers(spec.weight_range[0], spec.weight_range[1] + 1))
        slack = float(rng.uniform(*spec.slack_range))
        due = t + slack * _fastest_total(cls, epochs, catalog)
        jobs.append(JobSpec(f"j{k:04d}", cls, epochs, t, due, float(weight), batch))
    return jobs, catalog


def armida_catalog(base_times: Optional[Mapping[str, float]] = None, beta: float = 0.8) -> Catalog:
    """The three production nodes of the reference cluster (the profiling node excluded)."""
    hardware = (
        NodeHardware("armida-05", "V100", 1),
        NodeHardware("armida-06", "V100", 2),
        NodeHardware("armida-07", "T4", 1),
    )
    bases = dict(ARMIDA_BASE_TIMES)
    if base_times:
        bases.update(base_times)
    profiles = synthesize_profiles(tuple(bases), (V100, T4), {"V100": 2, "T4": 1}, beta=beta, base_times=bases)
    return Catalog((V100, T4), hardware, profiles)


# (id, application, epochs, batch, submit, due, weight)
ARMIDA_JOBS = (
    ("J6", "EfficientNet", 80, 4096, 0, 3600, 4),
    ("J9", "ConvNet", 160, 8192, 1200, 2600, 2),
    ("J10", "ConvNet", 80, 8192, 2400, 7600, 3),
    ("J7", "LSTM-big", 160, 8192, 3600, 17600, 3),
    ("J8", "LSTM-small", 160, 8192, 4800, 7600, 3),
    ("J1", "LSTM-big", 60, 8192, 6000, 5600, 5),
    ("J2", "LSTM-small", 60, 8192, 7200, 12600, 2),
    ("J3", "EfficientNet", 60, 4096, 8400, 11600, 1),
)


def armida_trace(base_times: Optional[Mapping[str, float]] = None) -> tuple[list[JobSpec], Catalog]:
    """The 8-job validation workload, submitted every 1200 s."""
    jobs = [
        JobSpec(jid, cls, epochs, float(s), float(d), float(w), batch)
        for jid, cls, epochs, batch, s, d, w in ARMIDA_JOBS
    ]
    return jobs, armida_catalog(base_times)


def tiny_instance(seed: int, horizon: float = 1200.0) -> ProblemInstance:
    """A random rescheduling-point snapshot small enough for the exhaustive oracle.

    Two nodes (random type, 1 or 2 GPUs) and 1 to 3 queued jobs whose due
    dates sit between 0.5x and 3x their fastest completion time, so some
    jobs are already unable to finish on time.
    """
    rng = np.random.default_rng(seed)
    hardware = tuple(
        NodeHardware(f"n{i}", ("V100", "T4")[int(rng.integers(2))], int(rng.integers(1, 3))) for i in range(2)
    )
    profiles = synthesize_profiles(JOB_CLASSES, (V100, T4), 2, seed=seed)
    catalog = Catalog((V100, T4), hardware, profiles)
    jobs = []
    for k in range(int(rng.integers(1, 4))):
        cls = JOB_CLASSES[int(rng.integers(3))]
        epochs = EPOCH_CHOICES[int(rng.integers(3))]
        due = float(rng.uniform(0.5, 3.0)) * _fastest_total(cls, epochs, catalog)
        jobs.append(JobState(JobSpec(f"j{k}", cls, epochs, 0.0, due, float(rng.integers(1, 6)))))
    return ProblemInstance(catalog.nodes(), jobs, profiles, rho=100.0, horizon=horizon, now=0.0)
