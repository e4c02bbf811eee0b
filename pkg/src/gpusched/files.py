"""Instance and schedule documents (YAML; plain JSON is accepted too).

Instance layout::

    gpu_types: [{name, relative_speed, watts}]
    nodes:     [{id, gpu_type, capacity, idle_watts, gpu_watts?}]
    profiles:  [{class, gpu_type, g, per_epoch_s}]
    jobs:      [{id, class, epochs, batch, submit_s, due_s, weight, completed_epochs?}]
    economics: {price_per_kwh, pue}
    rho: 100.0
    horizon: null        # seconds, or null for the simulator default
    now: 0.0             # clock of a snapshot instance

Errors carry the line of the offending entry.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional

import yaml

from .model import Assigned, GpuType, JobSpec, JobState, ProblemInstance, ProfileTable, Schedule
from .workload import PRICE_PER_KWH, PUE, Catalog, NodeHardware


class InstanceFormatError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None, source: str = "<instance>"):
        self.line = line
        where = f"{source}:{line}" if line is not None else source
        super().__init__(f"{where}: {message}")


class _LineLoader(yaml.SafeLoader):
    """Safe loader that remembers where each mapping (and key) starts."""

    def construct_mapping(self, node, deep=False):
        mapping = super().construct_mapping(node, deep=deep)
        mapping["__line__"] = node.start_mark.line + 1
        mapping["__keys__"] = {k.value: k.start_mark.line + 1 for k, _ in node.value if hasattr(k, "value")}
        return mapping


@dataclass(frozen=True)
class InstanceFile:
    catalog: Catalog
    jobs: tuple[JobSpec, ...]
    completed: Mapping[str, float] = field(default_factory=dict)
    price_per_kwh: float = PRICE_PER_KWH
    pue: float = PUE
    rho: float = 100.0
    horizon: Optional[float] = None
    now: float = 0.0

    def problem(self, horizon: Optional[float] = None) -> ProblemInstance:
        """The optimizer's view at ``now``: every listed job, with its progress."""
        h = horizon if horizon is not None else self.horizon
        if h is None:
            from .sim import default_horizon

            h = default_horizon(self.jobs, None)
        states = [JobState(j, float(self.completed.get(j.id, 0.0))) for j in self.jobs]
        return ProblemInstance(self.catalog.nodes(self.price_per_kwh, self.pue), states,
                               self.catalog.profiles, rho=self.rho, horizon=h, now=self.now)


_SECTIONS = {"gpu_types", "nodes", "profiles", "jobs", "economics", "rho", "horizon", "now"}
_FIELDS = {
    "gpu_types": ({"name", "relative_speed", "watts"}, {"name", "relative_speed", "watts"}),
    "nodes": ({"id", "gpu_type", "capacity", "idle_watts", "gpu_watts"}, {"id", "gpu_type", "capacity", "idle_watts"}),
    "profiles": ({"class", "gpu_type", "g", "per_epoch_s"}, {"class", "gpu_type", "g", "per_epoch_s"}),
    "jobs": (
        {"id", "class", "epochs", "batch", "submit_s", "due_s", "weight", "completed_epochs"},
        {"id", "class", "epochs", "batch", "submit_s", "due_s", "weight"},
    ),
    "economics": ({"price_per_kwh", "pue"}, {"price_per_kwh", "pue"}),
}


def _strip(d: dict) -> tuple[dict, int, dict]:
    d = dict(d)
    return d, d.pop("__line__", None), d.pop("__keys__", {})


def _check_fields(section: str, entry: Any, source: str, fallback_line: Optional[int]) -> tuple[dict, int]:
    if not isinstance(entry, dict):
        raise InstanceFormatError(f"{section}: expected a mapping, got {type(entry).__name__}", fallback_line, source)
    data, line, keys = _strip(entry)
    allowed, required = _FIELDS[section]
    for k in data:
        if k not in allowed:
            raise InstanceFormatError(f"{section}: unknown field {k!r}", keys.get(k, line), source)
    missing = required - set(data)
    if missing:
        raise InstanceFormatError(f"{section}: missing field(s) {sorted(missing)}", line, source)
    return data, line


def _num(value, what, line, source, kind=float):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise InstanceFormatError(f"{what}: expected a number, got {value!r}", line, source)
    if kind is int:
        if isinstance(value, float) and not value.is_integer():
            raise InstanceFormatError(f"{what}: expected an integer, got {value!r}", line, source)
        return int(value)
    return float(value)


def loads_instance(text: str, source: str = "<instance>") -> InstanceFile:
    try:
        doc = yaml.load(text, Loader=_LineLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise InstanceFormatError(f"malformed document: {getattr(exc, 'problem', exc)}",
                                  mark.line + 1 if mark else None, source) from None
    if not isinstance(doc, dict):
        raise InstanceFormatError("top level must be a mapping", 1, source)
    doc, _, keys = _strip(doc)
    for k in doc:
        if k not in _SECTIONS:
            raise InstanceFormatError(f"unknown section {k!r}", keys.get(k), source)
    for k in ("gpu_types", "nodes", "profiles", "jobs"):
        if k not in doc:
            raise InstanceFormatError(f"missing section {k!r}", None, source)
        if not isinstance(doc[k], list):
            raise InstanceFormatError(f"section {k!r} must be a list", keys.get(k), source)

    try:
        types, watts = [], {}
        for entry in doc["gpu_types"]:
            e, line = _check_fields("gpu_types", entry, source, keys.get("gpu_types"))
            types.append(GpuType(str(e["name"]), _num(e["relative_speed"], "relative_speed", line, source)))
            watts[str(e["name"])] = _num(e["watts"], "watts", line, source)
        hardware = []
        for entry in doc["nodes"]:
            e, line = _check_fields("nodes", entry, source, keys.get("nodes"))
            gw = e.get("gpu_watts")
            hardware.append(NodeHardware(
                str(e["id"]), str(e["gpu_type"]), _num(e["capacity"], "capacity", line, source, int),
                _num(e["idle_watts"], "idle_watts", line, source),
                None if gw is None else _num(gw, "gpu_watts", line, source),
            ))
        entries = {}
        for entry in doc["profiles"]:
            e, line = _check_fields("profiles", entry, source, keys.get("profiles"))
            key = (str(e["class"]), str(e["gpu_type"]), _num(e["g"], "g", line, source, int))
            if key in entries:
                raise InstanceFormatError(f"duplicate profile {key}", line, source)
            entries[key] = _num(e["per_epoch_s"], "per_epoch_s", line, source)
        jobs, completed = [], {}
        for entry in doc["jobs"]:
            e, line = _check_fields("jobs", entry, source, keys.get("jobs"))
            spec = JobSpec(
                str(e["id"]), str(e["class"]), _num(e["epochs"], "epochs", line, source, int),
                _num(e["submit_s"], "submit_s", line, source), _num(e["due_s"], "due_s", line, source),
                _num(e["weight"], "weight", line, source), _num(e["batch"], "batch", line, source, int),
            )
            if "completed_epochs" in e:
                completed[spec.id] = _num(e["completed_epochs"], "completed_epochs", line, source)
            jobs.append(spec)
        price, pue = PRICE_PER_KWH, PUE
        if "economics" in doc:
            e, line = _check_fields("economics", doc["economics"], source, keys.get("economics"))
            price = _num(e["price_per_kwh"], "price_per_kwh", line, source)
            pue = _num(e["pue"], "pue", line, source)
        rho = _num(doc.get("rho", 100.0), "rho", keys.get("rho"), source)
        horizon = doc.get("horizon")
        horizon = None if horizon is None else _num(horizon, "horizon", keys.get("horizon"), source)
        now = _num(doc.get("now", 0.0), "now", keys.get("now"), source)
        catalog = Catalog(tuple(types), tuple(hardware), ProfileTable(entries), watts)
        return InstanceFile(catalog, tuple(jobs), completed, price, pue, rho, horizon, now)
    except InstanceFormatError:
        raise
    except (ValueError, KeyError, TypeError) as exc:
        raise InstanceFormatError(str(exc), None, source) from None


def dumps_instance(inst: InstanceFile) -> str:
    cat = inst.catalog
    doc = {
        "gpu_types": [
            {"name": t.name, "relative_speed": float(t.relative_speed), "watts": float(cat.type_watts[t.name])}
            for t in cat.gpu_types
        ],
        "nodes": [],
        "profiles": [
            {"class": cls, "gpu_type": gt, "g": int(g), "per_epoch_s": float(t)}
            for (cls, gt, g), t in cat.profiles.entries.items()
        ],
        "jobs": [],
        "economics": {"price_per_kwh": float(inst.price_per_kwh), "pue": float(inst.pue)},
        "rho": float(inst.rho),
        "horizon": None if inst.horizon is None else float(inst.horizon),
        "now": float(inst.now),
    }
    for hw in cat.hardware:
        node = {"id": hw.id, "gpu_type": hw.gpu_type, "capacity": int(hw.capacity), "idle_watts": float(hw.idle_watts)}
        if hw.gpu_watts is not None:
            node["gpu_watts"] = float(hw.gpu_watts)
        doc["nodes"].append(node)
    for j in inst.jobs:
        job = {"id": j.id, "class": j.job_class, "epochs": int(j.total_epochs), "batch": int(j.batch_size),
               "submit_s": float(j.submission_time), "due_s": float(j.due_date), "weight": float(j.tardiness_weight)}
        if j.id in inst.completed:
            job["completed_epochs"] = float(inst.completed[j.id])
        doc["jobs"].append(job)
    return yaml.safe_dump(doc, sort_keys=False, default_flow_style=None, width=1000)


def read_instance(path: str | Path) -> InstanceFile:
    path = Path(path)
    return loads_instance(path.read_text(), source=str(path))


def write_instance(inst: InstanceFile, path: str | Path) -> None:
    Path(path).write_text(dumps_instance(inst))


def dumps_schedule(schedule: Schedule) -> str:
    decisions = {
        job: None if d is None else {"node": d.node, "g": int(d.g)}
        for job, d in sorted(schedule.decisions.items())
    }
    return yaml.safe_dump({"timestamp": float(schedule.timestamp), "decisions": decisions},
                          sort_keys=False, default_flow_style=None, width=1000)


def loads_schedule(text: str, source: str = "<schedule>") -> Schedule:
    try:
        doc = yaml.load(text, Loader=_LineLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise InstanceFormatError(f"malformed document: {getattr(exc, 'problem', exc)}",
                                  mark.line + 1 if mark else None, source) from None
    if not isinstance(doc, dict):
        raise InstanceFormatError("top level must be a mapping", 1, source)
    doc, _, keys = _strip(doc)
    unknown = set(doc) - {"timestamp", "decisions"}
    if unknown:
        k = sorted(unknown)[0]
        raise InstanceFormatError(f"unknown field {k!r}", keys.get(k), source)
    raw = doc.get("decisions")
    if not isinstance(raw, dict):
        raise InstanceFormatError("'decisions' must be a mapping", keys.get("decisions"), source)
    raw, _, dkeys = _strip(raw)
    decisions = {}
    for job, d in raw.items():
        if d is None:
            decisions[str(job)] = None
            continue
        if not isinstance(d, dict):
            raise InstanceFormatError(f"decision for {job!r} must be null or {{node, g}}", dkeys.get(job), source)
        d, line, _ = _strip(d)
        if set(d) != {"node", "g"}:
            raise InstanceFormatError(f"decision for {job!r} needs exactly node and g", line, source)
        decisions[str(job)] = Assigned(str(d["node"]), _num(d["g"], "g", line, source, int))
    ts = _num(doc.get("timestamp", 0.0), "timestamp", keys.get("timestamp"), source)
    return Schedule(decisions, ts)


def read_schedule(path: str | Path) -> Schedule:
    path = Path(path)
    return loads_schedule(path.read_text(), source=str(path))


def write_schedule(schedule: Schedule, path: str | Path) -> None:
    Path(path).write_text(dumps_schedule(schedule))
