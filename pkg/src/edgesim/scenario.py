"""Scenario configuration: defaults, presets and YAML round-tripping."""
from __future__ import annotations

import copy
from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

from .agent import AgentConfig
from .network import BandwidthTable
from .workload import APP_IDS, DEFAULT_TASK_LENGTHS, APP_TABLE, ApplicationProfile, deadline_for

ORCHESTRATORS = ("network", "utilization", "hybrid", "random", "deepedge")


class InvalidConfig(ValueError):
    pass


def _default_applications() -> dict:
    apps = {}
    for app_id in APP_IDS:
        ia, sens, up, down, edge, cloud, usage = APP_TABLE[app_id]
        apps[app_id] = {
            "mean_interarrival_s": ia,
            "delay_sensitivity": sens,
            "upload_kb": up,
            "download_kb": down,
            "vm_util_edge_pct": edge,
            "vm_util_cloud_pct": cloud,
            "usage_pct": usage,
            "task_length_gi": DEFAULT_TASK_LENGTHS[app_id],
            "deadline_s": None,
        }
    return apps


def _default_network() -> dict:
    return {
        "wlan": {"nominal_mbps": 100.0, "saturation_clients": 50, "table_mbps": None, "propagation_ms": 0.0},
        "wan": {"nominal_mbps": 20.0, "saturation_clients": 20, "table_mbps": None, "propagation_ms": 0.0},
        "man": {"bandwidth_mbps": 40.0, "mean_transfer_kb": 512.0, "propagation_ms": 5.0,
                "window_s": 10.0, "delay_cap_s": 1.0},
    }


@dataclass
class ScenarioConfig:
    edge_server_count: int = 14
    vms_per_edge: int = 8
    edge_vm_gips: float = 10.0
    cloud_vms: int = 4
    cloud_vm_gips: float = 100.0
    device_counts: list = field(default_factory=lambda: list(range(200, 2401, 200)))
    duration_s: float = 300.0
    repetitions: int = 40
    seeds: list | None = None
    duty_factor: float = 0.4
    base_deadline_s: float = 1.0
    deadline_floor: float = 0.05
    applications: dict = field(default_factory=_default_applications)
    mobility: dict = field(default_factory=lambda: {"base_dwell_s": 60.0, "attractiveness": None})
    network: dict = field(default_factory=_default_network)
    orchestrator: str = "deepedge"
    orchestrators: list = field(default_factory=lambda: list(ORCHESTRATORS))
    agent: dict = field(default_factory=lambda: dict(vars(AgentConfig())))
    training: dict = field(default_factory=lambda: {"episodes": 101, "device_count": 2400, "seed": 1000})

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for name in ("edge_server_count", "vms_per_edge", "cloud_vms", "repetitions"):
            if int(getattr(self, name)) < 1:
                raise InvalidConfig(f"{name} must be positive")
        for name in ("edge_vm_gips", "cloud_vm_gips", "duration_s", "duty_factor"):
            if float(getattr(self, name)) <= 0:
                raise InvalidConfig(f"{name} must be positive")
        if not self.device_counts or any(int(d) < 1 for d in self.device_counts):
            raise InvalidConfig("device_counts must be a nonempty list of positive counts")
        if self.seeds is not None and not self.seeds:
            raise InvalidConfig("seeds, when given, must be nonempty")
        unknown = set(self.orchestrators) - set(ORCHESTRATORS)
        if unknown or self.orchestrator not in ORCHESTRATORS:
            raise InvalidConfig(f"unknown orchestrator(s): {sorted(unknown) or self.orchestrator}")
        usage = sum(float(a["usage_pct"]) for a in self.applications.values())
        if abs(usage - 100.0) > 1e-9:
            raise InvalidConfig(f"application usage percentages sum to {usage}, not 100")
        att = self.mobility.get("attractiveness")
        if att is not None and len(att) != self.edge_server_count:
            raise InvalidConfig("one attractiveness weight per edge location is required")
        try:
            self.agent_config()
            self.profiles()
        except ValueError as exc:
            raise InvalidConfig(str(exc)) from exc

    @property
    def seed_list(self) -> list[int]:
        return [int(s) for s in self.seeds] if self.seeds is not None else list(range(self.repetitions))

    def profiles(self) -> list[ApplicationProfile]:
        out = []
        for app_id, a in self.applications.items():
            deadline = a.get("deadline_s")
            if deadline is None:
                deadline = deadline_for(a["delay_sensitivity"], self.base_deadline_s, self.deadline_floor)
            out.append(ApplicationProfile(
                app_id=app_id,
                mean_interarrival=float(a["mean_interarrival_s"]),
                delay_sensitivity=float(a["delay_sensitivity"]),
                upload_size=float(a["upload_kb"]),
                download_size=float(a["download_kb"]),
                vm_util_edge=float(a["vm_util_edge_pct"]),
                vm_util_cloud=float(a["vm_util_cloud_pct"]),
                usage_percentage=float(a["usage_pct"]),
                task_length=float(a["task_length_gi"]),
                deadline=float(deadline),
            ))
        return out

    def agent_config(self) -> AgentConfig:
        return AgentConfig(**self.agent)

    def attractiveness(self) -> list[float]:
        att = self.mobility.get("attractiveness")
        return [1.0] * self.edge_server_count if att is None else [float(w) for w in att]

    def bandwidth_table(self, scope: str) -> BandwidthTable:
        link = self.network[scope]
        if link.get("table_mbps"):
            return BandwidthTable(link["table_mbps"])
        return BandwidthTable.linear(link["nominal_mbps"], link["saturation_clients"])

    @property
    def man_service_rate(self) -> float:
        man = self.network["man"]
        # tasks/s = (Mbps * 1024 / 8) KB/s over the mean transfer size in KB
        return man["bandwidth_mbps"] * 1024.0 / 8.0 / man["mean_transfer_kb"]

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            out[f.name] = copy.deepcopy(getattr(self, f.name))
        out["agent"]["hidden_layers"] = list(out["agent"]["hidden_layers"])
        return out

    def replace(self, **changes) -> "ScenarioConfig":
        d = self.to_dict()
        for key, value in changes.items():
            if isinstance(value, dict) and isinstance(d.get(key), dict):
                d[key] = _merge(d[key], value)
            else:
                d[key] = value
        return ScenarioConfig(**d)

    def dump(self, path) -> None:
        Path(path).write_text(yaml.safe_dump(self.to_dict(), sort_keys=False))


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


PRESETS = {
    "full": {},
    "desk": {
        "edge_server_count": 3,
        "device_counts": [30, 60, 90, 120],
        "repetitions": 5,
        "seeds": [0, 1, 2, 3, 4],
        "training": {"episodes": 20, "device_count": 120, "seed": 1000},
    },
}


def preset(name: str, **changes) -> ScenarioConfig:
    if name not in PRESETS:
        raise InvalidConfig(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return ScenarioConfig().replace(**PRESETS[name]).replace(**changes)


def load_config(path) -> ScenarioConfig:
    """Read a YAML scenario; a top-level `preset` key selects the base to override."""
    data = yaml.safe_load(Path(path).read_text()) or {}
    if not isinstance(data, dict):
        raise InvalidConfig(f"{path}: expected a mapping at the top level")
    base = data.pop("preset", "full")
    known = {f.name for f in fields(ScenarioConfig)}
    extra = set(data) - known
    if extra:
        raise InvalidConfig(f"{path}: unknown keys {sorted(extra)}")
    try:
        return preset(base, **data)
    except TypeError as exc:
        raise InvalidConfig(str(exc)) from exc
