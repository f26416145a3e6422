"""Edge/cloud VM pools, first-fit admission, dedicated-share processing and outcomes."""
from __future__ import annotations

from dataclasses import dataclass, field

from .workload import Outcome, Task

CLOUD = "cloud"


@dataclass
class Vm:
    host: object  # edge server index or CLOUD
    index: int
    capacity: float  # GIPS
    committed_utilization: float = 0.0
    active: dict = field(default_factory=dict)  # task_id -> required percent

    def fits(self, required: float) -> bool:
        return self.committed_utilization + required <= 100.0 + 1e-9


@dataclass
class TaskOutcomeRecord:
    task_id: int
    app_id: str
    outcome: Outcome
    service_time: float | None
    processing_time: float | None
    processed_at: str | None  # "edge" | "cloud"


def processing_time(task_length: float, vm_capacity: float, required_percent: float) -> float:
    if task_length == 0:
        return 0.0
    return task_length / (vm_capacity * required_percent / 100.0)


class ComputeModel:
    def __init__(self, edge_servers: int = 14, vms_per_edge: int = 8, edge_vm_gips: float = 10.0,
                 cloud_vms: int = 4, cloud_vm_gips: float = 100.0):
        self.edge = [[Vm(j, i, edge_vm_gips) for i in range(vms_per_edge)] for j in range(edge_servers)]
        self.cloud = [Vm(CLOUD, i, cloud_vm_gips) for i in range(cloud_vms)]
        self._last_t = 0.0
        self._util_area = 0.0

    @property
    def n_edge(self) -> int:
        return len(self.edge)

    def vms(self, target) -> list[Vm]:
        return self.cloud if target == CLOUD else self.edge[target]

    @staticmethod
    def required_for(task: Task, target) -> float:
        return task.required_capacity_cloud if target == CLOUD else task.required_capacity

    def server_load(self, j: int) -> float:
        vms = self.edge[j]
        return sum(vm.committed_utilization for vm in vms) / len(vms)

    def edge_loads(self) -> list[float]:
        return [self.server_load(j) for j in range(self.n_edge)]

    def has_headroom(self, j: int, required: float) -> bool:
        return any(vm.fits(required) for vm in self.edge[j])

    def _advance(self, now: float) -> None:
        # time-weighted utilisation integral over every VM (edge and cloud)
        if now > self._last_t:
            total = sum(vm.committed_utilization for vms in self.edge for vm in vms)
            total += sum(vm.committed_utilization for vm in self.cloud)
            self._util_area += total * (now - self._last_t)
            self._last_t = now

    def admit(self, task: Task, target, now: float = 0.0) -> Vm | None:
        """First-fit on the lowest-index VM; None means rejected."""
        self._advance(now)
        required = self.required_for(task, target)
        for vm in self.vms(target):
            if vm.fits(required):
                vm.committed_utilization += required
                vm.active[task.task_id] = required
                return vm
        return None

    def release(self, task: Task, vm: Vm, now: float = 0.0) -> None:
        self._advance(now)
        required = vm.active.pop(task.task_id)
        vm.committed_utilization -= required
        if abs(vm.committed_utilization) < 1e-9 and not vm.active:
            vm.committed_utilization = 0.0

    def processing_time(self, task: Task, vm: Vm) -> float:
        required = task.required_capacity_cloud if vm.host == CLOUD else task.required_capacity
        return processing_time(task.task_length, vm.capacity, required)

    def average_utilization(self, now: float) -> float:
        """Time-weighted mean committed utilisation across all VMs up to `now`."""
        self._advance(now)
        n = sum(len(v) for v in self.edge) + len(self.cloud)
        if now <= 0:
            return 0.0
        return self._util_area / (n * now)


def classify_outcome(task: Task, admitted: bool = True, current_wlan_id: int | None = None,
                     network_failed: bool = False) -> Outcome:
    """Terminal classification: capacity, then mobility, then the SLA deadline."""
    if not admitted:
        return Outcome.FailCapacity
    if network_failed:
        return Outcome.FailDeadline
    if current_wlan_id is not None and current_wlan_id != task.home_wlan_id:
        return Outcome.FailMobility
    st = task.service_time
    if st is None or st > task.deadline:
        return Outcome.FailDeadline
    return Outcome.Success
