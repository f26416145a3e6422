"""Application profiles, device population, task generation and nomadic mobility."""
from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass

import numpy as np

from .engine import RngStream


class InvalidProfileSet(ValueError):
    pass


class DegenerateAttractiveness(ValueError):
    pass


class Outcome(enum.Enum):
    Pending = "pending"
    Success = "success"
    FailCapacity = "fail_capacity"
    FailDeadline = "fail_deadline"
    FailMobility = "fail_mobility"


@dataclass(frozen=True)
class ApplicationProfile:
    app_id: str
    mean_interarrival: float
    delay_sensitivity: float
    upload_size: float
    download_size: float
    vm_util_edge: float
    vm_util_cloud: float
    usage_percentage: float
    task_length: float
    deadline: float

    def __post_init__(self):
        if not 0.0 <= self.delay_sensitivity <= 1.0:
            raise InvalidProfileSet(f"{self.app_id}: delay sensitivity outside [0, 1]")
        for name in ("vm_util_edge", "vm_util_cloud"):
            v = getattr(self, name)
            if not 0.0 < v <= 100.0:
                raise InvalidProfileSet(f"{self.app_id}: {name}={v} outside (0, 100]")
        for name in ("mean_interarrival", "upload_size", "download_size", "task_length", "deadline"):
            if getattr(self, name) <= 0:
                raise InvalidProfileSet(f"{self.app_id}: {name} must be positive")


APP_IDS = ("AugmentedReality", "PervasiveHealth", "ImageRendering", "Infotainment")

# interarrival s, sensitivity, upload KB, download KB, edge %, cloud %, usage %
APP_TABLE = {
    "AugmentedReality": (2.0, 0.9, 1500.0, 25.0, 6.0, 0.6, 30.0),
    "PervasiveHealth": (3.0, 0.7, 20.0, 1250.0, 2.0, 0.2, 20.0),
    "ImageRendering": (20.0, 0.1, 2500.0, 200.0, 30.0, 3.0, 20.0),
    "Infotainment": (7.0, 0.3, 25.0, 1000.0, 10.0, 1.0, 30.0),
}

# giga-instructions; sized so dedicated-share processing fits inside each deadline
DEFAULT_TASK_LENGTHS = {
    "AugmentedReality": 0.15,
    "PervasiveHealth": 0.1,
    "ImageRendering": 6.0,
    "Infotainment": 1.0,
}


def deadline_for(sensitivity: float, base_deadline: float = 1.0, eps: float = 0.05) -> float:
    return base_deadline / max(sensitivity, eps)


def default_profiles(base_deadline: float = 1.0, eps: float = 0.05,
                     task_lengths: dict | None = None,
                     deadlines: dict | None = None) -> list[ApplicationProfile]:
    lengths = dict(DEFAULT_TASK_LENGTHS, **(task_lengths or {}))
    deadlines = deadlines or {}
    profiles = []
    for app_id in APP_IDS:
        ia, sens, up, down, edge, cloud, usage = APP_TABLE[app_id]
        profiles.append(ApplicationProfile(
            app_id=app_id,
            mean_interarrival=ia,
            delay_sensitivity=sens,
            upload_size=up,
            download_size=down,
            vm_util_edge=edge,
            vm_util_cloud=cloud,
            usage_percentage=usage,
            task_length=lengths[app_id],
            deadline=deadlines.get(app_id, deadline_for(sens, base_deadline, eps)),
        ))
    return profiles


@dataclass
class Task:
    task_id: int
    app_id: str
    device_id: int
    home_wlan_id: int
    created_at: float
    upload_size: float
    download_size: float
    required_capacity: float
    required_capacity_cloud: float
    task_length: float
    deadline: float
    delay_sensitivity: float
    decided_at: float | None = None
    upload_done_at: float | None = None
    processing_done_at: float | None = None
    download_done_at: float | None = None
    outcome: Outcome = Outcome.Pending
    # routing bookkeeping written by the simulation
    action: int | None = None
    target: object = None
    vm: object = None
    leg: str = ""
    is_last: bool = False
    finished_at: float | None = None
    transfer: object = None
    processing_time: float | None = None

    def set_outcome(self, outcome: Outcome, at: float) -> None:
        if self.outcome is not Outcome.Pending:
            raise RuntimeError(f"task {self.task_id} outcome already {self.outcome}")
        if outcome is Outcome.Pending:
            raise ValueError("cannot transition back to Pending")
        self.outcome = outcome
        self.finished_at = at

    @property
    def service_time(self) -> float | None:
        if self.download_done_at is None or self.decided_at is None:
            return None
        return self.download_done_at - self.decided_at


@dataclass
class MobileDevice:
    device_id: int
    app_id: str
    current_wlan_id: int
    duty_factor: float = 0.4


def apportion(total: int, percentages) -> list[int]:
    """Largest-remainder apportionment of `total` items by percentage."""
    pct = np.asarray(percentages, dtype=float)
    if abs(pct.sum() - 100.0) > 1e-9:
        raise InvalidProfileSet(f"usage percentages sum to {pct.sum()}, not 100")
    quotas = total * pct / 100.0
    counts = np.floor(quotas).astype(int)
    remainders = quotas - counts
    # stable sort: ties go to the earlier profile
    order = sorted(range(len(pct)), key=lambda i: (-remainders[i], i))
    for i in order[: total - int(counts.sum())]:
        counts[i] += 1
    return [int(c) for c in counts]


def assign_applications(device_count: int, profiles, rng: RngStream,
                        initial_wlans=None, duty_factor: float = 0.4) -> list[MobileDevice]:
    counts = apportion(device_count, [p.usage_percentage for p in profiles])
    apps = list(itertools.chain.from_iterable(
        [p.app_id] * c for p, c in zip(profiles, counts)))
    order = rng.generator.permutation(device_count)
    devices = []
    for device_id in range(device_count):
        wlan = 0 if initial_wlans is None else int(initial_wlans[device_id])
        devices.append(MobileDevice(device_id, apps[order[device_id]], wlan, duty_factor))
    return devices


def next_task_time(now: float, device: MobileDevice, profile: ApplicationProfile,
                   rng: RngStream) -> float:
    # thinning a Poisson stream by the duty factor scales the mean gap by 1/duty
    return now + rng.exponential(profile.mean_interarrival / device.duty_factor)


def initial_location(attractiveness, rng: RngStream) -> int:
    w = np.asarray(attractiveness, dtype=float)
    if np.any(w < 0) or not np.any(w > 0):
        raise DegenerateAttractiveness("attractiveness weights must be nonnegative and not all zero")
    return rng.choice(w)


def dwell_time(location: int, attractiveness, rng: RngStream, base_dwell: float = 60.0) -> float:
    w = np.asarray(attractiveness, dtype=float)
    return rng.exponential(base_dwell * w[location] / w.mean())


def nomadic_move(device: MobileDevice, attractiveness, rng: RngStream,
                 base_dwell: float = 60.0) -> tuple[int, float]:
    """Pick the next location among the others, proportionally to attractiveness."""
    w = np.asarray(attractiveness, dtype=float)
    if np.any(w < 0) or not np.any(w > 0):
        raise DegenerateAttractiveness("attractiveness weights must be nonnegative and not all zero")
    if len(w) == 1:
        return 0, dwell_time(0, w, rng, base_dwell)
    others = w.copy()
    others[device.current_wlan_id] = 0.0
    if not np.any(others > 0):
        raise DegenerateAttractiveness("no other location has positive attractiveness")
    nxt = rng.choice(others)
    return nxt, dwell_time(nxt, w, rng, base_dwell)


class TaskFactory:
    def __init__(self, profiles):
        self.profiles = {p.app_id: p for p in profiles}
        self._ids = itertools.count()

    def spawn_task(self, device: MobileDevice, now: float) -> Task:
        p = self.profiles[device.app_id]
        return Task(
            task_id=next(self._ids),
            app_id=p.app_id,
            device_id=device.device_id,
            home_wlan_id=device.current_wlan_id,
            created_at=now,
            upload_size=p.upload_size,
            download_size=p.download_size,
            required_capacity=p.vm_util_edge,
            required_capacity_cloud=p.vm_util_cloud,
            task_length=p.task_length,
            deadline=p.deadline,
            delay_sensitivity=p.delay_sensitivity,
        )


def expected_task_count(device_count: int, duration: float, profiles, duty_factor: float = 0.4) -> float:
    counts = apportion(device_count, [p.usage_percentage for p in profiles])
    return duration * duty_factor * sum(c / p.mean_interarrival for p, c in zip(profiles, counts))

