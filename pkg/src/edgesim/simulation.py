"""One simulated episode: devices, network, servers and an orchestrator wired to the event kernel."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

from .agent import Normalizer
from .compute import CLOUD, ComputeModel, TaskOutcomeRecord, classify_outcome
from .engine import EventKind, RngRegistry, Simulator
from .network import LinkSaturated, ManSaturated, NetworkModel
from .orchestration import OffloadCounters, Orchestrator, build_state
from .scenario import ScenarioConfig
from .workload import (
    Outcome,
    TaskFactory,
    assign_applications,
    dwell_time,
    expected_task_count,
    initial_location,
    next_task_time,
    nomadic_move,
)


@dataclass
class RunResult:
    device_count: int
    seed: int
    orchestrator: str
    generated: int = 0
    outcomes: Counter = field(default_factory=Counter)
    per_app_generated: Counter = field(default_factory=Counter)
    per_app_in_flight: Counter = field(default_factory=Counter)
    avg_vm_utilization: float = 0.0
    cumulative_reward: int = 0
    routes: Counter = field(default_factory=Counter)
    records: list = field(default_factory=list)

    @property
    def in_flight(self) -> int:
        return sum(self.per_app_in_flight.values())

    @property
    def completed(self) -> int:
        return sum(self.outcomes.values())

    @property
    def failed(self) -> int:
        return self.completed - self.outcomes[Outcome.Success]

    @property
    def failed_task_pct(self) -> float:
        return 100.0 * self.failed / self.completed if self.completed else 0.0


class EdgeSimulation:
    def __init__(self, config: ScenarioConfig, device_count: int, seed: int,
                 orchestrator: Orchestrator, trace: list | None = None,
                 keep_states: bool = False, bridge_trace: list | None = None):
        self.config = config
        self.seed = int(seed)
        self.n_edge = config.edge_server_count
        self.sim = Simulator(trace=trace)
        self.rngs = RngRegistry(seed)
        self.profiles = config.profiles()
        self.factory = TaskFactory(self.profiles)
        self.network = NetworkModel(
            self.n_edge,
            config.bandwidth_table("wlan"),
            config.bandwidth_table("wan"),
            wan_nominal=config.network["wan"]["nominal_mbps"],
            wlan_nominal=config.network["wlan"]["nominal_mbps"],
            man_service_rate=config.man_service_rate,
            man_propagation=config.network["man"]["propagation_ms"] / 1000.0,
            man_window=config.network["man"]["window_s"],
            wlan_propagation=config.network["wlan"]["propagation_ms"] / 1000.0,
            wan_propagation=config.network["wan"]["propagation_ms"] / 1000.0,
            man_delay_cap=config.network["man"]["delay_cap_s"],
        )
        self.compute = ComputeModel(self.n_edge, config.vms_per_edge, config.edge_vm_gips,
                                    config.cloud_vms, config.cloud_vm_gips)
        self.counters = OffloadCounters()
        self.orchestrator = orchestrator
        self.result = RunResult(device_count, self.seed, orchestrator.name)
        self.pending: dict[int, object] = {}
        self.states: list = [] if keep_states else None
        self.expected_tasks = expected_task_count(device_count, config.duration_s, self.profiles,
                                                  config.duty_factor)
        self.normalizer = Normalizer(self.n_edge, config.network["wan"]["nominal_mbps"],
                                     config.network["man"]["delay_cap_s"], self.expected_tasks)
        if hasattr(orchestrator, "attach"):
            orchestrator.attach(self._raw_state, self.normalizer, self.counters, self.n_edge,
                                trace=bridge_trace)
        self._build_population(device_count)
        for kind, handler in (
            (EventKind.TaskArrivalAtOrchestrator, self._on_arrival),
            (EventKind.UploadComplete, self._on_upload),
            (EventKind.ProcessingComplete, self._on_processing),
            (EventKind.DownloadComplete, self._on_download),
            (EventKind.MobilityMove, self._on_move),
            (EventKind.EpisodeEnd, self._on_episode_end),
        ):
            self.sim.on(kind, handler)

    # population and the pre-drawn workload/mobility trace

    def _build_population(self, device_count: int) -> None:
        """Draw every arrival and move up front so the trace is independent of routing."""
        horizon = self.config.duration_s
        att = self.config.attractiveness()
        base_dwell = self.config.mobility["base_dwell_s"]
        mob = self.rngs["mobility"]
        work = self.rngs["workload"]
        starts = [initial_location(att, mob) for _ in range(device_count)]
        self.devices = assign_applications(device_count, self.profiles, work, starts,
                                           self.config.duty_factor)
        profiles = {p.app_id: p for p in self.profiles}
        arrivals = []
        for dev in self.devices:
            t = next_task_time(0.0, dev, profiles[dev.app_id], work)
            while t < horizon:
                arrivals.append((t, dev.device_id))
                t = next_task_time(t, dev, profiles[dev.app_id], work)
        for dev in self.devices:
            t = dwell_time(dev.current_wlan_id, att, mob, base_dwell)
            loc = dev.current_wlan_id
            while t < horizon:
                probe = type(dev)(dev.device_id, dev.app_id, loc)
                loc, dwell = nomadic_move(probe, att, mob, base_dwell)
                self.sim.schedule(t, EventKind.MobilityMove, (dev.device_id, loc))
                t += dwell
        arrivals.sort()
        last = len(arrivals) - 1
        for i, (t, device_id) in enumerate(arrivals):
            self.sim.schedule(t, EventKind.TaskArrivalAtOrchestrator, (device_id, i == last))
        self.sim.schedule(horizon, EventKind.EpisodeEnd)

    def _raw_state(self, task):
        s = build_state(task, self.network, self.compute, self.counters, self.sim.now())
        if self.states is not None:
            self.states.append(s)
        return s

    # event handlers

    def _on_arrival(self, ev) -> None:
        device_id, is_last = ev.payload
        now = self.sim.now()
        dev = self.devices[device_id]
        task = self.factory.spawn_task(dev, now)
        task.is_last = is_last
        task.decided_at = now
        self.result.generated += 1
        self.result.per_app_generated[task.app_id] += 1
        if getattr(self.orchestrator, "manages_counters", False):
            action = self.orchestrator.route(task)
        else:
            state = self._raw_state(task)
            headroom = [self.compute.has_headroom(j, task.required_capacity) for j in range(self.n_edge)]
            action = int(self.orchestrator.decide(task, state, headroom))
            self.counters.record(action, task.home_wlan_id, self.n_edge)
        if not 0 <= action <= self.n_edge:
            raise ValueError(f"orchestrator returned invalid action {action}")
        task.action = action
        if action == self.n_edge:
            task.target, route = CLOUD, "WAN"
        elif action == task.home_wlan_id:
            task.target, route = action, "WLAN"
        else:
            task.target, route = action, "MAN"
            self.counters.active_man += 1
        self.result.routes[route] += 1
        self.pending[task.task_id] = task
        if route == "WAN":
            self._start_leg(task, "WAN", task.home_wlan_id, task.upload_size, "wan_up",
                            EventKind.UploadComplete)
        else:
            self._start_leg(task, "WLAN", task.home_wlan_id, task.upload_size, "wlan_up",
                            EventKind.UploadComplete)

    def _start_leg(self, task, scope, key, size, leg, kind) -> None:
        now = self.sim.now()
        try:
            tr = self.network.start_transfer(scope, key, size, now)
        except (LinkSaturated, ManSaturated):
            if leg == "man_up":
                self.counters.active_man -= 1
            self._finish(task, classify_outcome(task, network_failed=True))
            return
        task.leg = leg
        task.transfer = tr
        self.sim.schedule(now + tr.delay, kind, task)

    def _on_upload(self, ev) -> None:
        task = ev.payload
        now = self.sim.now()
        self.network.end_transfer(task.transfer)
        if task.leg == "wlan_up" and task.target != CLOUD and task.target != task.home_wlan_id:
            self._start_leg(task, "MAN", 0, task.upload_size, "man_up", EventKind.UploadComplete)
            return
        if task.leg == "man_up":
            self.counters.active_man -= 1
        task.upload_done_at = now
        vm = self.compute.admit(task, task.target, now)
        if vm is None:
            self._finish(task, classify_outcome(task, admitted=False))
            return
        task.vm = vm
        task.processing_time = self.compute.processing_time(task, vm)
        self.sim.schedule(now + task.processing_time, EventKind.ProcessingComplete, task)

    def _on_processing(self, ev) -> None:
        task = ev.payload
        now = self.sim.now()
        self.compute.release(task, task.vm, now)
        task.processing_done_at = now
        if task.target == CLOUD:
            self._start_leg(task, "WAN", task.home_wlan_id, task.download_size, "wan_down",
                            EventKind.DownloadComplete)
        elif task.target != task.home_wlan_id:
            self._start_leg(task, "MAN", 0, task.download_size, "man_down", EventKind.DownloadComplete)
        else:
            self._start_leg(task, "WLAN", task.home_wlan_id, task.download_size, "wlan_down",
                            EventKind.DownloadComplete)

    def _on_download(self, ev) -> None:
        task = ev.payload
        self.network.end_transfer(task.transfer)
        if task.leg == "man_down":
            self._start_leg(task, "WLAN", task.home_wlan_id, task.download_size, "wlan_down",
                            EventKind.DownloadComplete)
            return
        task.download_done_at = self.sim.now()
        where = self.devices[task.device_id].current_wlan_id
        self._finish(task, classify_outcome(task, current_wlan_id=where))

    def _on_move(self, ev) -> None:
        device_id, loc = ev.payload
        self.devices[device_id].current_wlan_id = loc

    def _on_episode_end(self, ev) -> None:
        self.sim.stop()

    def _finish(self, task, outcome: Outcome) -> None:
        now = self.sim.now()
        task.set_outcome(outcome, now)
        del self.pending[task.task_id]
        r = self.result
        r.outcomes[outcome] += 1
        success = outcome is Outcome.Success
        r.cumulative_reward += 1 if success else -1
        r.records.append(TaskOutcomeRecord(
            task.task_id, task.app_id, outcome, task.service_time,
            task.processing_time if task.processing_done_at is not None else None,
            None if task.vm is None else ("cloud" if task.target == CLOUD else "edge")))
        self.orchestrator.on_task_completion(task, success)

    def run(self) -> RunResult:
        self.sim.run_until(self.config.duration_s)
        self.orchestrator.on_episode_end()
        r = self.result
        for task in self.pending.values():
            r.per_app_in_flight[task.app_id] += 1
        r.avg_vm_utilization = self.compute.average_utilization(self.config.duration_s)
        return r
