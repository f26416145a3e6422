"""Decision-point state vector, offloading counters and the rule-based orchestrators."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engine import RngStream

WAN_BW, MAN_DELAY, TASK_REQ_CAPACITY, WLAN_ID, DELAY_SENSITIVITY = range(5)
N_TO_WLAN, N_TO_MAN, N_TO_WAN, N_ACTIVE_MAN = range(5, 9)
N_STATIC = 9

WAN_THRESHOLD_MBPS = 6.0
UTILIZATION_THRESHOLD = 80.0


def state_width(n_edge: int) -> int:
    return N_STATIC + n_edge


@dataclass
class OffloadCounters:
    to_wlan: int = 0
    to_man: int = 0
    to_wan: int = 0
    active_man: int = 0

    def record(self, action: int, home: int, n_edge: int) -> str:
        """Bump exactly one cumulative tally for `action`; returns the route taken."""
        if action == home:
            self.to_wlan += 1
            return "WLAN"
        if action < n_edge:
            self.to_man += 1
            return "MAN"
        self.to_wan += 1
        return "WAN"


def build_state(task, network, compute, counters: OffloadCounters, now: float) -> np.ndarray:
    n = compute.n_edge
    s = np.empty(state_width(n))
    s[WAN_BW] = network.remaining_wan_bandwidth(task.home_wlan_id)
    s[MAN_DELAY] = network.current_man_delay(now)
    s[TASK_REQ_CAPACITY] = task.required_capacity
    s[WLAN_ID] = task.home_wlan_id
    s[DELAY_SENSITIVITY] = task.delay_sensitivity
    s[N_TO_WLAN] = counters.to_wlan
    s[N_TO_MAN] = counters.to_man
    s[N_TO_WAN] = counters.to_wan
    s[N_ACTIVE_MAN] = counters.active_man
    s[N_STATIC:] = compute.edge_loads()
    return s


def edge_loads(state) -> np.ndarray:
    return np.asarray(state[N_STATIC:], dtype=float)


def least_loaded_edge(state, headroom=None) -> int:
    """Least-loaded server among those with admission headroom; ties to the lowest index.

    Falls back to every server when none has headroom.
    """
    loads = edge_loads(state)
    candidates = [j for j in range(len(loads)) if headroom is None or headroom[j]]
    if not candidates:
        candidates = list(range(len(loads)))
    return min(candidates, key=lambda j: (loads[j], j))


def decide_network_based(state, headroom=None) -> int:
    n = len(state) - N_STATIC
    if n == 0 or state[WAN_BW] > WAN_THRESHOLD_MBPS:
        return n
    return least_loaded_edge(state, headroom)


def decide_utilization_based(state, headroom=None) -> int:
    n = len(state) - N_STATIC
    if n == 0 or edge_loads(state).mean() >= UTILIZATION_THRESHOLD:
        return n
    return least_loaded_edge(state, headroom)


def decide_hybrid(state, headroom=None) -> int:
    n = len(state) - N_STATIC
    if n == 0:
        return 0
    if state[WAN_BW] > WAN_THRESHOLD_MBPS and edge_loads(state).mean() >= UTILIZATION_THRESHOLD:
        return n
    return least_loaded_edge(state, headroom)


def decide_random(state, rng: RngStream) -> int:
    n = len(state) - N_STATIC
    return rng.integers(n + 1)


class Orchestrator:
    """Routes each task to one of N edge servers (0..N-1) or the cloud (N)."""

    name = "base"

    def decide(self, task, state, headroom) -> int:
        raise NotImplementedError

    def on_task_completion(self, task, success: bool) -> None:
        pass

    def on_episode_end(self) -> None:
        pass


class RuleOrchestrator(Orchestrator):
    def __init__(self, name: str, rule):
        self.name = name
        self.rule = rule

    def decide(self, task, state, headroom) -> int:
        return self.rule(state, headroom)


class RandomOrchestrator(Orchestrator):
    name = "random"

    def __init__(self, rng: RngStream):
        self.rng = rng

    def decide(self, task, state, headroom) -> int:
        return decide_random(state, self.rng)


BASELINES = {
    "network": decide_network_based,
    "utilization": decide_utilization_based,
    "hybrid": decide_hybrid,
}
