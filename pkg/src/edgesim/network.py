"""WLAN/MAN/WAN delay models and live link-occupancy counters."""
from __future__ import annotations

import collections
from dataclasses import dataclass, field


class ManSaturated(RuntimeError):
    pass


class LinkSaturated(RuntimeError):
    pass


def man_delay(mu: float, lam: float, propagation: float = 0.005) -> float:
    """M/M/1 sojourn time plus propagation; mu and lam in tasks per second."""
    if lam >= mu:
        raise ManSaturated(f"arrival rate {lam} >= service rate {mu}")
    return 1.0 / (mu - lam) + propagation


def transfer_time(size_kb: float, bandwidth_mbps: float, propagation: float = 0.0) -> float:
    if size_kb == 0:
        return propagation
    return size_kb * 8.0 / (1024.0 * bandwidth_mbps) + propagation


class BandwidthTable:
    """Effective per-client bandwidth indexed by concurrent client count (1-based)."""

    def __init__(self, per_client_mbps):
        values = [float(v) for v in per_client_mbps]
        if not values or any(v <= 0 for v in values):
            raise ValueError("bandwidth table entries must be strictly positive")
        if any(b > a for a, b in zip(values, values[1:])):
            raise ValueError("bandwidth table must be nonincreasing in client count")
        self.values = values

    @classmethod
    def linear(cls, nominal_mbps: float, saturation_clients: int) -> "BandwidthTable":
        s = int(saturation_clients)
        return cls([nominal_mbps * (s - n + 1) / s for n in range(1, s + 1)])

    @property
    def saturation(self) -> int:
        return len(self.values)

    def effective(self, clients: int) -> float:
        if clients < 1:
            clients = 1
        if clients > len(self.values):
            raise LinkSaturated(f"{clients} clients exceed table range {len(self.values)}")
        return self.values[clients - 1]


@dataclass
class LinkState:
    scope: str
    table: BandwidthTable
    nominal_bandwidth: float
    propagation_delay: float = 0.0
    active_transfers: int = 0
    allocated: dict = field(default_factory=dict)

    def consumed(self) -> float:
        return sum(self.allocated.values())


@dataclass
class Transfer:
    handle: int
    scope: str
    key: int
    delay: float
    bandwidth: float


class NetworkModel:
    def __init__(self, n_locations: int, wlan_table: BandwidthTable, wan_table: BandwidthTable,
                 wan_nominal: float = 20.0, wlan_nominal: float | None = None,
                 man_service_rate: float = 10.0, man_propagation: float = 0.005,
                 man_window: float = 10.0, wlan_propagation: float = 0.0,
                 wan_propagation: float = 0.0, man_delay_cap: float = 1.0):
        self.wlan = [LinkState("WLAN", wlan_table, wlan_nominal or wlan_table.values[0], wlan_propagation)
                     for _ in range(n_locations)]
        self.wan = [LinkState("WAN", wan_table, wan_nominal, wan_propagation) for _ in range(n_locations)]
        self.man_service_rate = man_service_rate
        self.man_propagation = man_propagation
        self.man_window = man_window
        self.man_delay_cap = man_delay_cap
        self._man_starts: collections.deque[float] = collections.deque()
        self.active_man_transfers = 0
        self._handles = 0
        self._open: dict[int, Transfer] = {}

    def _link(self, scope: str, key: int) -> LinkState:
        return self.wlan[key] if scope == "WLAN" else self.wan[key]

    def man_arrival_rate(self, now: float) -> float:
        while self._man_starts and self._man_starts[0] < now - self.man_window:
            self._man_starts.popleft()
        return len(self._man_starts) / self.man_window

    def current_man_delay(self, now: float) -> float:
        """MAN delay a transfer starting now would see, capped for saturated links."""
        try:
            return min(man_delay(self.man_service_rate, self.man_arrival_rate(now), self.man_propagation),
                       self.man_delay_cap)
        except ManSaturated:
            return self.man_delay_cap

    def remaining_wan_bandwidth(self, wlan_id: int) -> float:
        link = self.wan[wlan_id]
        return max(0.0, link.nominal_bandwidth - link.consumed())

    def start_transfer(self, scope: str, key: int, size_kb: float, now: float) -> Transfer:
        """Begin a transfer; raises LinkSaturated or ManSaturated when it cannot be carried."""
        if scope == "MAN":
            lam = self.man_arrival_rate(now)
            delay = man_delay(self.man_service_rate, lam, self.man_propagation)
            self._man_starts.append(now)
            self.active_man_transfers += 1
            bandwidth = 0.0
        else:
            link = self._link(scope, key)
            bandwidth = link.table.effective(link.active_transfers + 1)
            delay = transfer_time(size_kb, bandwidth, link.propagation_delay)
            link.active_transfers += 1
        self._handles += 1
        tr = Transfer(self._handles, scope, key, delay, bandwidth)
        if scope != "MAN":
            self._link(scope, key).allocated[tr.handle] = bandwidth
        self._open[tr.handle] = tr
        return tr

    def end_transfer(self, tr: Transfer) -> None:
        if self._open.pop(tr.handle, None) is None:
            raise KeyError(f"transfer {tr.handle} already closed")
        if tr.scope == "MAN":
            self.active_man_transfers -= 1
        else:
            link = self._link(tr.scope, tr.key)
            link.active_transfers -= 1
            del link.allocated[tr.handle]

    @property
    def open_transfers(self) -> int:
        return len(self._open)
