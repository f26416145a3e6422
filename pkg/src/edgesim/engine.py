"""Discrete-event kernel: virtual clock, ordered event queue and named RNG streams."""
from __future__ import annotations

import enum
import heapq
import zlib
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np


class SchedulingInPast(ValueError):
    pass


class EventKind(enum.Enum):
    TaskArrivalAtOrchestrator = "task_arrival"
    UploadComplete = "upload_complete"
    ProcessingComplete = "processing_complete"
    DownloadComplete = "download_complete"
    MobilityMove = "mobility_move"
    EpisodeEnd = "episode_end"


@dataclass(order=True)
class SimEvent:
    fire_time: float
    sequence: int
    kind: EventKind = field(compare=False)
    payload: Any = field(default=None, compare=False)


class RngStream:
    """A named, seeded random stream.

    The generator is keyed on (seed, crc32(name)) so that adding a stream for a
    new concern never shifts the draws of the existing ones.
    """

    def __init__(self, name: str, seed: int):
        self.name = name
        self.seed = int(seed)
        key = zlib.crc32(name.encode("utf-8"))
        self.generator = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence([self.seed & 0xFFFFFFFFFFFFFFFF, key]))
        )

    def exponential(self, mean: float) -> float:
        return float(self.generator.exponential(mean))

    def uniform(self) -> float:
        return float(self.generator.random())

    def integers(self, high: int) -> int:
        return int(self.generator.integers(high))

    def choice(self, weights) -> int:
        w = np.asarray(weights, dtype=float)
        cdf = np.cumsum(w)
        u = self.generator.random() * cdf[-1]
        return int(np.searchsorted(cdf, u, side="right"))


class RngRegistry:
    def __init__(self, seed: int):
        self.seed = int(seed)
        self._streams: dict[str, RngStream] = {}

    def __getitem__(self, name: str) -> RngStream:
        if name not in self._streams:
            self._streams[name] = RngStream(name, self.seed)
        return self._streams[name]


Handler = Callable[[SimEvent], None]


class Simulator:
    def __init__(self, trace: list | None = None):
        self._now = 0.0
        self._seq = 0
        self._queue: list[SimEvent] = []
        self._handlers: dict[EventKind, Handler] = {}
        self.trace = trace
        self.stopped = False

    def now(self) -> float:
        return self._now

    def on(self, kind: EventKind, handler: Handler) -> None:
        self._handlers[kind] = handler

    def schedule(self, fire_time: float, kind: EventKind, payload: Any = None) -> SimEvent:
        if fire_time < self._now:
            raise SchedulingInPast(f"event at {fire_time} scheduled at now={self._now}")
        event = SimEvent(float(fire_time), self._seq, kind, payload)
        self._seq += 1
        heapq.heappush(self._queue, event)
        return event

    def schedule_in(self, delay: float, kind: EventKind, payload: Any = None) -> SimEvent:
        return self.schedule(self._now + delay, kind, payload)

    def pending(self) -> int:
        return len(self._queue)

    def stop(self) -> None:
        self.stopped = True

    def run_until(self, t_end: float) -> int:
        if t_end < self._now:
            raise SchedulingInPast(f"run_until({t_end}) before now={self._now}")
        count = 0
        self.stopped = False
        while self._queue and self._queue[0].fire_time <= t_end and not self.stopped:
            event = heapq.heappop(self._queue)
            self._now = event.fire_time
            if self.trace is not None:
                self.trace.append((event.fire_time, event.sequence, event.kind.value))
            handler = self._handlers.get(event.kind)
            if handler is not None:
                handler(event)
            count += 1
        if not self.stopped:
            self._now = t_end
        return count
