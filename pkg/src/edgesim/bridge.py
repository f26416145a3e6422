"""Delayed-action bookkeeping between decisions and task outcomes.

A memory item is opened when a task is routed and only reaches the replay
buffer once both its reward (the task's outcome) and its successor state (the
next decision) are known. Either can arrive first.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .agent import DDQNAgent, Transition
from .orchestration import OffloadCounters, Orchestrator


class UnknownTask(KeyError):
    pass


@dataclass
class MemoryItem:
    state_id: int
    state: np.ndarray | None = None
    next_state: np.ndarray | None = None
    next_state_id: int | None = None
    action: int | None = None
    value: float | None = None
    is_done: bool = False
    forwarded: bool = False

    @property
    def complete(self) -> bool:
        return (self.state is not None and self.next_state is not None
                and self.action is not None and self.value is not None)


class DelayedActionBridge:
    def __init__(self, agent: DDQNAgent, state_fn, normalize, counters: OffloadCounters,
                 n_edge: int, learn: bool = True, trace: list | None = None):
        self.agent = agent
        self.state_fn = state_fn
        self.normalize = normalize
        self.counters = counters
        self.n_edge = n_edge
        self.learn = learn
        self.trace = trace
        self.state_to_item: dict[int, MemoryItem] = {}
        self.task_to_state: dict[int, int] = {}
        self.last_state_id: int | None = None
        self._next_id = 0
        self.forwarded = 0
        self.td_errors: list[float] = []

    def _log(self, *row) -> None:
        if self.trace is not None:
            self.trace.append(row)

    def on_task_arrival(self, task) -> int:
        sid = self._next_id
        self._next_id += 1
        state = self.normalize(self.state_fn(task))
        action = self.agent.act(state)
        self.counters.record(action, task.home_wlan_id, self.n_edge)
        self.state_to_item[sid] = MemoryItem(sid, state=state, action=action)
        self._log("open", sid, task.task_id, action)
        prev = self.state_to_item.get(sid - 1)
        if prev is not None:
            prev.next_state = state
            prev.next_state_id = sid
            self._log("link", sid - 1, sid)
            if prev.complete:
                self._forward(prev)
        if task.task_id in self.task_to_state:
            raise ValueError(f"task {task.task_id} already routed")
        self.task_to_state[task.task_id] = sid
        self.last_state_id = sid
        return action

    def on_task_completion(self, task, success: bool, is_last: bool = False) -> None:
        try:
            sid = self.task_to_state.pop(task.task_id)
        except KeyError:
            raise UnknownTask(task.task_id) from None
        item = self.state_to_item.get(sid)
        if item is None:
            return
        item.value = 1.0 if success else -1.0
        item.is_done = bool(is_last)
        self._log("value", sid, task.task_id, int(item.value), int(item.is_done))
        if item.complete:
            self._forward(item)

    def flush_at_episode_end(self) -> int:
        """Close the final decision as terminal and forward every complete item left."""
        count = 0
        last = self.state_to_item.get(self.last_state_id) if self.last_state_id is not None else None
        if last is not None and last.value is not None and last.next_state is None:
            last.next_state = last.state
            last.next_state_id = last.state_id
            last.is_done = True
            self._log("terminal", last.state_id)
        for sid in sorted(self.state_to_item):
            item = self.state_to_item[sid]
            if item.complete and not item.forwarded:
                self._forward(item)
                count += 1
        return count

    def _forward(self, item: MemoryItem) -> None:
        if item.forwarded:
            raise RuntimeError(f"memory item {item.state_id} forwarded twice")
        item.forwarded = True
        self.forwarded += 1
        self._log("forward", item.state_id, item.next_state_id, item.action, int(item.value),
                  int(item.is_done))
        del self.state_to_item[item.state_id]
        if not self.learn:
            return
        self.agent.remember(Transition(item.state, item.action, item.value, item.next_state,
                                       item.is_done))
        if len(self.agent.replay) >= self.agent.config.minibatch_size:
            self.td_errors.append(self.agent.train_minibatch())

    def pending_items(self) -> int:
        return len(self.state_to_item)


def write_trace(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["op", "a", "b", "c", "d", "e"])
        for row in rows:
            w.writerow(list(row) + [""] * (6 - len(row)))


class DeepEdgeOrchestrator(Orchestrator):
    """Adapter exposing the agent + bridge through the orchestrator interface."""

    name = "deepedge"

    def __init__(self, agent: DDQNAgent, learn: bool = True):
        self.agent = agent
        self.learn = learn
        self.bridge: DelayedActionBridge | None = None
        self.manages_counters = True

    def attach(self, state_fn, normalize, counters, n_edge, trace=None) -> DelayedActionBridge:
        self.bridge = DelayedActionBridge(self.agent, state_fn, normalize, counters, n_edge,
                                          learn=self.learn, trace=trace)
        return self.bridge

    def route(self, task) -> int:
        return self.bridge.on_task_arrival(task)

    def on_task_completion(self, task, success: bool) -> None:
        self.bridge.on_task_completion(task, success, is_last=task.is_last)

    def on_episode_end(self) -> None:
        self.bridge.flush_at_episode_end()
