"""DDQN learner: epsilon-greedy acting, experience replay, double-Q targets."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import orchestration as orch
from .engine import RngStream
from .nn import DenseNetwork, SgdConfig


class InsufficientExperience(RuntimeError):
    pass


@dataclass
class EpsilonSchedule:
    initial: float = 1.0
    decay_factor: float = 0.99
    floor: float = 0.1
    steps: int = 0

    @property
    def current(self) -> float:
        return max(self.floor, self.initial * self.decay_factor ** self.steps)

    def decay(self) -> float:
        self.steps += 1
        return self.current


@dataclass
class AgentConfig:
    discount: float = 0.8
    learning_rate: float = 1e-4
    minibatch_size: int = 4
    target_sync_period: int = 10
    replay_capacity: int = 1_000_000
    epsilon_initial: float = 1.0
    epsilon_decay: float = 0.99
    epsilon_floor: float = 0.1
    hidden_layers: tuple = (128, 128)
    clip_norm: float | None = 10.0
    minibatch_reduce: str = "mean"

    def __post_init__(self):
        if not 0.0 <= self.discount <= 1.0:
            raise ValueError("discount must lie in [0, 1]")
        if self.minibatch_size < 1:
            raise ValueError("minibatch_size must be >= 1")
        if self.minibatch_reduce not in ("mean", "sum"):
            raise ValueError("minibatch_reduce must be 'mean' or 'sum'")
        self.hidden_layers = tuple(self.hidden_layers)


@dataclass
class Transition:
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    is_done: bool

    def __post_init__(self):
        if self.reward not in (-1, 1, -1.0, 1.0):
            raise ValueError(f"reward must be -1 or +1, got {self.reward}")


class ReplayBuffer:
    """Ring buffer of transitions; storage grows on demand up to `capacity`."""

    def __init__(self, capacity: int, width: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self.width = width
        self._alloc = min(self.capacity, 1024)
        self.states = np.zeros((self._alloc, width))
        self.next_states = np.zeros((self._alloc, width))
        self.actions = np.zeros(self._alloc, dtype=int)
        self.rewards = np.zeros(self._alloc)
        self.dones = np.zeros(self._alloc, dtype=bool)
        self.size = 0
        self._head = 0  # next write slot
        self.inserted = 0

    def __len__(self) -> int:
        return self.size

    def _grow(self) -> None:
        new = min(self.capacity, self._alloc * 2)
        for name in ("states", "next_states", "actions", "rewards", "dones"):
            old = getattr(self, name)
            arr = np.zeros((new,) + old.shape[1:], dtype=old.dtype)
            arr[: self._alloc] = old
            setattr(self, name, arr)
        self._alloc = new

    def push(self, t: Transition) -> None:
        if self._head >= self._alloc and self._alloc < self.capacity:
            self._grow()
        i = self._head
        self.states[i] = t.state
        self.next_states[i] = t.next_state
        self.actions[i] = t.action
        self.rewards[i] = t.reward
        self.dones[i] = t.is_done
        self._head = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)
        self.inserted += 1

    def ordered_indices(self) -> np.ndarray:
        """Slot indices from oldest to newest."""
        if self.size < self.capacity:
            return np.arange(self.size)
        return (np.arange(self.size) + self._head) % self.capacity

    def sample(self, m: int, rng: RngStream):
        idx = rng.generator.integers(self.size, size=m)
        return (self.states[idx], self.actions[idx], self.rewards[idx],
                self.next_states[idx], self.dones[idx])


class Normalizer:
    """Maps a raw state vector into [0, 1] feature by feature."""

    def __init__(self, n_edge: int, wan_nominal: float = 20.0, man_delay_cap: float = 1.0,
                 expected_tasks: float = 1.0, active_man_max: float = 50.0):
        self.maxima = np.empty(orch.state_width(n_edge))
        self.maxima[orch.WAN_BW] = wan_nominal
        self.maxima[orch.MAN_DELAY] = man_delay_cap
        self.maxima[orch.TASK_REQ_CAPACITY] = 100.0
        self.maxima[orch.WLAN_ID] = max(n_edge - 1, 1)
        self.maxima[orch.DELAY_SENSITIVITY] = 1.0
        self.maxima[orch.N_TO_WLAN:orch.N_TO_WAN + 1] = max(expected_tasks, 1.0)
        self.maxima[orch.N_ACTIVE_MAN] = active_man_max
        self.maxima[orch.N_STATIC:] = 100.0

    def __call__(self, raw) -> np.ndarray:
        return np.clip(np.asarray(raw, dtype=float) / self.maxima, 0.0, 1.0)


def greedy(q) -> int:
    # np.argmax returns the first maximum, i.e. ties go to the lowest index
    return int(np.argmax(q))


def ddqn_target(reward, next_state, is_done, online: DenseNetwork, target: DenseNetwork,
                discount: float):
    """Online network picks the bootstrap action, target network evaluates it."""
    next_state = np.atleast_2d(next_state)
    reward = np.asarray(reward, dtype=float).reshape(-1)
    done = np.asarray(is_done, dtype=bool).reshape(-1)
    best = np.argmax(online.forward(next_state), axis=1)
    q_next = target.forward(next_state)[np.arange(len(best)), best]
    y = reward + discount * np.where(done, 0.0, q_next)
    return y if y.size > 1 else float(y[0])


def dqn_target(reward, next_state, is_done, target: DenseNetwork, discount: float):
    """Target network both selects and evaluates (the overestimating form)."""
    next_state = np.atleast_2d(next_state)
    reward = np.asarray(reward, dtype=float).reshape(-1)
    done = np.asarray(is_done, dtype=bool).reshape(-1)
    q_next = target.forward(next_state).max(axis=1)
    y = reward + discount * np.where(done, 0.0, q_next)
    return y if y.size > 1 else float(y[0])


class DDQNAgent:
    def __init__(self, n_edge: int, config: AgentConfig | None = None,
                 init_rng: RngStream | None = None, explore_rng: RngStream | None = None,
                 replay_rng: RngStream | None = None):
        self.config = config or AgentConfig()
        self.n_edge = n_edge
        self.n_actions = n_edge + 1
        width = orch.state_width(n_edge)
        sizes = [width, *self.config.hidden_layers, self.n_actions]
        init_rng = init_rng or RngStream("network-init", 0)
        self.online = DenseNetwork.build(sizes, init_rng.generator)
        self.target = self.online.clone()
        self.explore_rng = explore_rng or RngStream("agent-exploration", 0)
        self.replay_rng = replay_rng or RngStream("agent-replay", 0)
        self.replay = ReplayBuffer(self.config.replay_capacity, width)
        self.epsilon = EpsilonSchedule(self.config.epsilon_initial, self.config.epsilon_decay,
                                       self.config.epsilon_floor)
        self.sgd = SgdConfig(self.config.learning_rate, self.config.clip_norm)
        self.train_steps = 0
        self.episode = 0
        self.frozen_epsilon: float | None = None

    @property
    def current_epsilon(self) -> float:
        return self.epsilon.current if self.frozen_epsilon is None else self.frozen_epsilon

    def act(self, state, epsilon: float | None = None) -> int:
        eps = self.current_epsilon if epsilon is None else epsilon
        if eps > 0 and self.explore_rng.uniform() < eps:
            return self.explore_rng.integers(self.n_actions)
        return greedy(self.online.forward(state))

    def remember(self, t: Transition) -> None:
        self.replay.push(t)

    def train_minibatch(self) -> float:
        m = self.config.minibatch_size
        if len(self.replay) < m:
            raise InsufficientExperience(f"{len(self.replay)} transitions < minibatch {m}")
        s, a, r, s2, d = self.replay.sample(m, self.replay_rng)
        y = ddqn_target(r, s2, d, self.online, self.target, self.config.discount)
        grads, td = self.online.backward_batch(s, a, np.atleast_1d(y))
        if self.config.minibatch_reduce == "sum":
            grads = [g * m for g in grads]
        self.online.sgd_step(grads, self.sgd)
        self.train_steps += 1
        if self.train_steps % self.config.target_sync_period == 0:
            self.sync_target()
        return float(np.mean(np.abs(td)))

    def sync_target(self) -> None:
        self.target.copy_from(self.online)

    def end_episode(self) -> None:
        self.episode += 1
        self.epsilon.decay()

    def save(self, directory) -> Path:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        self.online.save(d / "online.bin")
        self.target.save(d / "target.bin")
        manifest = {
            "format": 1,
            "n_edge": self.n_edge,
            "epsilon": self.epsilon.current,
            "epsilon_steps": self.epsilon.steps,
            "train_steps": self.train_steps,
            "episode": self.episode,
            "config": asdict(self.config),
        }
        (d / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        return d

    @classmethod
    def load(cls, directory, **rngs) -> "DDQNAgent":
        d = Path(directory)
        manifest = json.loads((d / "manifest.json").read_text())
        cfg = manifest["config"]
        cfg["hidden_layers"] = tuple(cfg["hidden_layers"])
        agent = cls(manifest["n_edge"], AgentConfig(**cfg), **rngs)
        agent.online = DenseNetwork.load(d / "online.bin")
        agent.target = DenseNetwork.load(d / "target.bin")
        agent.epsilon.steps = manifest["epsilon_steps"]
        agent.train_steps = manifest["train_steps"]
        agent.episode = manifest["episode"]
        return agent
