import collections

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from edgesim.agent import (
    AgentConfig,
    DDQNAgent,
    EpsilonSchedule,
    InsufficientExperience,
    Normalizer,
    ReplayBuffer,
    Transition,
    ddqn_target,
    dqn_target,
)
from edgesim.engine import RngStream
from edgesim.nn import LINEAR, DenseNetwork


def linear_net(matrix):
    m = np.asarray(matrix, dtype=float)
    return DenseNetwork([m], [np.zeros(m.shape[0])], [LINEAR])


def small_agent(n_edge=1, **cfg):
    return DDQNAgent(n_edge, AgentConfig(**cfg), RngStream("network-init", 1),
                     RngStream("agent-exploration", 1), RngStream("agent-replay", 1))


def brute_force_ddqn(r, s2, done, online, target, gamma):
    if done:
        return r
    q_online = online.forward(s2)
    best, best_val = 0, q_online[0]
    for a in range(1, len(q_online)):
        if q_online[a] > best_val:
            best, best_val = a, q_online[a]
    return r + gamma * target.forward(s2)[best]


def test_ddqn_hand_example():
    # next state one-hot; online prefers action 2, target values it at 0.5
    online = linear_net(np.diag([0.1, 0.2, 0.9]))
    target = linear_net(np.diag([3.0, 3.0, 0.5]))
    assert ddqn_target(1.0, [1.0, 1.0, 1.0], False, online, target, 0.8) == pytest.approx(1.4)


def test_ddqn_terminal():
    online = linear_net(np.eye(3))
    assert ddqn_target(-1.0, [5.0, 1.0, 2.0], True, online, linear_net(np.eye(3) * 9), 0.8) == -1.0


def test_ddqn_matches_brute_force_and_dqn_when_equal():
    rng = np.random.default_rng(0)
    for k in range(200):
        online = DenseNetwork.build([6, 5, 4], rng)
        target = DenseNetwork.build([6, 5, 4], rng)
        s2 = rng.random(6)
        r = float(rng.choice([-1.0, 1.0]))
        done = bool(rng.random() < 0.2)
        assert ddqn_target(r, s2, done, online, target, 0.8) == brute_force_ddqn(r, s2, done, online, target, 0.8)
        assert ddqn_target(r, s2, done, online, online, 0.8) == dqn_target(r, s2, done, online, 0.8)


def test_overestimation_ordering():
    rng = np.random.default_rng(1)
    for _ in range(300):
        online = DenseNetwork.build([6, 5, 4], rng)
        target = DenseNetwork.build([6, 5, 4], rng)
        s2 = rng.random(6)
        y_ddqn = ddqn_target(1.0, s2, False, online, target, 0.8)
        y_dqn = dqn_target(1.0, s2, False, target, 0.8)
        if np.argmax(online.forward(s2)) == np.argmax(target.forward(s2)):
            assert y_dqn == y_ddqn
        else:
            assert y_dqn >= y_ddqn


def test_act_greedy_and_ties():
    agent = small_agent(n_edge=2)
    # q = (0.1, 0.9, 0.3) for an all-ones state
    w = np.diag([0.1, 0.9, 0.3]) @ np.ones((3, 11)) / 11
    agent.online = DenseNetwork([w], [np.zeros(3)], [LINEAR])
    assert agent.act(np.ones(11), epsilon=0.0) == 1
    agent.online = DenseNetwork([np.zeros((3, 11))], [np.zeros(3)], [LINEAR])
    assert agent.act(np.ones(11), epsilon=0.0) == 0


def test_act_uniform_under_full_exploration():
    agent = small_agent(n_edge=2)
    s = np.zeros(11)
    draws = np.fromiter((agent.act(s, epsilon=1.0) for _ in range(1_000_000)), dtype=int)
    freq = np.bincount(draws, minlength=3) / len(draws)
    assert np.all(np.abs(freq - 1 / 3) / (1 / 3) < 0.01)


def test_replay_eviction_oldest_first():
    buf = ReplayBuffer(5, 2)
    for i in range(8):
        buf.push(Transition(np.full(2, i), i % 2, 1.0, np.zeros(2), False))
    assert len(buf) == 5
    assert list(buf.states[buf.ordered_indices(), 0]) == [3, 4, 5, 6, 7]


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 40), st.integers(0, 120))
def test_replay_keeps_last_capacity_items(capacity, inserts):
    buf = ReplayBuffer(capacity, 1)
    for i in range(inserts):
        buf.push(Transition(np.array([i]), 0, -1.0, np.array([i]), False))
    assert len(buf) == min(capacity, inserts)
    assert list(buf.states[buf.ordered_indices(), 0]) == list(range(max(0, inserts - capacity), inserts))


@given(st.floats(0.01, 1.0), st.floats(0.5, 1.0), st.floats(0.0, 0.5), st.integers(0, 500))
def test_epsilon_schedule(initial, decay, floor, k):
    e = EpsilonSchedule(initial, decay, floor)
    prev = e.current
    for _ in range(k):
        cur = e.decay()
        assert cur <= prev and cur >= floor
        prev = cur
    assert e.current == max(floor, initial * decay ** k)


def test_transition_reward_domain():
    with pytest.raises(ValueError):
        Transition(np.zeros(2), 0, 0.5, np.zeros(2), False)


def test_normalizer():
    norm = Normalizer(14, expected_tasks=6500)
    raw = np.zeros(23)
    raw[0], raw[3] = 20.0, 3
    out = norm(raw)
    assert out[0] == 1.0 and out[3] == pytest.approx(3 / 13)
    np.testing.assert_array_equal(norm(np.zeros(23)), np.zeros(23))
    big = np.full(23, 1e9)
    assert np.all(norm(big) == 1.0)


def test_train_requires_experience():
    agent = small_agent()
    with pytest.raises(InsufficientExperience):
        agent.train_minibatch()


def test_train_noop_at_fixed_point():
    agent = small_agent(n_edge=1)
    s = np.zeros(10)
    agent.online = DenseNetwork([np.zeros((2, 10))], [np.array([1.0, 0.0])], [LINEAR])
    agent.target = agent.online.clone()
    for _ in range(4):
        agent.remember(Transition(s, 0, 1.0, s, True))
    before = [p.copy() for p in agent.online.parameters()]
    assert agent.train_minibatch() == 0.0
    for a, b in zip(before, agent.online.parameters()):
        np.testing.assert_array_equal(a, b)


def test_toy_problem_learns_rewarding_action():
    agent = small_agent(n_edge=1, learning_rate=0.01, hidden_layers=(16, 16))
    s = np.full(10, 0.5)
    agent.remember(Transition(s, 0, -1.0, s, True))
    agent.remember(Transition(s, 1, 1.0, s, True))
    agent.config.minibatch_size = 2
    for _ in range(500):
        agent.train_minibatch()
    assert agent.act(s, epsilon=0.0) == 1


def test_target_sync_period():
    agent = small_agent(n_edge=1, learning_rate=0.01)
    s = np.random.default_rng(0).random(10)
    for a in range(4):
        agent.remember(Transition(s, a % 2, 1.0, s, False))
    for _ in range(9):
        agent.train_minibatch()
    assert any(np.any(a != b) for a, b in zip(agent.online.parameters(), agent.target.parameters()))
    agent.train_minibatch()
    assert agent.train_steps == 10
    for a, b in zip(agent.online.parameters(), agent.target.parameters()):
        np.testing.assert_array_equal(a, b)


def test_checkpoint_roundtrip(tmp_path):
    agent = small_agent(n_edge=2)
    agent.end_episode()
    agent.train_steps = 42
    agent.save(tmp_path / "ck")
    again = DDQNAgent.load(tmp_path / "ck")
    assert again.train_steps == 42 and again.episode == 1
    assert again.epsilon.current == pytest.approx(0.99)
    x = np.random.default_rng(0).random(11)
    np.testing.assert_array_equal(again.online.forward(x), agent.online.forward(x))


def test_config_validation():
    with pytest.raises(ValueError):
        AgentConfig(discount=1.5)
    with pytest.raises(ValueError):
        AgentConfig(minibatch_size=0)


def test_replay_randomized_operations_against_deque():
    # 10^5 mixed pushes and samples checked against a bounded deque
    rng = np.random.default_rng(7)
    cap = 257
    buf = ReplayBuffer(cap, 1)
    ref = collections.deque(maxlen=cap)
    sampler = RngStream("agent-replay", 0)
    for i in range(100_000):
        if rng.random() < 0.9 or len(buf) == 0:
            buf.push(Transition(np.array([i]), 0, 1.0, np.array([i]), False))
            ref.append(i)
        else:
            s, *_ = buf.sample(4, sampler)
            assert set(s[:, 0].astype(int)) <= set(ref)
        assert len(buf) == len(ref)
    assert list(buf.states[buf.ordered_indices(), 0].astype(int)) == list(ref)
