"""Acceptance criteria, one test per numbered criterion.

Run `pytest tests/test_acceptance.py -v` to get the PASS/FAIL summary block.
"""
import collections
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from edgesim.agent import AgentConfig, EpsilonSchedule, ReplayBuffer, Transition, ddqn_target, dqn_target
from edgesim.bridge import DeepEdgeOrchestrator
from edgesim.engine import RngStream
from edgesim.experiment import WORKERS_ENV, make_orchestrator, new_agent, run_evaluation, run_training
from edgesim.network import man_delay
from edgesim.nn import RELU, DenseNetwork
from edgesim.orchestration import (
    MAN_DELAY,
    N_STATIC,
    WAN_BW,
    decide_hybrid,
    decide_network_based,
    decide_utilization_based,
    state_width,
)
from edgesim.scenario import preset
from edgesim.simulation import EdgeSimulation

acceptance = pytest.mark.acceptance


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    """Desk-preset training run shared by the learning and determinism checks."""
    out = tmp_path_factory.mktemp("train")
    cfg = preset("desk")
    start = time.perf_counter()
    res = run_training(cfg, out_dir=out)
    res["elapsed"] = time.perf_counter() - start
    return cfg, res


# 1

def _fd_gradients(net, x, a, y, eps=1e-5):
    def loss():
        return 0.5 * (net.forward(x)[a] - y) ** 2

    out = []
    for p in net.parameters():
        g = np.zeros_like(p)
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + eps
            up = loss()
            flat[i] = old - eps
            down = loss()
            flat[i] = old
            gflat[i] = (up - down) / (2 * eps)
        out.append(g)
    return out


def _away_from_kinks(net, x, margin=1e-3):
    a = x
    for w, b, act in zip(net.weights, net.biases, net.activations):
        z = w @ a + b
        if act == RELU and np.any(np.abs(z) < margin):
            return False
        a = np.maximum(z, 0) if act == RELU else z
    return True


@acceptance(1, "analytic gradients match central finite differences on 100 random networks")
def test_gradient_oracle():
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    worst = 0.0
    for k in range(100):
        sizes = [int(rng.integers(2, 8)), int(rng.integers(2, 7)), int(rng.integers(2, 7)),
                 int(rng.integers(2, 5))]
        net = DenseNetwork.build(sizes, rng)
        for b in net.biases:
            b[...] = rng.normal(scale=0.1, size=b.shape)
        # ReLU is not differentiable at 0; redraw inputs that land within eps of a kink
        x = rng.normal(size=sizes[0])
        while not _away_from_kinks(net, x):
            x = rng.normal(size=sizes[0])
        a, y = int(rng.integers(sizes[-1])), float(rng.normal())
        analytic = net.backward(x, a, y)
        numeric = _fd_gradients(net, x, a, y)
        for ga, gn in zip(analytic, numeric):
            scale = np.maximum(np.maximum(np.abs(ga), np.abs(gn)), 1e-6)
            worst = max(worst, float(np.max(np.abs(ga - gn) / scale)))
    elapsed = time.perf_counter() - start
    print(f"worst relative error {worst:.2e} in {elapsed:.1f}s")
    assert worst < 1e-4
    assert elapsed < 30


# 2

def _brute_force_target(r, s2, done, online, target, gamma):
    if done:
        return r
    q = online.forward(s2)
    best = 0
    for j in range(1, len(q)):
        if q[j] > q[best]:
            best = j
    return r + gamma * target.forward(s2)[best]


@acceptance(2, "DDQN target equals brute-force enumeration; equal networks give the DQN form")
def test_ddqn_target_oracle():
    rng = np.random.default_rng(9)
    start = time.perf_counter()
    width = state_width(3)
    online = DenseNetwork.build([width, 16, 16, 4], rng)
    target = DenseNetwork.build([width, 16, 16, 4], rng)
    for _ in range(1000):
        s2 = rng.random(width)
        r = float(rng.choice([-1.0, 1.0]))
        done = bool(rng.random() < 0.1)
        assert ddqn_target(r, s2, done, online, target, 0.8) == _brute_force_target(r, s2, done, online, target, 0.8)
        assert ddqn_target(r, s2, done, online, online, 0.8) == dqn_target(r, s2, done, online, 0.8)
    assert time.perf_counter() - start < 10


# 3

@acceptance(3, "MAN delay equals the M/M/1 sojourn time plus 5 ms")
def test_mm1_delay():
    start = time.perf_counter()
    for mu in np.linspace(0.5, 200.0, 40):
        for frac in np.linspace(0.0, 0.999, 40):
            lam = mu * frac
            exact = Fraction(1) / (Fraction(mu) - Fraction(lam)) + Fraction(5, 1000)
            got = man_delay(mu, lam)
            assert abs(Fraction(got) - exact) / exact < Fraction(1, 10**9)
    assert time.perf_counter() - start < 1


# 4

@acceptance(4, "200 devices over 300 s generate 6500 tasks within 10% on 5 seeds")
def test_workload_calibration():
    cfg = preset("full")
    start = time.perf_counter()
    counts = []
    for seed in range(5):
        sim = EdgeSimulation(cfg, 200, seed, make_orchestrator("network", seed))
        counts.append(sim.run().generated)
    print("generated per seed:", counts)
    assert all(abs(c - 6500) <= 650 for c in counts)
    assert time.perf_counter() - start < 120


# 5

@acceptance(5, "no two consecutive decision states are equal over 10,000 decisions")
def test_markov_uniqueness():
    cfg = preset("desk")
    start = time.perf_counter()
    sim = EdgeSimulation(cfg, 360, 0, make_orchestrator("random", 0), keep_states=True)
    sim.run()
    states = np.array(sim.states[:10_000])
    assert len(states) == 10_000
    assert np.all(np.any(states[1:] != states[:-1], axis=1))
    assert time.perf_counter() - start < 60


# 6

@acceptance(6, "every completed task forwards exactly one memory item along the decision chain")
def test_bridge_conservation():
    cfg = preset("desk")
    start = time.perf_counter()
    trace = []
    agent = new_agent(cfg, 7)
    orch = DeepEdgeOrchestrator(agent, learn=True)
    result = EdgeSimulation(cfg, 36, 7, orch, bridge_trace=trace).run()
    assert result.generated >= 1000

    forwards = [row for row in trace if row[0] == "forward"]
    sids = [row[1] for row in forwards]
    assert len(forwards) == orch.bridge.forwarded == result.completed
    assert len(set(sids)) == len(sids)

    opened = [row[1] for row in trace if row[0] == "open"]
    last = opened[-1]
    for _, sid, nxt, *_ in forwards:
        assert nxt == (sid if sid == last else sid + 1)

    # replay order follows forward order: each next_state is the successor's state
    row_of = {sid: i for i, sid in enumerate(sids)}
    replay = agent.replay
    for i, (_, sid, nxt, action, value, done) in enumerate(forwards):
        assert replay.actions[i] == action and replay.rewards[i] == value
        assert bool(replay.dones[i]) == bool(done)
        if nxt in row_of:
            np.testing.assert_array_equal(replay.next_states[i], replay.states[row_of[nxt]])
    assert time.perf_counter() - start < 60


# 7

def _state(n, wan, loads):
    s = np.zeros(N_STATIC + n)
    s[WAN_BW] = wan
    s[MAN_DELAY] = 0.01
    s[N_STATIC:] = loads
    return s


@acceptance(7, "baseline rules switch at 6 Mbps of WAN bandwidth and 80% mean edge load")
def test_baseline_boundaries():
    n = 3
    assert decide_network_based(_state(n, 20.0, [10, 50, 30])) == n
    assert decide_network_based(_state(n, 5.0, [10, 50, 30])) == 0
    assert decide_network_based(_state(n, 6.0, [40, 5, 30])) == 1
    assert decide_utilization_based(_state(n, 1.0, [80, 80, 80])) == n
    assert decide_utilization_based(_state(n, 1.0, [79.9, 80, 80])) == 0
    assert decide_hybrid(_state(n, 20.0, [90, 90, 90])) == n
    assert decide_hybrid(_state(n, 5.0, [90, 90, 90])) == 0
    assert decide_hybrid(_state(n, 20.0, [50, 10, 60])) == 1


# 8

@pytest.mark.slow
@acceptance(8, "trained agent beats random on all 5 paired seeds and the failure rate declines")
def test_learning_smoke(trained):
    cfg, res = trained
    rates = [row["failed_task_pct"] for row in res["log"]]
    assert len(rates) == 20
    print("training failed %:", " ".join(f"{r:.1f}" for r in rates))
    assert np.median(rates[-5:]) < np.median(rates[:5])

    evaluation = cfg.replace(orchestrators=["deepedge", "random"], device_counts=[120])
    start = time.perf_counter()
    report = run_evaluation(evaluation, checkpoint=res["checkpoint"])
    for seed in cfg.seed_list:
        ours = report.select(orchestrator="deepedge", seed=seed, app="all")[0]["failed_task_pct"]
        theirs = report.select(orchestrator="random", seed=seed, app="all")[0]["failed_task_pct"]
        print(f"seed {seed}: deepedge {ours:.2f}%  random {theirs:.2f}%")
        assert ours < theirs
    assert res["elapsed"] + time.perf_counter() - start < 15 * 60


# 9

@pytest.mark.slow
@acceptance(9, "two full evaluations write byte-identical metric files")
def test_determinism(trained, tmp_path, monkeypatch):
    cfg, res = trained
    start = time.perf_counter()
    run_evaluation(cfg, checkpoint=res["checkpoint"], out_dir=tmp_path / "a")
    monkeypatch.setenv(WORKERS_ENV, "4")
    run_evaluation(cfg, checkpoint=res["checkpoint"], out_dir=tmp_path / "b")
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    assert Path("report.csv") in files and len(files) > 5
    for rel in files:
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes(), rel
    assert time.perf_counter() - start < 5 * 60


# 10

@acceptance(10, "replay eviction and epsilon schedule invariants over 100,000 random operations")
def test_replay_and_epsilon_invariants():
    rng = np.random.default_rng(10)
    sampler = RngStream("agent-replay", 10)
    start = time.perf_counter()
    cap = int(rng.integers(50, 500))
    buf = ReplayBuffer(cap, 2)
    ref = collections.deque(maxlen=cap)
    cfg = AgentConfig()
    eps = EpsilonSchedule(cfg.epsilon_initial, cfg.epsilon_decay, cfg.epsilon_floor)
    prev_eps = eps.current
    for i in range(100_000):
        op = rng.random()
        if op < 0.6 or len(buf) < 4:
            buf.push(Transition(np.array([i, -i]), i % 4, 1.0 if i % 2 else -1.0, np.array([i + 1, 0]), False))
            ref.append(i)
        elif op < 0.9:
            s, a, r, s2, d = buf.sample(4, sampler)
            live = set(ref)
            assert all(int(v) in live for v in s[:, 0])
            assert np.all(a == s[:, 0].astype(int) % 4)
        else:
            cur = eps.decay()
            assert cfg.epsilon_floor <= cur <= prev_eps
            prev_eps = cur
        assert len(buf) == len(ref) <= cap
    assert list(buf.states[buf.ordered_indices(), 0].astype(int)) == list(ref)
    assert eps.current == cfg.epsilon_floor
    assert time.perf_counter() - start < 30
