import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridsoccer import nn
from gridsoccer.dqn import (
    BufferNotReady,
    ConcurrentTeam,
    CoordinatedTeam,
    EpsilonSchedule,
    Experience,
    QLearner,
    ReplayBuffer,
    SharedQTeam,
    coordinated_step,
    credit_assign,
    dqn_spec,
    epsilon_greedy,
    td_loss_and_gradient,
)
from gridsoccer.encoding import encode_comm
from gridsoccer.env import AgentId, EnvConfig, Team, mirror_action, mirror_state, new_game, step
from gridsoccer.harness.config import streams

# chi-square critical values at p = 0.001
CHI2_CRIT = {10: 29.588, 999: 1143.9}


def chi2(counts):
    counts = np.asarray(counts, dtype=float)
    expected = counts.sum() / len(counts)
    return float(((counts - expected) ** 2 / expected).sum())


def scalar_net(w: float):
    """Q(s) = w * s on a single input feature, one action."""
    spec = nn.NetworkSpec((1,), (nn.Dense(1),))
    p = nn.init_params(spec, None, "zeros")
    p.layers[0][0][0, 0] = w
    return p


def test_epsilon_greedy_argmax_and_ties():
    rng = np.random.default_rng(0)
    assert epsilon_greedy(np.array([1.0, 3.0, 2.0, 0.0]), 0.0, rng) == 1
    assert epsilon_greedy(np.array([5.0, 5.0, 0.0]), 0.0, rng) == 0


def test_epsilon_one_is_uniform():
    rng = np.random.default_rng(1)
    q = np.arange(11.0)
    counts = np.bincount([epsilon_greedy(q, 1.0, rng) for _ in range(10_000)], minlength=11)
    assert chi2(counts) < CHI2_CRIT[10]


def test_epsilon_schedule():
    s = EpsilonSchedule(0.5, 0.05, 300_000)
    assert s(0) == 0.5
    assert s(150_000) == pytest.approx(0.275)
    assert s(300_000) == 0.05 and s(10**7) == 0.05


def test_td_zero_nets():
    p = nn.init_params(dqn_spec((6, 9, 4), 10, "small"), None, "zeros")
    obs = np.random.default_rng(0).random((6, 9, 4))
    loss, grads = td_loss_and_gradient(p, p.copy(), [Experience(obs, 3, 0.0, obs, False)], 0.99)
    assert loss == 0.0
    assert all(not np.any(g) for g in nn.flat_grads(grads))


def test_td_scalar_hand_trace():
    # Q(s) = 0.5 s, target Q(s') = 2 s'; s = 2, s' = 3, r = 1, gamma = 0.9
    # y = 1 + 0.9 * 6 = 6.4; Q = 1; loss = 5.4^2; dL/dw = -2 * 5.4 * s = -21.6
    loss, grads = td_loss_and_gradient(scalar_net(0.5), scalar_net(2.0), [Experience(np.array([2.0]), 0, 1.0, np.array([3.0]), False)], 0.9)
    assert loss == pytest.approx(29.16, abs=1e-12)
    assert grads[0][0][0, 0] == pytest.approx(-21.6, abs=1e-12)
    assert grads[0][1][0] == pytest.approx(-10.8, abs=1e-12)


def test_td_terminal_drops_bootstrap():
    loss, _ = td_loss_and_gradient(scalar_net(0.0), scalar_net(100.0), [Experience(np.array([1.0]), 0, 50.0, np.array([1.0]), True)], 0.99)
    assert loss == 2500.0


def test_td_gradient_finite_differences():
    rng = np.random.default_rng(2)
    spec = nn.NetworkSpec((2,), (nn.Dense(2), nn.ReLU(), nn.Dense(2)))  # 12 parameters
    q = nn.init_params(spec, rng)
    for pair in q.layers:
        if pair is not None:
            pair[1][...] = rng.normal(size=pair[1].shape) * 0.1
    target = nn.init_params(spec, rng)
    batch = [Experience(rng.normal(size=2), int(rng.integers(2)), float(rng.normal()), rng.normal(size=2), bool(i % 2)) for i in range(4)]
    _, grads = td_loss_and_gradient(q, target, batch, 0.9)
    h = 1e-5
    for arr, g in zip(q.arrays(), nn.flat_grads(grads)):
        for idx in np.ndindex(arr.shape):
            old = arr[idx]
            arr[idx] = old + h
            up, _ = td_loss_and_gradient(q, target, batch, 0.9)
            arr[idx] = old - h
            down, _ = td_loss_and_gradient(q, target, batch, 0.9)
            arr[idx] = old
            num = (up - down) / (2 * h)
            assert abs(num - g[idx]) / max(abs(num), abs(g[idx]), 1e-6) < 1e-4


def test_target_sync():
    rng = np.random.default_rng(3)
    learner = QLearner(dqn_spec((6, 9, 4), 10, "small"), rng)
    s = rng.random((4, 6, 9, 4))
    frozen = learner.target.copy()
    learner.update(s, np.array([0, 1, 2, 3]), np.ones(4), s, np.zeros(4, dtype=bool))
    assert learner.target.equals(frozen)
    learner.sync_target()
    np.testing.assert_array_equal(nn.predict(learner.target, s), nn.predict(learner.q, s))
    snap = learner.target.copy()
    learner.sync_target()
    assert learner.target.equals(snap)


def test_replay_fifo_and_not_ready():
    buf = ReplayBuffer(3)
    items = [Experience(np.zeros(1), i, 0.0, np.zeros(1), False) for i in range(4)]
    for e in items:
        buf.push(e)
    assert [e.a for e in buf.contents()] == [1, 2, 3]
    rng = np.random.default_rng(0)
    with pytest.raises(BufferNotReady):
        buf.sample(4, rng)
    big = ReplayBuffer(2000)
    for i in range(999):
        big.push(Experience(np.zeros(1), i, 0.0, np.zeros(1), False))
    with pytest.raises(BufferNotReady):
        big.sample(1000, rng)


def test_replay_uniform_sampling():
    buf = ReplayBuffer(1000)
    for i in range(1000):
        buf.push(Experience(np.zeros(1), i, 0.0, np.zeros(1), False))
    rng = np.random.default_rng(4)
    counts = np.zeros(1000)
    for _ in range(100):
        for e in buf.sample(1000, rng):
            counts[e.a] += 1
    assert chi2(counts) < CHI2_CRIT[999]


def test_credit_assign_examples():
    np.testing.assert_array_equal(credit_assign([10, 10, 10], [2, 1, 1], "off"), [10, 10, 10])
    out = credit_assign([10.0] * 3, [2.0, 1.0, 1.0], "ratio")
    # mean(Q) = 4/3, so 10 * 2 / (4/3) = 15 and 10 * 1 / (4/3) = 7.5, both inside [5, 20]
    np.testing.assert_allclose(out, [15.0, 7.5, 7.5], rtol=0, atol=1e-12)
    np.testing.assert_allclose(credit_assign([-4.0] * 3, [0.3, 0.3, 0.3], "ratio"), [-4.0] * 3)


@settings(max_examples=300, deadline=None)
@given(
    st.floats(-100, 100).filter(lambda r: abs(r) > 1e-6),
    st.lists(st.floats(-50, 50), min_size=1, max_size=5),
)
def test_credit_assign_preserves_sign(R, q):
    out = credit_assign([R] * len(q), q, "ratio")
    assert np.all(np.sign(out) == np.sign(R))
    lo, hi = sorted((0.5 * R, 2 * R))
    assert np.all(out >= lo - 1e-12) and np.all(out <= hi + 1e-12)


def _team(cls, seed=0, **kw):
    kw.setdefault("preset", "small")
    return cls(2, 6, 9, Team.LEFT, seed_rngs=streams(seed, "t"), **kw)


def test_concurrent_updates_are_independent():
    team = _team(ConcurrentTeam)
    before = [a.q.copy() for a in team.agents]
    obs = np.random.default_rng(0).random((1, 6, 9, 4))
    team.agents[0].update(obs, np.array([1]), np.array([5.0]), obs, np.array([False]))
    assert not team.agents[0].q.equals(before[0])
    assert team.agents[1].q.equals(before[1])


def test_paramshare_single_parameter_set():
    team = _team(SharedQTeam)
    state = new_game(EnvConfig(H=6, W=9, n=2))
    codes = team.act(state)
    out = step(state, codes + [0, 0])
    team.observe(state, codes, out)
    obs = team.observations(state)
    same = np.stack([obs[0], obs[0]])
    q = team.q_values(same)
    np.testing.assert_array_equal(q[0], q[1])
    assert list(team.networks()) == ["q"]


def test_coordinated_deterministic_and_history():
    cfg = EnvConfig(H=6, W=9, n=2)
    state = new_game(cfg)
    params = nn.init_params(dqn_spec((6, 9, 7), 40, "small"), np.random.default_rng(0))
    a1, h1 = coordinated_step(params, state, [0, 0], 4, 0.0, np.random.default_rng(1))
    a2, h2 = coordinated_step(params, state, [0, 0], 4, 0.0, np.random.default_rng(2))
    assert a1 == a2 and h1 == h2
    team = _team(CoordinatedTeam, comm_size=4)
    team.fixed_epsilon = 1.0
    team.act(state)
    said = list(team.comm_history)
    obs = team.observations(state)
    # teammate 1 sees the symbol agent 0 picked last step at agent 0's cell
    r, c = state.positions[0]
    assert obs[1][r, c, 3 + said[0]] == 1.0
    np.testing.assert_array_equal(obs[1], encode_comm(state, AgentId(Team.LEFT, 1), said, 4))


def test_degenerate_comm_matches_paramshare():
    cfg = EnvConfig(H=6, W=9, n=2)
    a = _team(SharedQTeam, layout="comm", use_replay=False)
    b = _team(CoordinatedTeam, comm_size=1, use_replay=False)
    assert a.learner.q.equals(b.learner.q)
    state = new_game(cfg)
    opp = np.random.default_rng(9)
    for _ in range(300):
        ca, cb = a.act(state), b.act(state)
        assert ca == cb
        out = step(state, ca + [int(x) for x in opp.integers(0, 10, size=2)])
        a.observe(state, ca, out)
        b.observe(state, cb, out)
        state = out.next_state
    assert a.learner.q.equals(b.learner.q)


def test_target_synced_only_on_goals():
    cfg = EnvConfig(H=6, W=9, n=2)
    team = _team(SharedQTeam)
    opp = np.random.default_rng(5)
    state = new_game(cfg)
    target = team.learner.target.copy()
    goals = 0
    for _ in range(400):
        codes = team.act(state)
        out = step(state, codes + [int(x) for x in opp.integers(0, 10, size=2)])
        team.observe(state, codes, out)
        if out.goal_scored is not None:
            goals += 1
            assert team.learner.target.equals(team.learner.q)
            target = team.learner.target.copy()
        else:
            assert team.learner.target.equals(target)
        state = out.next_state
    assert goals > 0


def test_mirrored_team_acts_in_absolute_frame():
    cfg = EnvConfig(H=6, W=9, n=2)
    left = _team(SharedQTeam)
    right = SharedQTeam(2, 6, 9, Team.RIGHT, seed_rngs=streams(0, "t"), preset="small")
    left.fixed_epsilon = right.fixed_epsilon = 0.0
    state = new_game(cfg)
    mirrored = mirror_state(state)
    assert right.act(mirrored) == [mirror_action(c) for c in left.act(state)]
