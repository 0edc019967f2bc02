import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridsoccer import nn
from gridsoccer.coma import critic_spec, policy_spec
from gridsoccer.dqn import dqn_spec
from gridsoccer.gradcheck import TOLERANCE, check_network, random_spec, relative_error


def test_shapes_compose_on_default_grid():
    spec = critic_spec(10, 18, 3)
    shapes = spec.shapes()
    assert shapes[0] == (8, 16, 32)
    assert shapes[2] == (3, 7, 64)
    assert spec.output_shape == (11,)


def test_critic_param_count_golden():
    # 3*3*5*32+32, 4*4*32*64+64, (3*7*64+25)*128+128, 128*64+64, 64*11+11
    assert critic_spec(10, 18, 3).param_count() == 1472 + 32832 + 175360 + 8256 + 715 == 218635


def test_bad_shapes_rejected():
    with pytest.raises(nn.ShapeError):
        nn.NetworkSpec((4, 4, 1), (nn.Conv(2, 5, 5),))
    with pytest.raises(nn.ShapeError):
        nn.NetworkSpec((4, 4, 1), (nn.Dense(3),))
    params = nn.init_params(nn.NetworkSpec((3,), (nn.Dense(2),)), np.random.default_rng(0))
    with pytest.raises(nn.ShapeError):
        nn.forward(params, np.zeros((1, 4)))
    with pytest.raises(nn.ShapeError):
        nn.forward(params, np.zeros((1, 3)), np.zeros((1, 1)))


def test_zero_network():
    spec = policy_spec(6, 9, 2)
    params = nn.init_params(spec, np.random.default_rng(0), "zeros")
    x = np.random.default_rng(1).random((3, 6, 9, 4))
    out = nn.predict(params, x, np.eye(2)[[0, 1, 0]])
    np.testing.assert_array_equal(out, np.full((3, 10), 0.1))
    q = nn.predict(nn.init_params(dqn_spec((6, 9, 4), 10, "small"), None, "zeros"), x)
    np.testing.assert_array_equal(q, 0.0)


def test_identity_conv():
    spec = nn.NetworkSpec((5, 7, 1), (nn.Conv(1, 1, 1),))
    params = nn.init_params(spec, np.random.default_rng(0))
    params.layers[0][0][...] = 1.0
    x = np.random.default_rng(2).random((2, 5, 7, 1))
    np.testing.assert_array_equal(nn.predict(params, x), x)


def test_conv_matches_direct_loops():
    rng = np.random.default_rng(3)
    spec = nn.NetworkSpec((6, 7, 3), (nn.Conv(4, 3, 2, 2),))
    params = nn.init_params(spec, rng)
    params.layers[0][1][...] = rng.normal(size=4)
    x = rng.normal(size=(2, 6, 7, 3))
    w, b = params.layers[0]
    out = nn.predict(params, x)
    Ho, Wo = out.shape[1:3]
    ref = np.zeros_like(out)
    for n in range(2):
        for i in range(Ho):
            for j in range(Wo):
                for o in range(4):
                    patch = x[n, 2 * i : 2 * i + 3, 2 * j : 2 * j + 2, :]
                    ref[n, i, j, o] = np.sum(patch * w[..., o]) + b[o]
    np.testing.assert_allclose(out, ref, rtol=0, atol=1e-12)


def test_dense_matches_matmul_oracle():
    rng = np.random.default_rng(4)
    spec = nn.NetworkSpec((3,), (nn.Dense(5), nn.ReLU(), nn.Dense(2)))
    params = nn.init_params(spec, rng)
    for pair in params.layers:
        if pair is not None:
            pair[1][...] = rng.normal(size=pair[1].shape)
    x = rng.normal(size=(8, 3))
    (w1, b1), _, (w2, b2) = params.layers
    hidden = [[max(0.0, sum(x[r, k] * w1[k, j] for k in range(3)) + b1[j]) for j in range(5)] for r in range(8)]
    ref = [[sum(hidden[r][k] * w2[k, j] for k in range(5)) + b2[j] for j in range(2)] for r in range(8)]
    np.testing.assert_allclose(nn.predict(params, x), np.array(ref), rtol=0, atol=1e-12)


def test_linear_gradient_is_input():
    rng = np.random.default_rng(5)
    params = nn.init_params(nn.NetworkSpec((4,), (nn.Dense(1),)), rng)
    x = rng.normal(size=(1, 4))
    out, cache = nn.forward(params, x)
    grads, dx, _ = nn.backward(params, cache, np.ones_like(out))
    np.testing.assert_array_equal(grads[0][0][:, 0], x[0])
    np.testing.assert_array_equal(dx[0], params.layers[0][0][:, 0])


def test_relu_dead_unit():
    params = nn.init_params(nn.NetworkSpec((2,), (nn.ReLU(),)), None)
    out, cache = nn.forward(params, np.array([[-1.0, 2.0]]))
    _, dx, _ = nn.backward(params, cache, np.ones((1, 2)))
    np.testing.assert_array_equal(dx, [[0.0, 1.0]])


@pytest.mark.parametrize("seed", range(5))
def test_random_networks_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    result = check_network(random_spec(rng), rng, name=f"random-{seed}")
    assert result.max_error < TOLERANCE, result


def test_relative_error_floor():
    assert relative_error(0.0, 0.0) == 0.0
    assert relative_error(1e-9, 0.0) == pytest.approx(1e-3)
    assert relative_error(1.0, 1.0 + 1e-6) == pytest.approx(1e-6, rel=1e-3)


def test_adam_first_step_is_lr_sign():
    for g in (3.7, -0.002, 250.0):
        params = nn.init_params(nn.NetworkSpec((1,), (nn.Dense(1),)), None, "zeros")
        state = nn.AdamState.for_params(params, lr=1e-3)
        nn.adam_step(params, [np.array([[g]]), np.array([g])], state)
        # closed form with bias correction: -lr * g / (|g| + eps), i.e. about -lr * sign(g)
        assert params.layers[0][0][0, 0] == pytest.approx(-1e-3 * g / (abs(g) + 1e-8), rel=1e-12)
        assert params.layers[0][0][0, 0] == pytest.approx(-1e-3 * np.sign(g), rel=1e-5)
        assert state.t == 1


def test_adam_zero_gradient_and_moment_decay():
    params = nn.init_params(nn.NetworkSpec((2,), (nn.Dense(2),)), np.random.default_rng(0))
    state = nn.AdamState.for_params(params)
    nn.adam_step(params, [np.ones((2, 2)), np.ones(2)], state)
    before = params.copy()
    m0 = [m.copy() for m in state.m]
    zero = [np.zeros_like(a) for a in params.arrays()]
    nn.adam_step(params, zero, state)
    for m, prev in zip(state.m, m0):
        np.testing.assert_allclose(m, 0.9 * prev)
    # a decayed nonzero momentum still moves the weights, so compare a fresh state instead
    fresh = nn.AdamState.for_params(before)
    snapshot = before.copy()
    nn.adam_step(before, zero, fresh)
    assert before.equals(snapshot)


def test_adam_non_finite_raises():
    params = nn.init_params(nn.NetworkSpec((1,), (nn.Dense(1),)), None, "zeros")
    state = nn.AdamState.for_params(params)
    with pytest.raises(nn.TrainingError):
        nn.adam_step(params, [np.array([[np.nan]]), np.zeros(1)], state)


def test_adam_deterministic():
    def run():
        rng = np.random.default_rng(7)
        spec = nn.NetworkSpec((4,), (nn.Dense(3), nn.ReLU(), nn.Dense(2)))
        params = nn.init_params(spec, rng)
        state = nn.AdamState.for_params(params)
        for _ in range(20):
            x = rng.normal(size=(5, 4))
            out, cache = nn.forward(params, x)
            grads, _, _ = nn.backward(params, cache, out)
            nn.adam_step(params, grads, state)
        return params

    assert run().equals(run())


def test_checkpoint_round_trip(tmp_path):
    spec = critic_spec(6, 9, 2)
    params = nn.init_params(spec, np.random.default_rng(0))
    params.layers[-1][1][...] = np.random.default_rng(1).normal(size=10)
    path = tmp_path / "net.gsnn"
    nn.save_params(params, path)
    back = nn.load_params(path, spec)
    assert back.equals(params)
    raw = path.read_bytes()
    assert raw[:4] == b"GSNN"
    nn.save_params(back, tmp_path / "again.gsnn")
    assert (tmp_path / "again.gsnn").read_bytes() == raw


def test_checkpoint_zero_net_output_unchanged(tmp_path):
    spec = dqn_spec((6, 9, 4), 10, "small")
    params = nn.init_params(spec, None, "zeros")
    x = np.random.default_rng(0).random((2, 6, 9, 4))
    nn.save_params(params, tmp_path / "z.gsnn")
    np.testing.assert_array_equal(nn.predict(nn.load_params(tmp_path / "z.gsnn"), x), nn.predict(params, x))


def test_checkpoint_wrong_spec(tmp_path):
    params = nn.init_params(dqn_spec((6, 9, 4), 10, "small"), np.random.default_rng(0))
    nn.save_params(params, tmp_path / "a.gsnn")
    with pytest.raises(nn.CheckpointError):
        nn.load_params(tmp_path / "a.gsnn", dqn_spec((6, 9, 4), 11, "small"))
    (tmp_path / "bad.gsnn").write_bytes(b"GSNX" + b"\0" * 20)
    with pytest.raises(nn.CheckpointError):
        nn.load_params(tmp_path / "bad.gsnn")
    truncated = (tmp_path / "a.gsnn").read_bytes()[:-8]
    (tmp_path / "t.gsnn").write_bytes(truncated)
    with pytest.raises(nn.CheckpointError):
        nn.load_params(tmp_path / "t.gsnn")


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-30, 30), min_size=2, max_size=12))
def test_softmax_is_distribution(logits):
    params = nn.init_params(nn.NetworkSpec((len(logits),), (nn.Softmax(),)), None)
    p = nn.predict(params, np.array([logits]))[0]
    assert np.all(p >= 0) and abs(p.sum() - 1.0) < 1e-12
