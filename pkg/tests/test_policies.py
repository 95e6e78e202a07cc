import numpy as np
import pytest

from offloadlab.nn import AdamState, bce_loss
from offloadlab.policies import (
    INPUT_SCALE,
    VARIANTS,
    DNNPolicy,
    QuantumPolicy,
    RNNPolicy,
    make_policy,
    scale_input,
    train_step,
)

from oracles import fd_check

N = 5


def make_inputs(policy, rng, B=4):
    if policy.window > 1:
        return rng.uniform(0, 3, size=(B, 3, N))
    return rng.uniform(0, 3, size=(B, N))


def policy_fd(policy, rng, n_checks=6):
    x = make_inputs(policy, rng)
    t = rng.integers(0, 2, size=(x.shape[0], N)).astype(float)
    drops = [layer for _, layer in policy.layers if type(layer).__name__ == "Dropout"]

    def reseed():
        for i, d in enumerate(drops):
            d.rng = np.random.default_rng(100 + i)

    def loss():
        reseed()
        return bce_loss(policy.forward(x, train=True), t)[0]

    reseed()
    policy.zero_grad()
    m = policy.forward(x, train=True)
    _, dm = bce_loss(m, t)
    dx = policy.backward(dm)
    analytic = {"x": dx, **{k: v.copy() for k, v in policy.gradients().items()}}
    arrays = {"x": x, **policy.parameters()}
    return fd_check(loss, analytic, arrays, rng, n_checks=n_checks)


@pytest.mark.parametrize("variant", ["dnn", "rnn"])
def test_classical_policy_gradients(variant):
    rng = np.random.default_rng(1)
    p = make_policy(variant, N, seed=3, **({"hidden": 6} if variant == "rnn" else {}))
    assert policy_fd(p, rng) <= 1e-5


@pytest.mark.parametrize("variant", ["quantum_dnn", "quantum_attention"])
def test_quantum_policy_gradients(variant):
    rng = np.random.default_rng(2)
    p = make_policy(variant, N, seed=4, reduce_hidden=6, head_hidden=6)
    # reduction outputs live on a ReLU; nudge biases so every qubit sees a nonzero feature
    p.layers[2][1].params["b"] += 0.5
    assert policy_fd(p, rng) <= 1e-4


def test_output_range_and_shape():
    rng = np.random.default_rng(0)
    for v in VARIANTS:
        p = make_policy(v, N, seed=0)
        m = p.forward(make_inputs(p, rng), train=False)
        assert m.shape == (4, N)
        assert np.all((m > 0) & (m < 1))


def test_dnn_architecture():
    p = DNNPolicy(10)
    shapes = [v.shape for k, v in p.parameters().items() if k.endswith(".W")]
    assert shapes == [(10, 120), (120, 80), (80, 10)]


def test_quantum_architecture():
    p = QuantumPolicy(10, attention=True)
    assert p.parameters()["quantum.theta"].shape == (8,)
    assert p.parameters()["attention.WQ"].shape == (8, 8)
    assert "dense.W" in QuantumPolicy(10, attention=False).parameters()


def test_bad_input_shape():
    with pytest.raises(ValueError):
        DNNPolicy(4).forward(np.zeros((2, 5)))
    with pytest.raises(ValueError):
        RNNPolicy(4).forward(np.zeros((2, 4)))
    with pytest.raises(ValueError):
        make_policy("cnn", 4)


def test_seeded_init_reproducible():
    a = make_policy("quantum_attention", 6, seed=9).state_dict()
    b = make_policy("quantum_attention", 6, seed=9).state_dict()
    assert all(np.array_equal(a[k], b[k]) for k in a)


def test_save_load_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    for v in VARIANTS:
        p = make_policy(v, N, seed=1)
        x = make_inputs(p, rng)
        train_step(p, x, (rng.random((4, N)) > 0.5).astype(float), AdamState())
        p.save(tmp_path / f"{v}.ckpt")
        q = make_policy(v, N, seed=2)
        q.load(tmp_path / f"{v}.ckpt")
        np.testing.assert_array_equal(p.forward(x), q.forward(x))
    with pytest.raises(ValueError):
        make_policy("dnn", N).load(tmp_path / "rnn.ckpt")


def test_train_step_reduces_loss():
    rng = np.random.default_rng(0)
    p = DNNPolicy(N, seed=0)
    x = rng.uniform(0, 3, (32, N))
    t = (x > 1.5).astype(float)
    opt = AdamState(lr=1e-2)
    first = train_step(p, x, t, opt)
    for _ in range(200):
        last = train_step(p, x, t, opt)
    assert last < 0.5 * first
    with pytest.raises(ValueError):
        train_step(p, np.zeros((0, N)), np.zeros((0, N)), opt)


def test_rnn_stateful_act_matches_window():
    rng = np.random.default_rng(0)
    p = RNNPolicy(N, seed=0, hidden=8, stateful=True)
    frames = rng.uniform(0, 3, (6, N))
    p.reset_state()
    for f in frames:
        m_step = p.act(f)
    m_win = p.forward(frames[None], train=False)[0]
    np.testing.assert_allclose(m_step, m_win, atol=1e-14)


def test_rnn_windowed_act_is_stateless():
    rng = np.random.default_rng(0)
    p = RNNPolicy(N, seed=0, hidden=8)
    w = rng.uniform(0, 3, (4, N))
    first = p.act(w)
    p.act(rng.uniform(0, 3, (4, N)))
    np.testing.assert_array_equal(p.act(w), first)
    np.testing.assert_array_equal(first, p.forward(w[None])[0])


def test_rnn_forward_hidden_roundtrip():
    rng = np.random.default_rng(1)
    p = RNNPolicy(N, seed=0, hidden=8)
    w = rng.uniform(0, 3, (4, N))
    m1, hid = p.rnn_forward(w[:2])
    m2, _ = p.rnn_forward(w[2:], hid)
    np.testing.assert_allclose(m2, p.rnn_forward(w)[0], atol=1e-14)


def test_scale_input():
    np.testing.assert_allclose(scale_input([1e-6, 2e-6]), [1e-6 * INPUT_SCALE, 2e-6 * INPUT_SCALE])
