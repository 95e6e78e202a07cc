import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from offloadlab.quantize import CandidateSet, op_quantize, quantize, ugq_quantize

probs = st.lists(st.floats(0.001, 0.999), min_size=1, max_size=12).map(np.array)


def as_lists(cs: CandidateSet):
    return [a.tolist() for a in cs.actions]


def test_op_hand_examples():
    assert as_lists(op_quantize([0.8, 0.3], 1)) == [[1, 0]]
    assert as_lists(op_quantize([0.8, 0.3], 2)) == [[1, 0], [1, 1]]
    assert as_lists(op_quantize([0.8, 0.3], 3)) == [[1, 0], [1, 1], [0, 0]]
    assert as_lists(op_quantize([0.6, 0.7, 0.9], 1)) == [[1, 1, 1]]


@pytest.mark.parametrize("K", [0, 5])
def test_op_k_range(K):
    with pytest.raises(ValueError):
        op_quantize([0.2, 0.7, 0.4], K)


def test_ugq_hand_trace_zero_noise():
    cs = ugq_quantize(np.array([0.9, 0.4, 0.55]), 3, sigma=0.0, rng=np.random.default_rng(0))
    assert as_lists(cs) == [[1, 0, 1], [0, 0, 1], [1, 0, 0]]
    assert cs.generator == "ugq" and cs.noise_sigma == 0.0


def test_ugq_all_half_is_all_zero():
    cs = ugq_quantize(np.full(4, 0.5), 1, sigma=0.0)
    assert as_lists(cs) == [[0, 0, 0, 0]]


def test_ugq_validation():
    with pytest.raises(ValueError):
        ugq_quantize([0.5], 0)
    with pytest.raises(ValueError):
        ugq_quantize([0.5], 2, sigma=-1.0)
    with pytest.raises(ValueError):
        quantize([0.5], 1, method="bernoulli")


def test_ugq_k_larger_than_n_wraps():
    m = np.array([0.3, 0.6])
    cs = ugq_quantize(m, 6, sigma=0.1, rng=np.random.default_rng(1))
    assert len(cs) == 6


@settings(max_examples=80, deadline=None)
@given(probs, st.integers(1, 20), st.integers(0, 1000))
def test_ugq_properties(m, K, seed):
    cs = ugq_quantize(m, K, 0.1, np.random.default_rng(seed))
    assert len(cs) == K
    assert cs.actions[0].tolist() == (m > 0.5).astype(int).tolist()
    again = ugq_quantize(m, K, 0.1, np.random.default_rng(seed))
    assert as_lists(cs) == as_lists(again)
    for a in cs.actions:
        assert set(np.unique(a)) <= {0, 1}


@settings(max_examples=80, deadline=None)
@given(probs, st.integers(0, 1000))
def test_ugq_duplicate_flip_single_bit(m, seed):
    """Replays the generator: a colliding threshold action is appended with exactly one bit flipped."""
    n = m.size
    K = 2 * n + 1
    sigma = 0.1
    cs = ugq_quantize(m, K, sigma, np.random.default_rng(seed))
    rng = np.random.default_rng(seed)
    idx = np.argsort(np.abs(m - 0.5), kind="stable")
    members = [cs.actions[0].tolist()]
    for i in range(1, K):
        tau = 0.5 + (m[idx[i % n]] - 0.5) * 0.7 + rng.uniform(-sigma, sigma)
        raw = (m > tau).astype(int)
        got = cs.actions[i]
        if raw.tolist() in members:
            diff = np.flatnonzero(got != raw)
            assert diff.tolist() == [idx[(i + 1) % n]]
        else:
            assert got.tolist() == raw.tolist()
        members.append(got.tolist())


@settings(max_examples=80, deadline=None)
@given(probs, st.data())
def test_op_properties(m, data):
    n = m.size
    K = data.draw(st.integers(1, n + 1))
    cs = op_quantize(m, K)
    assert len(cs) == K
    assert cs.actions[0].tolist() == (m > 0.5).astype(int).tolist()
    order = np.argsort(np.abs(m - 0.5), kind="stable")
    for k in range(1, K):
        p = m[order[k - 1]]
        a = cs.actions[k]
        # entries strictly above the pivot are 1, strictly below are 0
        assert np.all(a[m > p] == 1) and np.all(a[m < p] == 0)
        assert a[order[k - 1]] == (1 if p <= 0.5 else 0)


def test_dispatch():
    m = np.array([0.2, 0.8, 0.45])
    assert as_lists(quantize(m, 2, "op")) == as_lists(op_quantize(m, 2))
    assert as_lists(quantize(m, 2, "ugq", 0.0)) == as_lists(ugq_quantize(m, 2, 0.0))
    assert quantize(m, 2, "op").as_array().shape == (2, 3)
