import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from threeg.embeddings import embed_global, embed_word, project_local
from threeg.errors import DimensionError
from threeg.fusion import apply_global_gate, attend, attention_scores, attention_weights, global_gate


def test_embed_global_cases(rng):
    c = rng.standard_normal(3)
    np.testing.assert_array_equal(embed_global(rng.standard_normal(5), np.zeros((3, 5)), c), c)
    fc = rng.standard_normal(4)
    np.testing.assert_array_equal(embed_global(fc, np.eye(4), np.zeros(4)), fc)
    W, b = rng.standard_normal((3, 5)), rng.standard_normal(3)
    fc = rng.standard_normal(5)
    oracle = [sum(W[i, j] * fc[j] for j in range(5)) + b[i] for i in range(3)]
    np.testing.assert_allclose(embed_global(fc, W, b), oracle, atol=1e-14)
    with pytest.raises(DimensionError):
        embed_global(np.zeros(4), W, b)


def test_project_local_cases(rng):
    raw = rng.standard_normal((4, 3))
    assert not project_local(raw, np.zeros((2, 3)), np.zeros(2)).any()
    np.testing.assert_array_equal(project_local(raw, np.eye(3), np.zeros(3)), raw)
    W, b = rng.standard_normal((2, 3)), rng.standard_normal(2)
    out = project_local(raw, W, b)
    for i in range(4):
        for k in range(2):
            assert out[i, k] == pytest.approx(sum(W[k, j] * raw[i, j] for j in range(3)) + b[k], abs=1e-14)
    with pytest.raises(DimensionError):
        project_local(raw, np.zeros((2, 4)), np.zeros(2))


def test_embed_word(rng):
    W_s = rng.standard_normal((6, 4))
    one_hot = np.zeros(6)
    one_hot[2] = 1.0
    np.testing.assert_array_equal(embed_word(2, W_s), one_hot @ W_s)
    np.testing.assert_array_equal(embed_word(3, np.eye(6)), np.eye(6)[3])
    with pytest.raises(IndexError):
        embed_word(6, W_s)


def test_global_gate(rng):
    h = rng.standard_normal(4)
    assert global_gate(h, np.zeros(4), np.zeros(1)) == 0.5
    assert global_gate(h, np.zeros(4), np.array([20.0])) == pytest.approx(1.0, abs=3e-9)
    w, b = rng.standard_normal(4), rng.standard_normal(1)
    oracle = 1.0 / (1.0 + math.exp(-(sum(w[k] * h[k] for k in range(4)) + b[0])))
    assert global_gate(h, w, b) == pytest.approx(oracle, abs=1e-15)
    with pytest.raises(DimensionError):
        global_gate(h, np.zeros(3), b)


def test_apply_global_gate():
    v = np.array([2.0, -4.0])
    assert not apply_global_gate(0.0, v).any()
    np.testing.assert_array_equal(apply_global_gate(1.0, v), v)
    np.testing.assert_array_equal(apply_global_gate(0.5, v), [1.0, -2.0])


def test_attention_uniform_cases(rng):
    U, h = rng.standard_normal((5, 3)), rng.standard_normal(3)
    U_a, b_a = rng.standard_normal((3, 3)), rng.standard_normal(3)
    np.testing.assert_allclose(attention_weights(U, h, np.zeros(3), U_a, b_a), np.full(5, 0.2), atol=1e-15)
    same = np.repeat(rng.standard_normal((1, 3)), 5, axis=0)
    np.testing.assert_allclose(attention_weights(same, h, rng.standard_normal(3), U_a, b_a), np.full(5, 0.2), atol=1e-15)


def test_attention_scalar_oracle(rng):
    C, h = 3, 4
    U, hp = rng.standard_normal((C, h)), rng.standard_normal(h)
    w_e, U_a, b_a = rng.standard_normal(h), rng.standard_normal((h, h)), rng.standard_normal(h)
    scores = []
    for i in range(C):
        e = 0.0
        for k in range(h):
            pre = U[i, k] + sum(U_a[k, j] * hp[j] for j in range(h)) + b_a[k]
            e += w_e[k] * math.tanh(pre)
        scores.append(e)
    z = [math.exp(s) for s in scores]
    oracle = [x / sum(z) for x in z]
    np.testing.assert_allclose(attention_weights(U, hp, w_e, U_a, b_a), oracle, atol=1e-14)


def test_attend_cases(rng):
    U = rng.standard_normal((4, 3))
    np.testing.assert_array_equal(attend(U, np.eye(4)[2]), U[2])
    np.testing.assert_allclose(attend(U, np.full(4, 0.25)), U.mean(axis=0), atol=1e-15)
    a = rng.dirichlet(np.ones(4))
    oracle = [sum(a[i] * U[i, k] for i in range(4)) for k in range(3)]
    np.testing.assert_allclose(attend(U, a), oracle, atol=1e-15)


@given(seed=st.integers(0, 2**20), C=st.integers(1, 8), shift=st.floats(-50, 50))
def test_attention_properties(seed, C, shift):
    r = np.random.default_rng(seed)
    h = 4
    U, hp = r.normal(0, 3, (C, h)), r.normal(0, 3, h)
    w_e, U_a, b_a = r.normal(0, 3, h), r.standard_normal((h, h)), r.standard_normal(h)
    alpha = attention_weights(U, hp, w_e, U_a, b_a)
    assert np.all(alpha >= 0) and abs(alpha.sum() - 1) <= 1e-9
    z = attend(U, alpha)
    assert np.all(z >= U.min(axis=0) - 1e-12) and np.all(z <= U.max(axis=0) + 1e-12)
    scores, _ = attention_scores(U, hp, w_e, U_a, b_a)
    from threeg.numeric import softmax

    np.testing.assert_allclose(softmax(scores + shift), alpha, atol=1e-12)
    assert 0.0 < global_gate(hp, r.standard_normal(h), r.standard_normal(1)) < 1.0
