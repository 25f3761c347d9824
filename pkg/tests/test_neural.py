import math

import numpy as np
import pytest

from memegen.neural import (Adam, EmptyBatch, EncoderLayer, DecoderLayer, LayerNorm,
                            Linear, LrSchedule, ModelConfig, MultiHeadAttention,
                            NonFinite, ShapeMismatch, Tensor, cross_entropy_loss,
                            dropout, grad_check, lr_at, no_grad,
                            scaled_dot_product_attention, softmax)


def test_softmax_uniform():
    out = softmax(np.zeros(4))
    assert np.allclose(out, 0.25, atol=1e-6)


def test_softmax_shift_invariance():
    x = np.array([1.2, -0.3, 0.7])
    assert np.allclose(softmax(x), softmax(x + 123.0), atol=1e-6)
    assert np.allclose(softmax(np.array([1000.0, 1000.0])), [0.5, 0.5])


def test_softmax_hand_value():
    out = softmax(np.array([2.0, 0.0]))
    e2 = math.exp(2.0)
    assert np.allclose(out, [e2 / (e2 + 1), 1 / (e2 + 1)], atol=1e-4)


def test_softmax_rejects_nonfinite():
    with pytest.raises(NonFinite):
        softmax(np.array([np.nan, 0.0]))


def test_attention_single_key_copies_value():
    q = np.array([[1.0, 0.0]])
    out = scaled_dot_product_attention(q, q, np.array([[7.0]]))
    assert np.allclose(out.data, [[7.0]], atol=1e-6)


def test_attention_orthogonal_query_averages():
    q = np.array([[0.0, 0.0]])
    k = np.array([[1.0, 0.0], [0.0, 1.0]])
    v = np.array([[2.0], [4.0]])
    out = scaled_dot_product_attention(q, k, v)
    assert np.allclose(out.data, [[3.0]], atol=1e-6)


def test_attention_causal_mask_degenerate():
    q = np.ones((3, 2), dtype=np.float32)
    k = np.ones((3, 2), dtype=np.float32)
    v = np.arange(6, dtype=np.float32).reshape(3, 2)
    mask = np.tril(np.ones((3, 3), dtype=bool))
    out = scaled_dot_product_attention(q, k, v, mask)
    # position 0 can only see key 0
    assert np.allclose(out.data[0], v[0], atol=1e-6)


def test_attention_fully_masked_row_is_zero():
    q = np.ones((1, 2))
    k = np.ones((2, 2))
    v = np.ones((2, 3))
    out = scaled_dot_product_attention(q, k, v, np.zeros((1, 2), dtype=bool))
    assert np.allclose(out.data, 0.0)


def test_attention_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        scaled_dot_product_attention(np.ones((1, 2)), np.ones((1, 3)), np.ones((1, 1)))


def test_cross_entropy_uniform():
    logits = Tensor(np.zeros((1, 4)))
    loss = cross_entropy_loss(logits, [2])
    assert float(loss.data) == pytest.approx(math.log(4), abs=1e-5)


def test_cross_entropy_hand_value():
    loss = cross_entropy_loss(Tensor(np.array([[2.0, 0.0]])), [0])
    assert float(loss.data) == pytest.approx(-math.log(math.exp(2) / (math.exp(2) + 1)), abs=1e-5)


def test_cross_entropy_all_ignored():
    with pytest.raises(EmptyBatch):
        cross_entropy_loss(Tensor(np.zeros((2, 3))), [0, 0], ignore_id=0)


def test_adam_zero_gradient_no_move():
    p = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    opt = Adam([p], lr=0.1)
    p.grad = np.zeros(2, dtype=np.float32)
    before = p.data.copy()
    opt.step()
    assert np.array_equal(p.data, before)


def test_adam_first_step_magnitude():
    # bias correction makes m_hat=g and v_hat=g^2 at t=1, so |step| ~ lr
    p = Tensor(np.array([0.0]), requires_grad=True)
    opt = Adam([p], lr=0.1)
    p.grad = np.array([3.0], dtype=np.float32)
    opt.step()
    assert float(p.data[0]) == pytest.approx(-0.1, abs=1e-6)


def test_adam_two_steps_match_scalar_reference():
    # hand-rolled scalar Adam with g=1 at every step
    beta1, beta2, eps, lr = 0.9, 0.98, 1e-9, 0.1
    theta, m, v = 0.0, 0.0, 0.0
    for t in (1, 2):
        m = beta1 * m + (1 - beta1) * 1.0
        v = beta2 * v + (1 - beta2) * 1.0
        mhat = m / (1 - beta1**t)
        vhat = v / (1 - beta2**t)
        theta -= lr * mhat / (math.sqrt(vhat) + eps)

    p = Tensor(np.array([0.0]), requires_grad=True)
    opt = Adam([p], lr=lr)
    for _ in range(2):
        p.grad = np.array([1.0], dtype=np.float32)
        opt.step()
    assert float(p.data[0]) == pytest.approx(theta, abs=1e-7)


def test_lr_schedule_boundaries():
    sch = LrSchedule(eta_max=1.0, eta_min=0.1, t_0=10, t_mult=2)
    assert lr_at(0, sch) == pytest.approx(1.0)
    assert lr_at(5, sch) == pytest.approx(0.55)       # cos(pi/2) = 0
    assert lr_at(9, sch) == pytest.approx(0.1 + 0.45 * (1 + math.cos(math.pi * 0.9)))
    assert lr_at(10, sch) == pytest.approx(1.0)       # restart, period now 20
    assert lr_at(20, sch) == pytest.approx(0.55)      # halfway through 20-step period
    assert lr_at(30, sch) == pytest.approx(1.0)       # second restart


def test_dropout_scaling_and_eval_identity():
    rng = np.random.default_rng(0)
    x = Tensor(np.ones((100, 100)))
    train_out = dropout(x, 0.4, rng, train=True)
    survivors = train_out.data[train_out.data > 0]
    assert np.allclose(survivors, 1.0 / 0.6, atol=1e-6)
    assert abs(train_out.data.mean() - 1.0) < 0.05
    assert dropout(x, 0.4, rng, train=False) is x


def test_model_config_validation():
    with pytest.raises(ValueError):
        ModelConfig(2, 10, 32, 3, 0.0, 50)   # d_model not divisible by h
    with pytest.raises(ValueError):
        ModelConfig(2, 8, 32, 2, 1.0, 50)    # p_drop out of range


def _ce_over(t, targets):
    return cross_entropy_loss(t.reshape(len(targets), -1), targets)


def test_grad_check_linear():
    rng = np.random.default_rng(1)
    lin = Linear(3, 4, rng)
    x = np.asarray(rng.normal(size=(4, 3)), dtype=np.float32)
    err = grad_check(lambda: _ce_over(lin(Tensor(x)), [0, 1, 2, 3]),
                     list(lin.named_parameters().values()))
    assert err <= 1e-3


def test_grad_check_layer_norm():
    rng = np.random.default_rng(2)
    ln = LayerNorm(6)
    x = np.asarray(rng.normal(size=(3, 6)), dtype=np.float32)
    err = grad_check(lambda: _ce_over(ln(Tensor(x)), [0, 1, 2]),
                     list(ln.named_parameters().values()))
    assert err <= 1e-3


def test_grad_check_attention_block():
    rng = np.random.default_rng(3)
    mha = MultiHeadAttention(8, 2, rng)
    x = np.asarray(rng.normal(size=(1, 3, 8)), dtype=np.float32)
    err = grad_check(lambda: _ce_over(mha(Tensor(x), Tensor(x), Tensor(x)), [1, 2, 3]),
                     list(mha.named_parameters().values()))
    assert err <= 1e-2


def test_grad_check_constant_function():
    p = Tensor(np.array([1.0, 2.0]), requires_grad=True)

    def fn():
        return cross_entropy_loss(Tensor(np.zeros((1, 2))) + (p - p) * 0.0, [0])

    assert grad_check(fn, [p]) == pytest.approx(0.0, abs=1e-9)


def test_forward_bit_reproducible():
    def run():
        rng = np.random.default_rng(5)
        layer = EncoderLayer(8, 16, 2, rng)
        x = np.asarray(np.random.default_rng(6).normal(size=(1, 4, 8)), dtype=np.float32)
        drop = np.random.default_rng(7)
        with no_grad():
            return layer(Tensor(x), None, 0.0, drop, False).data

    assert np.array_equal(run(), run())
