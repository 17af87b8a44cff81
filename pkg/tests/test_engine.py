import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edgecompress.engine import (
    OptimizerState,
    Tensor,
    adamw_step,
    conv2d,
    cross_entropy,
    gelu,
    global_avg_pool,
    layer_norm,
    linear,
    no_grad,
    softmax,
)
from edgecompress.errors import ConfigurationError, DimensionError, InputError, UsageError

from gradcases import ALL_CASES, TOLERANCE, check_op
from oracles import naive_conv2d, naive_linear, phi


# ------------------------------------------------------------------- tensors
def test_tensor_invariants():
    t = Tensor(np.arange(6).reshape(2, 3))
    assert t.dtype == np.float32 and t.numel == 6 and t.data.flags.c_contiguous
    q = Tensor(np.array([1, -2], dtype=np.int8))
    assert q.dtype == np.int8
    with pytest.raises(InputError):
        Tensor(np.array([1], dtype=np.int8), requires_grad=True)


def test_backward_square():
    x = Tensor([3.0], requires_grad=True)
    (x * x).sum().backward()
    assert x.grad[0] == pytest.approx(6.0)


def test_backward_non_scalar_is_usage_error():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(UsageError):
        (x * 2.0).backward()


def test_zero_upstream_gives_zero_grads():
    rng = np.random.default_rng(1)
    w = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
    b = Tensor(rng.standard_normal(3), requires_grad=True)
    x = Tensor(rng.standard_normal((2, 4)))
    loss = cross_entropy(linear(x, w, b), [0, 2])
    loss.backward(gradient=0.0)
    assert not w.grad.any() and not b.grad.any()


def test_no_grad_records_nothing():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with no_grad():
        y = x * x
    assert not y.requires_grad


def test_shared_subexpression_accumulates():
    x = Tensor([2.0], requires_grad=True)
    y = x * x
    (y + y).sum().backward()
    assert x.grad[0] == pytest.approx(8.0)


# -------------------------------------------------------------------- conv2d
def test_conv_identity_kernel():
    x = np.random.default_rng(0).standard_normal((1, 1, 3, 3))
    out = conv2d(Tensor(x), Tensor(np.ones((1, 1, 1, 1))))
    np.testing.assert_array_equal(out.data, x.astype(np.float32))


@pytest.mark.parametrize(
    "n,c,h,o,k,stride,pad,groups",
    [
        (1, 2, 4, 3, 3, 1, 1, 1),
        (2, 3, 7, 4, 3, 2, 1, 1),
        (1, 4, 8, 4, 7, 1, 3, 4),
        (1, 6, 5, 4, 3, 1, 0, 2),
        (2, 3, 8, 6, 4, 4, 0, 1),
        (1, 4, 4, 8, 2, 2, 0, 1),
    ],
)
def test_conv_matches_loop_oracle(n, c, h, o, k, stride, pad, groups):
    rng = np.random.default_rng(n * 100 + c * 10 + k)
    x = rng.uniform(-1, 1, (n, c, h, h)).astype(np.float32)
    w = rng.uniform(-1, 1, (o, c // groups, k, k)).astype(np.float32)
    b = rng.uniform(-1, 1, o).astype(np.float32)
    got = conv2d(Tensor(x), Tensor(w), Tensor(b), stride=stride, padding=pad, groups=groups).data
    ref = naive_conv2d(x, w, b, stride, pad, groups)
    assert got.shape == ref.shape
    assert np.max(np.abs(got - ref)) <= 1e-6 * max(1.0, np.max(np.abs(ref)))


def test_depthwise_7x7_shape():
    out = conv2d(Tensor(np.zeros((1, 4, 8, 8))), Tensor(np.zeros((4, 1, 7, 7))), padding=3, groups=4)
    assert out.shape == (1, 4, 8, 8)


def test_conv_errors():
    with pytest.raises(ConfigurationError):
        conv2d(Tensor(np.zeros((1, 3, 4, 4))), Tensor(np.zeros((4, 1, 3, 3))), groups=2)
    with pytest.raises(DimensionError, match="channel"):
        conv2d(Tensor(np.zeros((1, 3, 4, 4))), Tensor(np.zeros((4, 2, 3, 3))))
    with pytest.raises(DimensionError, match="height"):
        conv2d(Tensor(np.zeros((1, 1, 5, 4))), Tensor(np.zeros((1, 1, 2, 2))), stride=2)


# -------------------------------------------------------------------- linear
def test_linear_identity():
    x = np.random.default_rng(2).standard_normal((4, 3))
    out = linear(Tensor(x), Tensor(np.eye(3)), Tensor(np.zeros(3)))
    np.testing.assert_allclose(out.data, x, rtol=1e-6)


def test_linear_hand_example():
    out = linear(Tensor([1.0, 2.0]), Tensor([[1.0, 1.0], [0.0, 1.0]]), Tensor([0.5, -0.5]))
    np.testing.assert_allclose(out.data, [3.5, 1.5])


def test_linear_batch_shape_and_oracle():
    rng = np.random.default_rng(3)
    x, w, b = rng.standard_normal((2, 5, 4)), rng.standard_normal((7, 4)), rng.standard_normal(7)
    out = linear(Tensor(x), Tensor(w), Tensor(b))
    assert out.shape == (2, 5, 7)
    np.testing.assert_allclose(out.data, naive_linear(x, w, b), atol=1e-5)
    with pytest.raises(DimensionError):
        linear(Tensor(x), Tensor(np.zeros((7, 3))))


# ---------------------------------------------------------------- layer norm
def test_layer_norm_examples():
    const = layer_norm(Tensor(np.full((2, 5), 3.0)), Tensor(np.ones(5)), Tensor(np.zeros(5)))
    np.testing.assert_array_equal(const.data, 0.0)
    pair = layer_norm(Tensor([1.0, 3.0]), Tensor(np.ones(2)), Tensor(np.zeros(2)), eps=1e-12)
    np.testing.assert_allclose(pair.data, [-1.0, 1.0], atol=1e-6)
    shifted = layer_norm(Tensor(np.random.default_rng(0).standard_normal((3, 4))), Tensor(np.zeros(4)), Tensor(np.full(4, 2.5)))
    np.testing.assert_array_equal(shifted.data, 2.5)
    with pytest.raises(DimensionError):
        layer_norm(Tensor(np.zeros((2, 3))), Tensor(np.ones(4)), Tensor(np.zeros(4)))
    with pytest.raises(InputError):
        layer_norm(Tensor(np.zeros((2, 3))), Tensor(np.ones(3)), Tensor(np.zeros(3)), eps=0.0)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 32), st.integers(1, 6), st.integers(0, 10_000))
def test_layer_norm_moments(features, rows, seed):
    x = np.random.default_rng(seed).standard_normal((rows, features)) * 3 + 1
    out = layer_norm(Tensor(x), Tensor(np.ones(features)), Tensor(np.zeros(features)), eps=1e-12).data.astype(np.float64)
    assert np.all(np.abs(out.mean(axis=-1)) <= 1e-6)
    assert np.all(np.abs(out.var(axis=-1) - 1.0) <= 1e-4)


def test_layer_norm_implicit_zeros_matches_padded_input():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((3, 5))
    gamma, beta = rng.standard_normal(5), rng.standard_normal(5)
    padded = np.concatenate([x, np.zeros((3, 2))], axis=1)
    full = layer_norm(Tensor(padded), Tensor(np.r_[gamma, 0, 0]), Tensor(np.r_[beta, 0, 0])).data
    compact = layer_norm(Tensor(x), Tensor(gamma), Tensor(beta), implicit_zeros=2).data
    np.testing.assert_allclose(compact, full[:, :5], atol=1e-6)


# ---------------------------------------------------------------------- gelu
def test_gelu_values():
    assert gelu(Tensor([0.0])).data[0] == 0.0
    assert gelu(Tensor([1.0])).data[0] == pytest.approx(phi(1.0), abs=1e-6)
    assert phi(1.0) == pytest.approx(0.841345, abs=1e-6)
    assert abs(gelu(Tensor([-10.0])).data[0]) <= 1e-6
    xs = np.linspace(-4, 4, 17)
    np.testing.assert_allclose(gelu(Tensor(xs)).data, [v * phi(v) for v in xs], atol=1e-6)


# ---------------------------------------------------------------------- pool
def test_global_avg_pool():
    assert global_avg_pool(Tensor(np.full((2, 3, 4, 4), 1.5))).data.tolist() == [[1.5] * 3] * 2
    x = np.random.default_rng(5).standard_normal((2, 3, 1, 1))
    np.testing.assert_array_equal(global_avg_pool(Tensor(x)).data, x[:, :, 0, 0].astype(np.float32))
    assert global_avg_pool(Tensor(np.array([1.0, 2, 3, 4]).reshape(1, 1, 2, 2))).data[0, 0] == 2.5


# ------------------------------------------------------------- cross entropy
def test_cross_entropy_examples():
    assert cross_entropy(Tensor(np.zeros((3, 10))), [0, 4, 9]).item() == pytest.approx(math.log(10), abs=1e-6)
    confident = np.zeros((1, 4))
    confident[0, 2] = 100.0
    assert cross_entropy(Tensor(confident), [2]).item() == pytest.approx(0.0, abs=1e-6)
    rng = np.random.default_rng(6)
    logits, labels = rng.standard_normal((4, 3)), np.array([0, 2, 1, 2])
    direct = np.mean([-logits[i, labels[i]] + math.log(sum(math.exp(v) for v in logits[i])) for i in range(4)])
    assert cross_entropy(Tensor(logits), labels).item() == pytest.approx(direct, abs=1e-6)
    with pytest.raises(InputError):
        cross_entropy(Tensor(logits), [0, 3, 1, 1])


def test_softmax_rows_sum_to_one():
    p = softmax(np.random.default_rng(7).standard_normal((20, 10)).astype(np.float32) * 10)
    assert np.all(np.abs(p.sum(axis=1) - 1.0) <= 1e-6)


# --------------------------------------------------------------- gradients
@pytest.mark.parametrize("name", sorted(ALL_CASES))
def test_finite_difference_gradients(name):
    rng = np.random.default_rng(11)
    cases = ALL_CASES[name](rng)
    assert len(cases) >= 5
    for op, arrays in cases:
        assert check_op(op, arrays, rng) <= TOLERANCE


# -------------------------------------------------------------------- adamw
def test_adamw_zero_grad_no_decay_is_noop():
    p = {"w": np.array([1.0, -2.0], dtype=np.float32)}
    state = OptimizerState(lr=0.1, weight_decay=0.0)
    adamw_step(p, {"w": np.zeros(2, np.float32)}, state)
    np.testing.assert_array_equal(p["w"], [1.0, -2.0])
    assert state.step == 1


def test_adamw_first_step_closed_form():
    p = {"w": np.array([1.0], dtype=np.float32)}
    state = OptimizerState(lr=0.1, weight_decay=0.0, betas=(0.9, 0.999))
    adamw_step(p, {"w": np.array([1.0], np.float32)}, state)
    # m_hat = v_hat = 1, so the step is lr * 1 / (1 + eps)
    assert p["w"][0] == pytest.approx(1.0 - 0.1 / (1.0 + 1e-8), abs=1e-7)


def test_adamw_decoupled_decay():
    p = {"w": np.array([2.0, -4.0], dtype=np.float32)}
    state = OptimizerState(lr=0.1, weight_decay=0.5)
    adamw_step(p, {"w": np.zeros(2, np.float32)}, state)
    np.testing.assert_allclose(p["w"], [2.0 - 0.1 * 0.5 * 2.0, -4.0 + 0.1 * 0.5 * 4.0], rtol=1e-6)
