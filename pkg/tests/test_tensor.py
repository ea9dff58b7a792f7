import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from formula_embed import tensor as T


def grad_ok(fn, *arrays, tol=1e-5, eps=1e-5):
    """Analytic vs central-difference gradients of sum(w * fn(...))."""
    rng = np.random.default_rng(0)
    leaves = [T.Tensor(a.copy(), requires_grad=True) for a in arrays]
    with T.Tape():
        out = fn(*leaves)
        w = rng.normal(size=out.shape)
        T.backward(T.sum(out * w))

    def f():
        return float((fn(*[T.Tensor(l.data) for l in leaves]).data * w).sum())

    numeric = T.finite_difference(f, [l.data for l in leaves], eps)
    for leaf, num in zip(leaves, numeric):
        g = leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data)
        assert T.relative_error(g, num).max() < tol, (g, num)


rng = np.random.default_rng(1)
A = rng.normal(size=(3, 4))
B = rng.normal(size=(3, 4))
M = rng.normal(size=(4, 5))


@pytest.mark.parametrize(
    "fn, args",
    [
        (lambda a, b: a + b, (A, B)),
        (lambda a, b: a - b, (A, B)),
        (lambda a, b: a * b, (A, B)),
        (lambda a, b: a / (b * b + 1.0), (A, B)),
        (lambda a, b: a + b[0], (A, B)),
        (lambda a: -a, (A,)),
        (T.sigmoid, (A,)),
        (T.tanh, (A,)),
        (T.exp, (A,)),
        (lambda a: T.log(a * a + 0.5), (A,)),
        (lambda a, m: a @ m, (A, M)),
        (lambda a: T.reshape(a, (4, 3)), (A,)),
        (lambda a: a[1:, ::2], (A,)),
        (lambda a, b: T.concat([a, b], axis=1), (A, B)),
        (lambda a, b: T.concat([a, b], axis=0), (A, B)),
        (lambda a, b: T.take_rows([a, b], [5, 0, 0, 3]), (A, B)),
        (lambda a: T.sum(a, axis=0), (A,)),
        (lambda a: T.mean(a, axis=1, keepdims=True), (A,)),
        (lambda a: T.segment_sum(a, [1, 0, 1], 3), (A,)),
        (lambda a: T.segment_max(a, [1, 0, 1], 3), (A,)),
        (lambda a: T.softmax(a, axis=1), (A,)),
        (lambda a: T.segment_softmax(a, [0, 0, 1], 2), (A,)),
        (lambda a, g, b: T.layer_norm(a, g, b), (A, rng.normal(size=4), rng.normal(size=4))),
        (lambda a, g, b: T.batch_norm(a, g, b, np.zeros(4), np.ones(4), True), (A, rng.normal(size=4), rng.normal(size=4))),
        (lambda a, g, b: T.batch_norm(a, g, b, np.zeros(4), np.ones(4), False), (A, rng.normal(size=4), rng.normal(size=4))),
    ],
)
def test_primitive_gradients(fn, args):
    grad_ok(fn, *args)


def test_relu_gradient_away_from_zero():
    x = np.array([[-2.0, -0.5, 0.3, 1.7]])
    grad_ok(T.relu, x)


def test_label_matvec_gradient():
    h = rng.normal(size=(5, 3))
    table = rng.normal(size=(4, 3, 2))
    labels = np.array([2, 0, 2, 3, 1])

    def fn(h_, t_):
        return T.label_matvec(h_, t_, labels)

    grad_ok(fn, h, table)
    out = T.label_matvec(T.Tensor(h), T.Tensor(table), labels).data
    ref = np.stack([h[i] @ table[labels[i]] for i in range(5)])
    assert np.allclose(out, ref, atol=1e-12)


def test_bce_values_and_gradient():
    p = T.Tensor(np.array([0.5]), requires_grad=True)
    with T.Tape():
        loss = T.bce(p, [1])
        T.backward(loss)
    assert math.isclose(float(loss.data), math.log(2), rel_tol=1e-12)
    assert math.isclose(float(p.grad[0]), -2.0, rel_tol=1e-12)
    assert float(T.bce(T.Tensor([1.0, 0.0]), [1, 0]).data) < 1e-6
    assert math.isfinite(float(T.bce(T.Tensor([0.0]), [1]).data))


def test_sigmoid_stable_at_extremes():
    out = T.sigmoid(T.Tensor(np.array([-1000.0, 0.0, 1000.0]))).data
    assert np.all(np.isfinite(out))
    assert out.tolist() == [0.0, 0.5, 1.0]


def test_segment_max_ties_and_empty():
    x = T.Tensor(np.array([[1.0, 2.0], [1.0, 5.0], [0.0, 5.0]]), requires_grad=True)
    with T.Tape():
        out = T.segment_max(x, [0, 0, 0], 2)
        T.backward(T.sum(out))
    assert out.data.tolist() == [[1.0, 5.0], [0.0, 0.0]]
    assert x.grad.tolist() == [[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]


def test_segment_sum_is_order_preserving():
    vals = np.array([[1e16], [1.0], [-1e16], [1.0]])
    out = T.segment_sum(T.Tensor(vals), [0, 0, 0, 0], 1).data
    ref = ((1e16 + 1.0) + -1e16) + 1.0
    assert out[0, 0] == ref


def test_softmax_properties():
    x = T.Tensor(rng.normal(size=(4, 6)) * 50)
    y = T.softmax(x, axis=1).data
    assert np.allclose(y.sum(1), 1.0)
    single = T.segment_softmax(T.Tensor(np.array([[3.7], [-2.0], [0.1]])), [0, 1, 1], 2).data
    assert single[0, 0] == 1.0
    eq = T.segment_softmax(T.Tensor(np.array([[0.3], [0.3]])), [0, 0], 1).data
    assert eq.ravel().tolist() == [0.5, 0.5]


def test_layer_norm_statistics():
    x = rng.normal(size=(8, 64)) * 3.0 + 2.0
    y = T.layer_norm(T.Tensor(x), T.Tensor(np.ones(64)), T.Tensor(np.zeros(64))).data
    assert np.abs(y.mean(1)).max() < 1e-10
    assert np.abs(y.var(1) - 1.0).max() < 1e-5


def test_batch_norm_running_stats_and_empty():
    x = rng.normal(size=(10, 3)) + 4.0
    mean, var = np.zeros(3), np.ones(3)
    g, b = T.Tensor(np.ones(3)), T.Tensor(np.zeros(3))
    y = T.batch_norm(T.Tensor(x), g, b, mean, var, training=True).data
    assert np.abs(y.mean(0)).max() < 1e-10
    assert np.allclose(mean, 0.1 * x.mean(0))
    assert np.allclose(var, 0.9 + 0.1 * x.var(0, ddof=1))
    frozen = mean.copy()
    T.batch_norm(T.Tensor(x), g, b, mean, var, training=True, update_stats=False)
    assert np.array_equal(mean, frozen)
    ev = T.batch_norm(T.Tensor(x), g, b, mean, var, training=False).data
    assert np.allclose(ev, (x - mean) / np.sqrt(var + 1e-5))
    assert T.batch_norm(T.Tensor(np.zeros((0, 3))), g, b, mean, var, training=True).shape == (0, 3)


def test_shape_errors():
    with pytest.raises(T.ShapeMismatchError):
        T.Tensor(np.ones((2, 3))) + T.Tensor(np.ones((4, 3)))
    with pytest.raises(T.ShapeMismatchError):
        T.Tensor(np.ones((2, 3))) @ T.Tensor(np.ones((2, 3)))
    with pytest.raises(T.ShapeMismatchError):
        T.segment_sum(T.Tensor(np.ones((2, 3))), [0], 1)


def test_tape_contract():
    x = T.Tensor(np.ones(3), requires_grad=True)
    y = T.sum(x * 2.0)
    assert y._tape is None  # nothing recorded without an active tape
    with T.Tape() as tape:
        c = T.Tensor(np.ones(3)) * 2.0
        assert len(tape) == 0  # untracked inputs are not recorded
        loss = T.sum(x * 2.0)
        with pytest.raises(T.NonScalarLossError):
            T.backward(x * 2.0)
        T.backward(loss)
        with pytest.raises(T.TapeConsumedError):
            T.backward(loss)
    assert x.grad.tolist() == [2.0, 2.0, 2.0]
    assert c.grad is None


def test_gradient_accumulates_over_fan_out():
    x = T.Tensor(np.array([1.5]), requires_grad=True)
    with T.Tape():
        T.backward(T.sum(x * x + x))
    assert x.grad.tolist() == [4.0]


def test_relative_error_floor():
    assert T.relative_error(1e-9, 0.0) <= 1e-3
    assert T.relative_error(1.0, 1.0 + 1e-8) < 1e-7


def test_kink_monitor():
    with T.KinkMonitor() as km:
        T.relu(T.Tensor(np.array([0.5, -0.01, 2.0])))
        T.segment_max(T.Tensor(np.array([[1.0], [1.3], [1.3]])), [0, 0, 0], 1)
    assert math.isclose(km.margin, 0.01)
    with T.KinkMonitor() as km2:
        T.segment_max(T.Tensor(np.array([[1.0], [1.0]])), [0, 0], 1)
    assert km2.margin == math.inf


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_matmul_chain_gradient(n, k, seed):
    r = np.random.default_rng(seed)
    a, b = r.normal(size=(n, k)), r.normal(size=(k, 3))
    grad_ok(lambda x, y: T.tanh(x @ y), a, b)
