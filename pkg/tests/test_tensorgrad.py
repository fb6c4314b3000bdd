import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from samestyle import tensorgrad as tg
from samestyle.errors import BackwardError, NonScalarRoot, ShapeMismatch
from samestyle.tensorgrad import Tensor, finite_diff_check, track_kinks

from oracles import loop_matmul

finite = st.floats(-3, 3, allow_nan=False, allow_infinity=False)


def leaf(x):
    return Tensor(np.asarray(x, dtype=float), requires_grad=True)


# forward values against scalar loops

@given(arrays(np.float64, (3, 4), elements=finite), arrays(np.float64, (4, 2), elements=finite))
def test_matmul_forward(a, b):
    assert np.allclose(tg.matmul(a, b).data, loop_matmul(a, b), rtol=0, atol=1e-12)


@given(arrays(np.float64, (2, 3, 4), elements=finite), arrays(np.float64, (4, 5), elements=finite))
def test_batched_matmul_forward(a, b):
    got = tg.matmul(a, b).data
    for i in range(2):
        assert np.allclose(got[i], loop_matmul(a[i], b), rtol=0, atol=1e-12)


@given(arrays(np.float64, (3, 4), elements=finite), arrays(np.float64, (4,), elements=finite))
def test_add_broadcast_forward(a, b):
    got = tg.add(a, b).data
    for i in range(3):
        for j in range(4):
            assert got[i, j] == a[i, j] + b[j]


@given(arrays(np.float64, (5,), elements=finite))
def test_relu_hinge_square_forward(x):
    for f, ref in ((tg.relu, lambda v: max(0.0, v)), (tg.hinge, lambda v: max(0.0, v)), (tg.square, lambda v: v * v)):
        got = f(x).data
        for i in range(5):
            assert got[i] == ref(x[i])


@given(arrays(np.float64, (3, 4), elements=finite), st.integers(0, 1))
def test_mean_over_axis_forward(x, axis):
    got = tg.mean_over_axis(x, axis).data
    if axis == 0:
        expect = [sum(x[i, j] for i in range(3)) / 3 for j in range(4)]
    else:
        expect = [sum(x[i, j] for j in range(4)) / 4 for i in range(3)]
    assert np.allclose(got, expect, rtol=0, atol=1e-12)


@given(arrays(np.float64, (4,), elements=finite), arrays(np.float64, (4,), elements=finite), finite)
def test_dot_and_scalar_mul_forward(u, v, c):
    assert abs(tg.dot(u, v).data - sum(u[i] * v[i] for i in range(4))) <= 1e-12
    assert np.array_equal(tg.scalar_mul(u, c).data, u * c)


@given(arrays(np.float64, (3, 4), elements=finite))
def test_l2_normalize_forward(x):
    got = tg.l2_normalize(x).data
    for i in range(3):
        n = math.sqrt(sum(v * v for v in x[i]))
        for j in range(4):
            expect = x[i, j] / n if n >= 1e-12 else 0.0
            assert abs(got[i, j] - expect) <= 1e-12


# examples

def test_dot_unit_vector():
    u = leaf(np.array([0.6, 0.8]))
    out = tg.dot(u, u)
    out.backward()
    assert out.item() == pytest.approx(1.0, abs=1e-15)
    assert np.allclose(u.grad, 2 * u.data)


def test_hinge_sides():
    x = leaf([-0.5, 0.5, 0.0])
    y = tg.hinge(x)
    y.sum().backward()
    assert y.data.tolist() == [0.0, 0.5, 0.0]
    assert x.grad.tolist() == [0.0, 1.0, 0.0]


def test_l2_normalize_example_and_zero_rule():
    assert np.allclose(tg.l2_normalize(np.array([3.0, 4.0])).data, [0.6, 0.8])
    z = leaf(np.zeros(3))
    out = tg.l2_normalize(z)
    out.sum().backward()
    assert np.all(out.data == 0) and np.all(z.grad == 0)
    tiny = leaf(np.full(3, 1e-14))
    tg.l2_normalize(tiny).sum().backward()
    assert np.all(tiny.grad == 0)


def test_backward_simple_functions():
    x = leaf([1.0, 2.0])
    tg.dot(x, x).backward()
    assert x.grad.tolist() == [2.0, 4.0]

    x = leaf([0.1, 0.2])
    c = np.array([1.0, 1.0])
    out = tg.hinge(tg.dot(x, c) - 1.0)
    out.backward()
    assert out.item() == 0.0 and x.grad.tolist() == [0.0, 0.0]


def test_backward_errors():
    x = leaf([1.0, 2.0])
    with pytest.raises(NonScalarRoot):
        (x * 2.0).backward()
    out = tg.dot(x, x)
    out.backward()
    with pytest.raises(BackwardError):
        out.backward()


def test_shape_errors():
    with pytest.raises(ShapeMismatch):
        tg.add(np.ones((2, 3)), np.ones((4,)))
    with pytest.raises(ShapeMismatch):
        tg.matmul(np.ones((2, 3)), np.ones((2, 3)))
    with pytest.raises(ShapeMismatch):
        tg.dot(np.ones(3), np.ones(4))
    with pytest.raises(ShapeMismatch):
        tg.diag(np.ones((2, 3)))


def test_shared_subexpression_accumulates():
    x = leaf([1.5, -2.0])
    y = x * x
    (y.sum() + tg.dot(x, x)).backward()
    assert np.allclose(x.grad, 4 * x.data)


def test_numpy_on_the_left():
    w = leaf(np.eye(2))
    out = (np.array([[1.0, 2.0]]) @ w).sum()
    out.backward()
    assert w.grad.tolist() == [[1.0, 1.0], [2.0, 2.0]]


# gradients against finite differences

def away_from_kinks(build, shapes, rng, tol=1e-3, tries=100):
    for _ in range(tries):
        params = [rng.normal(size=s) for s in shapes]
        with track_kinks() as k:
            build([Tensor(p) for p in params])
        if k[0] >= tol:
            return params
    raise AssertionError("could not sample away from kinks")


PRIMITIVES = {
    "matmul": (lambda p: tg.matmul(p[0], p[1]).sum(), [(3, 4), (4, 2)]),
    "add": (lambda p: (tg.add(p[0], p[1]) * p[0]).sum(), [(3, 4), (4,)]),
    "mul": (lambda p: tg.mul(p[0], p[1]).sum(), [(2, 3), (2, 3)]),
    "relu": (lambda p: tg.dot(tg.relu(p[0]), p[1]), [(6,), (6,)]),
    "hinge": (lambda p: tg.hinge(p[0] - 0.2).sum(), [(6,)]),
    "mean": (lambda p: tg.dot(tg.mean_over_axis(p[0], 0), p[1]), [(3, 4), (4,)]),
    "l2_normalize": (lambda p: tg.dot(tg.l2_normalize(p[0]).reshape(-1), p[1]), [(2, 3), (6,)]),
    "dot": (lambda p: tg.dot(p[0], p[1]), [(5,), (5,)]),
    "scalar_mul": (lambda p: tg.scalar_mul(p[0], -1.7).sum(), [(4,)]),
    "square": (lambda p: tg.square(p[0]).sum(), [(4,)]),
    "transpose_diag": (lambda p: tg.diag(p[0].T @ p[1]).sum(), [(3, 3), (3, 3)]),
    "getitem": (lambda p: (p[0][:, 1:] * p[0][:, :2]).sum() + p[0][np.array([0, 0, 1])].sum(), [(2, 3)]),
}


@pytest.mark.parametrize("name", sorted(PRIMITIVES))
def test_primitive_gradients(name, rng):
    f, shapes = PRIMITIVES[name]
    for _ in range(5):
        params = away_from_kinks(f, shapes, rng)
        assert finite_diff_check(f, params) < 1e-5, name


def test_three_layer_composition(rng):
    def f(p):
        # biases keep the map from being positively homogeneous; without them the
        # normalized output has exactly-zero directional derivatives
        x, W1, b1, W2, b2, W3 = p
        h = tg.relu(x @ W1 + b1)
        h = tg.relu(h @ W2 + b2)
        return tg.l2_normalize(h @ W3).sum()

    shapes = [(2, 4), (4, 5), (5,), (5, 5), (5,), (5, 3)]
    for _ in range(5):
        params = away_from_kinks(f, shapes, rng)
        assert finite_diff_check(f, params, step=1e-4) < 1e-5


def test_finite_diff_check_examples(rng):
    assert finite_diff_check(lambda p: Tensor(3.0) + 0.0 * p[0].sum(), [rng.normal(size=3)]) == 0.0
    assert finite_diff_check(lambda p: tg.dot(p[0], p[0]), [rng.normal(size=6)]) < 1e-9


def test_backward_deterministic(rng):
    x = rng.normal(size=(4, 3))
    w = rng.normal(size=(3, 3))
    grads = []
    for _ in range(2):
        a, b = leaf(x), leaf(w)
        tg.l2_normalize(tg.relu(a @ b)).sum().backward()
        grads.append((a.grad.copy(), b.grad.copy()))
    assert np.array_equal(grads[0][0], grads[1][0]) and np.array_equal(grads[0][1], grads[1][1])
