import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from symvae import tensor as T
from symvae.models import MlpSpec, Network, init_xavier
from symvae.tensor import ComputationGraph, DomainError, ShapeError, Tensor


def test_sigmoid_at_zero():
    assert T.sigmoid(Tensor(0.0)).item() == 0.5


def test_matmul_identity():
    a = np.array([[1.5, -2.0], [0.25, 3.0]])
    np.testing.assert_array_equal(T.matmul(np.eye(2), a).data, a)


def test_softplus_zero_is_ln2():
    assert T.softplus(Tensor(0.0)).item() == pytest.approx(math.log(1.0 + math.exp(0.0)), abs=1e-15)
    assert T.softplus(Tensor(0.0)).item() == pytest.approx(0.693147, abs=1e-6)


def test_apply_primitive_dispatch():
    out = T.apply_primitive("leaky-relu", [Tensor([-1.0, 2.0])], slope=0.2)
    np.testing.assert_allclose(out.data, [-0.2, 2.0])
    cat = T.apply_primitive("concat", [Tensor(np.ones((2, 1))), Tensor(np.zeros((2, 2)))], axis=1)
    assert cat.shape == (2, 3)
    with pytest.raises(ValueError, match="unknown primitive"):
        T.apply_primitive("conv2d", [Tensor(1.0)])


@pytest.mark.parametrize("kind,inputs", [
    ("add", [np.ones(3), np.ones(2)]),
    ("multiply", [np.ones((2, 2)), np.ones((3, 2))]),
    ("matmul", [np.ones((2, 3)), np.ones((2, 3))]),
    ("broadcast-add", [np.ones((4, 3)), np.ones(2)]),
])
def test_shape_mismatch_names_primitive(kind, inputs):
    with pytest.raises(ShapeError, match=kind):
        T.apply_primitive(kind, [Tensor(x) for x in inputs])


def test_log_domain_violation_signaled():
    with pytest.raises(DomainError):
        T.log(Tensor([1.0, 0.0]))
    with pytest.raises(DomainError):
        T.log(Tensor([-1.0]))


def test_exp_overflow_signaled():
    with pytest.raises(DomainError):
        T.exp(Tensor([800.0]))


def test_backward_sum_gives_ones():
    w = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
    grads = T.backward(T.sum_reduce(w))
    np.testing.assert_array_equal(grads[w], np.ones((2, 3)))


def test_backward_half_square_norm():
    w = Tensor([1.0, -2.0], requires_grad=True)
    grads = T.backward(T.multiply(T.sum_reduce(T.square(w)), 0.5))
    np.testing.assert_array_equal(grads[w], [1.0, -2.0])


def test_backward_rejects_nonscalar():
    w = Tensor([1.0, 2.0], requires_grad=True)
    with pytest.raises(ShapeError, match="scalar"):
        T.backward(T.square(w))


def test_graph_order_is_construction_order():
    w = Tensor([1.0, 2.0], requires_grad=True)
    a = T.square(w)
    b = T.exp(w)
    loss = T.sum_reduce(T.add(a, b))
    graph = ComputationGraph.trace(loss)
    ids = [n.node_id for n in graph.nodes]
    assert ids == sorted(ids)
    assert graph.nodes[0] is w and graph.nodes[-1] is loss
    for i, node in enumerate(graph.nodes):
        for parent in node._parents:
            if parent.requires_grad:
                assert graph.nodes.index(parent) < i


def test_reused_node_accumulates():
    w = Tensor(3.0, requires_grad=True)
    loss = T.multiply(w, w)
    assert T.backward(loss)[w] == pytest.approx(6.0)


def test_slice_and_concat_gradients():
    w = Tensor(np.arange(6.0).reshape(3, 2), requires_grad=True)
    loss = T.sum_reduce(T.concat([T.square(w[:, :1]), w[:, 1:]], axis=1))
    g = T.backward(loss)[w]
    np.testing.assert_array_equal(g, np.column_stack([2 * w.data[:, 0], np.ones(3)]))


def test_finite_difference_square():
    g = T.finite_difference_grad(lambda w: float(w[0] ** 2), np.array([3.0]), 1e-5)
    assert g[0] == pytest.approx(6.0, abs=1e-6)


def test_finite_difference_constant():
    np.testing.assert_array_equal(T.finite_difference_grad(lambda w: 4.2, np.zeros(5), 1e-5), np.zeros(5))


def test_finite_difference_sigmoid():
    g = T.finite_difference_grad(lambda w: T.sigmoid(Tensor(w)).data.sum(), np.array([0.0]), 1e-5)
    assert g[0] == pytest.approx(0.25, abs=1e-6)


def test_finite_difference_rejects_bad_step():
    with pytest.raises(ValueError):
        T.finite_difference_grad(lambda w: 0.0, np.zeros(1), 0.0)


@pytest.mark.parametrize("x", [-500.0, -40.0, 0.0, 40.0, 500.0])
def test_sigmoid_stable_at_extremes(x):
    w = Tensor(x, requires_grad=True)
    s = T.sigmoid(w)
    g = T.backward(s)[w]
    assert 0.0 <= s.item() <= 1.0 and np.isfinite(g)
    ls = T.log_sigmoid(Tensor(x))
    assert np.isfinite(ls.item())


def test_softplus_large_negative_and_positive():
    out = T.softplus(Tensor([-800.0, 800.0])).data
    assert out[0] == 0.0 and out[1] == 800.0


def _mlp_loss(spec, params, x, target):
    net = Network(spec, params)
    out = net.forward(x)["out"]
    return T.mean_reduce(T.square(T.subtract(out, target)))


@pytest.mark.parametrize("seed", range(5))
def test_mlp_gradient_matches_central_differences(seed):
    rng = np.random.default_rng(seed)
    depth = rng.integers(1, 4)
    hidden = tuple(int(w) for w in rng.integers(2, 9, size=depth))
    act = str(rng.choice(["tanh", "leaky-relu", "softplus", "sigmoid"]))
    spec = MlpSpec((3, *hidden, 2), act, (("out", 2),))
    params = init_xavier(spec, seed)
    x = rng.standard_normal((7, 3))
    target = rng.standard_normal((7, 2))
    leaves = T.leaf_params(params)
    loss = T.mean_reduce(T.square(T.subtract(Network(spec, params).forward(x, leaves=leaves)["out"], target)))
    grads = T.gradients(loss, leaves)
    for name, value in params.items():
        def f(v, name=name):
            p = dict(params)
            p[name] = v
            return _mlp_loss(spec, p, x, target).item()
        fd = T.finite_difference_grad(f, value, 1e-5)
        np.testing.assert_allclose(grads[name], fd, rtol=1e-4, atol=1e-8)


def test_backward_is_deterministic():
    spec = MlpSpec((2, 16, 16, 1), "relu", (("out", 1),))
    params = init_xavier(spec, 7)
    x = np.random.default_rng(1).standard_normal((32, 2))

    def run():
        leaves = T.leaf_params(params)
        loss = T.mean_reduce(T.softplus(Network(spec, params).forward(x, leaves=leaves)["out"]))
        return loss.item(), T.gradients(loss, leaves)

    v1, g1 = run()
    v2, g2 = run()
    assert v1 == v2
    for k in g1:
        np.testing.assert_array_equal(g1[k], g2[k])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-20, 20), min_size=1, max_size=6))
def test_tanh_gradient_property(xs):
    w = Tensor(np.array(xs), requires_grad=True)
    g = T.backward(T.sum_reduce(T.tanh(w)))[w]
    np.testing.assert_allclose(g, 1.0 - np.tanh(np.array(xs)) ** 2, rtol=1e-12, atol=1e-300)


@settings(max_examples=50, deadline=None)
@given(st.floats(-30, 30))
def test_log_sigmoid_matches_naive(x):
    naive = math.log(1.0 / (1.0 + math.exp(-x)))
    assert T.log_sigmoid(Tensor(x)).item() == pytest.approx(naive, rel=1e-12, abs=1e-12)
