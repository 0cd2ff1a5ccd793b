import math

import numpy as np
import pytest

from polezoo.errors import ContractViolation, NumericalError
from polezoo.nn import AdamState, DenseLayer, Mlp, adam_init, adam_step, elu, elu_grad, init_dense
from polezoo.rng import make_rng

from helpers import central_diff_grad, rel_err


def test_elu_values():
    assert elu(0.0) == 0.0
    assert elu(1.5) == 1.5
    assert elu(-1.0) == pytest.approx(math.exp(-1.0) - 1.0, abs=1e-12)


def test_elu_monotone_and_bounded_below():
    xs = np.linspace(-30, 30, 2001)
    ys = elu(xs)
    assert np.all(np.diff(ys) > 0)
    assert np.all(ys > -1.0)


def test_elu_grad_matches_finite_difference():
    rng = make_rng(0)
    for x in rng.uniform(-3, 3, size=50):
        fd = (elu(x + 1e-6) - elu(x - 1e-6)) / 2e-6
        assert rel_err(elu_grad(x), fd) < 1e-6


def test_dense_forward_identity():
    layer = DenseLayer(np.eye(2), np.zeros(2))
    assert np.array_equal(layer.forward(np.array([3.0, -2.0])), [3.0, -2.0])


def test_dense_forward_bias_only():
    layer = DenseLayer(np.zeros((2, 3)), np.ones(2))
    assert np.array_equal(layer.forward(np.array([5.0, 6.0, 7.0])), [1.0, 1.0])


def test_dense_forward_hand_matrix():
    layer = DenseLayer(np.array([[1.0, 2.0], [3.0, 4.0]]), np.zeros(2))
    assert np.array_equal(layer.forward(np.array([1.0, 1.0])), [3.0, 7.0])


def test_dense_forward_rejects_mismatch():
    layer = DenseLayer(np.eye(2), np.zeros(2))
    with pytest.raises(ContractViolation):
        layer.forward(np.array([1.0, 2.0, 3.0]))


def test_dense_rejects_nonfinite():
    with pytest.raises(ContractViolation):
        DenseLayer(np.array([[np.nan]]), np.zeros(1))


def test_mlp_single_linear_layer_gradient_is_outer_product():
    # loss = 0.5 * ||y||^2 over a linear layer gives dW = y x^T, db = y
    rng = make_rng(1)
    layer = init_dense(rng, 3, 2)
    net = Mlp([layer])
    x = np.array([1.0, 0.0, 0.0])  # e1
    y = net.forward(x)
    flat = net.backward(y)
    g_w = flat[:6].reshape(2, 3)
    g_b = flat[6:]
    assert np.allclose(g_w, np.outer(y, x), atol=1e-14)
    assert np.allclose(g_b, y, atol=1e-14)


def test_mlp_zero_upstream_gives_zero_gradient():
    net = Mlp([init_dense(make_rng(2), 4, 5), init_dense(make_rng(3), 5, 2)])
    net.forward(np.ones(4))
    assert np.array_equal(net.backward(np.zeros(2)), np.zeros(net.n_params))


def test_mlp_backward_requires_forward():
    net = Mlp([init_dense(make_rng(4), 2, 2)])
    with pytest.raises(ContractViolation):
        net.backward(np.zeros(2))
    net.forward(np.ones(2))
    net.backward(np.zeros(2))
    with pytest.raises(ContractViolation):  # cache consumed
        net.backward(np.zeros(2))


@pytest.mark.parametrize("dims", [(4, 30, 2), (3, 5, 4, 2), (2, 7, 1)])
def test_mlp_gradients_match_finite_differences(dims):
    # 100 random (input, parameter) probes per configuration, rel err < 1e-4
    rng = make_rng(10)
    layers = [init_dense(rng, dims[i], dims[i + 1]) for i in range(len(dims) - 1)]
    net = Mlp(layers)
    target = rng.normal(size=dims[-1])

    def loss_at(flat):
        net.set_params_flat(flat)
        out = net.forward(x)
        return 0.5 * float(np.sum((out - target) ** 2))

    worst = 0.0
    for _ in range(10):
        x = rng.normal(size=dims[0])
        flat0 = net.params_flat()
        net.set_params_flat(flat0)
        out = net.forward(x)
        analytic = net.backward(out - target)
        probes = rng.choice(net.n_params, size=10, replace=False)
        fd = central_diff_grad(loss_at, flat0, h=1e-4, indices=probes)
        net.set_params_flat(flat0)
        for j, fd_val in fd.items():
            worst = max(worst, rel_err(analytic[j], fd_val))
    assert worst < 1e-4


def test_adam_zero_gradient_is_fixed_point():
    state = adam_init(3)
    params = np.array([1.0, -2.0, 3.0])
    new_params, new_state = adam_step(params, np.zeros(3), state)
    assert np.array_equal(new_params, params)
    assert new_state.t == 1
    assert state.t == 0  # functional update leaves the old state alone


def test_adam_first_step_magnitude():
    # closed form: m_hat = g, v_hat = g^2, update = lr*g/(|g| + eps) ~ lr
    state = adam_init(1, lr=0.001)
    params = np.zeros(1)
    g = np.array([0.37])
    new_params, _ = adam_step(params, g, state)
    expected = 0.001 * 0.37 / (0.37 + 1e-8)
    assert new_params[0] == pytest.approx(-expected, rel=1e-12)
    assert abs(new_params[0]) == pytest.approx(0.001, rel=1e-4)


def test_adam_constant_gradient_updates_never_grow():
    # closed form keeps |update| = lr*|g|/(|g|+eps) at every step
    state = adam_init(1, lr=0.01)
    params = np.zeros(1)
    g = np.array([-1.3])
    last = None
    for _ in range(6):
        new_params, state = adam_step(params, g, state)
        step = abs(new_params[0] - params[0])
        if last is not None:
            assert step <= last + 1e-12
        assert step == pytest.approx(0.01 * 1.3 / (1.3 + 1e-8), rel=1e-9)
        last = step
        params = new_params


def test_adam_rejects_poisoned_gradients():
    state = adam_init(2)
    with pytest.raises(NumericalError):
        adam_step(np.zeros(2), np.array([0.0, np.nan]), state)
    with pytest.raises(NumericalError):
        adam_step(np.zeros(2), np.array([np.inf, 0.0]), state)


def test_adam_v_stays_nonnegative_and_t_increases():
    rng = make_rng(6)
    state = adam_init(8)
    params = rng.normal(size=8)
    for expected_t in range(1, 20):
        params, state = adam_step(params, rng.normal(size=8), state)
        assert state.t == expected_t
        assert np.all(state.v >= 0.0)
        assert np.isfinite(params).all()


def test_same_seed_same_trajectory_bitwise():
    def run():
        rng = make_rng(99)
        net = Mlp([init_dense(rng, 4, 6), init_dense(rng, 6, 2)])
        state = adam_init(net.n_params, lr=0.01)
        params = net.params_flat()
        for _ in range(25):
            x = rng.normal(size=4)
            net.set_params_flat(params)
            out = net.forward(x)
            grad = net.backward(out - np.array([1.0, -1.0]))
            params, state = adam_step(params, grad, state)
        return params

    a, b = run(), run()
    assert np.array_equal(a, b)
