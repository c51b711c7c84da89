import numpy as np
import pytest

from waypointrl import approx
from waypointrl.errors import ShapeError


def test_forward_zero_network(rng):
    net = approx.init_network((3, 4, 2), rng)
    for p in net.params:
        p[:] = 0.0
    out = approx.forward(net, rng.standard_normal((5, 3)))
    assert np.array_equal(out, np.zeros((5, 2)))


def test_forward_identity_layer(rng):
    net = approx.init_network((3, 3), rng)
    net.weights[0] = np.eye(3)
    net.biases[0] = np.zeros(3)
    x = rng.standard_normal((4, 3))
    assert np.allclose(approx.forward(net, x), x)


def test_forward_batch_independence(rng):
    net = approx.init_network((4, 6, 2), rng)
    x1 = rng.standard_normal((1, 4))
    x2 = rng.standard_normal((1, 4))
    stacked = approx.forward(net, np.vstack([x1, x2]))
    # Rows are independent; tolerance covers BLAS kernel differences between
    # batch shapes.
    assert np.allclose(stacked[0], approx.forward(net, x1)[0], rtol=1e-13, atol=0)
    assert np.allclose(stacked[1], approx.forward(net, x2)[0], rtol=1e-13, atol=0)


def test_forward_width_mismatch(rng):
    net = approx.init_network((4, 2), rng)
    with pytest.raises(ShapeError):
        approx.forward(net, np.zeros((3, 5)))


def test_grad_constant_loss(rng):
    net = approx.init_network((3, 5, 2), rng)
    loss, grads, _ = approx.grad(net, lambda y: (1.0, np.zeros_like(y)),
                                 rng.standard_normal((4, 3)))
    assert loss == 1.0
    assert all(np.array_equal(g, np.zeros_like(g)) for g in grads)


def test_grad_linear_layer_analytic(rng):
    net = approx.init_network((3, 2), rng)
    x = rng.standard_normal((6, 3))
    c = np.array([0.7, -1.3])
    _, grads, _ = approx.grad(net, lambda y: (float((y * c).sum()),
                                              np.tile(c, (len(y), 1))), x)
    expected_w = x.T @ np.tile(c, (len(x), 1))
    assert np.allclose(grads[0], expected_w)
    assert np.allclose(grads[1], c * len(x))


def test_grad_matches_finite_differences(rng):
    net = approx.init_network((5, 8, 7, 3), rng)
    err = approx.gradient_check(net, rng.standard_normal((6, 5)))
    assert err < 1e-4


def test_gradient_check_many_networks():
    # 20 networks spanning the three shapes the training stack uses.
    shapes = (
        [(6, 16, 16, 1)] * 7       # state-action-goal classifier
        + [(4, 16, 16, 1)] * 7     # state-goal classifier
        + [(4, 16, 16, 4)] * 6     # policy heads
    )
    for seed, sizes in enumerate(shapes):
        rng = np.random.default_rng(seed)
        net = approx.init_network(sizes, rng)
        err = approx.gradient_check(net, rng.standard_normal((4, sizes[0])))
        assert err < 1e-4, f"seed {seed} sizes {sizes}: {err}"


def test_adam_zero_gradient(rng):
    net = approx.init_network((3, 2), rng)
    params = net.params
    state = approx.AdamState.for_params(params)
    new_params, new_state = approx.adam_step(
        params, [np.zeros_like(p) for p in params], state, lr=1e-3)
    assert all(np.array_equal(a, b) for a, b in zip(params, new_params))
    assert new_state.t == 1


def test_adam_first_step_magnitude(rng):
    params = [rng.standard_normal((3, 3))]
    grads = [rng.standard_normal((3, 3)) * 10.0]
    state = approx.AdamState.for_params(params)
    new_params, _ = approx.adam_step(params, grads, state, lr=0.01)
    step = new_params[0] - params[0]
    # Bias-corrected first step is -lr * sign(g) up to the eps term.
    assert np.allclose(step, -0.01 * np.sign(grads[0]), atol=1e-6)


def test_adam_two_step_trace():
    # Hand-rolled two-step Adam with a constant gradient.
    g = 0.5
    lr, b1, b2, eps = 0.1, 0.9, 0.999, 1e-8
    p = 1.0
    m = v = 0.0
    expected = []
    for t in (1, 2):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        p = p - lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)
        expected.append(p)

    params = [np.array([1.0])]
    state = approx.AdamState.for_params(params)
    grads = [np.array([g])]
    params, state = approx.adam_step(params, grads, state, lr, b1, b2, eps)
    assert params[0][0] == pytest.approx(expected[0], rel=1e-12)
    params, state = approx.adam_step(params, grads, state, lr, b1, b2, eps)
    assert params[0][0] == pytest.approx(expected[1], rel=1e-12)
    assert state.t == 2


def test_bit_determinism(rng):
    net = approx.init_network((4, 8, 2), rng)
    x = rng.standard_normal((5, 4))
    y1 = approx.forward(net, x)
    y2 = approx.forward(net, x)
    assert np.array_equal(y1, y2)
    _, g1, _ = approx.grad(net, approx._probe_loss, x)
    _, g2, _ = approx.grad(net, approx._probe_loss, x)
    assert all(np.array_equal(a, b) for a, b in zip(g1, g2))


def test_regression_loss_decreases():
    # Fixed regression batch; loss decreases monotonically over the first 50
    # Adam steps in at least 19 of 20 initializations.
    data_rng = np.random.default_rng(99)
    x = data_rng.standard_normal((32, 3))
    target = data_rng.standard_normal((32, 2))
    monotone = 0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        net = approx.init_network((3, 16, 2), rng)
        opt_state = approx.AdamState.for_params(net.params)
        losses = []
        for _ in range(50):
            def mse(y):
                diff = y - target
                return float((diff**2).mean()), 2.0 * diff / diff.size
            loss, grads, _ = approx.grad(net, mse, x)
            losses.append(loss)
            params, opt_state = approx.adam_step(net.params, grads, opt_state, 1e-3)
            net.set_params(params)
        if all(b < a for a, b in zip(losses[:-1], losses[1:])):
            monotone += 1
    assert monotone >= 19


def test_checkpoint_roundtrip_bit_exact(rng, tmp_path):
    nets = {
        "policy": approx.init_network((4, 8, 4), rng),
        "classifier": approx.init_network((6, 8, 1), rng),
    }
    path = tmp_path / "ckpt.npz"
    approx.save_checkpoint(path, nets, extra={"step": 123})
    loaded, extra = approx.load_checkpoint(path)
    assert int(extra["step"]) == 123
    for name, net in nets.items():
        assert loaded[name].layer_sizes == net.layer_sizes
        for a, b in zip(loaded[name].params, net.params):
            assert np.array_equal(a, b)
