"""Network core: determinism, dueling identifiability, and the gradient oracle."""

import numpy as np
import pytest

from desyncq import NetworkSpec, QNetwork, TrainTarget, clone, forward, grad_step, init_network
from desyncq.networks import gradient, loss_on

RNG = np.random.default_rng


def small_spec(dueling=True):
    return NetworkSpec(input_dim=4, hidden_layers=(8,), action_count=2, dueling=dueling)


# -- construction -------------------------------------------------------------


def test_init_is_deterministic():
    net1 = init_network(small_spec(), seed=7)
    net2 = init_network(small_spec(), seed=7)
    assert np.array_equal(net1.params, net2.params)


def test_different_seeds_differ():
    net1 = init_network(small_spec(), seed=7)
    net2 = init_network(small_spec(), seed=8)
    assert not np.array_equal(net1.params, net2.params)


def test_empty_hidden_layers_rejected():
    with pytest.raises(ValueError):
        NetworkSpec(input_dim=4, hidden_layers=(), action_count=2)


@pytest.mark.parametrize(
    "spec_kwargs",
    [
        dict(input_dim=0, hidden_layers=(4,), action_count=2),
        dict(input_dim=4, hidden_layers=(0,), action_count=2),
        dict(input_dim=4, hidden_layers=(4,), action_count=1),
    ],
)
def test_invalid_dimensions_rejected(spec_kwargs):
    with pytest.raises(ValueError):
        NetworkSpec(**spec_kwargs)


def test_param_count_matches_hand_enumeration():
    # 12 -> 32 -> 32, dueling heads over 4 actions, counted shape by shape
    spec = NetworkSpec(input_dim=12, hidden_layers=(32, 32), action_count=4, dueling=True)
    expected = (12 * 32 + 32) + (32 * 32 + 32) + (32 * 1 + 1) + (32 * 4 + 4)
    assert spec.param_count() == expected
    assert init_network(spec, seed=0).param_count == expected


def test_param_count_without_dueling():
    spec = NetworkSpec(input_dim=5, hidden_layers=(7,), action_count=3, dueling=False)
    assert spec.param_count() == (5 * 7 + 7) + (7 * 3 + 3)


def test_init_bounds_follow_fan_in():
    spec = NetworkSpec(input_dim=100, hidden_layers=(50,), action_count=4, dueling=False)
    net = init_network(spec, seed=3)
    first_w = net.params[: 100 * 50]
    assert np.max(np.abs(first_w)) <= 1.0 / np.sqrt(100)
    assert np.all(np.isfinite(net.params))


# -- forward ------------------------------------------------------------------


def _reference_forward(spec, params, x):
    """Straight-line recomputation of the forward pass, independent layout math."""
    offset = 0

    def take(rows, cols=None):
        nonlocal offset
        size = rows * (cols or 1)
        block = params[offset : offset + size]
        offset += size
        return block.reshape(rows, cols) if cols else block

    h = np.asarray(x, dtype=np.float64)
    dims = [spec.input_dim, *spec.hidden_layers]
    for i in range(len(spec.hidden_layers)):
        w = take(dims[i], dims[i + 1])
        b = take(dims[i + 1])
        h = np.maximum(h @ w + b, 0.0)
    last = spec.hidden_layers[-1]
    if spec.dueling:
        wv, bv = take(last, 1), take(1)
        wa, ba = take(last, spec.action_count), take(spec.action_count)
        v = float((h @ wv)[0] + bv[0])
        a = h @ wa + ba
        return v + a - a.mean()
    wo, bo = take(last, spec.action_count), take(spec.action_count)
    return h @ wo + bo


@pytest.mark.parametrize("dueling", [True, False])
def test_forward_matches_reference_implementation(dueling):
    rng = RNG(11)
    spec = NetworkSpec(input_dim=6, hidden_layers=(5, 4), action_count=3, dueling=dueling)
    net = init_network(spec, seed=42)
    for _ in range(10):
        x = rng.normal(size=6)
        np.testing.assert_allclose(forward(net, x), _reference_forward(spec, net.params, x), rtol=0, atol=1e-12)


def test_zero_parameters_give_equal_q_values():
    spec = small_spec()
    net = QNetwork(spec, np.zeros(spec.param_count()))
    q = forward(net, RNG(0).normal(size=4))
    assert np.allclose(q, q[0])


def test_forward_is_pure():
    net = init_network(small_spec(), seed=1)
    x = RNG(2).normal(size=4)
    assert np.array_equal(forward(net, x), forward(net, x))


def test_forward_rejects_dimension_mismatch():
    net = init_network(small_spec(), seed=1)
    with pytest.raises(ValueError):
        forward(net, np.zeros(5))


def test_advantage_bias_shift_leaves_q_unchanged():
    # shifting every advantage output by a constant must cancel in the head
    spec = small_spec(dueling=True)
    net = init_network(spec, seed=5)
    shifted = clone(net)
    shifted.params[-spec.action_count :] += 3.7  # advantage biases sit last
    x = RNG(3).normal(size=(20, 4))
    np.testing.assert_allclose(forward(net, x), forward(shifted, x), atol=1e-12)


# -- training -----------------------------------------------------------------


def test_zero_error_batch_leaves_parameters_unchanged():
    net = init_network(small_spec(), seed=9)
    x = RNG(4).normal(size=4)
    q = forward(net, x)
    batch = [TrainTarget(x, 0, float(q[0])), TrainTarget(x, 1, float(q[1]))]
    stepped = grad_step(net, batch, learning_rate=0.1)
    assert np.array_equal(stepped.params, net.params)


def test_single_step_descends():
    net = init_network(small_spec(), seed=10)
    batch = [TrainTarget(RNG(5).normal(size=4), 1, 2.5)]
    before = loss_on(net, batch)
    after = loss_on(grad_step(net, batch, learning_rate=1e-3), batch)
    assert after <= before


def test_grad_step_rejects_bad_input():
    net = init_network(small_spec(), seed=10)
    with pytest.raises(ValueError):
        grad_step(net, [], 0.1)
    with pytest.raises(ValueError):
        grad_step(net, [TrainTarget(np.zeros(4), 0, float("nan"))], 0.1)
    with pytest.raises(ValueError):
        grad_step(net, [TrainTarget(np.zeros(4), 0, 1.0)], 0.0)


def _finite_difference(net, batch, h=1e-5):
    fd = np.zeros_like(net.params)
    for i in range(net.params.size):
        up = net.params.copy()
        up[i] += h
        down = net.params.copy()
        down[i] -= h
        fd[i] = (loss_on(QNetwork(net.spec, up), batch) - loss_on(QNetwork(net.spec, down), batch)) / (2 * h)
    return fd


def gradient_check_worst_error(instances=20, seed=0):
    """Max relative error between backprop and central differences."""
    rng = RNG(seed)
    worst = 0.0
    for _ in range(instances):
        spec = NetworkSpec(
            input_dim=int(rng.integers(2, 6)),
            hidden_layers=tuple(int(v) for v in rng.integers(2, 7, size=int(rng.integers(1, 3)))),
            action_count=int(rng.integers(2, 5)),
            dueling=bool(rng.integers(0, 2)),
        )
        net = init_network(spec, seed=int(rng.integers(0, 10**6)))
        batch = [
            TrainTarget(rng.normal(size=spec.input_dim), int(rng.integers(spec.action_count)), float(rng.normal()))
            for _ in range(int(rng.integers(1, 5)))
        ]
        bp = gradient(net, batch)
        fd = _finite_difference(net, batch)
        rel = np.abs(bp - fd) / np.maximum(1.0, np.maximum(np.abs(bp), np.abs(fd)))
        worst = max(worst, float(rel.max()))
    return worst


def test_gradient_matches_finite_differences():
    assert gradient_check_worst_error(instances=20, seed=0) <= 1e-4


# -- clone --------------------------------------------------------------------


def test_clone_is_independent():
    net = init_network(small_spec(), seed=12)
    copy = clone(net)
    stepped = grad_step(copy, [TrainTarget(np.ones(4), 0, 5.0)], 0.5)
    assert not np.array_equal(stepped.params, net.params)
    assert np.array_equal(copy.params, net.params)  # grad_step returned a new value
    copy.params[0] += 1.0
    assert net.params[0] != copy.params[0]


def test_clone_forward_identical():
    net = init_network(small_spec(), seed=13)
    copy = clone(net)
    x = RNG(6).normal(size=(50, 4))
    assert np.array_equal(forward(net, x), forward(copy, x))


def test_clone_of_clone_equals_original():
    net = init_network(small_spec(), seed=14)
    assert np.array_equal(clone(clone(net)).params, net.params)
