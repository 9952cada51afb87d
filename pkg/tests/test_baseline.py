import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybrid_ndt.baseline import (MlpModel, gradients, mlp_forward, mlp_sgd_step,
                                 squared_error)


def test_zero_parameters_give_zero():
    assert np.all(mlp_forward(MlpModel.zeros(2, 2), [0.3, 0.7]) == 0)


def test_output_bias_only():
    m = MlpModel.zeros(2, 2)
    m.b2[:] = [1.5, -2.0]
    np.testing.assert_array_equal(mlp_forward(m, [[0.1, 0.2], [0.9, 0.4]]), [[1.5, -2.0]] * 2)


def test_hand_evaluation():
    m = MlpModel(np.array([[1.0, 0.0]]), np.array([-0.5]), np.array([[2.0]]), np.array([0.0]))
    assert mlp_forward(m, [1.0, 0.0])[0] == pytest.approx(1.0)


def test_step_at_optimum_changes_nothing():
    m = MlpModel.init(2, 2, 10, seed=1)
    x = np.array([0.2, 0.8])
    target = mlp_forward(m, x)
    before = [p.copy() for p in m.params()]
    mlp_sgd_step(m, x, target, 0.01)
    for a, b in zip(before, m.params()):
        np.testing.assert_array_equal(a, b)


def numeric_gradients(m, x, target, h=1e-6):
    out = []
    for p in m.params():
        g = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            up = squared_error(m, x, target)
            p[idx] = old - h
            down = squared_error(m, x, target)
            p[idx] = old
            g[idx] = (up - down) / (2 * h)
        out.append(g)
    return out


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_gradients_match_central_differences(seed):
    rng = np.random.default_rng(seed)
    m = MlpModel.init(2, 2, 8, seed=seed)
    x, target = rng.random(2), rng.normal(size=2)
    # keep pre-activations away from the ReLU kink, where differences are one-sided
    pre = m.w1 @ x + m.b1
    m.b1[np.abs(pre) < 1e-3] += 1e-2
    _, analytic = gradients(m, x, target)
    for a, n in zip(analytic, numeric_gradients(m, x, target)):
        scale = max(np.max(np.abs(n)), 1e-8)
        assert np.max(np.abs(a - n)) / scale < 1e-5


def test_memorizes_single_point():
    m = MlpModel.init(2, 2, 100, seed=0)
    x, target = np.array([0.3, 0.6]), np.array([0.4, -0.2])
    for _ in range(1000):
        mlp_sgd_step(m, x, target, 0.01)
    assert squared_error(m, x, target) < 1e-6


def test_loss_decreases_for_small_lr():
    m = MlpModel.init(2, 1, 20, seed=3)
    x, target = np.array([0.5, 0.5]), np.array([2.0])
    losses = [mlp_sgd_step(m, x, target, 1e-3) for _ in range(50)]
    assert all(b <= a for a, b in zip(losses, losses[1:]))


def test_non_finite_gradient_skips_step():
    m = MlpModel.init(2, 1, 4, seed=0)
    before = [p.copy() for p in m.params()]
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        mlp_sgd_step(m, [0.1, 0.1], [np.inf], 0.01)
    assert any("non-finite" in str(x.message) for x in w)
    for a, b in zip(before, m.params()):
        np.testing.assert_array_equal(a, b)


def test_lr_must_be_positive():
    with pytest.raises(ValueError):
        mlp_sgd_step(MlpModel.zeros(2, 1), [0, 0], [0], 0.0)


def test_seeded_init_and_bounds():
    a, b = MlpModel.init(2, 2, 100, 7), MlpModel.init(2, 2, 100, 7)
    for p, q in zip(a.params(), b.params()):
        np.testing.assert_array_equal(p, q)
    assert a.hidden == 100
    assert np.all(np.abs(a.w1) <= 1 / np.sqrt(2)) and np.all(np.abs(a.w2) <= 0.1)


def test_dict_round_trip():
    m = MlpModel.init(2, 2, 5, 1)
    r = MlpModel.from_dict(m.to_dict())
    for p, q in zip(m.params(), r.params()):
        np.testing.assert_array_equal(p, q)
