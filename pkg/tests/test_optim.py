import numpy as np
import pytest

from metaband.errors import ShapeError, ValidationError
from metaband.numerics import Adam, SGD, Tensor, adam_step, sgd_step


def test_sgd_zero_gradient_fixed_point():
    w = np.array([1.0, -2.0], dtype=np.float32)
    np.testing.assert_array_equal(sgd_step(w, np.zeros_like(w), 0.1), w)


def test_sgd_hand_arithmetic():
    assert sgd_step(np.array([1.0]), np.array([2.0]), 0.1)[0] == pytest.approx(0.8)


def test_sgd_shape_mismatch():
    with pytest.raises(ShapeError):
        sgd_step(np.ones(3), np.ones(2), 0.1)


def test_adam_first_step_magnitude_is_lr():
    # bias-corrected first step with unit gradient moves each weight by ~lr
    w = np.zeros(4)
    lr = 0.05
    new, _, _ = adam_step(w, np.ones(4), np.zeros(4), np.zeros(4), t=1, lr=lr)
    np.testing.assert_allclose(new, -lr * np.ones(4), rtol=1e-6)


def test_adam_is_deterministic():
    rng = np.random.default_rng(0)
    w = rng.normal(size=5)
    g = rng.normal(size=5)
    out1 = adam_step(w, g, np.zeros(5), np.zeros(5), t=3, lr=0.01)
    out2 = adam_step(w, g, np.zeros(5), np.zeros(5), t=3, lr=0.01)
    for a, b in zip(out1, out2):
        np.testing.assert_array_equal(a, b)


def test_adam_class_steps_and_decay():
    p = Tensor(np.zeros(3, dtype=np.float64), requires_grad=True)
    opt = Adam([p], lr=0.1, decay=0.5)
    p.grad = np.ones(3)
    opt.step()
    np.testing.assert_allclose(p.data, -0.1 * np.ones(3), rtol=1e-6)
    opt.decay_lr()
    assert opt.lr == pytest.approx(0.05)


def test_adam_state_roundtrip_replays_bitwise():
    rng = np.random.default_rng(1)
    p = Tensor(rng.normal(size=4).astype(np.float32), requires_grad=True)
    opt = Adam([p], lr=0.01)
    for _ in range(3):
        p.grad = rng.normal(size=4).astype(np.float32)
        opt.step()
    snap_param = p.data.copy()
    state = opt.state_dict()
    g = rng.normal(size=4).astype(np.float32)
    p.grad = g
    opt.step()
    after = p.data.copy()

    p2 = Tensor(snap_param.copy(), requires_grad=True)
    opt2 = Adam([p2], lr=0.01)
    opt2.load_state_dict(state)
    p2.grad = g.copy()
    opt2.step()
    np.testing.assert_array_equal(p2.data, after)


def test_adam_rejects_bad_hyperparameters():
    p = Tensor(np.zeros(1), requires_grad=True)
    with pytest.raises(ValidationError):
        Adam([p], lr=0.0)
    with pytest.raises(ValidationError):
        Adam([p], lr=0.1, decay=0.0)


def test_sgd_class_skips_missing_grads():
    p = Tensor(np.ones(2), requires_grad=True)
    SGD([p], lr=0.5).step()
    np.testing.assert_array_equal(p.data, np.ones(2))
