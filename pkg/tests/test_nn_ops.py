import math

import numpy as np
import pytest

from metaband.errors import ShapeError, ValidationError
from metaband.numerics import (
    Tensor,
    backward,
    batch_norm,
    binary_cross_entropy,
    conv2d,
    dropout,
    maxpool2d,
    nll_from_probs,
    softmax_cross_entropy,
    tsum,
)


class TestConv2d:

    def test_paper_stage1_shape(self):
        x = Tensor(np.zeros((20, 33, 33), dtype=np.float32))
        k = Tensor(np.zeros((64, 20, 5, 5), dtype=np.float32))
        assert conv2d(x, k, padding=2).shape == (64, 33, 33)

    def test_zero_input_gives_zero_output(self):
        rng = np.random.default_rng(0)
        x = Tensor(np.zeros((3, 8, 8)))
        k = Tensor(rng.normal(size=(4, 3, 5, 5)))
        assert np.all(conv2d(x, k).data == 0.0)

    def test_ones_kernel_center_value(self):
        x = Tensor(np.ones((1, 3, 3)))
        k = Tensor(np.ones((1, 1, 5, 5)))
        out = conv2d(x, k, padding=2)
        assert out.shape == (1, 3, 3)
        assert out.data[0, 1, 1] == pytest.approx(9.0)

    def test_channel_mismatch_raises(self):
        with pytest.raises(ShapeError):
            conv2d(Tensor(np.zeros((3, 8, 8))), Tensor(np.zeros((4, 5, 5, 5))))

    def test_matches_direct_convolution(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(2, 3, 7, 6))
        k = rng.normal(size=(4, 3, 5, 5))
        got = conv2d(Tensor(x, dtype=np.float64), Tensor(k, dtype=np.float64)).data
        xp = np.pad(x, ((0, 0), (0, 0), (2, 2), (2, 2)))
        want = np.zeros_like(got)
        for b in range(2):
            for co in range(4):
                for i in range(7):
                    for j in range(6):
                        want[b, co, i, j] = np.sum(xp[b, :, i:i + 5, j:j + 5] * k[co])
        np.testing.assert_allclose(got, want, rtol=1e-10)

    def test_batched_equals_per_sample(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(5, 2, 9, 9)).astype(np.float32)
        k = Tensor(rng.normal(size=(3, 2, 5, 5)).astype(np.float32))
        full = conv2d(Tensor(x), k).data
        for b in range(5):
            np.testing.assert_array_equal(full[b], conv2d(Tensor(x[b]), k).data)


class TestMaxPool:

    def test_paper_resolution_33_to_16(self):
        x = Tensor(np.zeros((1, 64, 33, 33)))
        assert maxpool2d(x).shape == (1, 64, 16, 16)

    def test_hand_max(self):
        out = maxpool2d(Tensor([[[1.0, 2.0], [3.0, 4.0]]]))
        np.testing.assert_allclose(out.data, [[[4.0]]])

    def test_constant_input_constant_output(self):
        out = maxpool2d(Tensor(np.full((2, 6, 6), 1.5)))
        assert np.all(out.data == 1.5)

    def test_too_small_raises(self):
        with pytest.raises(ShapeError):
            maxpool2d(Tensor(np.zeros((1, 1, 4))))

    def test_gradient_routes_to_argmax(self):
        x = Tensor(np.array([[[1.0, 2.0], [3.0, 4.0]]]), requires_grad=True, dtype=np.float64)
        backward(tsum(maxpool2d(x)))
        np.testing.assert_allclose(x.grad, [[[0, 0], [0, 1.0]]])

    def test_tie_routes_to_first_in_window_order(self):
        x = Tensor(np.full((1, 2, 2), 7.0), requires_grad=True, dtype=np.float64)
        backward(tsum(maxpool2d(x)))
        np.testing.assert_allclose(x.grad, [[[1.0, 0], [0, 0]]])


class TestBatchNorm:

    def _affine(self, shape):
        return Tensor(np.ones(shape, dtype=np.float64)), Tensor(np.zeros(shape, dtype=np.float64))

    def test_zero_mean_unit_variance_fixed_point(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(50, 3))
        x = (x - x.mean(axis=0)) / x.std(axis=0)
        scale, shift = self._affine(3)
        out = batch_norm(Tensor(x, dtype=np.float64), scale, shift, axes=(0,)).data
        np.testing.assert_allclose(out, x, atol=1e-3)

    def test_hand_mean_var(self):
        scale, shift = self._affine(1)
        out = batch_norm(Tensor([[0.0], [2.0]], dtype=np.float64), scale, shift, axes=(0,)).data
        np.testing.assert_allclose(out, [[-1.0], [1.0]], atol=1e-4)

    def test_affine_identity_recovery(self):
        rng = np.random.default_rng(1)
        x = rng.normal(loc=3.0, scale=2.0, size=(200, 1))
        mu, sd = x.mean(), x.std()
        out = batch_norm(Tensor(x, dtype=np.float64), Tensor([sd]), Tensor([mu]), axes=(0,)).data
        np.testing.assert_allclose(out, x, atol=1e-3)

    def test_degenerate_axis_raises(self):
        scale, shift = self._affine(3)
        with pytest.raises(ValidationError):
            batch_norm(Tensor(np.zeros((1, 3))), scale, shift, axes=(0,))


class TestCrossEntropy:

    def test_uniform_logits_four_classes(self):
        loss = softmax_cross_entropy(Tensor(np.zeros((2, 4))), np.array([1, 4]))
        assert loss.item() == pytest.approx(math.log(4), abs=1e-6)

    def test_confident_true_class_drives_loss_to_zero(self):
        logits = np.array([[30.0, 0.0, 0.0]])
        assert softmax_cross_entropy(Tensor(logits), np.array([1])).item() < 1e-6

    def test_scalar_oracle(self):
        loss = softmax_cross_entropy(Tensor([[1.0, 0.0]]), np.array([1]))
        assert loss.item() == pytest.approx(0.31326168, abs=1e-6)

    def test_label_out_of_range(self):
        with pytest.raises(ValidationError):
            softmax_cross_entropy(Tensor(np.zeros((1, 3))), np.array([4]))
        with pytest.raises(ValidationError):
            softmax_cross_entropy(Tensor(np.zeros((1, 3))), np.array([0]))

    def test_nll_from_probs_matches_fused(self):
        rng = np.random.default_rng(0)
        logits = rng.normal(size=(6, 5))
        labels = rng.integers(1, 6, size=6)
        from metaband.numerics import softmax
        probs = softmax(Tensor(logits, dtype=np.float64))
        a = nll_from_probs(probs, labels).item()
        b = softmax_cross_entropy(Tensor(logits, dtype=np.float64), labels).item()
        assert a == pytest.approx(b, rel=1e-10)


class TestBinaryCrossEntropy:

    def test_perfect_prediction_near_zero(self):
        target = np.array([1.0, 0.0, 1.0])
        loss = binary_cross_entropy(Tensor([1.0, 0.0, 1.0]), target)
        assert loss.item() < 1e-5

    def test_maximum_entropy_point(self):
        loss = binary_cross_entropy(Tensor([0.5, 0.5]), np.array([1.0, 0.0]))
        assert loss.item() == pytest.approx(math.log(2), abs=1e-6)

    def test_scalar_oracle(self):
        loss = binary_cross_entropy(Tensor([0.9, 0.1]), np.array([1.0, 0.0]))
        assert loss.item() == pytest.approx(0.10536052, abs=1e-6)

    def test_non_binary_target_rejected(self):
        with pytest.raises(ValidationError):
            binary_cross_entropy(Tensor([0.5]), np.array([0.3]))


class TestDropout:

    def test_inactive_outside_training(self):
        x = Tensor(np.ones(100))
        out = dropout(x, 0.5, np.random.default_rng(0), train=False)
        assert out is x

    def test_seeded_and_inverted(self):
        x = Tensor(np.ones(10000))
        a = dropout(x, 0.5, np.random.default_rng(7), train=True).data
        b = dropout(x, 0.5, np.random.default_rng(7), train=True).data
        np.testing.assert_array_equal(a, b)
        assert set(np.unique(a)) == {0.0, 2.0}
        assert abs(a.mean() - 1.0) < 0.05
