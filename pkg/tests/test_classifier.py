import math

import numpy as np
import pytest

from metaband import classifier
from metaband.errors import ShapeError, ValidationError
from metaband.numerics import Tensor, backward, finite_difference_check


class TestArchitecture:

    def test_table1_resolution_chain(self):
        p = classifier.ClassifierParams.create(20, 16, profile="table1", patch=33, seed=0)
        sides = [33]
        for _ in p.stages:
            sides.append(sides[-1] // 2)
        assert sides == [33, 16, 8, 4, 2, 1]
        assert [s.kernels.shape[0] for s in p.stages] == [64, 128, 256, 512, 1024]
        assert p.fc_weight.shape == (1024, 16)

    def test_table1_feature_map_after_stage5(self):
        # tiny band count keeps the full stack cheap enough to run once
        p = classifier.ClassifierParams.create(2, 3, profile="table1", patch=33, seed=0)
        probs = classifier.classify(np.zeros((1, 2, 33, 33), np.float32), p)
        assert probs.shape == (1, 3)

    def test_desk_profile_shape_trace(self):
        p = classifier.ClassifierParams.create(20, 4, profile="desk", patch=33, seed=0)
        assert [s.kernels.shape[0] for s in p.stages] == [16, 32]
        # 33 -> 16 -> 8, then global pool
        assert p.global_pool and p.fc_weight.shape == (32, 4)
        probs = classifier.classify(np.zeros((2, 20, 33, 33), np.float32), p)
        assert probs.shape == (2, 4)

    def test_unknown_profile(self):
        with pytest.raises(ValidationError):
            classifier.ClassifierParams.create(4, 2, profile="huge")

    def test_wrong_spatial_size_rejected(self):
        p = classifier.ClassifierParams.create(4, 2, profile="desk", patch=17)
        with pytest.raises(ShapeError):
            classifier.classify(np.zeros((1, 4, 33, 33), np.float32), p)


class TestClassify:

    def test_output_sums_to_one(self):
        rng = np.random.default_rng(0)
        p = classifier.ClassifierParams.create(6, 5, profile="desk", patch=9, seed=1)
        probs = classifier.classify(rng.random((3, 6, 9, 9)).astype(np.float32), p)
        np.testing.assert_allclose(probs.data.sum(axis=1), np.ones(3), atol=1e-6)

    def test_deterministic_without_dropout(self):
        rng = np.random.default_rng(1)
        p = classifier.ClassifierParams.create(4, 3, profile="desk", patch=9)
        x = rng.random((2, 4, 9, 9)).astype(np.float32)
        a = classifier.classify(x, p).data
        b = classifier.classify(x, p).data
        np.testing.assert_array_equal(a, b)

    def test_dropout_reproducible_under_fixed_seed(self):
        rng = np.random.default_rng(2)
        p = classifier.ClassifierParams.create(4, 3, profile="desk", patch=9)
        x = rng.random((2, 4, 9, 9)).astype(np.float32)
        a = classifier.classify(x, p, train_mode=True, rng=np.random.default_rng(7)).data
        b = classifier.classify(x, p, train_mode=True, rng=np.random.default_rng(7)).data
        np.testing.assert_array_equal(a, b)
        with pytest.raises(ValidationError):
            classifier.classify(x, p, train_mode=True)

    def test_band_mask_equals_zeroed_input_channel(self):
        rng = np.random.default_rng(3)
        p = classifier.ClassifierParams.create(5, 3, profile="desk", patch=9)
        x = rng.random((2, 5, 9, 9)).astype(np.float32)
        masked = x.copy()
        masked[:, 2] = 0.0
        from metaband.selector import apply_mask
        via_mask = apply_mask(x, np.array([1, 1, 0, 1, 1]))
        np.testing.assert_array_equal(via_mask, masked)
        np.testing.assert_array_equal(classifier.classify(via_mask, p).data,
                                      classifier.classify(masked, p).data)


class TestLoss:

    def test_perfect_predictions_near_zero(self):
        probs = Tensor(np.array([[1.0, 0.0], [0.0, 1.0]]))
        loss = classifier.classification_loss(probs, np.array([1, 2]))
        assert loss.item() < 1e-6

    def test_uniform_sixteen_classes(self):
        probs = Tensor(np.full((3, 16), 1 / 16))
        loss = classifier.classification_loss(probs, np.array([4, 9, 16]))
        assert loss.item() == pytest.approx(math.log(16), abs=1e-5)

    def test_two_sample_batch_is_mean(self):
        p1 = np.array([[0.7, 0.3]])
        p2 = np.array([[0.2, 0.8]])
        both = np.vstack([p1, p2])
        l1 = classifier.classification_loss(Tensor(p1), np.array([1])).item()
        l2 = classifier.classification_loss(Tensor(p2), np.array([2])).item()
        lb = classifier.classification_loss(Tensor(both), np.array([1, 2])).item()
        assert lb == pytest.approx((l1 + l2) / 2, rel=1e-6)

    def test_invalid_label(self):
        with pytest.raises(ValidationError):
            classifier.classification_loss(Tensor(np.full((1, 3), 1 / 3)), np.array([5]))


class TestGradient:

    def test_end_to_end_finite_difference(self):
        # tiny variant: 8x8 patch, 2 stages, 4 channels, dropout off, double
        rng = np.random.default_rng(4)
        p = classifier.ClassifierParams.create(3, 2, profile="desk", patch=8,
                                               channels=(4, 4), dtype=np.float64, seed=5)
        x = rng.random((2, 3, 8, 8))
        labels = np.array([1, 2])

        def build():
            return classifier.classification_loss(classifier.classify(x, p), labels)

        err = finite_difference_check(build, p.tensors(), h=1e-5)
        assert err < 1e-4

    def test_gradients_reach_all_parameters(self):
        rng = np.random.default_rng(5)
        p = classifier.ClassifierParams.create(3, 2, profile="desk", patch=8,
                                               channels=(4, 4), dtype=np.float64)
        x = rng.random((2, 3, 8, 8))
        loss = classifier.classification_loss(classifier.classify(x, p), np.array([1, 2]))
        backward(loss)
        for name, t in p.named_tensors().items():
            assert t.grad is not None, name
