import math

import numpy as np
import pytest

import oracles
from conftest import make_dataset
from fedpot.learner import (
    BITS_PER_VALUE,
    LayoutError,
    MlpArchitecture,
    ParameterVector,
    TrainingConfig,
    binary_metrics,
    dataset_loss,
    evaluate,
    forward,
    init_params,
    local_train,
    loss_and_grad,
    param_distance,
)

ARCH_232 = MlpArchitecture(2, (3,), 2)


def five_samples(seed=0):
    r = np.random.default_rng(seed)
    return r.uniform(-1, 1, size=(5, 2)), np.array([0, 1, 1, 0, 1])


class TestArchitecture:
    def test_vector_length(self):
        assert ARCH_232.num_params == 17
        assert len(init_params(ARCH_232, 0)) == 17

    def test_model_size(self):
        assert ARCH_232.model_size_bits == 17 * BITS_PER_VALUE

    def test_default_for_115(self):
        assert tuple(MlpArchitecture.default_for(115, 11).hidden_sizes) == (115, 62, 32)

    def test_default_general(self):
        assert tuple(MlpArchitecture.default_for(20, 9).hidden_sizes) == (20, 10, 5)

    def test_zero_width(self):
        with pytest.raises(ValueError):
            MlpArchitecture(2, (0,), 2)


class TestParameterVector:
    def test_same_seed(self):
        np.testing.assert_array_equal(init_params(ARCH_232, 4).values, init_params(ARCH_232, 4).values)

    def test_different_seed(self):
        assert not np.array_equal(init_params(ARCH_232, 4).values, init_params(ARCH_232, 5).values)

    def test_wrong_length(self):
        with pytest.raises(LayoutError):
            ParameterVector(np.zeros(16), ARCH_232.shapes)

    def test_immutable(self):
        p = init_params(ARCH_232, 0)
        with pytest.raises(ValueError):
            p.values[0] = 1.0

    def test_layout_order(self):
        p = ParameterVector(np.arange(17.0), ARCH_232.shapes)
        (w1, b1), (w2, b2) = p.layers()
        assert w1.shape == (2, 3) and w1[0, 1] == 1.0
        assert b1.tolist() == [6.0, 7.0, 8.0]
        assert w2.shape == (3, 2) and b2.tolist() == [15.0, 16.0]


class TestGradient:
    @pytest.mark.parametrize("seed", range(5))
    def test_matches_central_differences(self, seed):
        x, y = five_samples(seed)
        params = init_params(ARCH_232, seed)
        # shift so some ReLUs are on and some off, with margin from the kink
        params = params.replace(params.values + np.random.default_rng(seed).normal(0, 0.5, 17))
        assert oracles.gradient_check(params, x, y) < 1e-4

    def test_single_layer_hand_step(self):
        arch = MlpArchitecture(2, (), 2)
        w = np.array([[0.1, -0.2], [0.3, 0.4]])
        b = np.array([0.05, -0.05])
        params = ParameterVector(np.concatenate([w.ravel(), b]), arch.shapes)
        x = np.array([0.5, 1.0])
        z = x @ w + b
        p = np.exp(z) / np.exp(z).sum()
        err = p - np.array([0.0, 1.0])
        eta = 0.5
        expected = np.concatenate([(w - eta * np.outer(x, err)).ravel(), b - eta * err])
        ds = make_dataset([x], [1], 2)
        out, steps = local_train(params, ds, TrainingConfig(epochs=1, batch_size=1, learning_rate=eta))
        assert steps == 1
        np.testing.assert_allclose(out.values, expected, rtol=0, atol=1e-15)

    def test_small_step_does_not_raise_loss(self, small_synthetic):
        arch = MlpArchitecture(4, (6,), 3)
        params = init_params(arch, 1)
        x, y = small_synthetic.features, small_synthetic.labels
        before, grad = loss_and_grad(params, x, y)
        after, _ = loss_and_grad(params.replace(params.values - 1e-3 * grad), x, y)
        assert after <= before


class TestTraining:
    def test_zero_rate_leaves_params(self, small_synthetic):
        params = init_params(MlpArchitecture(4, (5,), 3), 0)
        out, _ = local_train(params, small_synthetic, TrainingConfig(learning_rate=0.0))
        np.testing.assert_array_equal(out.values, params.values)

    def test_update_count(self, rng):
        ds = make_dataset(rng.uniform(size=(100, 3)), rng.integers(0, 2, 100), 2)
        _, steps = local_train(init_params(MlpArchitecture(3, (4,), 2), 0), ds, TrainingConfig(10, 32, 0.01))
        assert steps == 40

    def test_deterministic(self, small_synthetic):
        params = init_params(MlpArchitecture(4, (5,), 3), 0)
        cfg = TrainingConfig(epochs=3, batch_size=7, learning_rate=0.2, seed=11)
        a, _ = local_train(params, small_synthetic, cfg)
        b, _ = local_train(params, small_synthetic, cfg)
        assert a.values.tobytes() == b.values.tobytes()

    def test_learns_separable_blobs(self, small_synthetic):
        params = init_params(MlpArchitecture(4, (16,), 3), 0)
        before = dataset_loss(params, small_synthetic)
        out, _ = local_train(params, small_synthetic, TrainingConfig(epochs=60, batch_size=8, learning_rate=0.3))
        assert dataset_loss(out, small_synthetic) < before
        assert evaluate(out, small_synthetic, {1, 2}).accuracy > 0.9

    def test_input_checks(self, small_synthetic):
        with pytest.raises(ValueError, match="expects"):
            local_train(init_params(MlpArchitecture(3, (2,), 3), 0), small_synthetic, TrainingConfig())

    def test_probabilities(self, rng):
        probs = forward(init_params(MlpArchitecture(4, (8, 4), 5), 3), rng.uniform(-50, 50, size=(30, 4)))
        assert np.all(probs >= 0)
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, rtol=0, atol=1e-9)


class TestMetrics:
    def _params_predicting(self, cls):
        # a single-layer network that always outputs ``cls``
        b = np.zeros(2)
        b[cls] = 10.0
        return ParameterVector(np.concatenate([np.zeros(2), b]), MlpArchitecture(1, (), 2).shapes)

    def test_hand_confusion(self):
        tpr, tnr, f1, undefined = binary_metrics(3, 1, 1, 5)
        assert tpr == 0.75 and tnr == pytest.approx(5 / 6) and f1 == pytest.approx(0.75)
        assert undefined == ()

    def test_perfect(self):
        arch = MlpArchitecture(1, (), 2)
        params = ParameterVector(np.array([10.0, -10.0, -5.0, 5.0]), arch.shapes)
        ds = make_dataset([[1.0], [1.0], [0.0], [0.0]], [0, 0, 1, 1])
        m = evaluate(params, ds, {1})
        assert (m.accuracy, m.tprate, m.tnr, m.f1) == (1.0, 1.0, 1.0, 1.0)

    def test_always_positive(self):
        ds = make_dataset([[0.0], [1.0], [2.0], [3.0]], [0, 0, 1, 1])
        m = evaluate(self._params_predicting(1), ds, {1})
        assert m.tprate == 1.0 and m.tnr == 0.0

    def test_missing_negatives_flagged(self):
        ds = make_dataset([[0.0], [1.0]], [1, 1], 2)
        m = evaluate(self._params_predicting(1), ds, {1})
        assert math.isnan(m.tnr) and "tnr" in m.undefined
        assert m.as_dict()["tnr"] is None

    def test_missing_positives_flagged(self):
        _, _, f1, undefined = binary_metrics(0, 2, 0, 3)
        assert math.isnan(f1) and set(undefined) == {"tprate", "f1"}


class TestDistance:
    def test_zero(self):
        p = init_params(ARCH_232, 0)
        assert param_distance(p, p) == 0.0

    def test_three_four_five(self):
        shapes = MlpArchitecture(1, (), 1).shapes
        a = ParameterVector(np.array([3.0, 4.0]), shapes)
        b = ParameterVector(np.zeros(2), shapes)
        assert param_distance(a, b) == 5.0 == param_distance(b, a)

    def test_layout_mismatch(self):
        with pytest.raises(LayoutError):
            param_distance(init_params(ARCH_232, 0), init_params(MlpArchitecture(2, (4,), 2), 0))
